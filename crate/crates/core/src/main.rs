fn main() {
    std::process::exit(popflux::cli::run(std::env::args_os()));
}
