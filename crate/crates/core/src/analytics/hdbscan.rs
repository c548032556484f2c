//! HDBSCAN* over a precomputed dissimilarity matrix.
//!
//! Core distance is the `min_samples`-th smallest entry of a row, the point
//! itself included. Mutual reachability feeds a Prim minimum spanning tree,
//! the sorted tree becomes a single-linkage dendrogram, which is condensed
//! with `min_cluster_size` and cut by excess-of-mass stability. The root is
//! never selected, so a dataset without structure is all noise.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const NOISE: i64 = -1;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::input(format!("matrix of {} entries is not {n}x{n}", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::input(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::input(format!("entry ({i},{j}) = {v} is not a finite non-negative distance")));
                }
                if j > i && (v - data[j * n + i]).abs() > 1e-9 {
                    return Err(Error::input(format!("matrix is asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Builds the matrix from a pairwise function, rows in parallel.
    pub fn from_fn<F>(n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else if i < j { f(i, j) } else { f(j, i) }).collect())
            .collect();
        DistanceMatrix::new(n, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        DistanceMatrix::new(self.n, self.data.iter().map(|v| v * k).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 10,
            min_samples: 5,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::config("min_cluster_size must be >= 2"));
        }
        if self.min_samples < 1 {
            return Err(Error::config("min_samples must be >= 1"));
        }
        Ok(())
    }
}

struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

struct CondensedEdge {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

/// Cluster labels `0..k` per point, `NOISE` for unclustered points.
///
/// `min_samples` larger than the number of points is clamped to it.
pub fn hdbscan(matrix: &DistanceMatrix, params: &HdbscanParams) -> Result<Vec<i64>> {
    params.validate()?;
    let n = matrix.len();
    if n < params.min_cluster_size || n < 2 {
        return Ok(vec![NOISE; n]);
    }
    let k = params.min_samples.min(n);
    let core: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = matrix.row(i).to_vec();
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect();
    let mst = prim_mst(matrix, &core);
    let dendrogram = single_linkage(n, mst);
    let condensed = condense(&dendrogram, n, params.min_cluster_size);
    Ok(select_and_label(&condensed, n))
}

fn prim_mst(matrix: &DistanceMatrix, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = matrix.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut best = vec![f64::INFINITY; n];
    let mut current = 0;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        let pos = remaining.iter().position(|&v| v == current).expect("current node is pending");
        remaining.remove(pos);
        best.remove(pos);
        let row = matrix.row(current);
        let mut arg = 0;
        for (slot, &v) in remaining.iter().enumerate() {
            let reach = row[v].max(core[current]).max(core[v]);
            if reach < best[slot] {
                best[slot] = reach;
            }
            if best[slot] < best[arg] {
                arg = slot;
            }
        }
        edges.push((current, remaining[arg], best[arg]));
        current = remaining[arg];
    }
    edges
}

fn single_linkage(n: usize, mut mst: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    mst.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let find = |parent: &mut Vec<usize>, mut x: usize| {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        while parent[x] != root {
            let next = parent[x];
            parent[x] = root;
            x = next;
        }
        root
    };
    let mut merges = Vec::with_capacity(n - 1);
    for (i, (a, b, d)) in mst.into_iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + i;
        size[node] = size[ra] + size[rb];
        parent[ra] = node;
        parent[rb] = node;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: d,
            size: size[node],
        });
    }
    merges
}

fn bfs_nodes(dendrogram: &[Merge], n: usize, root: usize, visit: &mut impl FnMut(usize)) {
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        visit(node);
        if node >= n {
            let m = &dendrogram[node - n];
            queue.push_back(m.left);
            queue.push_back(m.right);
        }
    }
}

fn condense(dendrogram: &[Merge], n: usize, min_cluster_size: usize) -> Vec<CondensedEdge> {
    let root = 2 * n - 2;
    let mut relabel = vec![0usize; root + 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut ignore = vec![false; root + 1];
    let mut out = Vec::new();
    let mut order = Vec::with_capacity(root + 1);
    bfs_nodes(dendrogram, n, root, &mut |v| order.push(v));
    let count = |v: usize| if v >= n { dendrogram[v - n].size } else { 1 };
    for node in order {
        if ignore[node] || node < n {
            continue;
        }
        let m = &dendrogram[node - n];
        let lambda = if m.distance > 0.0 { 1.0 / m.distance } else { f64::INFINITY };
        let (lc, rc) = (count(m.left), count(m.right));
        let parent = relabel[node];
        let fall_out = |sub: usize, out: &mut Vec<CondensedEdge>, ignore: &mut Vec<bool>| {
            bfs_nodes(dendrogram, n, sub, &mut |v| {
                if v < n {
                    out.push(CondensedEdge { parent, child: v, lambda, size: 1 });
                }
                ignore[v] = true;
            });
        };
        match (lc >= min_cluster_size, rc >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(m.left, lc), (m.right, rc)] {
                    relabel[child] = next_label;
                    next_label += 1;
                    out.push(CondensedEdge { parent, child: relabel[child], lambda, size });
                }
            }
            (false, false) => {
                fall_out(m.left, &mut out, &mut ignore);
                fall_out(m.right, &mut out, &mut ignore);
            }
            (false, true) => {
                relabel[m.right] = parent;
                fall_out(m.left, &mut out, &mut ignore);
            }
            (true, false) => {
                relabel[m.left] = parent;
                fall_out(m.right, &mut out, &mut ignore);
            }
        }
    }
    out
}

fn select_and_label(condensed: &[CondensedEdge], n: usize) -> Vec<i64> {
    let root = n;
    let mut birth: BTreeMap<usize, f64> = BTreeMap::from([(root, 0.0)]);
    for e in condensed.iter().filter(|e| e.size > 1) {
        birth.insert(e.child, e.lambda);
    }
    let mut stability: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for e in condensed {
        *stability.get_mut(&e.parent).expect("parent is a cluster") += (e.lambda - birth[&e.parent]) * e.size as f64;
    }
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in condensed.iter().filter(|e| e.size > 1) {
        children.entry(e.parent).or_default().push(e.child);
    }

    // children carry larger ids than parents, so descending order is bottom-up
    let mut selected: BTreeSet<usize> = BTreeSet::new();
    let nodes: Vec<usize> = stability.keys().rev().copied().filter(|&c| c != root).collect();
    for node in nodes {
        let kids = children.get(&node).map(Vec::as_slice).unwrap_or(&[]);
        let subtree: f64 = kids.iter().map(|c| stability[c]).sum();
        if subtree > stability[&node] {
            stability.insert(node, subtree);
        } else {
            let mut queue: VecDeque<usize> = kids.iter().copied().collect();
            while let Some(c) = queue.pop_front() {
                selected.remove(&c);
                if let Some(k) = children.get(&c) {
                    queue.extend(k);
                }
            }
            selected.insert(node);
        }
    }

    let label_of: BTreeMap<usize, i64> = selected.iter().enumerate().map(|(i, &c)| (c, i as i64)).collect();
    let mut parent_of = vec![usize::MAX; n + condensed.len() + 1];
    for e in condensed {
        parent_of[e.child] = e.parent;
    }
    (0..n)
        .map(|p| {
            let mut node = parent_of[p];
            while node != usize::MAX {
                if let Some(&l) = label_of.get(&node) {
                    return l;
                }
                node = parent_of[node];
            }
            NOISE
        })
        .collect()
}
