//! Hierarchical density clustering with excess-of-mass extraction.
//!
//! Core distance is the distance to the `k`-th nearest point counting the
//! point itself (`k = min_cluster_size`). Merges at equal mutual-reachability
//! distance are treated as one simultaneous split, so the condensed tree is
//! exactly the tree of connected components of size `>= min_cluster_size`
//! as the distance threshold falls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanOptions {
    pub min_cluster_size: usize,
    /// Lets the root be selected when it is more stable than any split.
    pub allow_single_cluster: bool,
}

impl HdbscanOptions {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanOptions {
            min_cluster_size,
            allow_single_cluster: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// `-1` is noise; clusters are numbered `0..K` by their smallest member index.
    pub labels: Vec<i32>,
    pub membership_strength: Vec<f64>,
    pub warning: Option<String>,
}

impl ClusterAssignment {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    fn all_noise(n: usize, warning: Option<String>) -> Self {
        ClusterAssignment {
            labels: vec![-1; n],
            membership_strength: vec![0.0; n],
            warning,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn core_distances<R: AsRef<[f64]>>(points: &[R], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut row = vec![0f64; n];
    (0..n)
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = dist(points[i].as_ref(), points[j].as_ref());
            }
            let k = k.clamp(1, n) - 1;
            *row.select_nth_unstable_by(k, f64::total_cmp).1
        })
        .collect()
}

/// Minimum spanning tree of the mutual-reachability graph (Prim, dense).
/// Among equal candidates the lowest point index wins. Edges are returned
/// sorted by `(weight, min index, max index)`.
pub fn mutual_reachability_mst<R: AsRef<[f64]>>(points: &[R], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = dist(points[current].as_ref(), points[j].as_ref())
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next].min(next), from[next].max(next), best[next]));
        current = next;
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage hierarchy with equal-distance merges flattened: each
/// internal node holds every component joined at its distance.
struct Hierarchy {
    n: usize,
    children: Vec<Vec<usize>>,
    distance: Vec<f64>,
    size: Vec<usize>,
}

impl Hierarchy {
    fn build(n: usize, mst: &[(usize, usize, f64)]) -> Self {
        let mut h = Hierarchy {
            n,
            children: vec![Vec::new(); n],
            distance: vec![0.0; n],
            size: vec![1; n],
        };
        let mut uf = UnionFind::new(2 * n);
        // current tree node of each union-find root
        let mut node_of: Vec<usize> = (0..2 * n).collect();
        for &(a, b, w) in mst {
            let (ra, rb) = (uf.find(a), uf.find(b));
            let (na, nb) = (node_of[ra], node_of[rb]);
            let mut kids = Vec::new();
            for c in [na, nb] {
                if c >= n && h.distance[c] == w {
                    kids.extend(h.children[c].iter().copied());
                } else {
                    kids.push(c);
                }
            }
            let id = h.children.len();
            h.size.push(h.size[na] + h.size[nb]);
            h.children.push(kids);
            h.distance.push(w);
            uf.parent[rb] = ra;
            node_of[ra] = id;
        }
        h
    }

    fn root(&self) -> usize {
        self.children.len() - 1
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        if node < self.n {
            out.push(node);
        } else {
            for &c in &self.children[node] {
                self.leaves(c, out);
            }
        }
    }
}

fn lambda(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// `a - b` for lambdas, with `inf - inf = 0`.
fn lambda_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

#[derive(Debug, Clone)]
struct CondensedCluster {
    birth: f64,
    pub size: usize,
    pub children: Vec<usize>,
    /// Points leaving this cluster directly, with the lambda at which they leave.
    pub fallouts: Vec<(usize, f64)>,
}

fn condense(h: &Hierarchy, m: usize) -> Vec<CondensedCluster> {
    let mut clusters = vec![CondensedCluster {
        birth: 0.0,
        size: h.n,
        children: Vec::new(),
        fallouts: Vec::new(),
    }];
    let mut queue = std::collections::VecDeque::from([(h.root(), 0usize)]);
    let mut leaves = Vec::new();
    while let Some((node, c)) = queue.pop_front() {
        let lam = lambda(h.distance[node]);
        let kids = &h.children[node];
        let big: Vec<usize> = kids.iter().copied().filter(|&k| h.size[k] >= m).collect();
        for &k in kids.iter().filter(|&&k| h.size[k] < m) {
            leaves.clear();
            h.leaves(k, &mut leaves);
            clusters[c].fallouts.extend(leaves.iter().map(|&p| (p, lam)));
        }
        match big.len() {
            0 => {}
            1 => queue.push_back((big[0], c)),
            _ => {
                for k in big {
                    let id = clusters.len();
                    clusters.push(CondensedCluster {
                        birth: lam,
                        size: h.size[k],
                        children: Vec::new(),
                        fallouts: Vec::new(),
                    });
                    clusters[c].children.push(id);
                    queue.push_back((k, id));
                }
            }
        }
    }
    clusters
}

fn stability(clusters: &[CondensedCluster], c: usize) -> f64 {
    let cl = &clusters[c];
    let own: f64 = cl.fallouts.iter().map(|&(_, l)| lambda_gap(l, cl.birth)).sum();
    let kids: f64 = cl
        .children
        .iter()
        .map(|&k| lambda_gap(clusters[k].birth, cl.birth) * clusters[k].size as f64)
        .sum();
    own + kids
}

/// Excess-of-mass selection. Children are numbered after their parents, so
/// a reverse sweep sees every subtree before its root.
fn select(clusters: &[CondensedCluster], allow_single_cluster: bool) -> Vec<bool> {
    let k = clusters.len();
    let mut best = vec![0f64; k];
    let mut selected = vec![false; k];
    for c in (0..k).rev() {
        let own = stability(clusters, c);
        let below: f64 = clusters[c].children.iter().map(|&ch| best[ch]).sum();
        let is_root = c == 0;
        if clusters[c].children.is_empty() {
            selected[c] = !is_root;
            best[c] = own;
        } else if below > own || (is_root && !allow_single_cluster) {
            best[c] = below;
        } else {
            selected[c] = true;
            best[c] = own;
        }
    }
    if clusters[0].children.is_empty() {
        let fallouts = &clusters[0].fallouts;
        let zero_extent = !fallouts.is_empty() && fallouts.iter().all(|f| f.1.is_infinite());
        selected[0] = allow_single_cluster || zero_extent;
    }
    // keep only the topmost selected cluster on every path
    let mut stack = vec![(0usize, false)];
    while let Some((c, covered)) = stack.pop() {
        if covered {
            selected[c] = false;
        }
        let covers = covered || selected[c];
        for &ch in &clusters[c].children {
            stack.push((ch, covers));
        }
    }
    selected
}

fn subtree_fallouts(clusters: &[CondensedCluster], c: usize, out: &mut Vec<(usize, f64)>) {
    out.extend(clusters[c].fallouts.iter().copied());
    for &ch in &clusters[c].children {
        subtree_fallouts(clusters, ch, out);
    }
}

/// Clusters `points` by hierarchical density.
///
/// Fewer points than `min_cluster_size` yields all noise with a warning.
/// When no split exists and all mutual-reachability distances are zero
/// (all points identical), the root is the single cluster.
pub fn hdbscan<R: AsRef<[f64]>>(points: &[R], opts: HdbscanOptions) -> Result<ClusterAssignment> {
    let m = opts.min_cluster_size;
    if m < 2 {
        return Err(Error::Validation(format!("min_cluster_size must be >= 2, got {m}")));
    }
    let n = points.len();
    if n < m {
        return Ok(ClusterAssignment::all_noise(
            n,
            Some(format!("{n} points is fewer than min_cluster_size {m}; all points are noise")),
        ));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::Validation("points must be finite".into()));
    }

    let core = core_distances(points, m);
    let mst = mutual_reachability_mst(points, &core);
    let hierarchy = Hierarchy::build(n, &mst);
    let clusters = condense(&hierarchy, m);
    let selected = select(&clusters, opts.allow_single_cluster);

    let mut groups: Vec<Vec<(usize, f64)>> = Vec::new();
    for c in (0..clusters.len()).filter(|&c| selected[c]) {
        let mut members = Vec::new();
        subtree_fallouts(&clusters, c, &mut members);
        members.sort_by_key(|&(p, _)| p);
        groups.push(members);
    }
    groups.sort_by_key(|g| g[0].0);

    let mut labels = vec![-1i32; n];
    let mut strength = vec![0f64; n];
    for (label, members) in groups.iter().enumerate() {
        let max = members.iter().map(|&(_, l)| l).fold(0f64, f64::max);
        for &(p, l) in members {
            labels[p] = label as i32;
            strength[p] = if max.is_infinite() || max == 0.0 {
                1.0
            } else {
                l.min(max) / max
            };
        }
    }
    Ok(ClusterAssignment {
        labels,
        membership_strength: strength,
        warning: None,
    })
}

/// [`hdbscan`] with the root never selectable except when all points coincide.
pub fn hdbscan_cluster<R: AsRef<[f64]>>(points: &[R], min_cluster_size: usize) -> Result<ClusterAssignment> {
    hdbscan(points, HdbscanOptions::new(min_cluster_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![1.0, 2.0]; 20];
        let a = hdbscan_cluster(&pts, 5).unwrap();
        assert_eq!(a.labels, vec![0; 20]);
        assert_eq!(a.noise_count(), 0);
    }

    #[test]
    fn too_few_points_warns() {
        let pts = vec![vec![0.0], vec![1.0]];
        let a = hdbscan_cluster(&pts, 5).unwrap();
        assert_eq!(a.labels, vec![-1, -1]);
        assert!(a.warning.is_some());
    }

    #[test]
    fn min_cluster_size_one_rejected() {
        assert!(hdbscan_cluster(&[vec![0.0]], 1).is_err());
    }

    #[test]
    fn mst_is_spanning_and_sorted() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![(i * i % 7) as f64, (i % 3) as f64]).collect();
        let core = core_distances(&pts, 3);
        let mst = mutual_reachability_mst(&pts, &core);
        assert_eq!(mst.len(), 11);
        assert!(mst.windows(2).all(|w| w[0].2 <= w[1].2));
        let mut uf = UnionFind::new(12);
        for &(a, b, _) in &mst {
            let (ra, rb) = (uf.find(a), uf.find(b));
            assert_ne!(ra, rb, "cycle");
            uf.parent[rb] = ra;
        }
    }

    #[test]
    fn equal_merges_are_flattened() {
        // three tight pairs joined to each other at the same distance
        let pts = vec![
            vec![0.0],
            vec![0.1],
            vec![10.0],
            vec![10.1],
            vec![20.0],
            vec![20.1],
        ];
        let core = core_distances(&pts, 2);
        let mst = mutual_reachability_mst(&pts, &core);
        let h = Hierarchy::build(6, &mst);
        let root = h.root();
        assert_eq!(h.children[root].len(), 3);
        let clusters = condense(&h, 2);
        assert_eq!(clusters[0].children.len(), 3);
    }

    #[test]
    fn core_distance_counts_self() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(core_distances(&pts, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(core_distances(&pts, 2), vec![1.0, 1.0, 2.0]);
    }
}
