//! Brute-force density clustering: connected components of the full
//! mutual-reachability graph and exhaustive selection of the best antichain.

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn mutual_reachability(points: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| euclid(&points[i], &points[j])).collect();
            d.sort_by(f64::total_cmp);
            d[m - 1]
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| euclid(&points[i], &points[j]).max(core[i]).max(core[j]))
                .collect()
        })
        .collect()
}

/// Connected components of `set` using edges strictly lighter than `w`.
pub fn components(mr: &[Vec<f64>], set: &[usize], w: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for s in 0..set.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![set[s]];
        let mut stack = vec![s];
        while let Some(a) = stack.pop() {
            for b in 0..set.len() {
                if !seen[b] && mr[set[a]][set[b]] < w {
                    seen[b] = true;
                    comp.push(set[b]);
                    stack.push(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub struct RefCluster {
    points: Vec<usize>,
    birth: f64,
    exits: Vec<f64>,
    children: Vec<usize>,
    parent: Option<usize>,
}

pub fn inv(w: f64) -> f64 {
    if w > 0.0 {
        1.0 / w
    } else {
        f64::INFINITY
    }
}

pub fn grow(mr: &[Vec<f64>], m: usize, tree: &mut Vec<RefCluster>, c: usize) {
    let mut cur = tree[c].points.clone();
    let mut weights: Vec<f64> = cur
        .iter()
        .flat_map(|&a| cur.iter().filter(move |&&b| b > a).map(move |&b| mr[a][b]))
        .collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    weights.dedup();
    for w in weights {
        if cur.iter().all(|&a| cur.iter().all(|&b| a == b || mr[a][b] < w)) {
            continue;
        }
        let lam = inv(w);
        let comps = components(mr, &cur, w);
        let big: Vec<Vec<usize>> = comps.iter().filter(|c| c.len() >= m).cloned().collect();
        for small in comps.iter().filter(|c| c.len() < m) {
            tree[c].exits.extend(small.iter().map(|_| lam));
        }
        match big.len() {
            0 => return,
            1 => cur = big.into_iter().next().unwrap(),
            _ => {
                for b in big {
                    let id = tree.len();
                    tree.push(RefCluster {
                        points: b,
                        birth: lam,
                        exits: Vec::new(),
                        children: Vec::new(),
                        parent: Some(c),
                    });
                    tree[c].children.push(id);
                    grow(mr, m, tree, id);
                }
                return;
            }
        }
    }
}

/// `None` when the condensed tree is too large for exhaustive selection.
pub fn reference_labels(points: &[Vec<f64>], m: usize, allow_single: bool) -> Option<Vec<i32>> {
    let n = points.len();
    let mr = mutual_reachability(points, m);
    let mut tree = vec![RefCluster {
        points: (0..n).collect(),
        birth: 0.0,
        exits: Vec::new(),
        children: Vec::new(),
        parent: None,
    }];
    grow(&mr, m, &mut tree, 0);
    let stab: Vec<f64> = tree
        .iter()
        .map(|c| {
            c.exits.iter().map(|&l| l - c.birth).sum::<f64>()
                + c.children
                    .iter()
                    .map(|&k| (tree[k].birth - c.birth) * tree[k].points.len() as f64)
                    .sum::<f64>()
        })
        .collect();
    let ancestor = |a: usize, mut b: usize| loop {
        match tree[b].parent {
            Some(p) if p == a => return true,
            Some(p) => b = p,
            None => return false,
        }
    };
    let candidates: Vec<usize> = (0..tree.len()).filter(|&c| c > 0 || allow_single).collect();
    if candidates.len() > 20 {
        return None;
    }
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    for mask in 1u32..(1 << candidates.len()) {
        let chosen: Vec<usize> = (0..candidates.len())
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| candidates[i])
            .collect();
        let antichain = chosen
            .iter()
            .all(|&a| chosen.iter().all(|&b| a == b || (!ancestor(a, b) && !ancestor(b, a))));
        if !antichain {
            continue;
        }
        let total: f64 = chosen.iter().map(|&c| stab[c]).sum();
        if total > best.0 {
            best = (total, chosen);
        }
    }
    if tree.len() == 1 && tree[0].exits.iter().all(|l| l.is_infinite()) {
        best.1 = vec![0];
    }
    let mut groups: Vec<&Vec<usize>> = best.1.iter().map(|&c| &tree[c].points).collect();
    groups.sort_by_key(|g| g[0]);
    let mut labels = vec![-1; n];
    for (l, g) in groups.iter().enumerate() {
        for &p in g.iter() {
            labels[p] = l as i32;
        }
    }
    Some(labels)
}
