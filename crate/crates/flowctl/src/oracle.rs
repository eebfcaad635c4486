//! Sequential reference implementations the engine is checked against.
//! None of them share code with the engine.

use std::collections::{BTreeMap, BTreeSet};

/// Component of every vertex, named by its smallest vertex id.
pub fn oracle_cc(edges: &[(i64, i64)]) -> BTreeMap<i64, i64> {
    let ids: Vec<i64> = edges.iter().flat_map(|&(a, b)| [a, b]).collect::<BTreeSet<_>>().into_iter().collect();
    let index = |v: i64| ids.binary_search(&v).unwrap();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, index(a)), find(&mut parent, index(b)));
        // the smaller index (and thus smaller id) becomes the root
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..ids.len()).map(|i| (ids[i], ids[find(&mut parent, i)])).collect()
}

fn adjacency(edges: &[(i64, i64)]) -> BTreeMap<i64, BTreeSet<i64>> {
    let mut adj: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default();
        adj.entry(b).or_default();
        if a != b {
            adj.get_mut(&a).unwrap().insert(b);
            adj.get_mut(&b).unwrap().insert(a);
        }
    }
    adj
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceStep {
    /// |w| at the start of the iteration.
    pub workset_size: u64,
    /// Vertices whose component id changed in the iteration.
    pub updates: u64,
}

/// INCR-CC from Table 1: w starts as every (v, s(u)) for neighbors u of v;
/// each vertex with a smaller candidate takes the smallest one and offers it
/// to its neighbors. w is a set.
pub fn incr_cc_trace(edges: &[(i64, i64)]) -> Vec<TraceStep> {
    let adj = adjacency(edges);
    let mut s: BTreeMap<i64, i64> = adj.keys().map(|&v| (v, v)).collect();
    let mut w: BTreeSet<(i64, i64)> = adj.iter().flat_map(|(&v, ns)| ns.iter().map(move |&u| (v, u))).collect();
    let mut trace = Vec::new();
    while !w.is_empty() {
        let mut new: BTreeMap<i64, i64> = BTreeMap::new();
        for &(x, c) in &w {
            if c < s[&x] {
                let e = new.entry(x).or_insert(c);
                *e = (*e).min(c);
            }
        }
        let mut next = BTreeSet::new();
        for (&x, &c) in &new {
            for &z in &adj[&x] {
                next.insert((z, c));
            }
        }
        trace.push(TraceStep {
            workset_size: w.len() as u64,
            updates: new.len() as u64,
        });
        s.extend(new);
        w = next;
    }
    trace
}

/// Evaluations of FIXPOINT-CC's loop condition, the last of which finds no
/// vertex with a smaller neighbor. Each iteration reads the previous state.
pub fn fixpoint_cc_evaluations(edges: &[(i64, i64)]) -> u64 {
    let adj = adjacency(edges);
    let mut s: BTreeMap<i64, i64> = adj.keys().map(|&v| (v, v)).collect();
    let mut evaluations = 0;
    loop {
        evaluations += 1;
        let next: BTreeMap<i64, i64> = adj
            .iter()
            .map(|(&v, ns)| (v, ns.iter().map(|x| s[x]).fold(s[&v], i64::min)))
            .collect();
        if next == s {
            return evaluations;
        }
        s = next;
    }
}

/// Dense power iteration over the column-stochastic link matrix. Duplicate
/// links count once, pages without links point to every page, and optional
/// damping mixes each column with the uniform distribution.
#[derive(Clone, Debug)]
pub struct DensePageRank {
    pub pages: Vec<i64>,
    /// `matrix[t][p]`: probability of moving from page p to page t.
    matrix: Vec<Vec<f64>>,
}

impl DensePageRank {
    pub fn new(edges: &[(i64, i64)], damping: Option<f64>) -> Self {
        let pages: Vec<i64> = edges.iter().flat_map(|&(a, b)| [a, b]).collect::<BTreeSet<_>>().into_iter().collect();
        let n = pages.len();
        let at = |v: i64| pages.binary_search(&v).unwrap();
        let mut links = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            links[at(a)].insert(at(b));
        }
        let mut matrix = vec![vec![0.0; n]; n];
        for (p, out) in links.iter().enumerate() {
            for t in 0..n {
                let mut v = if out.is_empty() {
                    1.0 / n as f64
                } else if out.contains(&t) {
                    1.0 / out.len() as f64
                } else {
                    0.0
                };
                if let Some(alpha) = damping {
                    v = alpha * v + (1.0 - alpha) / n as f64;
                }
                matrix[t][p] = v;
            }
        }
        DensePageRank { pages, matrix }
    }

    pub fn initial(&self) -> Vec<f64> {
        vec![1.0 / self.pages.len() as f64; self.pages.len()]
    }

    pub fn step(&self, r: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|row| row.iter().zip(r).map(|(m, x)| m * x).sum()).collect()
    }

    /// Rank vector after `iterations` multiplications.
    pub fn ranks(&self, iterations: u64) -> Vec<(i64, f64)> {
        let mut r = self.initial();
        for _ in 0..iterations {
            r = self.step(&r);
        }
        self.pages.iter().copied().zip(r).collect()
    }

    /// First iteration whose vector differs from its predecessor by at most
    /// `epsilon` in every component.
    pub fn iterations_to_epsilon(&self, epsilon: f64, limit: u64) -> Option<u64> {
        let mut r = self.initial();
        for i in 1..=limit {
            let next = self.step(&r);
            let delta = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if delta <= epsilon {
                return Some(i);
            }
            r = next;
        }
        None
    }
}
