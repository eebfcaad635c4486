//! Deterministic synthetic graphs. Vertex ids start at 1.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Edges, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// 1 - 2 - ... - n
    Chain(u64),
    /// Center 1 linked to leaves 2..=n.
    Star(u64),
    Clique(u64),
    /// m distinct vertex pairs drawn from 1..=n, each with a random direction.
    Random { n: u64, m: u64, seed: u64 },
    /// k connected components of `size` vertices with shuffled ids.
    Components { k: u64, size: u64, seed: u64 },
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Chain(n) => write!(f, "chain({n})"),
            GraphKind::Star(n) => write!(f, "star({n})"),
            GraphKind::Clique(n) => write!(f, "clique({n})"),
            GraphKind::Random { n, m, seed } => write!(f, "random({n},{m},{seed})"),
            GraphKind::Components { k, size, seed } => write!(f, "components({k},{size},{seed})"),
        }
    }
}

/// Parses the notation printed by `Display`, e.g. `random(100,300,42)`.
impl FromStr for GraphKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HarnessError::InvalidParams(format!("cannot parse graph kind `{s}`"));
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let nums: Vec<u64> = args
            .split(',')
            .map(|a| a.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        Ok(match (name.trim(), nums.as_slice()) {
            ("chain", &[n]) => GraphKind::Chain(n),
            ("star", &[n]) => GraphKind::Star(n),
            ("clique", &[n]) => GraphKind::Clique(n),
            ("random", &[n, m, seed]) => GraphKind::Random { n, m, seed },
            ("components", &[k, size, seed]) => GraphKind::Components { k, size, seed },
            _ => return Err(bad()),
        })
    }
}

fn invalid(msg: String) -> HarnessError {
    HarnessError::InvalidParams(msg)
}

pub fn generate_graph(kind: GraphKind) -> Result<Edges> {
    match kind {
        GraphKind::Chain(n) | GraphKind::Star(n) | GraphKind::Clique(n) if n < 2 => {
            Err(invalid(format!("{kind} needs at least two vertices")))
        }
        GraphKind::Chain(n) => Ok((1..n as i64).map(|v| (v, v + 1)).collect()),
        GraphKind::Star(n) => Ok((2..=n as i64).map(|l| (1, l)).collect()),
        GraphKind::Clique(n) => {
            let n = n as i64;
            Ok((1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect())
        }
        GraphKind::Random { n, m, seed } => random(n, m, seed),
        GraphKind::Components { k, size, seed } => components(k, size, seed),
    }
}

fn random(n: u64, m: u64, seed: u64) -> Result<Edges> {
    let max = n.saturating_mul(n.saturating_sub(1)) / 2;
    if n < 2 || m == 0 || m > max {
        return Err(invalid(format!("random({n},{m},{seed}) needs n >= 2 and 0 < m <= n(n-1)/2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(i64, i64)> = if m.saturating_mul(4) >= max {
        let mut all: Vec<(i64, i64)> = (1..=n as i64).flat_map(|a| (a + 1..=n as i64).map(move |b| (a, b))).collect();
        all.shuffle(&mut rng);
        all.truncate(m as usize);
        all
    } else {
        let mut seen = HashSet::with_capacity(m as usize);
        let mut out = Vec::with_capacity(m as usize);
        while out.len() < m as usize {
            let a = rng.gen_range(1..=n as i64);
            let b = rng.gen_range(1..=n as i64);
            if a != b && seen.insert((a.min(b), a.max(b))) {
                out.push((a.min(b), a.max(b)));
            }
        }
        out
    };
    Ok(pairs.into_iter().map(|(a, b)| if rng.gen_bool(0.5) { (a, b) } else { (b, a) }).collect())
}

fn components(k: u64, size: u64, seed: u64) -> Result<Edges> {
    if k == 0 || size < 2 {
        return Err(invalid(format!("components({k},{size},{seed}) needs k >= 1 and size >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<i64> = (1..=(k * size) as i64).collect();
    ids.shuffle(&mut rng);
    let mut edges = Vec::new();
    for block in ids.chunks(size as usize) {
        // random spanning tree, then a few chords
        for i in 1..block.len() {
            edges.push((block[rng.gen_range(0..i)], block[i]));
        }
        for _ in 0..block.len() / 2 {
            let (a, b) = (block[rng.gen_range(0..block.len())], block[rng.gen_range(0..block.len())]);
            if a != b {
                edges.push((a, b));
            }
        }
    }
    Ok(edges)
}

/// Concatenates graphs after shifting each one's ids past the previous ones.
pub fn disjoint_union(parts: &[Edges]) -> Edges {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in parts {
        let top = part.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
        out.extend(part.iter().map(|&(a, b)| (a + offset, b + offset)));
        offset += top;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_of_four() {
        assert_eq!(generate_graph(GraphKind::Chain(4)).unwrap(), vec![(1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn clique_and_star_sizes() {
        assert_eq!(generate_graph(GraphKind::Clique(5)).unwrap().len(), 10);
        assert_eq!(generate_graph(GraphKind::Star(5)).unwrap(), vec![(1, 2), (1, 3), (1, 4), (1, 5)]);
    }

    #[test]
    fn random_is_seeded() {
        let k = GraphKind::Random { n: 100, m: 300, seed: 42 };
        let a = generate_graph(k).unwrap();
        assert_eq!(a, generate_graph(k).unwrap());
        assert_ne!(a, generate_graph(GraphKind::Random { n: 100, m: 300, seed: 43 }).unwrap());
        let distinct: HashSet<(i64, i64)> = a.iter().map(|&(x, y)| (x.min(y), x.max(y))).collect();
        assert_eq!(distinct.len(), 300);
        assert!(a.iter().all(|&(x, y)| x != y && (1..=100).contains(&x) && (1..=100).contains(&y)));
    }

    #[test]
    fn dense_random_uses_every_pair() {
        assert_eq!(generate_graph(GraphKind::Random { n: 5, m: 10, seed: 1 }).unwrap().len(), 10);
    }

    #[test]
    fn rejects_bad_parameters() {
        for k in [
            GraphKind::Chain(1),
            GraphKind::Random { n: 4, m: 7, seed: 0 },
            GraphKind::Random { n: 4, m: 0, seed: 0 },
            GraphKind::Components { k: 2, size: 1, seed: 0 },
        ] {
            assert!(matches!(generate_graph(k), Err(HarnessError::InvalidParams(_))), "{k}");
        }
    }

    #[test]
    fn kinds_parse_their_display() {
        for k in [
            GraphKind::Chain(4),
            GraphKind::Star(9),
            GraphKind::Clique(3),
            GraphKind::Random { n: 100, m: 300, seed: 42 },
            GraphKind::Components { k: 3, size: 5, seed: 1 },
        ] {
            assert_eq!(k.to_string().parse::<GraphKind>().unwrap(), k);
        }
        assert!("ring(4)".parse::<GraphKind>().is_err());
        assert!("chain(4".parse::<GraphKind>().is_err());
    }

    #[test]
    fn union_shifts_ids() {
        let u = disjoint_union(&[vec![(1, 2)], vec![(1, 3)]]);
        assert_eq!(u, vec![(1, 2), (3, 5)]);
    }
}
