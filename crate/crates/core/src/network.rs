//! Directed interference networks and random generators.
//!
//! An edge `j -> i` means the treatment of `j` can affect the outcome of
//! `i`; `j` is then an in-neighbour of `i`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LueError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    in_neighbors: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network from `(source, target)` edges. Self-loops and
    /// duplicate edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(s, t) in edges {
            if s >= n || t >= n {
                return Err(LueError::InvalidNetwork(format!("edge {s} -> {t} outside 0..{n}")));
            }
            if s == t {
                return Err(LueError::InvalidNetwork(format!("self-loop at unit {s}")));
            }
            if !sets[t].insert(s) {
                return Err(LueError::InvalidNetwork(format!("duplicate edge {s} -> {t}")));
            }
        }
        Ok(Network { n, in_neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
    }

    /// `adj[j][i]` is true for an edge `j -> i`.
    pub fn from_adjacency(adj: &[Vec<bool>]) -> Result<Self> {
        let n = adj.len();
        let mut edges = Vec::new();
        for (j, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(LueError::LengthMismatch { expected: n, found: row.len() });
            }
            edges.extend(row.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (j, i)));
        }
        Network::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn check_unit(&self, unit: usize) -> Result<()> {
        if unit < self.n {
            Ok(())
        } else {
            Err(LueError::UnitOutOfRange { unit, n: self.n })
        }
    }

    pub fn in_neighbors(&self, unit: usize) -> &[usize] {
        &self.in_neighbors[unit]
    }

    pub fn in_degree(&self, unit: usize) -> usize {
        self.in_neighbors[unit].len()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.in_neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.in_neighbors.get(target).is_some_and(|v| v.binary_search(&source).is_ok())
    }

    pub fn num_edges(&self) -> usize {
        self.in_neighbors.iter().map(Vec::len).sum()
    }

    /// Edges as `(source, target)`, sorted by target then source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(t, v)| v.iter().map(move |&s| (s, t)))
            .collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.n]; self.n];
        for (s, t) in self.edges() {
            adj[s][t] = true;
        }
        adj
    }

    /// Same graph with unit `u` renamed to `perm[u]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(LueError::LengthMismatch { expected: self.n, found: perm.len() });
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(s, t)| (perm[s], perm[t])).collect();
        Network::from_edges(self.n, &edges)
    }

    /// Treated in-degree of every unit, `Aᵀ z`.
    pub fn treated_degrees(&self, allocation: &[u8]) -> Result<Vec<usize>> {
        if allocation.len() != self.n {
            return Err(LueError::LengthMismatch { expected: self.n, found: allocation.len() });
        }
        Ok((0..self.n).map(|i| self.treated_in_degree(i, allocation)).collect())
    }

    /// Number of treated in-neighbours of `unit` under `allocation`.
    pub fn treated_in_degree(&self, unit: usize, allocation: &[u8]) -> usize {
        self.in_neighbors[unit].iter().filter(|&&j| allocation[j] != 0).count()
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n {}\n", self.n);
        for (s, t) in self.edges() {
            let _ = writeln!(out, "{s} {t}");
        }
        out
    }

    /// Parses `source target` lines. A `# n <count>` comment fixes the unit
    /// count; otherwise it is one more than the largest label seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("n") {
                    let v = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        LueError::Parse(format!("line {}: bad unit-count header", lineno + 1))
                    })?;
                    n = Some(v);
                }
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[s, t]) => edges.push((s, t)),
                _ => return Err(LueError::Parse(format!("line {}: expected `source target`", lineno + 1))),
            }
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(s, t)| s.max(t) + 1).max().unwrap_or(0));
        Network::from_edges(n, &edges)
    }
}

/// Directed graph where every unit draws `k` distinct in-neighbours
/// uniformly from the other `n - 1` units.
pub fn gen_k_regular_directed(n: usize, k: usize, seed: u64) -> Result<Network> {
    gen_k_regular_directed_with(n, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_k_regular_directed_with<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Network> {
    if n == 0 || k >= n {
        return Err(LueError::InvalidNetwork(format!("cannot give {n} units in-degree {k}")));
    }
    let mut in_neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let mut nb: Vec<usize> = sample(rng, n - 1, k).into_iter().map(|j| if j >= i { j + 1 } else { j }).collect();
        nb.sort_unstable();
        in_neighbors.push(nb);
    }
    Ok(Network { n, in_neighbors })
}

/// Directed Erdős–Rényi graph: each ordered pair is an edge independently
/// with probability `p_edge`.
pub fn gen_erdos_renyi_directed(n: usize, p_edge: f64, seed: u64) -> Result<Network> {
    gen_erdos_renyi_directed_with(n, p_edge, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_erdos_renyi_directed_with<R: Rng + ?Sized>(n: usize, p_edge: f64, rng: &mut R) -> Result<Network> {
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(LueError::InvalidNetwork(format!("edge probability {p_edge} outside [0, 1]")));
    }
    let mut in_neighbors = vec![Vec::new(); n];
    for (i, nb) in in_neighbors.iter_mut().enumerate() {
        for j in 0..n {
            if j != i && rng.gen_bool(p_edge) {
                nb.push(j);
            }
        }
    }
    Ok(Network { n, in_neighbors })
}
