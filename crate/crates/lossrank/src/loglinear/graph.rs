//! Undirected graphs on `k` vertices stored as an upper-triangular edge
//! bitstring, the chromosome representation used by the structure search.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Position of the (a, b) edge bit, `a < b` 0-based, in the upper-triangular
/// row-major order: (0,1), (0,2), ..., (0,k-1), (1,2), ...
pub fn pair_position(k: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < k);
    (k - 1) * a + b - 1 - a * (a + 1) / 2
}

/// An undirected graph over vertices `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    k: usize,
    edges: Vec<bool>,
}

impl Graph {
    pub fn empty(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        Ok(Graph {
            k,
            edges: vec![false; k * (k - 1) / 2],
        })
    }

    pub fn complete(k: usize) -> Result<Self> {
        let mut g = Graph::empty(k)?;
        g.edges.fill(true);
        Ok(g)
    }

    /// Builds a graph from its edge bitstring; the length must be k(k-1)/2.
    pub fn from_edge_bits(k: usize, edges: Vec<bool>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        if edges.len() != k * (k - 1) / 2 {
            return Err(Error::invalid(format!(
                "edge bitstring for k={k} must have length {}, got {}",
                k * (k - 1) / 2,
                edges.len()
            )));
        }
        Ok(Graph { k, edges })
    }

    pub fn from_edges(k: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(k)?;
        for &(a, b) in pairs {
            if a == b || a >= k || b >= k {
                return Err(Error::invalid(format!("bad edge ({a}, {b}) for k={k}")));
            }
            g.set_edge(a, b, true);
        }
        Ok(g)
    }

    /// Decodes enumeration code `code`: bit `j` of the integer is edge bit `j`.
    pub fn from_code(k: usize, code: u64) -> Result<Self> {
        let bits = k * (k - 1) / 2;
        if bits > 64 {
            return Err(Error::invalid(format!(
                "k={k} has {bits} edge bits, more than a u64 code"
            )));
        }
        if bits < 64 && code >> bits != 0 {
            return Err(Error::invalid("code has bits beyond the edge count"));
        }
        let edges = (0..bits).map(|j| code >> j & 1 == 1).collect();
        Graph::from_edge_bits(k, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.k
    }

    pub fn edge_bits(&self) -> &[bool] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&b| b).count()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges[pair_position(self.k, a, b)]
    }

    pub fn set_edge(&mut self, a: usize, b: usize, present: bool) {
        assert!(a != b && a < self.k && b < self.k, "bad edge ({a}, {b})");
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let pos = pair_position(self.k, a, b);
        self.edges[pos] = present;
    }

    /// Adjacency of vertex `v` as a bitmask (requires k <= 64).
    fn neighbor_mask(&self, v: usize) -> u64 {
        let mut mask = 0u64;
        for u in 0..self.k {
            if u != v && self.has_edge(u, v) {
                mask |= 1 << u;
            }
        }
        mask
    }
}

/// Compact text form `k:bits`, e.g. `3:101` for the two-edge chain on three
/// vertices.
impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.k)?;
        for &b in &self.edges {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k_part, bits_part) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("graph string {s:?} is not `k:bits`")))?;
        let k: usize = k_part
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad vertex count in {s:?}")))?;
        let edges = bits_part
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("bad bit {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Graph::from_edge_bits(k, edges)
    }
}

/// Enumerates the maximal cliques via Bron-Kerbosch with pivoting.
///
/// Cliques come back sorted internally and lexicographically as a list;
/// isolated vertices appear as singleton cliques.
pub fn maximal_cliques(graph: &Graph) -> Vec<Vec<usize>> {
    let k = graph.vertex_count();
    assert!(k <= 64, "clique enumeration supports at most 64 vertices");
    let adj: Vec<u64> = (0..k).map(|v| graph.neighbor_mask(v)).collect();
    let mut cliques = Vec::new();
    let all = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    bron_kerbosch(&adj, 0, all, 0, &mut cliques);
    let mut out: Vec<Vec<usize>> = cliques
        .into_iter()
        .map(|mask| (0..k).filter(|&v| mask >> v & 1 == 1).collect())
        .collect();
    out.sort();
    out
}

fn bron_kerbosch(adj: &[u64], r: u64, mut p: u64, mut x: u64, out: &mut Vec<u64>) {
    if p == 0 && x == 0 {
        out.push(r);
        return;
    }
    // pivot on the candidate with the most neighbors inside P
    let pivot = iter_bits(p | x)
        .max_by_key(|&v| (adj[v] & p).count_ones())
        .expect("p | x is nonempty");
    let candidates = p & !adj[pivot];
    for v in iter_bits(candidates) {
        let bit = 1u64 << v;
        bron_kerbosch(adj, r | bit, p & adj[v], x & adj[v], out);
        p &= !bit;
        x |= bit;
    }
}

fn iter_bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(v)
        }
    })
}
