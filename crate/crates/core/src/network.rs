//! k-regular population structures.
//!
//! Nodes are `0..n`. Every undirected edge gets a stable id in `0..n*k/2`,
//! and each adjacency slot remembers the id of the edge it belongs to, so
//! per-edge state can be stored in flat vectors.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};

use crate::error::{Error, Result};
use crate::seed::SimRng;

/// Restarts allowed before [`RegularGraph::random_regular`] gives up.
pub const RANDOM_REGULAR_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    degree: usize,
    /// `neighbors[i * degree + s]` is the `s`-th neighbour of node `i`.
    neighbors: Vec<u32>,
    /// Edge id of each adjacency slot.
    slot_edges: Vec<u32>,
    edges: Vec<(u32, u32)>,
}

impl RegularGraph {
    /// Builds a graph from per-node neighbour lists and checks every invariant.
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Result<Self> {
        let n = adjacency.len();
        if n < 2 {
            return Err(Error::InfeasibleGraph(format!("{n} nodes")));
        }
        let degree = adjacency[0].len();
        if degree == 0 {
            return Err(Error::InfeasibleGraph("degree 0".into()));
        }
        let mut neighbors = Vec::with_capacity(n * degree);
        for (i, list) in adjacency.iter().enumerate() {
            if list.len() != degree {
                return Err(Error::InfeasibleGraph(format!(
                    "node {i} has degree {} (expected {degree})",
                    list.len()
                )));
            }
            for &j in list {
                if j >= n {
                    return Err(Error::InfeasibleGraph(format!("node {i} links to {j} >= {n}")));
                }
                neighbors.push(j as u32);
            }
        }

        let mut slot_edges = vec![u32::MAX; n * degree];
        let mut edges = Vec::with_capacity(n * degree / 2);
        for i in 0..n {
            for s in 0..degree {
                let j = neighbors[i * degree + s] as usize;
                if j == i {
                    return Err(Error::InfeasibleGraph(format!("self-loop at node {i}")));
                }
                if neighbors[i * degree..i * degree + s].contains(&(j as u32)) {
                    return Err(Error::InfeasibleGraph(format!("duplicate edge {i}-{j}")));
                }
                if i < j {
                    let back = neighbors[j * degree..(j + 1) * degree]
                        .iter()
                        .position(|&x| x as usize == i)
                        .ok_or_else(|| {
                            Error::InfeasibleGraph(format!("edge {i}-{j} is not symmetric"))
                        })?;
                    let id = edges.len() as u32;
                    edges.push((i as u32, j as u32));
                    slot_edges[i * degree + s] = id;
                    slot_edges[j * degree + back] = id;
                }
            }
        }
        if let Some(slot) = slot_edges.iter().position(|&e| e == u32::MAX) {
            let i = slot / degree;
            return Err(Error::InfeasibleGraph(format!(
                "edge {i}-{} is not symmetric",
                neighbors[slot]
            )));
        }
        Ok(RegularGraph { degree, neighbors, slot_edges, edges })
    }

    /// Periodic square lattice where each node links to its four orthogonal
    /// neighbours (up, down, left, right).
    pub fn von_neumann(side: usize) -> Result<Self> {
        Self::lattice(side, &[(-1, 0), (1, 0), (0, -1), (0, 1)])
    }

    /// Periodic square lattice with the four orthogonal and four diagonal
    /// neighbours.
    pub fn moore(side: usize) -> Result<Self> {
        Self::lattice(
            side,
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        )
    }

    fn lattice(side: usize, offsets: &[(isize, isize)]) -> Result<Self> {
        if side < 3 {
            return Err(Error::param("side", format!("{side} < 3 duplicates wrapped neighbours")));
        }
        let s = side as isize;
        let adjacency: Vec<Vec<usize>> = (0..side * side)
            .map(|node| {
                let (r, c) = ((node / side) as isize, (node % side) as isize);
                offsets
                    .iter()
                    .map(|&(dr, dc)| ((r + dr).rem_euclid(s) * s + (c + dc).rem_euclid(s)) as usize)
                    .collect()
            })
            .collect();
        Self::from_adjacency(&adjacency)
    }

    /// Complete graph `K_n`, degree `n - 1`.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("{n} < 2")));
        }
        let adjacency: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self::from_adjacency(&adjacency)
    }

    /// Random simple k-regular graph from the pairing model.
    ///
    /// Half-edges ("points") are paired one pair at a time; a pair that
    /// would create a loop or a repeated edge is rejected and redrawn. When
    /// no admissible pair is left the attempt restarts from scratch, up to
    /// [`RANDOM_REGULAR_MAX_ATTEMPTS`] times. Deterministic in `seed`.
    pub fn random_regular(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k >= n || (n * k) % 2 == 1 {
            return Err(Error::InfeasibleGraph(format!(
                "no simple {k}-regular graph on {n} nodes"
            )));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        for _ in 0..RANDOM_REGULAR_MAX_ATTEMPTS {
            if let Some(adjacency) = try_pairing(n, k, &mut rng) {
                return Self::from_adjacency(&adjacency);
            }
        }
        Err(Error::GraphConstruction { attempts: RANDOM_REGULAR_MAX_ATTEMPTS })
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len() / self.degree
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node * self.degree..(node + 1) * self.degree]
    }

    /// Edge ids aligned with [`neighbors`](Self::neighbors).
    #[inline]
    pub fn incident_edges(&self, node: usize) -> &[u32] {
        &self.slot_edges[node * self.degree..(node + 1) * self.degree]
    }

    /// Endpoints of every edge, indexed by edge id, with `u < v`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn are_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).contains(&(v as u32))
    }

    /// Full scan of the regularity, symmetry and simplicity invariants.
    pub fn validate(&self) -> Result<()> {
        let adjacency: Vec<Vec<usize>> = (0..self.n_nodes())
            .map(|i| self.neighbors(i).iter().map(|&j| j as usize).collect())
            .collect();
        let rebuilt = Self::from_adjacency(&adjacency)?;
        if rebuilt.n_edges() * 2 != self.n_nodes() * self.degree {
            return Err(Error::InfeasibleGraph("edge count mismatch".into()));
        }
        Ok(())
    }
}

fn try_pairing(n: usize, k: usize, rng: &mut SimRng) -> Option<Vec<Vec<usize>>> {
    let mut points: Vec<usize> = (0..n * k).map(|p| p / k).collect();
    points.shuffle(rng);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::with_capacity(k); n];
    let admissible =
        |adj: &Vec<Vec<usize>>, u: usize, v: usize| u != v && !adj[u].contains(&v);

    while !points.is_empty() {
        let m = points.len();
        let mut paired = false;
        // A handful of blind redraws handles almost every step; fall back to
        // an exhaustive check before declaring the attempt stuck.
        for _ in 0..32 {
            let a = rng.random_range(0..m);
            let b = rng.random_range(0..m);
            if a != b && admissible(&adjacency, points[a], points[b]) {
                take_pair(&mut points, &mut adjacency, a, b);
                paired = true;
                break;
            }
        }
        if paired {
            continue;
        }
        let candidates: Vec<(usize, usize)> = (0..m)
            .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
            .filter(|&(a, b)| admissible(&adjacency, points[a], points[b]))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let (a, b) = candidates[rng.random_range(0..candidates.len())];
        take_pair(&mut points, &mut adjacency, a, b);
    }
    Some(adjacency)
}

fn take_pair(points: &mut Vec<usize>, adjacency: &mut [Vec<usize>], a: usize, b: usize) {
    let (u, v) = (points[a], points[b]);
    adjacency[u].push(v);
    adjacency[v].push(u);
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    points.swap_remove(hi);
    points.swap_remove(lo);
}
