//! Exact fixation probabilities for small populations.
//!
//! [`exact_fixation`] solves the absorbing Markov chain of one death–birth
//! event over all `2^N` strategy configurations, with every edge playing
//! one fixed payoff matrix. For a variable-game environment that matrix is
//! the π-weighted average game ([`GameModel::Expected`]), which is what the
//! engine's i.i.d. mode plays in expectation at every event.
//!
//! [`lumped_fixation_complete`] uses the symmetry of complete graphs to
//! reduce the chain to a birth–death process on the cooperator count.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::engine::fitness;
use crate::error::{Error, Result};
use crate::games::{expected_game, DilemmaGame, GameDistribution, Strategy};
use crate::network::RegularGraph;

/// Largest population solved by dense LU.
pub const DENSE_MAX_NODES: usize = 10;
/// Largest population accepted at all (iterative solve above the dense cap).
pub const MAX_NODES: usize = 20;
/// Required residual of the absorption system.
pub const RESIDUAL_TOL: f64 = 1e-10;

const GAUSS_SEIDEL_MAX_SWEEPS: usize = 1_000_000;
const GAUSS_SEIDEL_STEP_TOL: f64 = 1e-14;
/// Largest graph whose per-state transition table is kept in memory.
const GAUSS_SEIDEL_CACHE_NODES: usize = 16;

/// Payoff structure seen by the exact solver.
#[derive(Debug, Clone, PartialEq)]
pub enum GameModel {
    Fixed(DilemmaGame),
    /// The matrix `Σ π_i M_i`.
    Expected { dist: GameDistribution, games: Vec<DilemmaGame> },
}

impl GameModel {
    pub fn matrix(&self) -> Result<DilemmaGame> {
        match self {
            GameModel::Fixed(g) => Ok(*g),
            GameModel::Expected { dist, games } => expected_game(dist, games),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    DenseLu,
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    /// Fixation probability of A from a single A, averaged over its position.
    pub rho_a: f64,
    /// Fixation probability of B from a single B, averaged over its position.
    pub rho_b: f64,
    /// Probability of absorbing in all-A from every configuration; entry `s`
    /// is the configuration whose bit `i` is set when node `i` plays A.
    pub absorption: Vec<f64>,
    /// Max-norm residual of the solved linear system.
    pub solver_residual: f64,
    pub method: SolveMethod,
}

/// Precomputed quantities of one death–birth event on a bitmask state.
struct Chain<'a> {
    graph: &'a RegularGraph,
    game: DilemmaGame,
    omega: f64,
    n: usize,
    full: u32,
}

impl Chain<'_> {
    fn strategy(s: u32, node: usize) -> Strategy {
        if s >> node & 1 == 1 {
            Strategy::A
        } else {
            Strategy::B
        }
    }

    fn node_fitness(&self, s: u32, node: usize) -> f64 {
        let own = Self::strategy(s, node);
        let payoff: f64 = self
            .graph
            .neighbors(node)
            .iter()
            .map(|&y| self.game.payoff(own, Self::strategy(s, y as usize)))
            .sum();
        fitness(self.omega, payoff)
    }

    /// For each node `x`, the probability that `x` plays A after it dies
    /// and is replaced.
    fn become_a(&self, s: u32, fit: &mut [f64], out: &mut [f64]) -> Result<()> {
        for (node, f) in fit.iter_mut().enumerate() {
            *f = self.node_fitness(s, node);
            if *f < 0.0 {
                return Err(Error::InvalidFitness { node, detail: format!("fitness {f} in state {s:#b}") });
            }
        }
        for (x, o) in out.iter_mut().enumerate() {
            let (mut total, mut a) = (0.0, 0.0);
            for &y in self.graph.neighbors(x) {
                let f = fit[y as usize];
                total += f;
                if s >> y & 1 == 1 {
                    a += f;
                }
            }
            if total <= 0.0 {
                return Err(Error::InvalidFitness { node: x, detail: format!("fitness sum {total} in state {s:#b}") });
            }
            *o = a / total;
        }
        Ok(())
    }
}

/// Successor states of `state` under one event with their probabilities
/// (self-transitions included, duplicates merged).
pub fn transition_row(graph: &RegularGraph, game: &DilemmaGame, omega: f64, state: u32) -> Result<Vec<(u32, f64)>> {
    let n = graph.n_nodes();
    let chain = Chain { graph, game: *game, omega, n, full: full_mask(n) };
    let mut fit = vec![0.0; n];
    let mut pa = vec![0.0; n];
    chain.become_a(state, &mut fit, &mut pa)?;
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(n + 1);
    let mut add = |t: u32, p: f64| {
        if p == 0.0 {
            return;
        }
        match row.iter_mut().find(|(s, _)| *s == t) {
            Some(e) => e.1 += p,
            None => row.push((t, p)),
        }
    };
    for x in 0..n {
        add(state | 1 << x, pa[x] / n as f64);
        add(state & !(1 << x), (1.0 - pa[x]) / n as f64);
    }
    Ok(row)
}

fn full_mask(n: usize) -> u32 {
    if n == 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Exact absorption probabilities of the death–birth chain on `graph`.
pub fn exact_fixation(graph: &RegularGraph, model: &GameModel, omega: f64) -> Result<ExactResult> {
    let n = graph.n_nodes();
    if n > MAX_NODES {
        return Err(Error::StateSpaceTooLarge { nodes: n, limit: MAX_NODES });
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::param("omega", format!("must lie in [0, 1], got {omega}")));
    }
    let chain = Chain { graph, game: model.matrix()?, omega, n, full: full_mask(n) };
    let (h, method) = if n <= DENSE_MAX_NODES {
        (solve_dense(&chain)?, SolveMethod::DenseLu)
    } else {
        (solve_gauss_seidel(&chain)?, SolveMethod::GaussSeidel)
    };
    let solver_residual = residual(&chain, &h)?;
    if !(solver_residual <= RESIDUAL_TOL) {
        return Err(Error::Solver(format!("residual {solver_residual:e} exceeds {RESIDUAL_TOL:e}")));
    }
    let full = chain.full;
    let rho_a = (0..n).map(|i| h[1usize << i]).sum::<f64>() / n as f64;
    let rho_b = (0..n).map(|i| 1.0 - h[(full & !(1u32 << i)) as usize]).sum::<f64>() / n as f64;
    Ok(ExactResult { rho_a, rho_b, absorption: h, solver_residual, method })
}

fn solve_dense(chain: &Chain<'_>) -> Result<Vec<f64>> {
    let full = chain.full;
    let m = full as usize - 1; // transient states 1..full-1 at index s-1
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut fit = vec![0.0; chain.n];
    let mut pa = vec![0.0; chain.n];
    let inv_n = 1.0 / chain.n as f64;
    for s in 1..full {
        chain.become_a(s, &mut fit, &mut pa)?;
        let row = s as usize - 1;
        for x in 0..chain.n {
            for (t, p) in [(s | 1 << x, pa[x] * inv_n), (s & !(1 << x), (1.0 - pa[x]) * inv_n)] {
                if t == full {
                    b[row] += p;
                } else if t != 0 {
                    a[(row, t as usize - 1)] -= p;
                }
            }
        }
    }
    let x = a.lu().solve(&b).ok_or_else(|| Error::Solver("singular absorption system".into()))?;
    let mut h = vec![0.0; full as usize + 1];
    for s in 1..full {
        h[s as usize] = x[s as usize - 1];
    }
    h[full as usize] = 1.0;
    Ok(h)
}

fn solve_gauss_seidel(chain: &Chain<'_>) -> Result<Vec<f64>> {
    let full = chain.full;
    let n = chain.n;
    // Neutral solution as the starting point: fraction of A.
    let mut h: Vec<f64> = (0..=full).map(|s| s.count_ones() as f64 / n as f64).collect();
    let mut fit = vec![0.0; n];
    let mut pa = vec![0.0; n];
    let cache = if n <= GAUSS_SEIDEL_CACHE_NODES {
        let mut table = vec![0.0; full as usize * n];
        for s in 1..full {
            chain.become_a(s, &mut fit, &mut table[s as usize * n..(s as usize + 1) * n])?;
        }
        Some(table)
    } else {
        None
    };
    let inv_n = 1.0 / n as f64;
    for _ in 0..GAUSS_SEIDEL_MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for s in 1..full {
            let pa: &[f64] = match &cache {
                Some(table) => &table[s as usize * n..(s as usize + 1) * n],
                None => {
                    chain.become_a(s, &mut fit, &mut pa)?;
                    &pa
                }
            };
            let (mut acc, mut stay) = (0.0, 0.0);
            for (x, &p) in pa.iter().enumerate() {
                let bit = 1u32 << x;
                let (up, down) = (p * inv_n, (1.0 - p) * inv_n);
                if s & bit == 0 {
                    acc += up * h[(s | bit) as usize];
                    stay += down;
                } else {
                    acc += down * h[(s & !bit) as usize];
                    stay += up;
                }
            }
            let new = acc / (1.0 - stay);
            max_step = max_step.max((new - h[s as usize]).abs());
            h[s as usize] = new;
        }
        if max_step < GAUSS_SEIDEL_STEP_TOL {
            return Ok(h);
        }
    }
    Err(Error::Solver("Gauss-Seidel did not converge".into()))
}

/// `max_s |h(s) - Σ_t T(s, t) h(t)|` over transient states.
fn residual(chain: &Chain<'_>, h: &[f64]) -> Result<f64> {
    let n = chain.n;
    let mut fit = vec![0.0; n];
    let mut pa = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for s in 1..chain.full {
        chain.become_a(s, &mut fit, &mut pa)?;
        let mut next = 0.0;
        for x in 0..n {
            next += (pa[x] * h[(s | 1 << x) as usize] + (1.0 - pa[x]) * h[(s & !(1 << x)) as usize]) / n as f64;
        }
        worst = worst.max((h[s as usize] - next).abs());
    }
    Ok(worst)
}

/// Fixation probability of a single A on the complete graph `K_n`, from the
/// birth–death chain on the number of cooperators.
pub fn lumped_fixation_complete(n: usize, model: &GameModel, omega: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", format!("must be at least 2, got {n}")));
    }
    let g = model.matrix()?;
    let (r, s, t, p) = (
        g.payoff(Strategy::A, Strategy::A),
        g.payoff(Strategy::A, Strategy::B),
        g.payoff(Strategy::B, Strategy::A),
        g.payoff(Strategy::B, Strategy::B),
    );
    let nf = n as f64;
    // With i cooperators, every node other than the one that died sees all
    // other n - 1 nodes, the dead one included.
    let fit_a = |i: f64| fitness(omega, (i - 1.0) * r + (nf - i) * s);
    let fit_b = |i: f64| fitness(omega, i * t + (nf - i - 1.0) * p);
    let mut sum = 1.0;
    let mut prod = 1.0;
    for i in 1..n {
        let i = i as f64;
        let (fa, fb) = (fit_a(i), fit_b(i));
        // A B dies; i A and n-1-i B compete.  An A dies; i-1 A and n-i B compete.
        let up = (nf - i) / nf * (i * fa) / (i * fa + (nf - 1.0 - i) * fb);
        let down = i / nf * ((nf - i) * fb) / ((i - 1.0) * fa + (nf - i) * fb);
        if !(up > 0.0) {
            return Err(Error::InvalidFitness { node: 0, detail: format!("zero birth rate at {i} cooperators") });
        }
        prod *= down / up;
        sum += prod;
    }
    Ok(1.0 / sum)
}
