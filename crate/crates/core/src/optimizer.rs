//! Optimal game distributions as a function of the cooperator frequency.
//!
//! Both objectives are linear in π. For two games, comparing the vertices
//! reduces to the sign of an affine function `G(p_A)`:
//!
//! * maximizing the selection gradient: `H_1(π) - H_1(e_2) = -π_1 G_1(p_A)`;
//! * minimizing the fitness difference: `H_2(π) - H_2(e_2) = π_1 G_2(p_A)`.
//!
//! So game 1 is optimal wherever `G < 0` and game 2 wherever `G > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{expected_dilemmas, DilemmaGame, GameDistribution};
use crate::theory::GamePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Maximize the on-manifold selection gradient.
    MaxGradient,
    /// Minimize the expected payoff advantage of defectors.
    MinFitnessDiff,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 2] = [ObjectiveKind::MaxGradient, ObjectiveKind::MinFitnessDiff];
}

/// Gradient objective: `-(k²-k-1) R - G + (k²-k-2) p (R - G)`.
pub fn h1(dist: &GameDistribution, games: &[DilemmaGame], p_a: f64, k: u32) -> Result<f64> {
    let (r, g) = expected_dilemmas(dist, games)?;
    let k = k as f64;
    Ok(-(k * k - k - 1.0) * r - g + (k * k - k - 2.0) * p_a * (r - g))
}

/// Fitness-difference objective: `Σ π_i (p (Dg_i - Dr_i) + Dr_i)`.
pub fn h2(dist: &GameDistribution, games: &[DilemmaGame], p_a: f64) -> Result<f64> {
    let (r, g) = expected_dilemmas(dist, games)?;
    Ok(p_a * (g - r) + r)
}

/// Value of the objective, oriented so that smaller is better.
pub fn objective_cost(
    objective: ObjectiveKind,
    dist: &GameDistribution,
    games: &[DilemmaGame],
    p_a: f64,
    k: u32,
) -> Result<f64> {
    match objective {
        ObjectiveKind::MaxGradient => Ok(-h1(dist, games, p_a, k)?),
        ObjectiveKind::MinFitnessDiff => h2(dist, games, p_a),
    }
}

fn deltas(games: &[DilemmaGame; 2]) -> (f64, f64) {
    (games[0].dr() - games[1].dr(), games[0].dg() - games[1].dg())
}

/// `(k²-k-1) ΔDr + ΔDg - (k²-k-2)(ΔDr - ΔDg) p`, with `Δ = game 1 - game 2`.
pub fn g1(p_a: f64, games: &[DilemmaGame; 2], k: u32) -> f64 {
    let (ddr, ddg) = deltas(games);
    let k = k as f64;
    (k * k - k - 1.0) * ddr + ddg - (k * k - k - 2.0) * (ddr - ddg) * p_a
}

/// `ΔDg p + ΔDr (1 - p)`.
pub fn g2(p_a: f64, games: &[DilemmaGame; 2]) -> f64 {
    let (ddr, ddg) = deltas(games);
    ddg * p_a + ddr * (1.0 - p_a)
}

/// The switching function of `objective`: game 1 is optimal where it is
/// negative.
pub fn switching_function(objective: ObjectiveKind, p_a: f64, games: &[DilemmaGame; 2], k: u32) -> f64 {
    match objective {
        ObjectiveKind::MaxGradient => g1(p_a, games, k),
        ObjectiveKind::MinFitnessDiff => g2(p_a, games),
    }
}

/// Shape of an optimal two-game policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyCase {
    /// `G < 0` on (0, 1): game 1 throughout.
    AlwaysFirst,
    /// `G > 0` on (0, 1): game 2 throughout.
    AlwaysSecond,
    /// `G` rises through zero: game 1 below `p*`, game 2 from `p*` on.
    FirstThenSecond,
    /// `G` falls through zero: game 2 below `p*`, game 1 from `p*` on.
    SecondThenFirst,
    /// `G ≡ 0`: every distribution is optimal; game 1 is reported.
    Indifferent,
}

/// Which way `G` slopes, the top-level split of the case analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    Decreasing,
    Increasing,
    Flat,
}

/// A half-open or open interval of cooperator frequencies with the
/// distribution used there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub distribution: GameDistribution,
}

impl Segment {
    pub fn contains(&self, p: f64) -> bool {
        let above = if self.lower_closed { p >= self.lower } else { p > self.lower };
        let below = if self.upper_closed { p <= self.upper } else { p < self.upper };
        above && below
    }
}

/// Optimal distribution as a piecewise-constant function of `p_A` on (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewisePolicy {
    pub objective: ObjectiveKind,
    pub segments: Vec<Segment>,
    pub breakpoints: Vec<f64>,
    pub case: PolicyCase,
    pub slope: Slope,
    /// Set when every distribution is optimal.
    pub degenerate: bool,
}

impl PiecewisePolicy {
    fn constant(objective: ObjectiveKind, case: PolicyCase, slope: Slope) -> Self {
        let first = matches!(case, PolicyCase::AlwaysFirst | PolicyCase::Indifferent);
        PiecewisePolicy {
            objective,
            segments: vec![Segment {
                lower: 0.0,
                upper: 1.0,
                lower_closed: false,
                upper_closed: false,
                distribution: vertex(first),
            }],
            breakpoints: Vec::new(),
            case,
            slope,
            degenerate: case == PolicyCase::Indifferent,
        }
    }

    fn split(objective: ObjectiveKind, p_star: f64, case: PolicyCase, slope: Slope) -> Self {
        let first_below = case == PolicyCase::FirstThenSecond;
        PiecewisePolicy {
            objective,
            segments: vec![
                Segment {
                    lower: 0.0,
                    upper: p_star,
                    lower_closed: false,
                    upper_closed: false,
                    distribution: vertex(first_below),
                },
                Segment {
                    lower: p_star,
                    upper: 1.0,
                    lower_closed: true,
                    upper_closed: false,
                    distribution: vertex(!first_below),
                },
            ],
            breakpoints: vec![p_star],
            case,
            slope,
            degenerate: false,
        }
    }

    /// `π_1` prescribed at `p_a`.
    pub fn pi1_at(&self, p_a: f64) -> f64 {
        self.distribution_at(p_a).probabilities()[0]
    }
}

impl GamePolicy for PiecewisePolicy {
    /// Frequencies outside (0, 1) use the nearest segment.
    fn distribution_at(&self, p_a: f64) -> &GameDistribution {
        &self
            .segments
            .iter()
            .find(|s| s.contains(p_a))
            .unwrap_or_else(|| {
                if p_a <= 0.0 {
                    self.segments.first().expect("policy has a segment")
                } else {
                    self.segments.last().expect("policy has a segment")
                }
            })
            .distribution
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

fn vertex(first: bool) -> GameDistribution {
    GameDistribution::point_mass(2, if first { 0 } else { 1 })
}

/// Two-game case analysis from `G(0)`, `G(1)` and the slope of `G`, with
/// the breakpoint computed by `p_star` when the sign changes inside (0, 1).
///
/// Equalities in the case conditions resolve to the adjacent constant case,
/// since `G` then keeps one sign on the open interval.
fn classify(
    objective: ObjectiveKind,
    g_at_0: f64,
    g_at_1: f64,
    slope: f64,
    p_star: impl FnOnce() -> f64,
) -> PiecewisePolicy {
    use PolicyCase::*;
    if slope == 0.0 {
        let case = if g_at_0 < 0.0 {
            AlwaysFirst
        } else if g_at_0 > 0.0 {
            AlwaysSecond
        } else {
            Indifferent
        };
        return PiecewisePolicy::constant(objective, case, Slope::Flat);
    }
    let (shape, case) = if slope < 0.0 {
        if g_at_0 <= 0.0 {
            (Slope::Decreasing, AlwaysFirst)
        } else if g_at_1 >= 0.0 {
            (Slope::Decreasing, AlwaysSecond)
        } else {
            (Slope::Decreasing, SecondThenFirst)
        }
    } else if g_at_0 >= 0.0 {
        (Slope::Increasing, AlwaysSecond)
    } else if g_at_1 <= 0.0 {
        (Slope::Increasing, AlwaysFirst)
    } else {
        (Slope::Increasing, FirstThenSecond)
    };
    if matches!(case, AlwaysFirst | AlwaysSecond) {
        return PiecewisePolicy::constant(objective, case, shape);
    }
    let p = p_star();
    if p > 0.0 && p < 1.0 {
        PiecewisePolicy::split(objective, p, case, shape)
    } else {
        // Rounding put the root on the boundary: G keeps the sign it has at
        // the opposite end.
        let g_inside = if p <= 0.0 { g_at_1 } else { g_at_0 };
        let case = if g_inside < 0.0 { AlwaysFirst } else { AlwaysSecond };
        PiecewisePolicy::constant(objective, case, shape)
    }
}

/// Closed-form optimal policy for two games.
pub fn optimal_policy_two_games(
    objective: ObjectiveKind,
    games: &[DilemmaGame; 2],
    k: u32,
) -> Result<PiecewisePolicy> {
    let (ddr, ddg) = deltas(games);
    Ok(match objective {
        ObjectiveKind::MaxGradient => {
            if k < 3 {
                return Err(Error::DegenerateDegree(k));
            }
            let kf = k as f64;
            let a = kf * kf - kf - 1.0;
            let c = kf * kf - kf - 2.0;
            // ΔDr - ΔDg = (Dr_1 + Dg_2) - (Dg_1 + Dr_2)
            let contrast = ddr - ddg;
            let at_0 = a * ddr + ddg;
            let at_1 = a * ddg + ddr;
            classify(objective, at_0, at_1, -c * contrast, || at_0 / (c * contrast))
        }
        ObjectiveKind::MinFitnessDiff => {
            // (Dg_1 + Dr_2) - (Dg_2 + Dr_1)
            let contrast = ddg - ddr;
            classify(objective, ddr, ddg, contrast, || -ddr / contrast)
        }
    })
}

/// Best simplex vertex for `n` games at a given `p_A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexChoice {
    pub index: usize,
    pub distribution: GameDistribution,
    /// Another vertex attains the same objective value (within 1e-12).
    pub tie: bool,
}

const TIE_TOL: f64 = 1e-12;

/// Linear objectives attain their optimum at a vertex; returns the best
/// one, preferring the lowest index among ties.
pub fn optimal_distribution_n_games(
    objective: ObjectiveKind,
    games: &[DilemmaGame],
    p_a: f64,
    k: u32,
) -> Result<VertexChoice> {
    if games.is_empty() {
        return Err(Error::param("games", "at least one game is required"));
    }
    let n = games.len();
    let costs = (0..n)
        .map(|i| objective_cost(objective, &GameDistribution::point_mass(n, i), games, p_a, k))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] - TIE_TOL {
            best = i;
        }
    }
    let tie = costs.iter().enumerate().any(|(i, &c)| i != best && (c - costs[best]).abs() <= TIE_TOL);
    Ok(VertexChoice { index: best, distribution: GameDistribution::point_mass(n, best), tie })
}

/// Outcome of a brute-force check of a two-game policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub resolution: usize,
    /// Interior grid points checked.
    pub points: usize,
    /// Points where the policy's vertex is worse than the scanned optimum.
    pub violations: usize,
    /// Largest shortfall of the policy's objective against the scanned
    /// optimum (0 when the policy always matches it).
    pub worst_discrepancy: f64,
    /// Midpoints between consecutive non-tied grid frequencies whose
    /// scanned optima differ.
    pub switch_points: Vec<f64>,
    /// Every scanned distribution was optimal at every grid point.
    pub degenerate: bool,
}

/// Scans `π_1 ∈ {0, 1/r, ..., 1}` at every interior `p_A = i/r` and compares
/// the best scanned objective value with the policy's vertex.
pub fn grid_verify(
    objective: ObjectiveKind,
    games: &[DilemmaGame; 2],
    k: u32,
    resolution: usize,
) -> Result<GridReport> {
    if resolution < 10 {
        return Err(Error::param("resolution", format!("must be at least 10, got {resolution}")));
    }
    let policy = optimal_policy_two_games(objective, games, k)?;
    let r = resolution as f64;
    let mut report = GridReport {
        resolution,
        points: 0,
        violations: 0,
        worst_discrepancy: 0.0,
        switch_points: Vec::new(),
        degenerate: true,
    };
    let dists = (0..=resolution)
        .map(|j| GameDistribution::new(vec![j as f64 / r, 1.0 - j as f64 / r]))
        .collect::<Result<Vec<_>>>()?;
    let mut costs = Vec::with_capacity(resolution + 1);
    let mut last_best: Option<(usize, f64)> = None;
    for i in 1..resolution {
        let p = i as f64 / r;
        costs.clear();
        for dist in &dists {
            costs.push(objective_cost(objective, dist, games, p, k)?);
        }
        let (best_j, best) = costs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, c)| if c < acc.1 { (j, c) } else { acc });
        let worst = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = 1.0 + best.abs();
        if worst - best > TIE_TOL * scale {
            report.degenerate = false;
            if let Some((prev, prev_p)) = last_best {
                if prev != best_j {
                    report.switch_points.push(0.5 * (prev_p + p));
                }
            }
            last_best = Some((best_j, p));
        }
        let chosen = objective_cost(objective, policy.distribution_at(p), games, p, k)?;
        let shortfall = chosen - best;
        if shortfall > TIE_TOL * scale {
            report.violations += 1;
        }
        report.worst_discrepancy = report.worst_discrepancy.max(shortfall.max(0.0));
        report.points += 1;
    }
    Ok(report)
}
