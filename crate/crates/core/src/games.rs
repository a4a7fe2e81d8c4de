//! Normalized two-strategy games, game-duration laws and the stationary game
//! distribution of the switching process.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the `[-1, 1]` dilemma bounds.
pub const DILEMMA_BOUND_TOL: f64 = 1e-12;
/// Tolerance on probability vectors summing to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Cooperate.
    A,
    /// Defect.
    B,
}

impl Strategy {
    pub fn opposite(self) -> Strategy {
        match self {
            Strategy::A => Strategy::B,
            Strategy::B => Strategy::A,
        }
    }

    pub fn is_a(self) -> bool {
        self == Strategy::A
    }
}

/// A 2×2 game with `R = 1`, `P = 0`, `T = 1 + dg` and `S = -dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilemmaGame {
    dg: f64,
    dr: f64,
}

impl DilemmaGame {
    /// Both dilemma strengths must lie in `[-1, 1]`.
    pub fn new(dg: f64, dr: f64) -> Result<Self> {
        check_dilemma("dg", dg)?;
        check_dilemma("dr", dr)?;
        Ok(DilemmaGame { dg, dr })
    }

    /// Gamble-intending dilemma `T - R`.
    pub fn dg(&self) -> f64 {
        self.dg
    }

    /// Risk-averting dilemma `P - S`.
    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Payoff to a player using `own` against `opponent`.
    #[inline]
    pub fn payoff(&self, own: Strategy, opponent: Strategy) -> f64 {
        match (own, opponent) {
            (Strategy::A, Strategy::A) => 1.0,
            (Strategy::A, Strategy::B) => -self.dr,
            (Strategy::B, Strategy::A) => 1.0 + self.dg,
            (Strategy::B, Strategy::B) => 0.0,
        }
    }

    /// Donation game with benefit `b` and cost `c`, i.e. `dg = dr = c / (b - c)`.
    pub fn donation(benefit: f64, cost: f64) -> Result<Self> {
        if !(benefit > cost && cost > 0.0) {
            return Err(Error::param("benefit", "donation game needs b > c > 0"));
        }
        let d = cost / (benefit - cost);
        DilemmaGame::new(d, d)
    }
}

impl<'de> Deserialize<'de> for DilemmaGame {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            dg: f64,
            dr: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        DilemmaGame::new(raw.dg, raw.dr).map_err(serde::de::Error::custom)
    }
}

fn check_dilemma(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value.abs() > 1.0 + DILEMMA_BOUND_TOL {
        return Err(Error::param(name, format!("{value} outside [-1, 1]")));
    }
    Ok(())
}

/// Law of the time a game stays on an edge before switching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DurationDistribution {
    Exponential { rate: f64 },
    Uniform { lower: f64, upper: f64 },
    Deterministic { duration: f64 },
    /// Discrete law over `(duration, probability)` pairs.
    #[serde(rename = "table")]
    EmpiricalTable { values: Vec<(f64, f64)> },
}

impl DurationDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            DurationDistribution::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::param("rate", format!("{rate} must be finite and > 0")));
                }
            }
            DurationDistribution::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && *lower >= 0.0 && lower < upper) {
                    return Err(Error::param(
                        "uniform",
                        format!("need 0 <= lower < upper, got [{lower}, {upper}]"),
                    ));
                }
            }
            DurationDistribution::Deterministic { duration } => {
                if !(duration.is_finite() && *duration > 0.0) {
                    return Err(Error::param("duration", format!("{duration} must be > 0")));
                }
            }
            DurationDistribution::EmpiricalTable { values } => {
                if values.is_empty() {
                    return Err(Error::param("values", "empty table"));
                }
                let mut total = 0.0;
                for &(d, p) in values {
                    if !(d.is_finite() && d > 0.0) {
                        return Err(Error::param("values", format!("duration {d} must be > 0")));
                    }
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(Error::param("values", format!("probability {p} < 0")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::param("values", format!("probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// Analytic mean duration.
    pub fn mean(&self) -> f64 {
        match self {
            DurationDistribution::Exponential { rate } => 1.0 / rate,
            DurationDistribution::Uniform { lower, upper } => 0.5 * (lower + upper),
            DurationDistribution::Deterministic { duration } => *duration,
            DurationDistribution::EmpiricalTable { values } => {
                values.iter().map(|&(d, p)| d * p).sum()
            }
        }
    }

    /// One draw from the law. Assumes [`validate`](Self::validate) passed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DurationDistribution::Exponential { rate } => {
                Exp::new(*rate).expect("validated rate").sample(rng)
            }
            DurationDistribution::Uniform { lower, upper } => {
                lower + (upper - lower) * rng.random::<f64>()
            }
            DurationDistribution::Deterministic { duration } => *duration,
            DurationDistribution::EmpiricalTable { values } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for &(d, p) in values {
                    acc += p;
                    if u < acc {
                        return d;
                    }
                }
                // u landed in the rounding slack above the last partial sum
                values.iter().rev().find(|(_, p)| *p > 0.0).map_or(values[0].0, |v| v.0)
            }
        }
    }
}

/// Games cycled on each edge: game `i` is followed by game `(i + 1) mod n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameProcess {
    games: Vec<DilemmaGame>,
    durations: Vec<DurationDistribution>,
}

impl GameProcess {
    pub fn new(games: Vec<DilemmaGame>, durations: Vec<DurationDistribution>) -> Result<Self> {
        if games.is_empty() {
            return Err(Error::param("games", "at least one game is required"));
        }
        if games.len() != durations.len() {
            return Err(Error::LengthMismatch { expected: games.len(), found: durations.len() });
        }
        if games.len() > 1 {
            for d in &durations {
                d.validate()?;
            }
        }
        Ok(GameProcess { games, durations })
    }

    /// A process that never leaves its single game.
    pub fn single(game: DilemmaGame) -> Self {
        GameProcess {
            games: vec![game],
            durations: vec![DurationDistribution::Deterministic { duration: 1.0 }],
        }
    }

    pub fn games(&self) -> &[DilemmaGame] {
        &self.games
    }

    pub fn durations(&self) -> &[DurationDistribution] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    #[inline]
    pub fn successor(&self, game: usize) -> usize {
        (game + 1) % self.games.len()
    }

    /// Long-run fraction of time spent in each game: `E[T_i] / sum_j E[T_j]`.
    pub fn stationary_distribution(&self) -> Result<GameDistribution> {
        if self.games.len() == 1 {
            return Ok(GameDistribution::point_mass(1, 0));
        }
        let means: Vec<f64> = self.durations.iter().map(DurationDistribution::mean).collect();
        let total: f64 = means.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::param("durations", format!("total mean duration {total}")));
        }
        let pi: Vec<f64> = means.iter().map(|m| m / total).collect();
        GameDistribution::new(pi)
    }
}

/// Probability vector over the games of a process.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GameDistribution(Vec<f64>);

impl GameDistribution {
    /// Entries must be non-negative and sum to one within [`SIMPLEX_TOL`].
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::param("pi", "empty distribution"));
        }
        if pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::param("pi", format!("{pi:?} has negative or non-finite entries")));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::param("pi", format!("entries sum to {total}")));
        }
        Ok(GameDistribution(pi))
    }

    /// All mass on game `index` out of `n`.
    pub fn point_mass(n: usize, index: usize) -> Self {
        assert!(index < n, "vertex {index} out of range for {n} games");
        let mut pi = vec![0.0; n];
        pi[index] = 1.0;
        GameDistribution(pi)
    }

    /// `(pi_1, 1 - pi_1)`.
    pub fn two(pi_1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi_1) {
            return Err(Error::param("pi", format!("pi_1 = {pi_1} outside [0, 1]")));
        }
        GameDistribution::new(vec![pi_1, 1.0 - pi_1])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Draws a game index; ties on the cumulative boundary go to the lower index.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.0.len() == 1 {
            return 0;
        }
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.0.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// `(sum_i pi_i dr_i, sum_i pi_i dg_i)`.
pub fn expected_dilemmas(dist: &GameDistribution, games: &[DilemmaGame]) -> Result<(f64, f64)> {
    if dist.len() != games.len() {
        return Err(Error::LengthMismatch { expected: games.len(), found: dist.len() });
    }
    let mut dr = 0.0;
    let mut dg = 0.0;
    for (p, g) in dist.probabilities().iter().zip(games) {
        dr += p * g.dr;
        dg += p * g.dg;
    }
    Ok((dr, dg))
}

/// The game whose payoff matrix is `sum_i pi_i M_i`.
///
/// A convex combination of normalized games is again normalized, so the
/// result is an ordinary [`DilemmaGame`].
pub fn expected_game(dist: &GameDistribution, games: &[DilemmaGame]) -> Result<DilemmaGame> {
    let (dr, dg) = expected_dilemmas(dist, games)?;
    DilemmaGame::new(dg.clamp(-1.0, 1.0), dr.clamp(-1.0, 1.0))
}
