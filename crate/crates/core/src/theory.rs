//! Pair-approximation analytics under weak selection.
//!
//! Every closed form depends on the game mixture only through the averaged
//! dilemma strengths `R = Σ π_i Dr_i` and `G = Σ π_i Dg_i`, carried by
//! [`MeanDilemmas`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::games::{expected_dilemmas, DilemmaGame, GameDistribution};

/// Degree, population size and selection intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairApproxParams {
    k: u32,
    n_pop: u64,
    omega: f64,
}

impl PairApproxParams {
    /// Requires `k >= 3` (the on-manifold prefactor carries `k - 2`),
    /// `n_pop >= 2` and a finite `omega >= 0`.
    pub fn new(k: u32, n_pop: u64, omega: f64) -> Result<Self> {
        if k < 3 {
            return Err(Error::DegenerateDegree(k));
        }
        if n_pop < 2 {
            return Err(Error::param("n_pop", format!("must be at least 2, got {n_pop}")));
        }
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::param("omega", format!("must be finite and non-negative, got {omega}")));
        }
        Ok(PairApproxParams { k, n_pop, omega })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_pop(&self) -> u64 {
        self.n_pop
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    fn nf(&self) -> f64 {
        self.n_pop as f64
    }
}

/// Stationary averages `R = Σ π_i Dr_i` and `G = Σ π_i Dg_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanDilemmas {
    pub dr: f64,
    pub dg: f64,
}

impl MeanDilemmas {
    pub fn new(dr: f64, dg: f64) -> Self {
        MeanDilemmas { dr, dg }
    }

    pub fn from_distribution(dist: &GameDistribution, games: &[DilemmaGame]) -> Result<Self> {
        let (dr, dg) = expected_dilemmas(dist, games)?;
        Ok(MeanDilemmas { dr, dg })
    }

    pub fn of_game(game: &DilemmaGame) -> Self {
        MeanDilemmas { dr: game.dr(), dg: game.dg() }
    }
}

/// Tolerance used when checking that derived pair quantities stay in [0, 1].
const FEASIBILITY_TOL: f64 = 1e-12;

/// Global cooperator frequency and local conditional frequency `q_{A|A}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsState {
    p_a: f64,
    q_a_given_a: f64,
}

impl DynamicsState {
    /// Rejects states whose implied pair frequencies leave [0, 1].
    pub fn new(p_a: f64, q_a_given_a: f64) -> Result<Self> {
        let in_unit = |x: f64| (-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&x);
        if !in_unit(p_a) || !in_unit(q_a_given_a) {
            return Err(Error::InfeasibleState(format!("p_A = {p_a}, q_A|A = {q_a_given_a}")));
        }
        let s = DynamicsState { p_a, q_a_given_a };
        if s.p_ab() > 1.0 - p_a + FEASIBILITY_TOL {
            return Err(Error::InfeasibleState(format!(
                "p_AB = {} exceeds p_B = {} (p_A = {p_a}, q_A|A = {q_a_given_a})",
                s.p_ab(),
                1.0 - p_a
            )));
        }
        Ok(s)
    }

    /// The point on the slow manifold `q_{A|A} - q_{A|B} = 1/(k-1)`.
    pub fn on_manifold(p_a: f64, k: u32) -> Result<Self> {
        let q = p_a + (1.0 - p_a) / (k as f64 - 1.0);
        DynamicsState::new(p_a, q.min(1.0))
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn q_a_given_a(&self) -> f64 {
        self.q_a_given_a
    }

    pub fn q_b_given_a(&self) -> f64 {
        1.0 - self.q_a_given_a
    }

    /// `p_AB = p_A q_{B|A}`.
    pub fn p_ab(&self) -> f64 {
        self.p_a * self.q_b_given_a()
    }

    /// `p_AB / p_B`; taken as 0 when `p_A = 0` and 1 when `p_A = 1`.
    pub fn q_a_given_b(&self) -> f64 {
        let p_b = 1.0 - self.p_a;
        if self.p_a <= 0.0 {
            0.0
        } else if p_b <= 0.0 {
            1.0
        } else {
            (self.p_ab() / p_b).clamp(0.0, 1.0)
        }
    }

    pub fn q_b_given_b(&self) -> f64 {
        1.0 - self.q_a_given_b()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
}

pub fn coefficients_general(state: &DynamicsState, k: u32) -> Coefficients {
    let km1 = k as f64 - 1.0;
    let (qaa, qab, qba, qbb) = (state.q_a_given_a(), state.q_a_given_b(), state.q_b_given_a(), state.q_b_given_b());
    let s = qaa + qbb;
    Coefficients {
        i_a: km1 * s * (qaa - qab),
        i_b: km1 * qba * s + qbb,
        i_c: km1 * qab * s + qaa,
    }
}

pub fn coefficients_on_manifold(p_a: f64, k: u32) -> Coefficients {
    let k = k as f64;
    let c = k * k - k - 2.0;
    Coefficients {
        i_a: k / (k - 1.0),
        i_b: (k * k - k - 1.0 - c * p_a) / (k - 1.0),
        i_c: (1.0 + c * p_a) / (k - 1.0),
    }
}

impl Coefficients {
    /// `I_a - I_b R - I_c G`.
    pub fn bracket(&self, mean: MeanDilemmas) -> f64 {
        self.i_a - self.i_b * mean.dr - self.i_c * mean.dg
    }
}

/// Leading-order rates `(dp_A/dt, dq_{A|A}/dt)` of the pair approximation.
pub fn pair_dynamics(state: &DynamicsState, params: &PairApproxParams, mean: MeanDilemmas) -> (f64, f64) {
    let k = params.kf();
    let coef = coefficients_general(state, params.k);
    let dp = params.omega * ((k - 1.0) / k) * state.p_ab() * coef.bracket(mean);
    let dq = (2.0 / k)
        * state.q_b_given_a()
        * (1.0 + (k - 1.0) * (state.q_a_given_b() - state.q_a_given_a()));
    (dp, dq)
}

/// `k - (k²-k-1) R - G + (k²-k-2) p (R - G)`, the bracket shared by the
/// gradient and the drift.
fn gradient_bracket(p_a: f64, k: f64, mean: MeanDilemmas) -> f64 {
    k - (k * k - k - 1.0) * mean.dr - mean.dg + (k * k - k - 2.0) * p_a * (mean.dr - mean.dg)
}

/// Rate of change of the cooperator frequency on the slow manifold.
pub fn selection_gradient(p_a: f64, params: &PairApproxParams, mean: MeanDilemmas) -> f64 {
    let k = params.kf();
    params.omega * ((k - 2.0) / (k * (k - 1.0))) * p_a * (1.0 - p_a) * gradient_bracket(p_a, k, mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionTerms {
    pub drift: f64,
    pub variance: f64,
}

pub fn diffusion_terms(p_a: f64, params: &PairApproxParams, mean: MeanDilemmas) -> DiffusionTerms {
    let k = params.kf();
    let n = params.nf();
    let x = p_a * (1.0 - p_a);
    let coef = coefficients_on_manifold(p_a, params.k);
    DiffusionTerms {
        drift: params.omega * ((k - 2.0) / (n * k)) * x * coef.bracket(mean),
        variance: (2.0 * (k - 2.0) / (n * n * (k - 1.0))) * x,
    }
}

/// Weak-selection fixation probability of strategy A from frequency `x`.
pub fn phi_a(x: f64, params: &PairApproxParams, mean: MeanDilemmas) -> f64 {
    let k = params.kf();
    let (r, g) = (mean.dr, mean.dg);
    let bracket = (-2.0 * k * k + 2.0 * k + 1.0) * r - (k * k - k + 1.0) * g
        + 3.0 * k
        + (k * k - k - 2.0) * x * (r - g);
    x + (params.omega * params.nf() / (6.0 * k)) * x * (1.0 - x) * bracket
}

/// Fixation probability of a single A among `N - 1` B.
pub fn rho_a(params: &PairApproxParams, mean: MeanDilemmas) -> f64 {
    let k = params.kf();
    let n = params.nf();
    let (r, g) = (mean.dr, mean.dg);
    let bracket = (-2.0 * k * k + 2.0 * k + 1.0) * r - (k * k - k + 1.0) * g
        + 3.0 * k
        + (k * k - k - 2.0) / n * (r - g);
    1.0 / n + params.omega / (6.0 * k) * (1.0 - 1.0 / n) * bracket
}

/// Fixation probability of a single B among `N - 1` A.
pub fn rho_b(params: &PairApproxParams, mean: MeanDilemmas) -> f64 {
    let k = params.kf();
    let n = params.nf();
    let (r, g) = (mean.dr, mean.dg);
    let bracket = (-k * k + k - 1.0) * r - (2.0 * k * k - 2.0 * k - 1.0) * g + 3.0 * k
        - (k * k - k - 2.0) / n * (r - g);
    1.0 / n - params.omega / (6.0 * k) * (1.0 - 1.0 / n) * bracket
}

/// First-order expansion of `ρ_A / ρ_B`.
pub fn rho_ratio(params: &PairApproxParams, mean: MeanDilemmas) -> f64 {
    let km1 = params.kf() - 1.0;
    1.0 + params.omega * (params.nf() - 1.0) / 2.0 * (2.0 - km1 * mean.dr - km1 * mean.dg)
}

/// Whether a condition holds, with `margin = lhs - rhs` (positive when it does).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub holds: bool,
    pub margin: f64,
}

impl ConditionOutcome {
    fn from_margin(margin: f64) -> Self {
        ConditionOutcome { holds: margin > 0.0, margin }
    }
}

/// Selection favours cooperation (`ρ_A > 1/N` for large N):
/// `3k > (2k²-2k-1) R + (k²-k+1) G`.
pub fn favors_cooperation(k: u32, mean: MeanDilemmas) -> Result<ConditionOutcome> {
    if k < 3 {
        return Err(Error::DegenerateDegree(k));
    }
    let k = k as f64;
    let margin = 3.0 * k - (2.0 * k * k - 2.0 * k - 1.0) * mean.dr - (k * k - k + 1.0) * mean.dg;
    Ok(ConditionOutcome::from_margin(margin))
}

/// Cooperation is favoured over defection (`ρ_A > ρ_B` for large N):
/// `R + G < 2/(k-1)`.
pub fn cooperation_over_defection(k: u32, mean: MeanDilemmas) -> Result<ConditionOutcome> {
    if k < 2 {
        return Err(Error::DegenerateDegree(k));
    }
    let margin = 2.0 / (k as f64 - 1.0) - (mean.dr + mean.dg);
    Ok(ConditionOutcome::from_margin(margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// `ρ_A > 1/N`.
    FavorsCooperation,
    /// `ρ_A > ρ_B`.
    CooperationOverDefection,
}

impl Condition {
    pub fn margin(self, k: u32, mean: MeanDilemmas) -> Result<f64> {
        Ok(match self {
            Condition::FavorsCooperation => favors_cooperation(k, mean)?.margin,
            Condition::CooperationOverDefection => cooperation_over_defection(k, mean)?.margin,
        })
    }
}

/// A single dilemma strength of one game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FreeParameter {
    Dg(usize),
    Dr(usize),
}

/// Value of the free parameter at which the condition's margin vanishes.
///
/// The margin is affine in any single dilemma strength, so the root is
/// found from two evaluations. The root is returned even when it lies
/// outside `[-1, 1]`.
pub fn solve_threshold(
    condition: Condition,
    free: FreeParameter,
    k: u32,
    dist: &GameDistribution,
    games: &[DilemmaGame],
) -> Result<f64> {
    let base = MeanDilemmas::from_distribution(dist, games)?;
    let (index, on_dr) = match free {
        FreeParameter::Dg(i) => (i, false),
        FreeParameter::Dr(i) => (i, true),
    };
    let Some(&weight) = dist.probabilities().get(index) else {
        return Err(Error::param("free_parameter", format!("game {index} out of range for {} games", games.len())));
    };
    if weight == 0.0 {
        return Err(Error::NoThreshold(format!("game {index} has zero stationary weight")));
    }
    // Mean dilemmas with the free parameter set to `x`.
    let current = if on_dr { games[index].dr() } else { games[index].dg() };
    let with = |x: f64| {
        let shift = weight * (x - current);
        if on_dr {
            MeanDilemmas { dr: base.dr + shift, dg: base.dg }
        } else {
            MeanDilemmas { dr: base.dr, dg: base.dg + shift }
        }
    };
    let m0 = condition.margin(k, with(0.0))?;
    let m1 = condition.margin(k, with(1.0))?;
    let slope = m1 - m0;
    if slope == 0.0 {
        return Err(Error::NoThreshold("margin does not depend on the free parameter".into()));
    }
    Ok(-m0 / slope)
}

/// Distribution over games as a function of the current cooperator
/// frequency.
pub trait GamePolicy {
    fn distribution_at(&self, p_a: f64) -> &GameDistribution;

    /// Frequencies at which the distribution may jump, in increasing order.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

impl GamePolicy for GameDistribution {
    fn distribution_at(&self, _p_a: f64) -> &GameDistribution {
        self
    }
}

/// Step size and sampling of [`integrate_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeOptions {
    pub t_end: f64,
    pub step: f64,
    /// Record every this many steps (the final time is always recorded).
    pub record_every: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { t_end: 10_000.0, step: 1.0, record_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub p_a: Vec<f64>,
}

impl OdeTrajectory {
    /// First recorded time at which `p_A >= level`.
    pub fn first_reach(&self, level: f64) -> Option<f64> {
        self.times.iter().zip(&self.p_a).find(|(_, &p)| p >= level).map(|(&t, _)| t)
    }

    pub fn final_value(&self) -> f64 {
        *self.p_a.last().expect("trajectory has at least one sample")
    }
}

const SNAP: f64 = 1e-12;

fn snap(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p < SNAP {
        0.0
    } else if 1.0 - p < SNAP {
        1.0
    } else {
        p
    }
}

/// One classical fourth-order Runge–Kutta step of `dp/dt = f(p)`.
pub fn rk4_step(p: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let k1 = f(p);
    let k2 = f(p + 0.5 * h * k1);
    let k3 = f(p + 0.5 * h * k2);
    let k4 = f(p + h * k3);
    p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates `dp_A/dt = selection_gradient(p_A)` with the game
/// distribution supplied by `policy` at the current `p_A`.
///
/// Within a step the distribution is frozen at the one in force at the
/// step's start; a step that would carry `p_A` across a policy breakpoint
/// is shortened to land on it, so the jump in the vector field does not
/// degrade the order of the method.
pub fn integrate_trajectory<P: GamePolicy + ?Sized>(
    p0: f64,
    params: &PairApproxParams,
    policy: &P,
    games: &[DilemmaGame],
    options: &OdeOptions,
) -> Result<OdeTrajectory> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::param("p0", format!("must lie in [0, 1], got {p0}")));
    }
    if !(options.step > 0.0 && options.step.is_finite()) {
        return Err(Error::param("step", format!("must be positive, got {}", options.step)));
    }
    if !(options.t_end >= 0.0 && options.t_end.is_finite()) {
        return Err(Error::param("t_end", format!("must be non-negative, got {}", options.t_end)));
    }
    if options.record_every == 0 {
        return Err(Error::param("record_every", "must be positive"));
    }
    let n_steps = (options.t_end / options.step).ceil() as usize;
    let mut out = OdeTrajectory { times: vec![0.0], p_a: vec![p0] };
    let mut p = snap(p0);
    for i in 1..=n_steps {
        let t0 = (i - 1) as f64 * options.step;
        let t1 = (i as f64 * options.step).min(options.t_end);
        p = advance(p, t1 - t0, params, policy, games)?;
        if i % options.record_every == 0 || i == n_steps {
            out.times.push(t1);
            out.p_a.push(p);
        }
    }
    Ok(out)
}

/// Advances `p` by `h`, splitting the interval at policy breakpoints.
fn advance<P: GamePolicy + ?Sized>(
    mut p: f64,
    mut h: f64,
    params: &PairApproxParams,
    policy: &P,
    games: &[DilemmaGame],
) -> Result<f64> {
    // A breakpoint is crossed at most once per direction for a scalar
    // autonomous field, so a handful of splits always suffices.
    for _ in 0..8 {
        if h <= 0.0 || p == 0.0 || p == 1.0 {
            return Ok(p);
        }
        let mean = MeanDilemmas::from_distribution(policy.distribution_at(p), games)?;
        let field = |x: f64| selection_gradient(x, params, mean);
        let next = rk4_step(p, h, field);
        let crossed = policy.breakpoints().iter().copied().find(|&b| (p < b && next > b) || (p > b && next < b));
        let Some(b) = crossed else {
            return Ok(snap(next));
        };
        // Largest sub-step that stays on this side of `b`.
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let x = rk4_step(p, mid, field);
            if (p < b && x < b) || (p > b && x > b) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * h {
                break;
            }
        }
        if hi <= 1e-12 * h {
            // The field pushes back at the breakpoint: p slides along it.
            return Ok(snap(next));
        }
        p = b;
        h -= hi;
    }
    Ok(p)
}
