//! Per-configuration computations shared by the subcommands, the figure
//! recipes and the acceptance suite.

use anyhow::{Context, Result};
use rayon::prelude::*;
use varigame::engine::{
    estimate_fixation, simulate_trajectory, FixationResult, TrajectoryPlan, TrajectoryRecord,
};
use varigame::optimizer::{optimal_policy_two_games, ObjectiveKind};
use varigame::seed::run_rng;
use varigame::theory::{
    cooperation_over_defection, favors_cooperation, integrate_trajectory, rho_a, rho_b, rho_ratio,
    solve_threshold, Condition, ConditionOutcome, FreeParameter, MeanDilemmas, OdeOptions, OdeTrajectory,
};
use varigame::{DilemmaGame, Error, Strategy};

use crate::config::ExperimentConfig;
use crate::output::num;

/// Pair-approximation predictions at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPoint {
    pub n: usize,
    pub k: usize,
    pub omega: f64,
    pub pi: Vec<f64>,
    pub mean: MeanDilemmas,
    pub rho_a: f64,
    pub rho_b: f64,
    pub rho_ratio: f64,
    pub favors: ConditionOutcome,
    pub over_defection: ConditionOutcome,
    /// Value of the free dilemma strength at which each condition's margin
    /// vanishes; NaN when there is no free parameter or no root.
    pub favors_threshold: f64,
    pub over_defection_threshold: f64,
}

pub const THEORY_COLUMNS: [&str; 15] = [
    "n",
    "k",
    "omega",
    "pi1",
    "mean_dr",
    "mean_dg",
    "rho_c_theory",
    "rho_d_theory",
    "rho_ratio_theory",
    "favors_c_margin",
    "favors_c_holds",
    "c_over_d_margin",
    "c_over_d_holds",
    "favors_c_threshold",
    "c_over_d_threshold",
];

impl TheoryPoint {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.k.to_string(),
            num(self.omega),
            num(self.pi[0]),
            num(self.mean.dr),
            num(self.mean.dg),
            num(self.rho_a),
            num(self.rho_b),
            num(self.rho_ratio),
            num(self.favors.margin),
            self.favors.holds.to_string(),
            num(self.over_defection.margin),
            self.over_defection.holds.to_string(),
            num(self.favors_threshold),
            num(self.over_defection_threshold),
        ]
    }

    pub fn neutral(&self) -> f64 {
        1.0 / self.n as f64
    }
}

pub fn theory_point(config: &ExperimentConfig, free: Option<FreeParameter>) -> Result<TheoryPoint> {
    let graph = config.graph()?;
    let params = config.pair_params(&graph)?;
    let pi = config.pi()?;
    let mean = MeanDilemmas::from_distribution(&pi, &config.games)?;
    let k = graph.degree() as u32;
    let threshold = |condition: Condition| -> Result<f64> {
        let Some(free) = free else { return Ok(f64::NAN) };
        match solve_threshold(condition, free, k, &pi, &config.games) {
            Ok(x) => Ok(x),
            Err(Error::NoThreshold(_)) => Ok(f64::NAN),
            Err(e) => Err(e.into()),
        }
    };
    Ok(TheoryPoint {
        n: graph.n_nodes(),
        k: graph.degree(),
        omega: config.sim.omega,
        pi: pi.probabilities().to_vec(),
        mean,
        rho_a: rho_a(&params, mean),
        rho_b: rho_b(&params, mean),
        rho_ratio: rho_ratio(&params, mean),
        favors: favors_cooperation(k, mean)?,
        over_defection: cooperation_over_defection(k, mean)?,
        favors_threshold: threshold(Condition::FavorsCooperation)?,
        over_defection_threshold: threshold(Condition::CooperationOverDefection)?,
    })
}

/// Monte Carlo estimates of both fixation probabilities next to the
/// theory at the same configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationPoint {
    pub theory: TheoryPoint,
    pub rho_c: FixationResult,
    pub rho_d: FixationResult,
}

pub const FIXATION_COLUMNS: [&str; 9] = [
    "rho_c_est",
    "rho_c_stderr",
    "rho_d_est",
    "rho_d_stderr",
    "diff_est",
    "diff_stderr",
    "diff_theory",
    "neutral",
    "unabsorbed",
];

impl FixationPoint {
    pub fn diff(&self) -> f64 {
        self.rho_c.estimate - self.rho_d.estimate
    }

    pub fn diff_stderr(&self) -> f64 {
        self.rho_c.stderr.hypot(self.rho_d.stderr)
    }

    /// [`FIXATION_COLUMNS`] followed by [`THEORY_COLUMNS`].
    pub fn fields(&self) -> Vec<String> {
        let mut out = vec![
            num(self.rho_c.estimate),
            num(self.rho_c.stderr),
            num(self.rho_d.estimate),
            num(self.rho_d.stderr),
            num(self.diff()),
            num(self.diff_stderr()),
            num(self.theory.rho_a - self.theory.rho_b),
            num(self.theory.neutral()),
            (self.rho_c.unabsorbed + self.rho_d.unabsorbed).to_string(),
        ];
        out.extend(self.theory.fields());
        out
    }
}

pub fn fixation_columns() -> Vec<&'static str> {
    FIXATION_COLUMNS.iter().chain(THEORY_COLUMNS.iter()).copied().collect()
}

pub fn estimate(config: &ExperimentConfig, invader: Strategy) -> Result<FixationResult> {
    let graph = config.graph()?;
    let env = config.environment()?;
    let result = estimate_fixation(&graph, &env, &config.sim.sim_config(), invader, config.sim.runs)
        .with_context(|| format!("estimating fixation of {invader:?}"))?;
    Ok(result)
}

pub fn fixation_point(config: &ExperimentConfig, free: Option<FreeParameter>) -> Result<FixationPoint> {
    Ok(FixationPoint {
        theory: theory_point(config, free)?,
        rho_c: estimate(config, Strategy::A)?,
        rho_d: estimate(config, Strategy::B)?,
    })
}

/// Sampling interval of trajectories: `output.sample_every`, or a
/// thousandth of the horizon.
pub fn sample_every(config: &ExperimentConfig) -> u64 {
    config.output.sample_every.unwrap_or((config.trajectory.horizon_events / 1000).max(1))
}

/// Independent Monte Carlo trajectories, one per seed index, in seed order.
pub fn mc_trajectories(config: &ExperimentConfig, seeds: u64, record_pairs: bool) -> Result<Vec<TrajectoryRecord>> {
    let graph = config.graph()?;
    let env = config.environment()?;
    let sim = config.sim.sim_config();
    let plan = TrajectoryPlan {
        initial_coop_fraction: config.trajectory.p0,
        horizon_events: config.trajectory.horizon_events,
        sample_every: sample_every(config),
        record_pairs,
    };
    let records = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = run_rng(sim.seed, s);
            simulate_trajectory(&graph, &env, &sim, &plan, &mut rng)
        })
        .collect::<varigame::Result<Vec<_>>>()?;
    Ok(records)
}

/// Pointwise mean and standard error over records sharing a sample grid.
pub fn mean_curve(records: &[TrajectoryRecord]) -> Vec<(u64, f64, f64)> {
    let Some(first) = records.first() else { return Vec::new() };
    let m = records.len() as f64;
    (0..first.times.len())
        .map(|i| {
            let values: Vec<f64> = records.iter().map(|r| r.coop_fraction[i]).collect();
            let mean = values.iter().sum::<f64>() / m;
            let var = if records.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            (first.times[i], mean, (var / m).sqrt())
        })
        .collect()
}

/// Game distribution driving an ODE trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdePolicy {
    /// The configured stationary distribution.
    Configured,
    /// `π_1` held fixed (two games).
    Constant(f64),
    /// The optimal piecewise policy of an objective (two games).
    Optimal(ObjectiveKind),
}

pub fn ode_trajectory(config: &ExperimentConfig, policy: OdePolicy, record_every: usize) -> Result<OdeTrajectory> {
    let graph = config.graph()?;
    let params = config.pair_params(&graph)?;
    let options = OdeOptions { t_end: config.trajectory.t_end, step: config.trajectory.step, record_every };
    let p0 = config.trajectory.p0;
    let games = &config.games;
    let traj = match policy {
        OdePolicy::Configured => integrate_trajectory(p0, &params, &config.pi()?, games, &options)?,
        OdePolicy::Constant(pi1) => {
            let dist = varigame::GameDistribution::two(pi1)?;
            integrate_trajectory(p0, &params, &dist, games, &options)?
        }
        OdePolicy::Optimal(objective) => {
            let pair = two_games(games)?;
            let policy = optimal_policy_two_games(objective, &pair, graph.degree() as u32)?;
            integrate_trajectory(p0, &params, &policy, games, &options)?
        }
    };
    Ok(traj)
}

pub fn two_games(games: &[DilemmaGame]) -> Result<[DilemmaGame; 2]> {
    <[DilemmaGame; 2]>::try_from(games).map_err(|_| anyhow::anyhow!("this needs exactly two games, got {}", games.len()))
}
