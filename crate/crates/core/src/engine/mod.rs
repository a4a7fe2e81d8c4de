//! Monte Carlo death–birth dynamics with per-edge variable games.
//!
//! The single-step operations ([`death_birth_step`], [`advance_game_clocks`])
//! spell out one event of the process on explicit state. The run-level
//! operations ([`run_to_absorption`], [`estimate_fixation`],
//! [`simulate_trajectory`]) drive the same process through an optimised
//! event loop; see [`SimConfig::skip_inert_events`].

mod simulator;

use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{DilemmaGame, GameDistribution, GameProcess, Strategy};
use crate::network::RegularGraph;
use crate::seed::run_rng;
use simulator::{pick_weighted, EventOutcome, Simulator};

/// How edge games evolve during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    /// Each edge follows its own cyclic renewal process, advanced by
    /// `dt_per_event` per event and started in a stationary draw.
    Renewal,
    /// Every edge's game is redrawn from π at every event.
    IidStationary,
    /// All edges hold game `index` for the whole run.
    Fixed(usize),
}

/// Simulation parameters shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Selection intensity ω.
    pub omega: f64,
    pub game_mode: GameMode,
    /// Time advanced per death–birth event (renewal mode only).
    pub dt_per_event: f64,
    /// Base seed; run `i` uses [`derive_run_seed`](crate::derive_run_seed)`(seed, i)`.
    pub seed: u64,
    /// Events after which a run is abandoned as unabsorbed.
    pub max_events: u64,
    /// Skip, in one geometric draw, the events that pick a node whose
    /// neighbourhood agrees with it. Such events cannot change the
    /// population, and lazily evaluated edge clocks make them free of side
    /// effects, so the law of the process is unchanged.
    pub skip_inert_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            omega: 0.01,
            game_mode: GameMode::IidStationary,
            dt_per_event: 1.0,
            seed: 0,
            max_events: 100_000_000,
            skip_inert_events: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::param("omega", format!("must lie in [0, 1], got {}", self.omega)));
        }
        if !(self.dt_per_event > 0.0 && self.dt_per_event.is_finite()) {
            return Err(Error::param("dt_per_event", format!("must be positive, got {}", self.dt_per_event)));
        }
        if self.max_events == 0 {
            return Err(Error::param("max_events", "must be positive"));
        }
        Ok(())
    }
}

/// The games available to edges together with their long-run weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GameEnvironment {
    games: Vec<DilemmaGame>,
    pi: GameDistribution,
    process: Option<GameProcess>,
}

impl GameEnvironment {
    /// Environment driven by a renewal process; π is its stationary law.
    pub fn from_process(process: GameProcess) -> Result<Self> {
        let pi = process.stationary_distribution()?;
        Ok(GameEnvironment { games: process.games().to_vec(), pi, process: Some(process) })
    }

    /// Environment given directly by a distribution over games. Renewal mode
    /// is unavailable.
    pub fn from_distribution(games: Vec<DilemmaGame>, pi: GameDistribution) -> Result<Self> {
        if games.len() != pi.len() {
            return Err(Error::LengthMismatch { expected: games.len(), found: pi.len() });
        }
        Ok(GameEnvironment { games, pi, process: None })
    }

    pub fn single(game: DilemmaGame) -> Self {
        GameEnvironment {
            games: vec![game],
            pi: GameDistribution::point_mass(1, 0),
            process: Some(GameProcess::single(game)),
        }
    }

    pub fn games(&self) -> &[DilemmaGame] {
        &self.games
    }

    pub fn pi(&self) -> &GameDistribution {
        &self.pi
    }

    pub fn process(&self) -> Option<&GameProcess> {
        self.process.as_ref()
    }

    /// Checks that `mode` can run in this environment.
    pub fn check_mode(&self, mode: GameMode) -> Result<()> {
        match mode {
            GameMode::Renewal if self.process.is_none() => Err(Error::param(
                "game_mode",
                "renewal mode needs duration distributions, not a bare π",
            )),
            GameMode::Fixed(i) if i >= self.games.len() => Err(Error::param(
                "game_mode",
                format!("fixed game {i} out of range for {} games", self.games.len()),
            )),
            _ => Ok(()),
        }
    }
}

/// Strategy of every node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PopulationState {
    strategies: Vec<Strategy>,
}

impl PopulationState {
    pub fn monomorphic(n: usize, strategy: Strategy) -> Self {
        PopulationState { strategies: vec![strategy; n] }
    }

    pub fn from_strategies(strategies: Vec<Strategy>) -> Self {
        PopulationState { strategies }
    }

    /// `count` cooperators placed uniformly at random among `n` nodes.
    pub fn random<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Self {
        let mut strategies = vec![Strategy::B; n];
        for i in rand::seq::index::sample(rng, n, count.min(n)) {
            strategies[i] = Strategy::A;
        }
        PopulationState { strategies }
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn set(&mut self, node: usize, strategy: Strategy) {
        self.strategies[node] = strategy;
    }

    pub fn count_a(&self) -> usize {
        self.strategies.iter().filter(|s| s.is_a()).count()
    }

    /// The common strategy if the population is monomorphic.
    pub fn absorbed(&self) -> Option<Strategy> {
        let first = *self.strategies.first()?;
        self.strategies.iter().all(|&s| s == first).then_some(first)
    }

    fn check_len(&self, graph: &RegularGraph) -> Result<()> {
        if self.len() != graph.n_nodes() {
            return Err(Error::LengthMismatch { expected: graph.n_nodes(), found: self.len() });
        }
        Ok(())
    }
}

/// Game currently played on each edge and the time left before it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGameState {
    current: Vec<usize>,
    remaining: Vec<f64>,
}

impl EdgeGameState {
    /// Every edge on `game`, with a clock that never expires.
    pub fn uniform(n_edges: usize, game: usize) -> Self {
        EdgeGameState { current: vec![game; n_edges], remaining: vec![f64::INFINITY; n_edges] }
    }

    /// Every edge starts on `game` with a fresh duration of that game.
    pub fn fresh<R: Rng + ?Sized>(n_edges: usize, process: &GameProcess, game: usize, rng: &mut R) -> Self {
        let remaining = (0..n_edges).map(|_| process.durations()[game].sample(rng)).collect();
        EdgeGameState { current: vec![game; n_edges], remaining }
    }

    /// Each edge's game drawn from π, each clock a fresh duration of the
    /// drawn game. This is the start used for every simulated run.
    pub fn stationary<R: Rng + ?Sized>(n_edges: usize, process: &GameProcess, rng: &mut R) -> Result<Self> {
        let pi = process.stationary_distribution()?;
        let mut current = Vec::with_capacity(n_edges);
        let mut remaining = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let g = pi.sample_index(rng);
            current.push(g);
            remaining.push(if process.len() == 1 { f64::INFINITY } else { process.durations()[g].sample(rng) });
        }
        Ok(EdgeGameState { current, remaining })
    }

    /// Redraws every edge's game independently from `pi`.
    pub fn resample_iid<R: Rng + ?Sized>(&mut self, pi: &GameDistribution, rng: &mut R) {
        for g in &mut self.current {
            *g = pi.sample_index(rng);
        }
    }

    pub fn current(&self) -> &[usize] {
        &self.current
    }

    pub fn remaining(&self) -> &[f64] {
        &self.remaining
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}

/// Accumulated payoff of `node` against all its neighbours, each pair
/// playing the game currently on their edge.
pub fn total_payoff(
    graph: &RegularGraph,
    strategies: &[Strategy],
    edge_games: &EdgeGameState,
    games: &[DilemmaGame],
    node: usize,
) -> f64 {
    let own = strategies[node];
    graph
        .neighbors(node)
        .iter()
        .zip(graph.incident_edges(node))
        .map(|(&y, &e)| games[edge_games.current[e as usize]].payoff(own, strategies[y as usize]))
        .sum()
}

/// `1 - ω + ω F`.
#[inline]
pub fn fitness(omega: f64, total_payoff: f64) -> f64 {
    1.0 - omega + omega * total_payoff
}

/// Probability that each neighbour of `dead` (in neighbour-list order)
/// supplies the replacement strategy.
pub fn replacement_probabilities(
    graph: &RegularGraph,
    strategies: &[Strategy],
    edge_games: &EdgeGameState,
    games: &[DilemmaGame],
    omega: f64,
    dead: usize,
) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(graph.degree());
    for &y in graph.neighbors(dead) {
        let f = fitness(omega, total_payoff(graph, strategies, edge_games, games, y as usize));
        if f < 0.0 {
            return Err(Error::InvalidFitness { node: dead, detail: format!("neighbour {y} has fitness {f}") });
        }
        weights.push(f);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidFitness { node: dead, detail: format!("fitness sum {total}") });
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// What one death–birth event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replacement {
    pub dead: usize,
    pub parent: usize,
    pub changed: bool,
}

/// One death–birth event: a uniform node dies and a neighbour chosen with
/// probability proportional to fitness passes on its strategy.
pub fn death_birth_step<R: Rng + ?Sized>(
    graph: &RegularGraph,
    state: &mut PopulationState,
    edge_games: &EdgeGameState,
    games: &[DilemmaGame],
    omega: f64,
    rng: &mut R,
) -> Result<Replacement> {
    state.check_len(graph)?;
    let dead = rng.random_range(0..graph.n_nodes());
    let probs = replacement_probabilities(graph, &state.strategies, edge_games, games, omega, dead)?;
    let slot = pick_weighted(&probs, 1.0, rng);
    let parent = graph.neighbors(dead)[slot] as usize;
    let new = state.strategies[parent];
    let changed = new != state.strategies[dead];
    state.strategies[dead] = new;
    Ok(Replacement { dead, parent, changed })
}

/// Runs every edge's renewal clock forward by `dt`, switching to the
/// successor game (with a fresh duration) each time a clock expires.
pub fn advance_game_clocks<R: Rng + ?Sized>(
    edge_games: &mut EdgeGameState,
    process: &GameProcess,
    dt: f64,
    rng: &mut R,
) {
    if process.len() <= 1 || dt <= 0.0 {
        return;
    }
    for (g, rem) in edge_games.current.iter_mut().zip(edge_games.remaining.iter_mut()) {
        *rem -= dt;
        while *rem <= 0.0 {
            *g = process.successor(*g);
            *rem += process.durations()[*g].sample(rng);
        }
    }
}

/// Result of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Absorption {
    /// `None` if the event budget ran out first.
    pub absorbed_as: Option<Strategy>,
    pub events: u64,
}

fn prepare(graph: &RegularGraph, env: &GameEnvironment, config: &SimConfig) -> Result<()> {
    config.validate()?;
    env.check_mode(config.game_mode)?;
    if graph.n_nodes() < 2 {
        return Err(Error::param("graph", "needs at least two nodes"));
    }
    Ok(())
}

fn drive<R: Rng + ?Sized>(sim: &mut Simulator<'_>, max_events: u64, rng: &mut R) -> Result<Absorption> {
    loop {
        if let Some(s) = sim.absorbed() {
            return Ok(Absorption { absorbed_as: Some(s), events: sim.events() });
        }
        match sim.event(max_events, rng)? {
            EventOutcome::Stepped => {}
            EventOutcome::BudgetExhausted | EventOutcome::Frozen => {
                return Ok(Absorption { absorbed_as: None, events: sim.events() })
            }
        }
    }
}

/// Repeats death–birth events from `initial` until the population is
/// monomorphic or `config.max_events` events have elapsed.
pub fn run_to_absorption<R: Rng + ?Sized>(
    graph: &RegularGraph,
    env: &GameEnvironment,
    config: &SimConfig,
    initial: &PopulationState,
    rng: &mut R,
) -> Result<Absorption> {
    prepare(graph, env, config)?;
    initial.check_len(graph)?;
    let mut sim = Simulator::new(graph, env, config);
    sim.reset(initial.strategies(), rng);
    drive(&mut sim, config.max_events, rng)
}

/// Fixation statistics over independent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixationResult {
    pub runs: u64,
    pub fixations: u64,
    /// Runs that hit `max_events` without absorbing.
    pub unabsorbed: u64,
    /// Fixations over absorbed runs.
    pub estimate: f64,
    /// Binomial standard error of `estimate`.
    pub stderr: f64,
}

impl FixationResult {
    pub fn from_counts(runs: u64, fixations: u64, unabsorbed: u64) -> Self {
        let absorbed = runs - unabsorbed;
        let (estimate, stderr) = if absorbed == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let p = fixations as f64 / absorbed as f64;
            (p, (p * (1.0 - p) / absorbed as f64).sqrt())
        };
        FixationResult { runs, fixations, unabsorbed, estimate, stderr }
    }

    /// True when some runs did not absorb, so `estimate` rests on fewer runs.
    pub fn incomplete(&self) -> bool {
        self.unabsorbed > 0
    }
}

/// Estimates the fixation probability of a single `invader` placed
/// uniformly at random in a population of the opposite strategy.
///
/// Run `i` draws from its own stream seeded by `derive_run_seed(config.seed, i)`,
/// so the result is independent of the rayon thread count.
pub fn estimate_fixation(
    graph: &RegularGraph,
    env: &GameEnvironment,
    config: &SimConfig,
    invader: Strategy,
    runs: u64,
) -> Result<FixationResult> {
    prepare(graph, env, config)?;
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    let n = graph.n_nodes();
    let (fixations, unabsorbed) = (0..runs)
        .into_par_iter()
        .map_init(
            || (Simulator::new(graph, env, config), vec![invader.opposite(); n]),
            |(sim, initial), run| -> Result<(u64, u64)> {
                let mut rng = run_rng(config.seed, run);
                let site = rng.random_range(0..n);
                initial[site] = invader;
                sim.reset(initial, &mut rng);
                initial[site] = invader.opposite();
                let outcome = drive(sim, config.max_events, &mut rng)?;
                Ok(match outcome.absorbed_as {
                    Some(s) if s == invader => (1, 0),
                    Some(_) => (0, 0),
                    None => (0, 1),
                })
            },
        )
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(FixationResult::from_counts(runs, fixations, unabsorbed))
}

/// Edge-count statistics of a configuration under the pair convention
/// `p_XY = p_X q_{Y|X}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    pub p_a: f64,
    pub p_aa: f64,
    pub p_ab: f64,
    pub p_bb: f64,
    /// `None` when there are no A nodes.
    pub q_a_given_a: Option<f64>,
    pub q_b_given_a: Option<f64>,
    /// `None` when there are no B nodes.
    pub q_a_given_b: Option<f64>,
    pub q_b_given_b: Option<f64>,
}

impl PairStats {
    /// `q_{A|A} - q_{A|B}` when both conditionals exist.
    pub fn local_excess(&self) -> Option<f64> {
        Some(self.q_a_given_a? - self.q_a_given_b?)
    }
}

pub fn measure_pair_stats(graph: &RegularGraph, strategies: &[Strategy]) -> PairStats {
    let n = graph.n_nodes();
    let k = graph.degree() as f64;
    let n_a = strategies.iter().filter(|s| s.is_a()).count();
    let (mut aa, mut ab) = (0usize, 0usize);
    for &(u, v) in graph.edges() {
        match (strategies[u as usize].is_a(), strategies[v as usize].is_a()) {
            (true, true) => aa += 1,
            (true, false) | (false, true) => ab += 1,
            _ => {}
        }
    }
    let e = graph.n_edges() as f64;
    let bb = graph.n_edges() - aa - ab;
    let n_b = n - n_a;
    let q_a_given_a = (n_a > 0).then(|| 2.0 * aa as f64 / (k * n_a as f64));
    let q_b_given_b = (n_b > 0).then(|| 2.0 * bb as f64 / (k * n_b as f64));
    PairStats {
        p_a: n_a as f64 / n as f64,
        p_aa: aa as f64 / e,
        p_ab: ab as f64 / (2.0 * e),
        p_bb: bb as f64 / e,
        q_a_given_a,
        q_b_given_a: q_a_given_a.map(|q| 1.0 - q),
        q_a_given_b: q_b_given_b.map(|q| 1.0 - q),
        q_b_given_b,
    }
}

/// Sampling plan for [`simulate_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPlan {
    pub initial_coop_fraction: f64,
    pub horizon_events: u64,
    pub sample_every: u64,
    pub record_pairs: bool,
}

/// Cooperator fraction (and optionally pair statistics) sampled every
/// `sample_every` events, at times `0, s, 2s, ...` up to the horizon.
/// Samples after absorption repeat the absorbed state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<u64>,
    pub coop_fraction: Vec<f64>,
    pub pairs: Option<Vec<PairStats>>,
    /// Event count at which the population became monomorphic, if it did.
    pub absorbed_at: Option<u64>,
}

pub fn simulate_trajectory<R: Rng + ?Sized>(
    graph: &RegularGraph,
    env: &GameEnvironment,
    config: &SimConfig,
    plan: &TrajectoryPlan,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    prepare(graph, env, config)?;
    let x0 = plan.initial_coop_fraction;
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::param("initial_coop_fraction", format!("must lie in [0, 1], got {x0}")));
    }
    if plan.sample_every == 0 {
        return Err(Error::param("sample_every", "must be positive"));
    }
    let n = graph.n_nodes();
    let initial = PopulationState::random(n, (x0 * n as f64).round() as usize, rng);
    let mut sim = Simulator::new(graph, env, config);
    sim.reset(initial.strategies(), rng);

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        coop_fraction: Vec::new(),
        pairs: plan.record_pairs.then(Vec::new),
        absorbed_at: None,
    };
    let push = |record: &mut TrajectoryRecord, t: u64, sim: &Simulator<'_>| {
        record.times.push(t);
        record.coop_fraction.push(sim.count_a() as f64 / n as f64);
        if let Some(pairs) = record.pairs.as_mut() {
            pairs.push(measure_pair_stats(graph, sim.strategies()));
        }
    };

    let horizon = plan.horizon_events;
    let mut next_sample = Some(0u64);
    let fill = |record: &mut TrajectoryRecord, next: &mut Option<u64>, upto: u64, sim: &Simulator<'_>| {
        while let Some(t) = *next {
            if t > upto {
                break;
            }
            push(record, t, sim);
            *next = t.checked_add(plan.sample_every);
        }
    };
    loop {
        if record.absorbed_at.is_none() && sim.absorbed().is_some() {
            record.absorbed_at = Some(sim.events());
        }
        // Samples up to the current event count see the current state: any
        // events skipped before the next executed one are inert.
        let settled = if record.absorbed_at.is_some() { horizon } else { sim.events().min(horizon) };
        fill(&mut record, &mut next_sample, settled, &sim);
        if !matches!(next_sample, Some(t) if t <= horizon) {
            return Ok(record);
        }
        match sim.event(horizon, rng)? {
            EventOutcome::Stepped => {}
            EventOutcome::BudgetExhausted | EventOutcome::Frozen => {
                fill(&mut record, &mut next_sample, horizon, &sim);
                return Ok(record);
            }
        }
    }
}

/// Fraction of time each edge spends on each game over `[0, horizon]`,
/// with edges started as in a renewal-mode run. Entry `[e][i]` is edge
/// `e`'s occupancy of game `i`.
pub fn renewal_occupancy<R: Rng + ?Sized>(
    process: &GameProcess,
    n_edges: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
    }
    let start = EdgeGameState::stationary(n_edges, process, rng)?;
    let n = process.len();
    let mut out = Vec::with_capacity(n_edges);
    for e in 0..n_edges {
        let mut occ = vec![0.0; n];
        let mut g = start.current[e];
        let mut t = 0.0;
        let mut expiry = start.remaining[e];
        while t < horizon {
            let end = expiry.min(horizon);
            occ[g] += end - t;
            t = end;
            if t < horizon {
                g = process.successor(g);
                expiry += process.durations()[g].sample(rng);
            }
        }
        out.push(occ.into_iter().map(|x| x / horizon).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
