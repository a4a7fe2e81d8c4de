//! Experiment configuration: a single JSON document with the blocks
//! `topology`, `games`, `process`, `sim`, `trajectory`, `sweep` and `output`.
//!
//! Every error names the key path it concerns, e.g. `process.pi` or
//! `games[1].dg`.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use varigame::engine::{GameEnvironment, GameMode, SimConfig};
use varigame::theory::{FreeParameter, PairApproxParams};
use varigame::{DilemmaGame, DurationDistribution, GameDistribution, GameProcess, RegularGraph};

#[derive(Debug, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    VonNeumann { side: usize },
    Moore { side: usize },
    Complete { n: usize },
    RandomRegular { n: usize, k: usize, #[serde(default)] graph_seed: u64 },
}

impl Topology {
    pub fn build(&self) -> Result<RegularGraph> {
        let graph = match *self {
            Topology::VonNeumann { side } => RegularGraph::von_neumann(side),
            Topology::Moore { side } => RegularGraph::moore(side),
            Topology::Complete { n } => RegularGraph::complete(n),
            Topology::RandomRegular { n, k, graph_seed } => RegularGraph::random_regular(n, k, graph_seed),
        };
        graph.map_err(|e| ConfigError::new("topology", e))
    }
}

/// Either the duration laws of a renewal process or a stationary
/// distribution given directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<DurationDistribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlock {
    pub omega: f64,
    pub game_mode: GameMode,
    pub dt_per_event: f64,
    pub seed: u64,
    pub runs: u64,
    pub max_events: u64,
    pub skip_inert_events: bool,
}

impl Default for SimBlock {
    fn default() -> Self {
        let sim = SimConfig::default();
        SimBlock {
            omega: sim.omega,
            game_mode: sim.game_mode,
            dt_per_event: sim.dt_per_event,
            seed: sim.seed,
            runs: 10_000,
            max_events: sim.max_events,
            skip_inert_events: sim.skip_inert_events,
        }
    }
}

impl SimBlock {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            omega: self.omega,
            game_mode: self.game_mode,
            dt_per_event: self.dt_per_event,
            seed: self.seed,
            max_events: self.max_events,
            skip_inert_events: self.skip_inert_events,
        }
    }
}

/// Settings of the `trajectory` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryBlock {
    /// Initial cooperator fraction.
    pub p0: f64,
    pub horizon_events: u64,
    /// Independent Monte Carlo runs averaged per curve.
    pub seeds: u64,
    /// Horizon and step of the pair-approximation ODE.
    pub t_end: f64,
    pub step: f64,
}

impl Default for TrajectoryBlock {
    fn default() -> Self {
        TrajectoryBlock { p0: 0.5, horizon_events: 100_000, seeds: 20, t_end: 10_000.0, step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted key path (`games.0.dg`, `sim.omega`) or an alias such as
    /// `dg1`, `dr2`, `pi1` or `omega`.
    pub path: String,
    pub from: f64,
    pub to: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.from],
            s => (0..s).map(|i| self.from + (self.to - self.from) * i as f64 / (s - 1) as f64).collect(),
        }
    }

    /// Parses the `path from:to:steps` shorthand used on the command line.
    pub fn parse(path: &str, range: &str) -> Result<Self> {
        let parts: Vec<&str> = range.split(':').collect();
        let bad = || ConfigError::new("sweep", format!("range `{range}` is not `from:to:steps`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(SweepAxis {
            path: path.to_string(),
            from: parts[0].trim().parse().map_err(|_| bad())?,
            to: parts[1].trim().parse().map_err(|_| bad())?,
            steps: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub csv: Option<PathBuf>,
    pub sample_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub games: Vec<DilemmaGame>,
    pub process: ProcessBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub trajectory: TrajectoryBlock,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("<root>", e))?;
        Self::from_value(value)
    }

    /// Deserializes and validates a config tree.
    pub fn from_value(value: Value) -> Result<Self> {
        let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "<root>".to_string() } else { path }, e.into_inner())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.games.is_empty() {
            return Err(ConfigError::new("games", "at least one game is required"));
        }
        let n = self.games.len();
        match (&self.process.durations, &self.process.pi) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("process", "give exactly one of `durations` and `pi`, not both"))
            }
            (None, None) => return Err(ConfigError::new("process", "one of `durations` or `pi` is required")),
            (Some(d), None) => {
                if d.len() != n {
                    return Err(ConfigError::new(
                        "process.durations",
                        format!("{} entries for {n} games", d.len()),
                    ));
                }
                for (i, law) in d.iter().enumerate() {
                    law.validate().map_err(|e| ConfigError::new(format!("process.durations[{i}]"), e))?;
                }
            }
            (None, Some(pi)) => {
                if pi.len() != n {
                    return Err(ConfigError::new("process.pi", format!("{} entries for {n} games", pi.len())));
                }
                GameDistribution::new(pi.clone()).map_err(|e| ConfigError::new("process.pi", e))?;
            }
        }
        if let GameMode::Fixed(i) = self.sim.game_mode {
            if i >= n {
                return Err(ConfigError::new("sim.game_mode", format!("fixed game {i} out of range for {n} games")));
            }
        }
        if self.sim.game_mode == GameMode::Renewal && self.process.durations.is_none() {
            return Err(ConfigError::new("sim.game_mode", "renewal mode needs `process.durations`"));
        }
        if self.sim.runs == 0 {
            return Err(ConfigError::new("sim.runs", "must be at least 1"));
        }
        self.sim.sim_config().validate().map_err(|e| ConfigError::new("sim", e))?;
        let t = &self.trajectory;
        if !(0.0..=1.0).contains(&t.p0) {
            return Err(ConfigError::new("trajectory.p0", format!("must lie in [0, 1], got {}", t.p0)));
        }
        if t.seeds == 0 {
            return Err(ConfigError::new("trajectory.seeds", "must be at least 1"));
        }
        if !(t.step > 0.0 && t.t_end >= 0.0) {
            return Err(ConfigError::new("trajectory", "`step` must be positive and `t_end` non-negative"));
        }
        if self.output.sample_every == Some(0) {
            return Err(ConfigError::new("output.sample_every", "must be positive"));
        }
        let tree = self.to_value();
        for (i, axis) in self.sweep.iter().enumerate() {
            if axis.steps == 0 {
                return Err(ConfigError::new(format!("sweep[{i}].steps"), "must be at least 1"));
            }
            if !(axis.from.is_finite() && axis.to.is_finite()) {
                return Err(ConfigError::new(format!("sweep[{i}]"), "bounds must be finite"));
            }
            resolve_path(&tree, &axis.path, n).map_err(|e| ConfigError::new(format!("sweep[{i}].path"), e.message))?;
        }
        self.topology.build()?;
        Ok(())
    }

    pub fn graph(&self) -> Result<RegularGraph> {
        self.topology.build()
    }

    /// Stationary distribution: given directly or derived from the
    /// duration laws.
    pub fn pi(&self) -> Result<GameDistribution> {
        match (&self.process.pi, &self.process.durations) {
            (Some(pi), _) => GameDistribution::new(pi.clone()).map_err(|e| ConfigError::new("process.pi", e)),
            (None, Some(_)) => self
                .game_process()?
                .stationary_distribution()
                .map_err(|e| ConfigError::new("process.durations", e)),
            (None, None) => Err(ConfigError::new("process", "missing")),
        }
    }

    pub fn game_process(&self) -> Result<GameProcess> {
        let durations = self
            .process
            .durations
            .clone()
            .ok_or_else(|| ConfigError::new("process.durations", "not given"))?;
        GameProcess::new(self.games.clone(), durations).map_err(|e| ConfigError::new("process", e))
    }

    pub fn environment(&self) -> Result<GameEnvironment> {
        let env = if self.process.durations.is_some() {
            GameEnvironment::from_process(self.game_process()?)
        } else {
            GameEnvironment::from_distribution(self.games.clone(), self.pi()?)
        };
        env.map_err(|e| ConfigError::new("process", e))
    }

    pub fn pair_params(&self, graph: &RegularGraph) -> Result<PairApproxParams> {
        PairApproxParams::new(graph.degree() as u32, graph.n_nodes() as u64, self.sim.omega)
            .map_err(|e| ConfigError::new("topology", e))
    }

    /// Copy of this config with `path` set to `value`.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut tree = self.to_value();
        set_path(&mut tree, path, value, self.games.len())?;
        let updated: ExperimentConfig = serde_path_to_error::deserialize(tree)
            .map_err(|e| ConfigError::new(e.path().to_string(), e.into_inner()))?;
        updated.validate().map_err(|e| ConfigError::new(e.path, format!("after setting `{path}` = {value}: {}", e.message)))?;
        Ok(updated)
    }
}

/// Dilemma strength named by a path, if it names one.
pub fn free_parameter(path: &str, n_games: usize) -> Option<FreeParameter> {
    let keys = expand_alias(path, n_games).ok()?;
    match keys.as_slice() {
        [Target::Path(p)] => match p.as_slice() {
            [games, i, leaf] if games == "games" => {
                let i: usize = i.parse().ok()?;
                match leaf.as_str() {
                    "dg" => Some(FreeParameter::Dg(i)),
                    "dr" => Some(FreeParameter::Dr(i)),
                    _ => None,
                }
            }
            _ => None,
        },
        _ => None,
    }
}

/// One assignment produced by a path or alias: either a plain key path, or
/// the two-game stationary distribution `(x, 1 - x)`.
#[derive(Debug, Clone, PartialEq)]
enum Target {
    Path(Vec<String>),
    PiFirst,
}

fn expand_alias(path: &str, n_games: usize) -> Result<Vec<Target>> {
    let path = path.trim();
    if path == "pi1" {
        if n_games != 2 {
            return Err(ConfigError::new(path, "`pi1` needs exactly two games"));
        }
        return Ok(vec![Target::PiFirst]);
    }
    if path == "omega" {
        return Ok(vec![Target::Path(vec!["sim".into(), "omega".into()])]);
    }
    for leaf in ["dg", "dr"] {
        if let Some(rest) = path.strip_prefix(leaf) {
            if let Ok(i) = rest.parse::<usize>() {
                if i == 0 || i > n_games {
                    return Err(ConfigError::new(path, format!("game {i} out of range 1..={n_games}")));
                }
                return Ok(vec![Target::Path(vec!["games".into(), (i - 1).to_string(), leaf.into()])]);
            }
        }
    }
    let normalized = path.replace('[', ".").replace(']', "");
    let keys: Vec<String> = normalized.split('.').filter(|s| !s.is_empty()).map(str::to_string).collect();
    if keys.is_empty() {
        return Err(ConfigError::new(path, "empty path"));
    }
    Ok(vec![Target::Path(keys)])
}

fn lookup<'a>(tree: &'a Value, keys: &[String]) -> Option<&'a Value> {
    keys.iter().try_fold(tree, |node, key| match node {
        Value::Object(map) => map.get(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn lookup_mut<'a>(tree: &'a mut Value, keys: &[String]) -> Option<&'a mut Value> {
    keys.iter().try_fold(tree, |node, key| match node {
        Value::Object(map) => map.get_mut(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
        _ => None,
    })
}

fn resolve_path(tree: &Value, path: &str, n_games: usize) -> Result<()> {
    for target in expand_alias(path, n_games)? {
        match target {
            Target::PiFirst => {
                if lookup(tree, &["process".into(), "pi".into()]).is_none() {
                    return Err(ConfigError::new(path, "`pi1` needs `process.pi`"));
                }
            }
            Target::Path(keys) => match lookup(tree, &keys) {
                Some(Value::Number(_)) => {}
                Some(_) => return Err(ConfigError::new(path, "does not name a numeric value")),
                None => return Err(ConfigError::new(path, "does not resolve to a config key")),
            },
        }
    }
    Ok(())
}

fn set_path(tree: &mut Value, path: &str, value: f64, n_games: usize) -> Result<()> {
    resolve_path(tree, path, n_games)?;
    for target in expand_alias(path, n_games)? {
        match target {
            Target::PiFirst => {
                let pi = lookup_mut(tree, &["process".into(), "pi".into()]).expect("resolved");
                *pi = serde_json::json!([value, 1.0 - value]);
            }
            Target::Path(keys) => {
                let leaf = lookup_mut(tree, &keys).expect("resolved");
                // Integer leaves (seeds, counts) accept integral values only.
                let is_integer = leaf.as_u64().is_some() || leaf.as_i64().is_some();
                *leaf = if is_integer && value.fract() == 0.0 && value >= 0.0 {
                    Value::from(value as u64)
                } else {
                    serde_json::Number::from_f64(value)
                        .map(Value::Number)
                        .ok_or_else(|| ConfigError::new(path, format!("{value} is not a finite number")))?
                };
            }
        }
    }
    Ok(())
}
