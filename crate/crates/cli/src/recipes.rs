//! Canned experiments behind the published figures.
//!
//! Fixation figures (`fig1`..`fig3`) are families of curves, each a
//! configuration plus the swept parameter. Trajectory figures (`fig4`,
//! `fig5`, `sm-fig1`, `sm-fig2`) are case families of two-game instances,
//! one instance per case of the corresponding optimal-policy result.

use clap::ValueEnum;
use serde_json::{json, Value};
use varigame::optimizer::{optimal_policy_two_games, ObjectiveKind, PolicyCase};
use varigame::DilemmaGame;

use crate::config::{ConfigError, ExperimentConfig, SweepAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    #[value(name = "sm-fig1")]
    SmFig1,
    #[value(name = "sm-fig2")]
    SmFig2,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::SmFig1,
        FigureId::SmFig2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::SmFig1 => "sm-fig1",
            FigureId::SmFig2 => "sm-fig2",
        }
    }
}

/// Default Monte Carlo runs per point for fixation figures.
pub const DEFAULT_RUNS: u64 = 100_000;
/// Default selection intensity of every recipe.
pub const OMEGA: f64 = 0.01;

/// One curve of a fixation figure.
#[derive(Debug, Clone)]
pub struct FixationSeries {
    pub label: String,
    pub config: ExperimentConfig,
    pub axis: SweepAxis,
}

fn lattice(kind: &str, side: usize) -> Value {
    json!({"kind": kind, "side": side})
}

fn build(topology: Value, games: Value, process: Value, game_mode: Value, runs: u64, seed: u64) -> ExperimentConfig {
    let tree = json!({
        "topology": topology,
        "games": games,
        "process": process,
        "sim": {"omega": OMEGA, "game_mode": game_mode, "seed": seed, "runs": runs},
    });
    ExperimentConfig::from_value(tree).expect("recipe configs are valid")
}

fn axis(path: &str, from: f64, to: f64, steps: usize) -> SweepAxis {
    SweepAxis { path: path.into(), from, to, steps }
}

/// Curves of a fixation figure, or `None` for trajectory figures.
pub fn fixation_recipe(id: FigureId, runs: u64, seed: u64) -> Option<Vec<FixationSeries>> {
    let mut out = Vec::new();
    match id {
        FigureId::Fig1 => {
            // G_2 = (0.35, -0.1) carries the milder risk dilemma; Dg_1 sweeps [0, 1].
            for (kind, k) in [("von_neumann", 4), ("moore", 8)] {
                for pi1 in [0.5, 1.0] {
                    let mode = if pi1 == 1.0 { json!({"fixed": 0}) } else { json!("iid_stationary") };
                    out.push(FixationSeries {
                        label: format!("k={k} pi1={pi1}"),
                        config: build(
                            lattice(kind, 10),
                            json!([{"dg": 0.0, "dr": 0.5}, {"dg": 0.35, "dr": -0.1}]),
                            json!({"pi": [pi1, 1.0 - pi1]}),
                            mode,
                            runs,
                            seed,
                        ),
                        axis: axis("dg1", 0.0, 1.0, 11),
                    });
                }
            }
        }
        FigureId::Fig2 => {
            for b2 in [100.0, 200.0] {
                out.push(FixationSeries {
                    label: format!("uniform b2={b2}"),
                    config: build(
                        lattice("moore", 10),
                        json!([{"dg": -0.2, "dr": 0.0}, {"dg": 0.3, "dr": 0.5}]),
                        json!({"durations": [
                            {"kind": "uniform", "lower": 50.0, "upper": 150.0},
                            {"kind": "uniform", "lower": 50.0, "upper": b2},
                        ]}),
                        json!("renewal"),
                        runs,
                        seed,
                    ),
                    axis: axis("dr1", -0.5, 0.5, 11),
                });
            }
            for lambda in [0.01, 0.05] {
                out.push(FixationSeries {
                    label: format!("exponential lambda={lambda}"),
                    config: build(
                        lattice("von_neumann", 10),
                        json!([{"dg": 0.0, "dr": 0.5}, {"dg": 0.2, "dr": 0.3}]),
                        json!({"durations": [
                            {"kind": "exponential", "rate": lambda},
                            {"kind": "exponential", "rate": 0.02},
                        ]}),
                        json!("renewal"),
                        runs,
                        seed,
                    ),
                    axis: axis("dg1", 0.0, 1.0, 11),
                });
            }
        }
        FigureId::Fig3 => {
            for side in [10, 22] {
                for lambda in [0.02, 0.05] {
                    out.push(FixationSeries {
                        label: format!("N={} lambda={lambda}", side * side),
                        config: build(
                            lattice("von_neumann", side),
                            json!([{"dg": 0.5, "dr": 0.3}, {"dg": 0.1, "dr": 0.0}]),
                            json!({"durations": [
                                {"kind": "exponential", "rate": lambda},
                                {"kind": "uniform", "lower": 50.0, "upper": 150.0},
                            ]}),
                            json!("renewal"),
                            runs,
                            seed,
                        ),
                        axis: axis("dr2", 0.0, 1.0, 11),
                    });
                }
            }
        }
        _ => return None,
    }
    Some(out)
}

/// Constant policies compared against the optimum in trajectory figures.
pub const GRID_PI: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One two-game instance of a case family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseInstance {
    pub label: &'static str,
    pub games: [DilemmaGame; 2],
    /// Expected shape of the optimal policy.
    pub case: PolicyCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFamily {
    pub figure: FigureId,
    pub objective: ObjectiveKind,
    pub k: u32,
    pub instances: Vec<CaseInstance>,
}

fn instance(label: &'static str, g1: (f64, f64), g2: (f64, f64), case: PolicyCase) -> CaseInstance {
    CaseInstance {
        label,
        games: [DilemmaGame::new(g1.0, g1.1).unwrap(), DilemmaGame::new(g2.0, g2.1).unwrap()],
        case,
    }
}

/// Instances are `(dg, dr)` pairs on a von Neumann lattice (`k = 4`). Each
/// family holds one slope branch of the switching function: decreasing for
/// `fig4` and `sm-fig2`, increasing for `sm-fig1` and `fig5`.
pub fn case_family(id: FigureId) -> Option<CaseFamily> {
    use PolicyCase::*;
    let (objective, instances) = match id {
        FigureId::Fig4 => (
            ObjectiveKind::MaxGradient,
            vec![
                instance("i", (0.1, -0.1), (0.4, 0.1), AlwaysFirst),
                instance("ii", (0.3, 0.2), (0.0, -0.2), AlwaysSecond),
                instance("iii", (-0.1, 0.3), (0.1, -0.1), SecondThenFirst),
            ],
        ),
        FigureId::SmFig1 => (
            ObjectiveKind::MaxGradient,
            vec![
                instance("i", (0.5, 0.3), (0.1, 0.0), AlwaysSecond),
                instance("ii", (-0.2, 0.0), (0.0, 0.3), AlwaysFirst),
                instance("iii", (0.2, 0.0), (0.1, 0.2), FirstThenSecond),
            ],
        ),
        FigureId::Fig5 => (
            ObjectiveKind::MinFitnessDiff,
            vec![
                instance("i", (0.6, 0.3), (0.1, 0.1), AlwaysSecond),
                instance("ii", (0.0, -0.3), (0.2, 0.0), AlwaysFirst),
                instance("iii", (0.4, -0.3), (0.1, 0.4), FirstThenSecond),
            ],
        ),
        FigureId::SmFig2 => (
            ObjectiveKind::MinFitnessDiff,
            vec![
                instance("i", (0.1, 0.0), (0.5, 0.3), AlwaysFirst),
                instance("ii", (0.3, 0.5), (0.1, 0.0), AlwaysSecond),
                instance("iii", (0.1, 0.4), (0.4, -0.3), SecondThenFirst),
            ],
        ),
        _ => return None,
    };
    Some(CaseFamily { figure: id, objective, k: 4, instances })
}

/// Trajectory experiment for one instance under a constant `π_1`:
/// 10×10 von Neumann lattice, `p0 = 0.5`, i.i.d. stationary edge games.
pub fn trajectory_config(
    games: &[DilemmaGame; 2],
    pi1: f64,
    seeds: u64,
    horizon_events: u64,
    seed: u64,
) -> Result<ExperimentConfig, ConfigError> {
    let game = |g: &DilemmaGame| json!({"dg": g.dg(), "dr": g.dr()});
    let mode = if pi1 == 1.0 {
        json!({"fixed": 0})
    } else if pi1 == 0.0 {
        json!({"fixed": 1})
    } else {
        json!("iid_stationary")
    };
    ExperimentConfig::from_value(json!({
        "topology": lattice("von_neumann", 10),
        "games": [game(&games[0]), game(&games[1])],
        "process": {"pi": [pi1, 1.0 - pi1]},
        "sim": {"omega": OMEGA, "game_mode": mode, "seed": seed},
        "trajectory": {"p0": 0.5, "horizon_events": horizon_events, "seeds": seeds, "t_end": 10000.0, "step": 1.0},
        "output": {"sample_every": (horizon_events / 100).max(1)},
    }))
}

/// Checks that every instance of a family falls in the case it is listed
/// under.
pub fn family_cases_match(family: &CaseFamily) -> bool {
    family.instances.iter().all(|inst| {
        optimal_policy_two_games(family.objective, &inst.games, family.k)
            .map(|p| p.case == inst.case)
            .unwrap_or(false)
    })
}
