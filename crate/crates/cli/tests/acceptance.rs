//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines print in order
//! even under `cargo test`. Failures are reported but only change the exit
//! status when `VARIGAME_ACCEPTANCE_STRICT` is set. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p varigame-cli --test acceptance -- 5 6`.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use varigame::engine::{
    estimate_fixation, renewal_occupancy, simulate_trajectory, GameEnvironment, GameMode, SimConfig, TrajectoryPlan,
};
use varigame::optimizer::{grid_verify, optimal_policy_two_games, switching_function, ObjectiveKind};
use varigame::oracle::{exact_fixation, lumped_fixation_complete, GameModel};
use varigame::seed::run_rng;
use varigame::theory::{
    cooperation_over_defection, favors_cooperation, phi_a, rho_b, rho_ratio, FreeParameter, MeanDilemmas,
    PairApproxParams,
};
use varigame::{
    DilemmaGame, DurationDistribution, GameDistribution, GameProcess, RegularGraph, SimRng, Strategy,
};
use varigame_cli::analysis::{fixation_point, mc_trajectories, mean_curve, FixationPoint};
use varigame_cli::commands::ode_reach_time;
use varigame_cli::recipes::{self, FigureId, GRID_PI};

type Outcome = (bool, String);

fn game(dg: f64, dr: f64) -> DilemmaGame {
    DilemmaGame::new(dg, dr).unwrap()
}

/// Criterion 1: with ω = 0, fixation estimates sit within 3 stderr of 1/N.
fn neutral_drift() -> Outcome {
    let graphs = [
        ("3x3 von Neumann", RegularGraph::von_neumann(3).unwrap()),
        ("10x10 von Neumann", RegularGraph::von_neumann(10).unwrap()),
        ("10x10 Moore", RegularGraph::moore(10).unwrap()),
        ("K4", RegularGraph::complete(4).unwrap()),
    ];
    let process = GameProcess::new(
        vec![game(0.5, 0.5), game(-0.3, 0.2)],
        vec![DurationDistribution::Exponential { rate: 0.05 }, DurationDistribution::Uniform { lower: 10.0, upper: 30.0 }],
    )
    .unwrap();
    let env = GameEnvironment::from_process(process).unwrap();
    let config = SimConfig { omega: 0.0, game_mode: GameMode::Renewal, seed: 11, ..Default::default() };
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, g) in &graphs {
        let r = estimate_fixation(g, &env, &config, Strategy::A, 100_000).unwrap();
        let target = 1.0 / g.n_nodes() as f64;
        let z = (r.estimate - target) / r.stderr;
        ok &= z.abs() <= 3.0 && r.unabsorbed == 0;
        notes.push(format!("{name} {:.5} vs {target:.5} (z={z:+.2})", r.estimate));
    }
    (ok, notes.join("; "))
}

/// Criterion 2: Monte Carlo against the exact chain on the 3×3 torus; K4 exact
/// against the lumped birth–death chain.
fn oracle_equivalence() -> Outcome {
    let graph = RegularGraph::von_neumann(3).unwrap();
    let pd = game(0.3, 0.3);
    let sd = game(0.4, -0.3);
    let sh = game(-0.3, 0.4);
    let points: Vec<(&str, Vec<DilemmaGame>, GameDistribution)> = vec![
        ("PD(0.3,0.3)", vec![pd], GameDistribution::point_mass(1, 0)),
        ("PD(0.8,0.6)", vec![game(0.8, 0.6)], GameDistribution::point_mass(1, 0)),
        ("SD(0.4,-0.3)", vec![sd], GameDistribution::point_mass(1, 0)),
        ("SD(0.9,-0.5)", vec![game(0.9, -0.5)], GameDistribution::point_mass(1, 0)),
        ("SH(-0.3,0.4)", vec![sh], GameDistribution::point_mass(1, 0)),
        ("PD/SD pi=(0.5,0.5)", vec![pd, sd], GameDistribution::two(0.5).unwrap()),
    ];
    let mut ok = true;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut compared = 0;
    for (name, games, pi) in &points {
        let model = if games.len() == 1 {
            GameModel::Fixed(games[0])
        } else {
            GameModel::Expected { dist: pi.clone(), games: games.clone() }
        };
        let env = GameEnvironment::from_distribution(games.clone(), pi.clone()).unwrap();
        for omega in [0.02, 0.1] {
            let exact = exact_fixation(&graph, &model, omega).unwrap();
            let config = SimConfig { omega, game_mode: GameMode::IidStationary, seed: 2024, ..Default::default() };
            for (strategy, truth) in [(Strategy::A, exact.rho_a), (Strategy::B, exact.rho_b)] {
                let r = estimate_fixation(&graph, &env, &config, strategy, 200_000).unwrap();
                let z = (r.estimate - truth) / r.stderr;
                compared += 1;
                if z.abs() > worst.0.abs() {
                    worst = (z, format!("{name} omega={omega} {strategy:?}"));
                }
                ok &= z.abs() <= 3.0;
            }
        }
    }
    let k4 = RegularGraph::complete(4).unwrap();
    let mut lump_err: f64 = 0.0;
    for (dg, dr) in [(0.3, 0.3), (0.4, -0.3), (-0.3, 0.4), (1.0, 1.0)] {
        for omega in [0.02, 0.1, 0.2] {
            let model = GameModel::Fixed(game(dg, dr));
            let exact = exact_fixation(&k4, &model, omega).unwrap().rho_a;
            let lumped = lumped_fixation_complete(4, &model, omega).unwrap();
            lump_err = lump_err.max((exact - lumped).abs());
        }
    }
    ok &= lump_err <= 1e-10;
    (ok, format!("{compared} MC/exact comparisons, worst z={:+.2} at {}; K4 lumped max error {lump_err:.1e}", worst.0, worst.1))
}

/// Least-squares root of `y` against `x`.
fn fitted_root(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    mx - my / slope
}

struct Fig1Sweep {
    x: Vec<f64>,
    variable: Vec<FixationPoint>,
    fixed: Vec<FixationPoint>,
}

/// Fig. 1 structure on the 10×10 von Neumann lattice: π = (0.5, 0.5)
/// with both invaders, and π = (1, 0) with the cooperator invader.
fn fig1_sweep() -> Fig1Sweep {
    let series = recipes::fixation_recipe(FigureId::Fig1, 100_000, 7).unwrap();
    let pick = |label: &str| series.iter().find(|s| s.label == label).unwrap().clone();
    let variable = pick("k=4 pi1=0.5");
    let mut fixed = pick("k=4 pi1=1");
    let x = variable.axis.values();
    let free = Some(FreeParameter::Dg(0));
    let v = x
        .iter()
        .map(|&d| fixation_point(&variable.config.with_value("dg1", d).unwrap(), free).unwrap())
        .collect();
    // Only rho_C is compared for the fixed game; skip the defector runs.
    fixed.config.sim.runs = 100_000;
    let f = x
        .iter()
        .map(|&d| {
            let c = fixed.config.with_value("dg1", d).unwrap();
            let rho_c = varigame_cli::analysis::estimate(&c, Strategy::A).unwrap();
            let theory = varigame_cli::analysis::theory_point(&c, free).unwrap();
            FixationPoint { theory, rho_c, rho_d: rho_c }
        })
        .collect();
    Fig1Sweep { x, variable: v, fixed: f }
}

/// Criterion 3: Crossings of 1/N and of ρ_C = ρ_D near the closed-form thresholds.
fn theory_agreement(sweep: &Fig1Sweep) -> Outcome {
    let n = sweep.variable[0].theory.n as f64;
    let y1: Vec<f64> = sweep.variable.iter().map(|p| p.rho_c.estimate - 1.0 / n).collect();
    let y2: Vec<f64> = sweep.variable.iter().map(|p| p.diff()).collect();
    let root1 = fitted_root(&sweep.x, &y1);
    let root2 = fitted_root(&sweep.x, &y2);
    let t1 = sweep.variable[0].theory.favors_threshold;
    let t2 = sweep.variable[0].theory.over_defection_threshold;
    let ok = (root1 - t1).abs() <= 0.1 && (root2 - t2).abs() <= 0.1;
    (
        ok,
        format!(
            "rho_C = 1/N crossing at dg1 = {root1:.3} (threshold {t1:.3}); rho_C = rho_D crossing at {root2:.3} (threshold {t2:.3}); {} points",
            sweep.x.len()
        ),
    )
}

/// Criterion 4: π = (0.5, 0.5) beats π = (1, 0) outside the 1-stderr bands.
fn variable_beats_fixed(sweep: &Fig1Sweep) -> Outcome {
    let wins = sweep
        .variable
        .iter()
        .zip(&sweep.fixed)
        .filter(|(v, f)| v.rho_c.estimate - v.rho_c.stderr > f.rho_c.estimate + f.rho_c.stderr)
        .count();
    let share = wins as f64 / sweep.x.len() as f64;
    (share >= 0.8, format!("{wins}/{} points separated", sweep.x.len()))
}

/// Criterion 5: Closed-form identities on random draws and the donation-game rule.
fn identities() -> Outcome {
    let mut rng = SimRng::seed_from_u64(5);
    let mut complement_err: f64 = 0.0;
    let mut sign_mismatch = 0;
    for _ in 0..10_000 {
        let k: u32 = rng.random_range(3..=10);
        let n: u64 = rng.random_range(k as u64 + 1..=1000);
        let omega = rng.random_range(1e-4..0.05);
        let params = PairApproxParams::new(k, n, omega).unwrap();
        let games = [game(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)), game(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))];
        let pi = GameDistribution::two(rng.random_range(0.0..=1.0)).unwrap();
        let mean = MeanDilemmas::from_distribution(&pi, &games).unwrap();
        let complement = 1.0 - phi_a((n - 1) as f64 / n as f64, &params, mean);
        complement_err = complement_err.max((rho_b(&params, mean) - complement).abs());
        let margin = cooperation_over_defection(k, mean).unwrap().margin;
        if (rho_ratio(&params, mean) > 1.0) != (margin > 0.0) {
            sign_mismatch += 1;
        }
    }
    // Donation game with u = c / (b - c): both margins are affine in u and
    // must vanish exactly at b / c = k.
    let mut rule_err: f64 = 0.0;
    for k in 3..=10u32 {
        let m1 = |u: f64| favors_cooperation(k, MeanDilemmas::new(u, u)).unwrap().margin;
        let m2 = |u: f64| cooperation_over_defection(k, MeanDilemmas::new(u, u)).unwrap().margin;
        for m in [&m1 as &dyn Fn(f64) -> f64, &m2] {
            let u = m(0.0) / (m(0.0) - m(1.0));
            rule_err = rule_err.max(((1.0 + 1.0 / u) - k as f64).abs());
        }
        let at = |ratio: f64| DilemmaGame::donation(ratio, 1.0).map(|g| MeanDilemmas::of_game(&g)).unwrap();
        let above = favors_cooperation(k, at(k as f64 * 1.001)).unwrap().holds
            && cooperation_over_defection(k, at(k as f64 * 1.001)).unwrap().holds;
        let below = favors_cooperation(k, at(k as f64 * 0.999)).unwrap().holds
            || cooperation_over_defection(k, at(k as f64 * 0.999)).unwrap().holds;
        if !above || below {
            rule_err = f64::INFINITY;
        }
    }
    let ok = complement_err <= 1e-12 && sign_mismatch == 0 && rule_err <= 1e-12;
    (
        ok,
        format!("rho_B complement max error {complement_err:.1e}; {sign_mismatch} ratio/margin sign mismatches; b/c = k rule error {rule_err:.1e}"),
    )
}

/// Criterion 6: Optimizer against brute force, breakpoints, and k-independence of
/// the fitness-difference policy.
fn optimizer_verification() -> Outcome {
    let mut rng = SimRng::seed_from_u64(6);
    let instances: Vec<[DilemmaGame; 2]> = (0..1000)
        .map(|_| {
            let mut d = || rng.random_range(-1.0..=1.0);
            [game(d(), d()), game(d(), d())]
        })
        .collect();
    let mut violations = 0usize;
    let mut bad_breakpoints = 0usize;
    let mut k_dependent = 0usize;
    for objective in ObjectiveKind::ALL {
        for k in [3u32, 4, 8] {
            let counts: (usize, usize) = instances
                .par_iter()
                .map(|games| {
                    let report = grid_verify(objective, games, k, 1000).unwrap();
                    let policy = optimal_policy_two_games(objective, games, k).unwrap();
                    let mut bad = 0;
                    for &p in &policy.breakpoints {
                        let g = |x: f64| switching_function(objective, x, games, k);
                        let strict = g(p - 1e-6) * g(p + 1e-6) < 0.0;
                        if g(p).abs() > 1e-12 || !strict || !(0.0..1.0).contains(&p) {
                            bad += 1;
                        }
                    }
                    (report.violations, bad)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            violations += counts.0;
            bad_breakpoints += counts.1;
        }
    }
    for games in &instances {
        let base = optimal_policy_two_games(ObjectiveKind::MinFitnessDiff, games, 3).unwrap();
        for k in [4u32, 8] {
            if optimal_policy_two_games(ObjectiveKind::MinFitnessDiff, games, k).unwrap() != base {
                k_dependent += 1;
            }
        }
    }
    let ok = violations == 0 && bad_breakpoints == 0 && k_dependent == 0;
    (
        ok,
        format!("6000 grid checks: {violations} violations; {bad_breakpoints} bad breakpoints; {k_dependent} k-dependent fitness-difference policies"),
    )
}

/// Criterion 7: Optimal policies reach cooperation first in the ODE; Monte Carlo
/// keeps the optimal vertex on top for constant-policy cases.
fn trajectory_ordering() -> Outcome {
    let mut ode_failures = Vec::new();
    let mut mc_failures = Vec::new();
    let mut mc_checked = 0;
    for id in [FigureId::Fig4, FigureId::SmFig1, FigureId::Fig5, FigureId::SmFig2] {
        let family = recipes::case_family(id).unwrap();
        for inst in &family.instances {
            let base = recipes::trajectory_config(&inst.games, 0.5, 20, 100_000, 0).unwrap();
            let inf = f64::INFINITY;
            let optimal = ode_reach_time(&base, None, family.objective).unwrap().unwrap_or(inf);
            let mut times = Vec::new();
            for &pi1 in &GRID_PI {
                times.push(ode_reach_time(&base, Some(pi1), family.objective).unwrap().unwrap_or(inf));
            }
            if times.iter().any(|&t| optimal > t) {
                ode_failures.push(format!("{} {}", id.name(), inst.label));
            }
            let policy = optimal_policy_two_games(family.objective, &inst.games, family.k).unwrap();
            if policy.breakpoints.is_empty() {
                mc_checked += 1;
                let best = policy.pi1_at(0.5);
                let finals: Vec<(f64, f64)> = GRID_PI
                    .iter()
                    .map(|&pi1| {
                        let config = recipes::trajectory_config(&inst.games, pi1, 20, 100_000, 0).unwrap();
                        let curve = mean_curve(&mc_trajectories(&config, 20, false).unwrap());
                        (pi1, curve.last().unwrap().1)
                    })
                    .collect();
                let top = finals.iter().find(|(p, _)| *p == best).unwrap().1;
                if finals.iter().any(|&(_, m)| m > top) {
                    let listing: Vec<String> = finals.iter().map(|(p, m)| format!("{p}:{m:.2}")).collect();
                    mc_failures.push(format!("{} {} [{}]", id.name(), inst.label, listing.join(" ")));
                }
            }
        }
    }
    let ok = ode_failures.is_empty() && mc_failures.is_empty();
    (
        ok,
        format!(
            "ODE: optimal first in {}/12 instances{}; MC: optimal vertex on top in {}/{mc_checked} constant cases{}",
            12 - ode_failures.len(),
            if ode_failures.is_empty() { String::new() } else { format!(" (failed: {})", ode_failures.join(", ")) },
            mc_checked - mc_failures.len(),
            if mc_failures.is_empty() { String::new() } else { format!(" (failed: {})", mc_failures.join(", ")) },
        ),
    )
}

/// Criterion 8: Local excess q_{A|A} - q_{A|B} averaged before absorption.
fn slow_manifold() -> Outcome {
    let graph = RegularGraph::von_neumann(20).unwrap();
    let n = graph.n_nodes() as u64;
    let env = GameEnvironment::from_distribution(vec![game(0.5, 0.5), game(0.35, -0.1)], GameDistribution::two(0.5).unwrap())
        .unwrap();
    let config = SimConfig { omega: 0.005, seed: 8, ..Default::default() };
    let plan = TrajectoryPlan { initial_coop_fraction: 0.5, horizon_events: 2_000_000, sample_every: n, record_pairs: true };
    // Window: from two generations (2N events), after the fast relaxation
    // of the pair variables, up to absorption.
    let per_seed: Vec<(f64, usize)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let r = simulate_trajectory(&graph, &env, &config, &plan, &mut run_rng(config.seed, s)).unwrap();
            let end = r.absorbed_at.unwrap_or(u64::MAX);
            let pairs = r.pairs.unwrap();
            let vals: Vec<f64> = r
                .times
                .iter()
                .zip(&pairs)
                .filter(|(&t, _)| t >= 2 * n && t < end)
                .filter_map(|(_, p)| p.local_excess())
                .collect();
            (vals.iter().sum::<f64>(), vals.len())
        })
        .collect();
    let (sum, count) = per_seed.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let avg = sum / count as f64;
    ((avg - 1.0 / 3.0).abs() <= 0.1, format!("window average {avg:.4} over {count} samples (target 1/3 +- 0.1)"))
}

/// Criterion 9: Long-run occupancy of renewal edges against the stationary law.
fn renewal_stationarity() -> Outcome {
    let u = |lower: f64, upper: f64| DurationDistribution::Uniform { lower, upper };
    let e = |rate: f64| DurationDistribution::Exponential { rate };
    let sets: Vec<(&str, [DurationDistribution; 2])> = vec![
        ("U(50,150)/U(50,100)", [u(50.0, 150.0), u(50.0, 100.0)]),
        ("U(50,150)/U(50,200)", [u(50.0, 150.0), u(50.0, 200.0)]),
        ("E(0.01)/E(0.02)", [e(0.01), e(0.02)]),
        ("E(0.05)/E(0.02)", [e(0.05), e(0.02)]),
        ("E(0.02)/U(50,150)", [e(0.02), u(50.0, 150.0)]),
        ("E(0.05)/U(50,150)", [e(0.05), u(50.0, 150.0)]),
    ];
    let n_edges = RegularGraph::von_neumann(10).unwrap().n_edges();
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (name, laws)) in sets.iter().enumerate() {
        let process = GameProcess::new(vec![game(0.1, 0.1), game(0.2, 0.2)], laws.to_vec()).unwrap();
        let pi = process.stationary_distribution().unwrap().probabilities()[0];
        let mut rng = SimRng::seed_from_u64(900 + i as u64);
        let occ = renewal_occupancy(&process, n_edges, 1e6, &mut rng).unwrap();
        let mean = occ.iter().map(|o| o[0]).sum::<f64>() / n_edges as f64;
        let worst = occ.iter().map(|o| (o[0] - pi).abs()).fold(0.0, f64::max);
        ok &= (mean - pi).abs() <= 0.01;
        notes.push(format!("{name}: {mean:.4} vs {pi:.4} (single-edge worst {worst:.4})"));
    }
    (ok, notes.join("; "))
}

/// Criterion 10: Byte-identical CSV from 1 and 8 worker threads.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"topology": {"kind": "von_neumann", "side": 4},
            "games": [{"dg": 0.3, "dr": 0.2}, {"dg": -0.1, "dr": 0.4}],
            "process": {"durations": [{"kind": "exponential", "rate": 0.1}, {"kind": "uniform", "lower": 5, "upper": 15}]},
            "sim": {"omega": 0.05, "game_mode": "renewal", "seed": 99, "runs": 3000},
            "trajectory": {"horizon_events": 5000, "seeds": 12},
            "output": {"sample_every": 250},
            "sweep": [{"path": "dg1", "from": 0.0, "to": 0.6, "steps": 3}, {"path": "dr2", "from": 0.2, "to": 0.8, "steps": 2}]}"#,
    )
    .unwrap();
    let mut same = true;
    let mut checked = Vec::new();
    for sub in ["sweep", "trajectory", "fixation"] {
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("{sub}-{threads}.csv"));
            let args = [
                "varigame",
                "--config",
                config.to_str().unwrap(),
                "--threads",
                threads,
                "--deterministic",
                "--out",
                out.to_str().unwrap(),
                sub,
            ];
            match varigame_cli::run_from_args(args) {
                Ok(()) => outputs.push(std::fs::read(&out).unwrap()),
                Err(e) => return (false, format!("{sub} failed: {e:#}")),
            }
        }
        same &= outputs[0] == outputs[1] && !outputs[0].is_empty();
        checked.push(format!("{sub} ({} bytes)", outputs[0].len()));
    }
    (same, format!("identical across 1 and 8 threads: {}", checked.join(", ")))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |i: u32| wanted.is_empty() || wanted.contains(&i);
    let mut failures = 0;
    let mut report = |i: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !run(i) {
            return;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        println!(
            "criterion {i:>2} [{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failures += 1;
        }
    };
    report(1, "neutral drift", &mut neutral_drift);
    report(2, "oracle equivalence", &mut oracle_equivalence);
    let mut sweep = None;
    if run(3) || run(4) {
        let start = Instant::now();
        sweep = Some(fig1_sweep());
        println!("(Fig. 1 sweep for criteria 3 and 4 took {:.1}s)", start.elapsed().as_secs_f64());
    }
    report(3, "weak-selection theory agreement", &mut || theory_agreement(sweep.as_ref().unwrap()));
    report(4, "variable beats fixed", &mut || variable_beats_fixed(sweep.as_ref().unwrap()));
    report(5, "closed-form identities", &mut identities);
    report(6, "optimizer verification", &mut optimizer_verification);
    report(7, "trajectory ordering", &mut trajectory_ordering);
    report(8, "slow manifold", &mut slow_manifold);
    report(9, "renewal stationarity", &mut renewal_stationarity);
    report(10, "determinism across threads", &mut determinism);
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        if std::env::var_os("VARIGAME_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
