//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use varigame::optimizer::{
    grid_verify, h2, optimal_distribution_n_games, optimal_policy_two_games, objective_cost, GridReport,
    ObjectiveKind, PiecewisePolicy,
};
use varigame::oracle::{exact_fixation, GameModel};
use varigame::theory::{selection_gradient, FreeParameter, MeanDilemmas};
use varigame::engine::GameMode;
use varigame::{GameDistribution, Strategy};

use crate::analysis::{
    self, fixation_columns, fixation_point, mc_trajectories, mean_curve, ode_trajectory, theory_point, OdePolicy,
    THEORY_COLUMNS,
};
use crate::config::{free_parameter, ExperimentConfig, SweepAxis};
use crate::output::{line_plot, num, write_svg_beside, Series, Table};
use crate::recipes::{self, FigureId, GRID_PI};
use crate::{interrupted, CommonArgs, Invader, ObjectiveArg, PolicyArg};

/// Cross product of the axes' values; the last axis varies fastest.
pub fn grid(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values().into_iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn apply(config: &ExperimentConfig, axes: &[SweepAxis], values: &[f64]) -> Result<ExperimentConfig> {
    let mut out = config.clone();
    for (axis, &v) in axes.iter().zip(values) {
        out = out.with_value(&axis.path, v)?;
    }
    Ok(out)
}

/// The first axis that names a single dilemma strength.
fn free_axis(axes: &[SweepAxis], n_games: usize) -> Option<FreeParameter> {
    axes.iter().find_map(|a| free_parameter(&a.path, n_games))
}

fn svg_target(common: &CommonArgs) -> Result<Option<&Path>> {
    match (common.svg, common.out.as_deref()) {
        (false, _) => Ok(None),
        (true, Some(p)) => Ok(Some(p)),
        (true, None) => bail!("--svg needs --out to place the plot"),
    }
}

pub fn fixation(common: &CommonArgs, config: &ExperimentConfig, invader: Invader) -> Result<()> {
    let theory = theory_point(config, None)?;
    let mut table = Table::create(
        common.out.as_deref(),
        &["strategy", "n", "runs", "fixations", "unabsorbed", "estimate", "stderr", "theory", "neutral"],
        common.deterministic,
    )?;
    let wanted: &[(Strategy, &str, f64)] = &[(Strategy::A, "C", theory.rho_a), (Strategy::B, "D", theory.rho_b)];
    for &(strategy, name, predicted) in wanted {
        let include = matches!(
            (invader, strategy),
            (Invader::Both, _) | (Invader::C, Strategy::A) | (Invader::D, Strategy::B)
        );
        if !include {
            continue;
        }
        let r = analysis::estimate(config, strategy)?;
        if r.incomplete() {
            eprintln!("warning: {} of {} runs hit max_events without absorbing", r.unabsorbed, r.runs);
        }
        table.row([
            name.to_string(),
            theory.n.to_string(),
            r.runs.to_string(),
            r.fixations.to_string(),
            r.unabsorbed.to_string(),
            num(r.estimate),
            num(r.stderr),
            num(predicted),
            num(theory.neutral()),
        ])?;
    }
    Ok(())
}

pub fn trajectory(common: &CommonArgs, config: &ExperimentConfig, ode: bool, policy: PolicyArg) -> Result<()> {
    let records = mc_trajectories(config, config.trajectory.seeds, false)?;
    let mean = mean_curve(&records);
    let mut table = Table::create(common.out.as_deref(), &["series", "seed", "t", "p_a"], common.deterministic)?;
    for (s, record) in records.iter().enumerate() {
        for (t, p) in record.times.iter().zip(&record.coop_fraction) {
            table.row(["mc".to_string(), s.to_string(), t.to_string(), num(*p)])?;
        }
    }
    for &(t, p, _) in &mean {
        table.row(["mean".to_string(), String::new(), t.to_string(), num(p)])?;
    }
    let n = config.graph()?.n_nodes() as f64;
    let mut series = vec![Series { name: "mc mean".into(), points: mean.iter().map(|&(t, p, _)| (t as f64, p)).collect() }];
    if ode {
        let policy = match policy {
            PolicyArg::Configured => OdePolicy::Configured,
            PolicyArg::MaxGradient => OdePolicy::Optimal(ObjectiveKind::MaxGradient),
            PolicyArg::MinFitnessDiff => OdePolicy::Optimal(ObjectiveKind::MinFitnessDiff),
        };
        let traj = ode_trajectory(config, policy, 10)?;
        for (t, p) in traj.times.iter().zip(&traj.p_a) {
            table.row(["ode".to_string(), String::new(), num(*t), num(*p)])?;
        }
        // One ODE time unit corresponds to N update events.
        let horizon = config.trajectory.horizon_events as f64;
        series.push(Series {
            name: "ode (t x N)".into(),
            points: traj.times.iter().zip(&traj.p_a).map(|(t, p)| (t * n, *p)).filter(|(t, _)| *t <= horizon).collect(),
        });
    }
    if let Some(path) = svg_target(common)? {
        write_svg_beside(path, &line_plot("Cooperator fraction", "update events", "p_A", &series))?;
    }
    Ok(())
}

pub fn theory(common: &CommonArgs, config: &ExperimentConfig, sweep: Option<&[String]>, curve: bool) -> Result<()> {
    let axes = match sweep {
        Some([path, range]) => vec![SweepAxis::parse(path, range)?],
        Some(_) => bail!("--sweep takes PATH and FROM:TO:STEPS"),
        None => config.sweep.clone(),
    };
    // Checked against the config up front so a bad path fails before any output.
    for axis in &axes {
        config.with_value(&axis.path, axis.from)?;
    }
    let free = free_axis(&axes, config.games.len());
    let axis_names: Vec<&str> = axes.iter().map(|a| a.path.as_str()).collect();
    let graph = config.graph()?;
    let mut plot = Vec::new();
    if curve {
        let mut header = axis_names.clone();
        header.extend(["p_a", "gradient", "fitness_diff"]);
        let mut table = Table::create(common.out.as_deref(), &header, common.deterministic)?;
        for values in grid(&axes) {
            let point = apply(config, &axes, &values)?;
            let params = point.pair_params(&graph)?;
            let pi = point.pi()?;
            let mean = MeanDilemmas::from_distribution(&pi, &point.games)?;
            let mut points = Vec::new();
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let g = selection_gradient(p, &params, mean);
                let mut row: Vec<String> = values.iter().map(|v| num(*v)).collect();
                row.extend([num(p), num(g), num(h2(&pi, &point.games, p)?)]);
                table.row(row)?;
                points.push((p, g));
            }
            let name = axes.iter().zip(&values).map(|(a, v)| format!("{}={v:.3}", a.path)).collect::<Vec<_>>().join(" ");
            plot.push(Series { name: if name.is_empty() { "gradient".into() } else { name }, points });
        }
        if let Some(path) = svg_target(common)? {
            write_svg_beside(path, &line_plot("Selection gradient", "p_A", "dp_A/dt", &plot))?;
        }
        return Ok(());
    }
    let mut header = axis_names.clone();
    header.extend(THEORY_COLUMNS);
    let mut table = Table::create(common.out.as_deref(), &header, common.deterministic)?;
    let (mut c, mut d) = (Vec::new(), Vec::new());
    for values in grid(&axes) {
        let point = apply(config, &axes, &values)?;
        let t = theory_point(&point, free)?;
        let mut row: Vec<String> = values.iter().map(|v| num(*v)).collect();
        row.extend(t.fields());
        table.row(row)?;
        let x = values.first().copied().unwrap_or(0.0);
        c.push((x, t.rho_a));
        d.push((x, t.rho_b));
    }
    if let Some(path) = svg_target(common)? {
        let x_label = axis_names.first().copied().unwrap_or("point");
        let series = vec![Series { name: "rho_C".into(), points: c }, Series { name: "rho_D".into(), points: d }];
        write_svg_beside(path, &line_plot("Fixation probabilities (theory)", x_label, "rho", &series))?;
    }
    Ok(())
}

fn describe(policy: &PiecewisePolicy) -> String {
    let segments: Vec<String> = policy
        .segments
        .iter()
        .map(|s| {
            format!(
                "{}{:.6}, {:.6}{} -> pi1 = {}",
                if s.lower_closed { '[' } else { '(' },
                s.lower,
                s.upper,
                if s.upper_closed { ']' } else { ')' },
                s.distribution.probabilities()[0]
            )
        })
        .collect();
    format!("{:?} ({:?}, {:?}): {}", policy.objective, policy.case, policy.slope, segments.join("; "))
}

pub fn optimize(
    common: &CommonArgs,
    config: &ExperimentConfig,
    objective: ObjectiveArg,
    verify: bool,
    resolution: usize,
) -> Result<()> {
    let k = config.graph()?.degree() as u32;
    let objectives: Vec<ObjectiveKind> = match objective {
        ObjectiveArg::MaxGradient => vec![ObjectiveKind::MaxGradient],
        ObjectiveArg::MinFitnessDiff => vec![ObjectiveKind::MinFitnessDiff],
        ObjectiveArg::Both => ObjectiveKind::ALL.to_vec(),
    };
    let games = &config.games;
    if games.len() != 2 {
        // Vertex choice on a p_A grid for any number of games.
        let mut table = Table::create(
            common.out.as_deref(),
            &["objective", "k", "p_a", "best_game", "tie", "cost"],
            common.deterministic,
        )?;
        for obj in objectives {
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let choice = optimal_distribution_n_games(obj, games, p, k)?;
                let cost = objective_cost(obj, &choice.distribution, games, p, k)?;
                table.row([
                    objective_name(obj).to_string(),
                    k.to_string(),
                    num(p),
                    (choice.index + 1).to_string(),
                    choice.tie.to_string(),
                    num(cost),
                ])?;
            }
        }
        return Ok(());
    }
    let pair = analysis::two_games(games)?;
    let mut header = vec![
        "objective", "k", "case", "slope", "degenerate", "breakpoint", "segment", "lower", "upper", "lower_closed",
        "upper_closed", "pi1", "pi2",
    ];
    if verify {
        header.extend(["verify_resolution", "violations", "worst_discrepancy", "switch_points"]);
    }
    let mut table = Table::create(common.out.as_deref(), &header, common.deterministic)?;
    for obj in objectives {
        let policy = optimal_policy_two_games(obj, &pair, k)?;
        eprintln!("{}", describe(&policy));
        let report: Option<GridReport> = if verify { Some(grid_verify(obj, &pair, k, resolution)?) } else { None };
        if let Some(r) = &report {
            eprintln!(
                "  grid check at resolution {}: {} violations over {} points, worst shortfall {:e}",
                r.resolution, r.violations, r.points, r.worst_discrepancy
            );
        }
        let breakpoint = policy.breakpoints.first().copied().unwrap_or(f64::NAN);
        for (i, s) in policy.segments.iter().enumerate() {
            let pi = s.distribution.probabilities();
            let mut row = vec![
                objective_name(obj).to_string(),
                k.to_string(),
                snake(&format!("{:?}", policy.case)),
                snake(&format!("{:?}", policy.slope)),
                policy.degenerate.to_string(),
                num(breakpoint),
                i.to_string(),
                num(s.lower),
                num(s.upper),
                s.lower_closed.to_string(),
                s.upper_closed.to_string(),
                num(pi[0]),
                num(pi[1]),
            ];
            if let Some(r) = &report {
                row.extend([
                    r.resolution.to_string(),
                    r.violations.to_string(),
                    num(r.worst_discrepancy),
                    r.switch_points.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";"),
                ]);
            }
            table.row(row)?;
        }
    }
    Ok(())
}

fn objective_name(obj: ObjectiveKind) -> &'static str {
    match obj {
        ObjectiveKind::MaxGradient => "max_gradient",
        ObjectiveKind::MinFitnessDiff => "min_fitness_diff",
    }
}

fn snake(camel: &str) -> String {
    let mut out = String::new();
    for (i, ch) in camel.chars().enumerate() {
        if ch.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(ch.to_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

/// Payoff model used by the exact solver: the fixed game when the
/// configuration pins one, otherwise the π-averaged matrix.
pub fn oracle_model(config: &ExperimentConfig) -> Result<GameModel> {
    let pi = config.pi()?;
    if let GameMode::Fixed(i) = config.sim.game_mode {
        return Ok(GameModel::Fixed(config.games[i]));
    }
    if let Some(i) = pi.probabilities().iter().position(|&p| p == 1.0) {
        return Ok(GameModel::Fixed(config.games[i]));
    }
    Ok(GameModel::Expected { dist: pi, games: config.games.clone() })
}

pub fn oracle(common: &CommonArgs, config: &ExperimentConfig, absorption: Option<&Path>) -> Result<()> {
    let graph = config.graph()?;
    let model = oracle_model(config)?;
    let result = exact_fixation(&graph, &model, config.sim.omega)?;
    let mut table = Table::create(
        common.out.as_deref(),
        &["n", "k", "omega", "model", "rho_c", "rho_d", "neutral", "solver_residual", "method"],
        common.deterministic,
    )?;
    let n = graph.n_nodes();
    table.row([
        n.to_string(),
        graph.degree().to_string(),
        num(config.sim.omega),
        match model {
            GameModel::Fixed(_) => "fixed",
            GameModel::Expected { .. } => "expected",
        }
        .to_string(),
        num(result.rho_a),
        num(result.rho_b),
        num(1.0 / n as f64),
        num(result.solver_residual),
        snake(&format!("{:?}", result.method)),
    ])?;
    if let Some(path) = absorption {
        let mut t = Table::create(Some(path), &["state", "coop_count", "absorption"], common.deterministic)?;
        for (s, h) in result.absorption.iter().enumerate() {
            t.row([s.to_string(), (s as u32).count_ones().to_string(), num(*h)])?;
        }
    }
    Ok(())
}

pub fn sweep(common: &CommonArgs, config: &ExperimentConfig) -> Result<()> {
    let axes = &config.sweep;
    if axes.is_empty() {
        bail!("config error at `sweep`: the sweep subcommand needs at least one axis");
    }
    let free = free_axis(axes, config.games.len());
    let mut header: Vec<&str> = axes.iter().map(|a| a.path.as_str()).collect();
    let columns = fixation_columns();
    header.extend(columns.iter().copied());
    let mut table = Table::create(common.out.as_deref(), &header, common.deterministic)?;
    let points = grid(axes);
    for (i, values) in points.iter().enumerate() {
        if interrupted() {
            bail!("interrupted after {i} of {} points; finished rows are flushed", points.len());
        }
        let point = apply(config, axes, values)?;
        let result = fixation_point(&point, free)?;
        let mut row: Vec<String> = values.iter().map(|v| num(*v)).collect();
        row.extend(result.fields());
        table.row(row)?;
        eprintln!("point {}/{} done", i + 1, points.len());
    }
    Ok(())
}

pub fn reproduce(common: &CommonArgs, figure: FigureId) -> Result<()> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(figure.name()));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let seed = common.seed.unwrap_or(0);
    if let Some(series) = recipes::fixation_recipe(figure, common.runs.unwrap_or(recipes::DEFAULT_RUNS), seed) {
        reproduce_fixation(common, figure, &dir, &series)
    } else {
        let family = recipes::case_family(figure).expect("every figure has a recipe");
        reproduce_trajectories(common, &dir, &family, common.runs.unwrap_or(20), seed)
    }
}

fn reproduce_fixation(
    common: &CommonArgs,
    figure: FigureId,
    dir: &Path,
    series: &[recipes::FixationSeries],
) -> Result<()> {
    let path = dir.join(format!("{}.csv", figure.name()));
    let mut header = vec!["series", "x_param", "x"];
    let columns = fixation_columns();
    header.extend(columns.iter().copied());
    let mut table = Table::create(Some(&path), &header, common.deterministic)?;
    let mut plot = Vec::new();
    for s in series {
        let free = free_parameter(&s.axis.path, s.config.games.len());
        let mut points = Vec::new();
        for x in s.axis.values() {
            if interrupted() {
                bail!("interrupted; finished rows are in {}", path.display());
            }
            let config = s.config.with_value(&s.axis.path, x)?;
            let r = fixation_point(&config, free)?;
            let mut row = vec![s.label.clone(), s.axis.path.clone(), num(x)];
            row.extend(r.fields());
            table.row(row)?;
            eprintln!("{} {} {}={x:.3}: rho_C = {:.5}", figure.name(), s.label, s.axis.path, r.rho_c.estimate);
            points.push((x, r.rho_c.estimate));
        }
        plot.push(Series { name: s.label.clone(), points });
    }
    if common.svg {
        write_svg_beside(&path, &line_plot(figure.name(), "swept parameter", "rho_C", &plot))?;
    }
    Ok(())
}

fn policy_label(pi1: f64) -> String {
    format!("pi1={pi1}")
}

fn reproduce_trajectories(
    common: &CommonArgs,
    dir: &Path,
    family: &recipes::CaseFamily,
    seeds: u64,
    seed: u64,
) -> Result<()> {
    let name = family.figure.name();
    let det = common.deterministic;
    let file = |part: &str| dir.join(format!("{name}_{part}.csv"));
    let mut objective = Table::create(Some(&file("objective")), &["instance", "policy", "p_a", "value"], det)?;
    let mut ode = Table::create(Some(&file("ode")), &["instance", "policy", "t", "p_a"], det)?;
    let mut mc = Table::create(Some(&file("mc")), &["instance", "policy", "t", "mean_p_a", "stderr"], det)?;
    let mut summary = Table::create(
        Some(&file("summary")),
        &["instance", "case", "breakpoint", "policy", "ode_reach_0999", "ode_final", "mc_final_mean", "mc_final_stderr"],
        det,
    )?;
    let horizon = 100_000;
    for inst in &family.instances {
        let policy = optimal_policy_two_games(family.objective, &inst.games, family.k)?;
        let breakpoint = policy.breakpoints.first().copied().unwrap_or(f64::NAN);
        let base = recipes::trajectory_config(&inst.games, 0.5, seeds, horizon, seed)?;
        let params = base.pair_params(&base.graph()?)?;
        let mut curves = Vec::new();
        let mut policies: Vec<(String, Option<f64>)> = GRID_PI.iter().map(|&p| (policy_label(p), Some(p))).collect();
        policies.push(("optimal".to_string(), None));
        for (label, pi1) in &policies {
            let dist_at = |p: f64| -> GameDistribution {
                match pi1 {
                    Some(c) => GameDistribution::two(*c).expect("grid value"),
                    None => GameDistribution::two(policy.pi1_at(p)).expect("policy value"),
                }
            };
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let dist = dist_at(p);
                let value = match family.objective {
                    ObjectiveKind::MaxGradient => {
                        selection_gradient(p, &params, MeanDilemmas::from_distribution(&dist, &inst.games)?)
                    }
                    ObjectiveKind::MinFitnessDiff => h2(&dist, &inst.games, p)?,
                };
                objective.row([inst.label.to_string(), label.clone(), num(p), num(value)])?;
            }
            let traj = match pi1 {
                Some(c) => ode_trajectory(&base, OdePolicy::Constant(*c), 10)?,
                None => ode_trajectory(&base, OdePolicy::Optimal(family.objective), 10)?,
            };
            for (t, p) in traj.times.iter().zip(&traj.p_a) {
                ode.row([inst.label.to_string(), label.clone(), num(*t), num(*p)])?;
            }
            let reach = ode_reach_time(&base, *pi1, family.objective)?;
            let (mc_mean, mc_se) = match pi1 {
                Some(c) => {
                    let config = recipes::trajectory_config(&inst.games, *c, seeds, horizon, seed)?;
                    let curve = mean_curve(&mc_trajectories(&config, seeds, false)?);
                    for &(t, m, se) in &curve {
                        mc.row([inst.label.to_string(), label.clone(), t.to_string(), num(m), num(se)])?;
                    }
                    let &(_, m, se) = curve.last().expect("non-empty curve");
                    (m, se)
                }
                None => (f64::NAN, f64::NAN),
            };
            summary.row([
                inst.label.to_string(),
                snake(&format!("{:?}", inst.case)),
                num(breakpoint),
                label.clone(),
                num(reach.unwrap_or(f64::INFINITY)),
                num(traj.final_value()),
                num(mc_mean),
                num(mc_se),
            ])?;
            eprintln!("{name} {} {label}: ODE reaches 0.999 at {reach:?}, MC final {mc_mean:.4}", inst.label);
            curves.push(Series { name: label.clone(), points: traj.times.iter().copied().zip(traj.p_a.iter().copied()).collect() });
        }
        if common.svg {
            let path = dir.join(format!("{name}_{}_ode.csv", inst.label));
            write_svg_beside(&path, &line_plot(&format!("{name} ({})", inst.label), "t", "p_A", &curves))?;
        }
    }
    Ok(())
}

/// First ODE time at which `p_A >= 0.999`, at full step resolution.
pub fn ode_reach_time(config: &ExperimentConfig, pi1: Option<f64>, objective: ObjectiveKind) -> Result<Option<f64>> {
    let policy = match pi1 {
        Some(c) => OdePolicy::Constant(c),
        None => OdePolicy::Optimal(objective),
    };
    Ok(ode_trajectory(config, policy, 1)?.first_reach(0.999))
}
