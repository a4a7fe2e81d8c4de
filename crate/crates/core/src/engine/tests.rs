use super::*;
use crate::games::DurationDistribution;
use crate::seed::SimRng;
use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::strategy::Strategy as Gen;
use crate::games::Strategy;
use rand::SeedableRng;

use Strategy::{A, B};

fn game(dg: f64, dr: f64) -> DilemmaGame {
    DilemmaGame::new(dg, dr).unwrap()
}

fn fixed_config(omega: f64, seed: u64) -> SimConfig {
    SimConfig { omega, game_mode: GameMode::Fixed(0), seed, ..SimConfig::default() }
}

#[test]
fn payoff_accumulation() {
    let g = RegularGraph::von_neumann(3).unwrap();
    let edges = EdgeGameState::uniform(g.n_edges(), 0);
    let games = [game(0.2, 0.5)];
    assert_eq!(total_payoff(&g, &[A; 9], &edges, &games, 4), 4.0);
    assert_eq!(total_payoff(&g, &[B; 9], &edges, &games, 4), 0.0);
    // node 0 has neighbours [6, 3, 2, 1]; make two of them A
    let mut s = [B; 9];
    s[0] = A;
    s[6] = A;
    s[3] = A;
    assert_relative_eq!(total_payoff(&g, &s, &edges, &games, 0), 1.0, epsilon = 1e-15);
}

#[test]
fn fitness_map() {
    assert_eq!(fitness(0.0, 123.0), 1.0);
    assert_eq!(fitness(1.0, 3.2), 3.2);
    assert_relative_eq!(fitness(0.01, 4.0), 1.03, epsilon = 1e-15);
}

#[test]
fn unanimous_and_neutral_replacement() {
    let g = RegularGraph::von_neumann(3).unwrap();
    let edges = EdgeGameState::uniform(g.n_edges(), 0);
    let games = [game(0.3, 0.3)];
    let mut s = [A; 9];
    s[0] = B;
    let p = replacement_probabilities(&g, &s, &edges, &games, 0.2, 0).unwrap();
    assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);

    // three A neighbours and one B neighbour under neutrality
    let mut s = [A; 9];
    s[g.neighbors(0)[1] as usize] = B;
    let p = replacement_probabilities(&g, &s, &edges, &games, 0.0, 0).unwrap();
    let p_a: f64 = g.neighbors(0).iter().zip(&p).filter(|(y, _)| s[**y as usize] == A).map(|(_, p)| p).sum();
    assert_relative_eq!(p_a, 0.75, epsilon = 1e-15);
}

#[test]
fn k4_replacement_by_hand() {
    // One A at node 0 among B on K4, dg = dr = 0.2, omega = 0.1.
    // A: F = 3 S = -0.6, f = 0.84.  B next to A: F = T = 1.2, f = 1.02.
    let g = RegularGraph::complete(4).unwrap();
    let edges = EdgeGameState::uniform(g.n_edges(), 0);
    let games = [game(0.2, 0.2)];
    let s = [A, B, B, B];
    let p = replacement_probabilities(&g, &s, &edges, &games, 0.1, 1).unwrap();
    for (&y, &py) in g.neighbors(1).iter().zip(&p) {
        let expect = if y == 0 { 0.84 / 2.88 } else { 1.02 / 2.88 };
        assert_relative_eq!(py, expect, epsilon = 1e-14);
    }
    let p = replacement_probabilities(&g, &s, &edges, &games, 0.1, 0).unwrap();
    assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
}

#[test]
fn negative_fitness_is_rejected() {
    let g = RegularGraph::complete(4).unwrap();
    let edges = EdgeGameState::uniform(g.n_edges(), 0);
    let games = [game(1.0, 1.0)];
    // A surrounded by B at omega = 1: F = -3, f = -3
    let err = replacement_probabilities(&g, &[A, B, B, B], &edges, &games, 1.0, 1).unwrap_err();
    assert!(matches!(err, Error::InvalidFitness { .. }));
}

#[test]
fn deterministic_clock_trace() {
    let d = DurationDistribution::Deterministic { duration: 10.0 };
    let process = GameProcess::new(vec![game(0.1, 0.1), game(0.2, 0.2)], vec![d.clone(), d]).unwrap();
    let mut rng = SimRng::seed_from_u64(0);
    let mut edges = EdgeGameState::fresh(3, &process, 0, &mut rng);
    advance_game_clocks(&mut edges, &process, 25.0, &mut rng);
    assert_eq!(edges.current(), &[0, 0, 0]);
    for r in edges.remaining() {
        assert_relative_eq!(*r, 5.0, epsilon = 1e-12);
    }
    let before = edges.clone();
    advance_game_clocks(&mut edges, &process, 0.0, &mut rng);
    assert_eq!(edges, before);
}

#[test]
fn single_game_clock_is_inert() {
    let process = GameProcess::single(game(0.1, 0.1));
    let mut rng = SimRng::seed_from_u64(0);
    let mut edges = EdgeGameState::stationary(5, &process, &mut rng).unwrap();
    for _ in 0..10 {
        advance_game_clocks(&mut edges, &process, 7.5, &mut rng);
    }
    assert!(edges.current().iter().all(|&g| g == 0));
}

#[test]
fn config_validation() {
    assert!(SimConfig::default().validate().is_ok());
    assert!(SimConfig { omega: 1.5, ..SimConfig::default() }.validate().is_err());
    assert!(SimConfig { dt_per_event: 0.0, ..SimConfig::default() }.validate().is_err());
    let env = GameEnvironment::from_distribution(vec![game(0.1, 0.1)], GameDistribution::point_mass(1, 0)).unwrap();
    assert!(env.check_mode(GameMode::Renewal).is_err());
    assert!(env.check_mode(GameMode::Fixed(1)).is_err());
    assert!(env.check_mode(GameMode::IidStationary).is_ok());
}

#[test]
fn config_serde_defaults() {
    let c: SimConfig = serde_json::from_str(r#"{"omega": 0.02, "game_mode": {"fixed": 1}}"#).unwrap();
    assert_eq!(c.game_mode, GameMode::Fixed(1));
    assert_eq!(c.max_events, SimConfig::default().max_events);
    let c: SimConfig = serde_json::from_str(r#"{"game_mode": "iid_stationary"}"#).unwrap();
    assert_eq!(c.game_mode, GameMode::IidStationary);
    assert!(serde_json::from_str::<SimConfig>(r#"{"omgea": 0.1}"#).is_err());
}

#[test]
fn already_absorbed_run() {
    let g = RegularGraph::von_neumann(3).unwrap();
    let env = GameEnvironment::single(game(0.2, 0.2));
    let mut rng = SimRng::seed_from_u64(1);
    let out = run_to_absorption(&g, &env, &fixed_config(0.1, 0), &PopulationState::monomorphic(9, A), &mut rng).unwrap();
    assert_eq!(out, Absorption { absorbed_as: Some(A), events: 0 });
}

#[test]
fn event_budget_reports_unabsorbed() {
    let g = RegularGraph::von_neumann(10).unwrap();
    let env = GameEnvironment::single(game(0.2, 0.2));
    let config = SimConfig { max_events: 50, ..fixed_config(0.0, 3) };
    let mut rng = SimRng::seed_from_u64(1);
    let half = PopulationState::random(100, 50, &mut rng);
    let out = run_to_absorption(&g, &env, &config, &half, &mut rng).unwrap();
    assert_eq!(out.absorbed_as, None);
    assert_eq!(out.events, 50);
    // One event cannot fix a single invader; it is lost only if it dies
    // (probability 1/100), so almost every run is cut off.
    let one = SimConfig { max_events: 1, ..config };
    let res = estimate_fixation(&g, &env, &one, A, 200).unwrap();
    assert_eq!(res.fixations, 0);
    assert!(res.unabsorbed >= 190 && res.incomplete(), "{res:?}");
    assert!(res.estimate.is_nan() || res.estimate == 0.0);
}

#[test]
fn neutral_drift_small_lattice() {
    let g = RegularGraph::von_neumann(3).unwrap();
    let env = GameEnvironment::single(game(0.7, -0.3));
    let res = estimate_fixation(&g, &env, &fixed_config(0.0, 11), A, 40_000).unwrap();
    assert!((res.estimate - 1.0 / 9.0).abs() < 3.0 * res.stderr, "{res:?}");
}

#[test]
fn fixation_result_invariants() {
    let r = FixationResult::from_counts(100, 7, 0);
    assert_eq!(r.estimate, 0.07);
    assert_relative_eq!(r.stderr, (0.07f64 * 0.93 / 100.0).sqrt());
    assert!(!r.incomplete());
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let g = RegularGraph::von_neumann(4).unwrap();
    let process = GameProcess::new(
        vec![game(0.3, 0.1), game(-0.2, 0.4)],
        vec![
            DurationDistribution::Exponential { rate: 0.5 },
            DurationDistribution::Uniform { lower: 1.0, upper: 3.0 },
        ],
    )
    .unwrap();
    let env = GameEnvironment::from_process(process).unwrap();
    for mode in [GameMode::Renewal, GameMode::IidStationary, GameMode::Fixed(1)] {
        let config = SimConfig { omega: 0.1, game_mode: mode, seed: 99, ..SimConfig::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_fixation(&g, &env, &config, A, 3000).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}

/// Fixation estimate from a loop over the public single-event operations,
/// without inert-event skipping or lazy clocks.
fn plain_fixation(g: &RegularGraph, env: &GameEnvironment, config: &SimConfig, runs: u64) -> FixationResult {
    let n = g.n_nodes();
    let mut fixations = 0;
    for run in 0..runs {
        let mut rng = SimRng::seed_from_u64(run ^ 0xABCD);
        let mut state = PopulationState::monomorphic(n, B);
        state.set(rng.random_range(0..n), A);
        let mut edges = match config.game_mode {
            GameMode::Fixed(i) => EdgeGameState::uniform(g.n_edges(), i),
            GameMode::IidStationary => EdgeGameState::uniform(g.n_edges(), 0),
            GameMode::Renewal => EdgeGameState::stationary(g.n_edges(), env.process().unwrap(), &mut rng).unwrap(),
        };
        while state.absorbed().is_none() {
            if config.game_mode == GameMode::IidStationary {
                edges.resample_iid(env.pi(), &mut rng);
            }
            death_birth_step(g, &mut state, &edges, env.games(), config.omega, &mut rng).unwrap();
            if config.game_mode == GameMode::Renewal {
                advance_game_clocks(&mut edges, env.process().unwrap(), config.dt_per_event, &mut rng);
            }
        }
        fixations += (state.absorbed() == Some(A)) as u64;
    }
    FixationResult::from_counts(runs, fixations, 0)
}

#[test]
fn fast_loop_matches_plain_process() {
    let g = RegularGraph::von_neumann(3).unwrap();
    let process = GameProcess::new(
        vec![game(-0.8, -0.6), game(0.9, 0.2)],
        vec![
            DurationDistribution::Deterministic { duration: 3.0 },
            DurationDistribution::Exponential { rate: 0.25 },
        ],
    )
    .unwrap();
    let env = GameEnvironment::from_process(process).unwrap();
    let runs = 20_000;
    for mode in [GameMode::Renewal, GameMode::IidStationary, GameMode::Fixed(0)] {
        let config = SimConfig { omega: 0.2, game_mode: mode, seed: 5, ..SimConfig::default() };
        let plain = plain_fixation(&g, &env, &config, runs);
        for skip in [true, false] {
            let fast = estimate_fixation(&g, &env, &SimConfig { skip_inert_events: skip, ..config.clone() }, A, runs)
                .unwrap();
            let tol = 4.0 * (fast.stderr.powi(2) + plain.stderr.powi(2)).sqrt();
            assert!((fast.estimate - plain.estimate).abs() < tol, "{mode:?} skip={skip}: {fast:?} vs {plain:?}");
        }
    }
}

#[test]
fn flat_trajectories_from_absorbing_starts() {
    let g = RegularGraph::von_neumann(5).unwrap();
    let env = GameEnvironment::single(game(0.2, 0.2));
    let config = fixed_config(0.01, 0);
    let mut rng = SimRng::seed_from_u64(2);
    for x0 in [0.0, 1.0] {
        let plan = TrajectoryPlan { initial_coop_fraction: x0, horizon_events: 1000, sample_every: 100, record_pairs: true };
        let tr = simulate_trajectory(&g, &env, &config, &plan, &mut rng).unwrap();
        assert_eq!(tr.times, (0..=10).map(|i| i * 100).collect::<Vec<_>>());
        assert!(tr.coop_fraction.iter().all(|&x| x == x0));
        assert_eq!(tr.absorbed_at, Some(0));
        assert_eq!(tr.pairs.as_ref().unwrap().len(), 11);
    }
}

#[test]
fn trajectory_sampling_is_consistent_with_skipping() {
    // Same seeds, skipping on and off: the sampled paths differ, but their
    // means at the horizon must agree.
    let g = RegularGraph::von_neumann(6).unwrap();
    let env = GameEnvironment::single(game(-0.5, -0.5));
    let plan = TrajectoryPlan { initial_coop_fraction: 0.5, horizon_events: 400, sample_every: 40, record_pairs: false };
    let mean_at = |skip: bool| {
        let config = SimConfig { skip_inert_events: skip, ..fixed_config(0.2, 0) };
        let reps = 3000;
        let mut acc = vec![0.0; 11];
        for r in 0..reps {
            let mut rng = SimRng::seed_from_u64(r + if skip { 0 } else { 1 << 32 });
            let tr = simulate_trajectory(&g, &env, &config, &plan, &mut rng).unwrap();
            assert_eq!(tr.times.len(), 11);
            for (a, x) in acc.iter_mut().zip(&tr.coop_fraction) {
                *a += x / reps as f64;
            }
        }
        acc
    };
    let (a, b) = (mean_at(true), mean_at(false));
    assert_relative_eq!(a[0], 0.5, epsilon = 1e-12);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 0.02, "{a:?} vs {b:?}");
    }
    // A stag-hunt-like mutualism with omega = 0.2 pushes cooperation up.
    assert!(a[10] > 0.55);
}

#[test]
fn pair_stats_examples() {
    let g = RegularGraph::von_neumann(4).unwrap();
    let all_a = measure_pair_stats(&g, &[A; 16]);
    assert_eq!(all_a.p_a, 1.0);
    assert_eq!(all_a.q_a_given_a, Some(1.0));
    assert_eq!(all_a.q_a_given_b, None);

    let checker: Vec<_> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { A } else { B }).collect();
    let st = measure_pair_stats(&g, &checker);
    assert_eq!(st.p_a, 0.5);
    assert_eq!(st.q_a_given_a, Some(0.0));
    assert_eq!(st.q_a_given_b, Some(1.0));

    let big = RegularGraph::von_neumann(30).unwrap();
    let mut rng = SimRng::seed_from_u64(4);
    let half = PopulationState::random(900, 450, &mut rng);
    let st = measure_pair_stats(&big, half.strategies());
    assert!((st.q_a_given_a.unwrap() - 0.5).abs() < 0.05);
}

#[test]
fn renewal_occupancy_deterministic() {
    let process = GameProcess::new(
        vec![game(0.1, 0.1), game(0.2, 0.2)],
        vec![DurationDistribution::Deterministic { duration: 10.0 }, DurationDistribution::Deterministic { duration: 30.0 }],
    )
    .unwrap();
    let mut rng = SimRng::seed_from_u64(8);
    let occ = renewal_occupancy(&process, 50, 10_000.0, &mut rng).unwrap();
    for e in &occ {
        assert_relative_eq!(e.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!((e[0] - 0.25).abs() < 0.01);
    }
}

fn arb_state(n: usize) -> impl Gen<Value = Vec<Strategy>> {
    proptest::collection::vec(prop_oneof![Just(A), Just(B)], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_slot_changes_per_event(s in arb_state(16), seed in any::<u64>(), omega in 0.0..0.2f64) {
        let g = RegularGraph::von_neumann(4).unwrap();
        let edges = EdgeGameState::uniform(g.n_edges(), 0);
        let games = [game(0.5, 0.5)];
        let mut rng = SimRng::seed_from_u64(seed);
        let mut state = PopulationState::from_strategies(s.clone());
        let rep = death_birth_step(&g, &mut state, &edges, &games, omega, &mut rng).unwrap();
        let diff = s.iter().zip(state.strategies()).filter(|(a, b)| a != b).count();
        prop_assert!(diff <= 1);
        prop_assert_eq!(diff == 1, rep.changed);
        prop_assert!(g.are_adjacent(rep.dead, rep.parent));
    }

    #[test]
    fn absorbing_states_are_fixed(all_a in any::<bool>(), seed in any::<u64>()) {
        let g = RegularGraph::moore(4).unwrap();
        let edges = EdgeGameState::uniform(g.n_edges(), 0);
        let games = [game(0.3, -0.2)];
        let mut rng = SimRng::seed_from_u64(seed);
        let s = if all_a { A } else { B };
        let mut state = PopulationState::monomorphic(16, s);
        for _ in 0..20 {
            death_birth_step(&g, &mut state, &edges, &games, 0.1, &mut rng).unwrap();
        }
        prop_assert_eq!(state.absorbed(), Some(s));
    }

    #[test]
    fn pair_identities(s in arb_state(25)) {
        let g = RegularGraph::von_neumann(5).unwrap();
        let st = measure_pair_stats(&g, &s);
        prop_assert!((st.p_aa + 2.0 * st.p_ab + st.p_bb - 1.0).abs() < 1e-12);
        prop_assert!((st.p_aa + st.p_ab - st.p_a).abs() < 1e-12);
        if let (Some(a), Some(b)) = (st.q_a_given_a, st.q_b_given_a) {
            prop_assert_eq!(a + b, 1.0);
        }
        if let (Some(a), Some(b)) = (st.q_a_given_b, st.q_b_given_b) {
            prop_assert_eq!(a + b, 1.0);
        }
    }
}
