//! Event loop shared by absorption runs and trajectories.
//!
//! Two shortcuts keep the loop cheap without changing the law of the
//! process:
//!
//! * Edge games are resolved lazily. In renewal mode every edge stores the
//!   absolute time of its next switch and is rolled forward only when an
//!   event reads it; the switching sequence of an edge does not depend on
//!   strategies, so reading it late yields the same path. In i.i.d. mode an
//!   edge's game is drawn on first read within an event and cached for the
//!   rest of that event.
//! * With `skip_inert_events`, events that pick a node whose neighbours all
//!   share its strategy (and so cannot change anything) are skipped in bulk:
//!   the number of such events before the next "active" pick is geometric
//!   with success probability `|active| / N`.

use rand::{Rng, RngExt};

use crate::engine::{fitness, GameEnvironment, GameMode, SimConfig};
use crate::error::{Error, Result};
use crate::games::Strategy;
use crate::network::RegularGraph;

const NOT_ACTIVE: u32 = u32::MAX;

/// Outcome of [`Simulator::event`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EventOutcome {
    /// An event was executed (possibly after skipping inert ones).
    Stepped,
    /// The event budget ran out while skipping inert events.
    BudgetExhausted,
    /// Mixed population with no node able to change; cannot absorb.
    Frozen,
}

pub(crate) struct Simulator<'a> {
    graph: &'a RegularGraph,
    env: &'a GameEnvironment,
    config: &'a SimConfig,
    strategies: Vec<Strategy>,
    count_a: usize,
    discordant: Vec<u32>,
    active: Vec<u32>,
    active_pos: Vec<u32>,
    edge_game: Vec<u32>,
    edge_expiry: Vec<f64>,
    edge_stamp: Vec<u64>,
    events: u64,
    weights: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub(crate) fn new(graph: &'a RegularGraph, env: &'a GameEnvironment, config: &'a SimConfig) -> Self {
        let n = graph.n_nodes();
        let e = graph.n_edges();
        Simulator {
            graph,
            env,
            config,
            strategies: vec![Strategy::B; n],
            count_a: 0,
            discordant: vec![0; n],
            active: Vec::with_capacity(n),
            active_pos: vec![NOT_ACTIVE; n],
            edge_game: vec![0; e],
            edge_expiry: vec![f64::INFINITY; e],
            edge_stamp: vec![u64::MAX; e],
            events: 0,
            weights: vec![0.0; graph.degree()],
        }
    }

    /// Loads a population and draws fresh edge states.
    pub(crate) fn reset<R: Rng + ?Sized>(&mut self, initial: &[Strategy], rng: &mut R) {
        debug_assert_eq!(initial.len(), self.graph.n_nodes());
        self.strategies.copy_from_slice(initial);
        self.count_a = initial.iter().filter(|s| s.is_a()).count();
        self.events = 0;
        self.active.clear();
        self.active_pos.fill(NOT_ACTIVE);
        for node in 0..self.strategies.len() {
            let s = self.strategies[node];
            self.discordant[node] = self
                .graph
                .neighbors(node)
                .iter()
                .filter(|&&y| self.strategies[y as usize] != s)
                .count() as u32;
            self.sync_active(node);
        }
        match self.config.game_mode {
            GameMode::Fixed(index) => self.edge_game.fill(index as u32),
            GameMode::IidStationary => self.edge_stamp.fill(u64::MAX),
            GameMode::Renewal => {
                let process = self.env.process().expect("renewal mode checked by caller");
                for edge in 0..self.edge_game.len() {
                    let g = self.env.pi().sample_index(rng);
                    self.edge_game[edge] = g as u32;
                    self.edge_expiry[edge] = if process.len() == 1 {
                        f64::INFINITY
                    } else {
                        process.durations()[g].sample(rng)
                    };
                }
            }
        }
    }

    pub(crate) fn events(&self) -> u64 {
        self.events
    }

    pub(crate) fn count_a(&self) -> usize {
        self.count_a
    }

    pub(crate) fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub(crate) fn absorbed(&self) -> Option<Strategy> {
        if self.count_a == self.strategies.len() {
            Some(Strategy::A)
        } else if self.count_a == 0 {
            Some(Strategy::B)
        } else {
            None
        }
    }

    fn sync_active(&mut self, node: usize) {
        let is_active = self.discordant[node] > 0;
        let pos = self.active_pos[node];
        if is_active && pos == NOT_ACTIVE {
            self.active_pos[node] = self.active.len() as u32;
            self.active.push(node as u32);
        } else if !is_active && pos != NOT_ACTIVE {
            let last = *self.active.last().expect("non-empty active set");
            self.active.swap_remove(pos as usize);
            if last as usize != node {
                self.active_pos[last as usize] = pos;
            }
            self.active_pos[node] = NOT_ACTIVE;
        }
    }

    /// Executes the next event, or the next non-inert event when skipping is
    /// enabled. Never runs past `budget` total events.
    pub(crate) fn event<R: Rng + ?Sized>(&mut self, budget: u64, rng: &mut R) -> Result<EventOutcome> {
        if self.events >= budget {
            return Ok(EventOutcome::BudgetExhausted);
        }
        let n = self.strategies.len();
        let node = if self.config.skip_inert_events {
            let a = self.active.len();
            if a == 0 {
                return Ok(EventOutcome::Frozen);
            }
            if a < n {
                let skipped = geometric_failures(a as f64 / n as f64, rng);
                if skipped >= budget - self.events {
                    self.events = budget;
                    return Ok(EventOutcome::BudgetExhausted);
                }
                self.events += skipped;
            }
            self.active[rng.random_range(0..a)] as usize
        } else {
            rng.random_range(0..n)
        };
        self.replace(node, rng)?;
        self.events += 1;
        Ok(EventOutcome::Stepped)
    }

    #[inline]
    fn resolve_game<R: Rng + ?Sized>(&mut self, edge: usize, rng: &mut R) -> usize {
        match self.config.game_mode {
            GameMode::Fixed(index) => index,
            GameMode::IidStationary => {
                if self.edge_stamp[edge] != self.events {
                    self.edge_stamp[edge] = self.events;
                    self.edge_game[edge] = self.env.pi().sample_index(rng) as u32;
                }
                self.edge_game[edge] as usize
            }
            GameMode::Renewal => {
                let now = self.events as f64 * self.config.dt_per_event;
                if self.edge_expiry[edge] <= now {
                    let process = self.env.process().expect("renewal mode checked by caller");
                    let mut g = self.edge_game[edge] as usize;
                    let mut expiry = self.edge_expiry[edge];
                    while expiry <= now {
                        g = process.successor(g);
                        expiry += process.durations()[g].sample(rng);
                    }
                    self.edge_game[edge] = g as u32;
                    self.edge_expiry[edge] = expiry;
                }
                self.edge_game[edge] as usize
            }
        }
    }

    fn node_payoff<R: Rng + ?Sized>(&mut self, node: usize, rng: &mut R) -> f64 {
        let graph = self.graph;
        let own = self.strategies[node];
        let mut total = 0.0;
        for (&y, &edge) in graph.neighbors(node).iter().zip(graph.incident_edges(node)) {
            let g = self.resolve_game(edge as usize, rng);
            total += self.env.games()[g].payoff(own, self.strategies[y as usize]);
        }
        total
    }

    fn replace<R: Rng + ?Sized>(&mut self, node: usize, rng: &mut R) -> Result<()> {
        let graph = self.graph;
        let neighbors = graph.neighbors(node);
        let omega = self.config.omega;
        let chosen = if omega == 0.0 {
            neighbors[rng.random_range(0..neighbors.len())] as usize
        } else {
            let mut total = 0.0;
            for slot in 0..neighbors.len() {
                let y = neighbors[slot] as usize;
                let f = fitness(omega, self.node_payoff(y, rng));
                if f < 0.0 {
                    return Err(Error::InvalidFitness {
                        node,
                        detail: format!("neighbour {y} has fitness {f}"),
                    });
                }
                self.weights[slot] = f;
                total += f;
            }
            if total <= 0.0 {
                return Err(Error::InvalidFitness { node, detail: format!("fitness sum {total}") });
            }
            neighbors[pick_weighted(&self.weights, total, rng)] as usize
        };
        let new = self.strategies[chosen];
        if new != self.strategies[node] {
            self.flip(node, new);
        }
        Ok(())
    }

    fn flip(&mut self, node: usize, new: Strategy) {
        self.strategies[node] = new;
        if new.is_a() {
            self.count_a += 1;
        } else {
            self.count_a -= 1;
        }
        let graph = self.graph;
        for &y in graph.neighbors(node) {
            let y = y as usize;
            if self.strategies[y] == new {
                self.discordant[y] -= 1;
            } else {
                self.discordant[y] += 1;
            }
            self.sync_active(y);
        }
        self.discordant[node] = graph.degree() as u32 - self.discordant[node];
        self.sync_active(node);
    }
}

/// Index chosen with probability `weights[i] / total`. A draw exactly on a
/// cumulative boundary goes to the lower index.
#[inline]
pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Failures before the first success of a Bernoulli(`p`) sequence.
#[inline]
fn geometric_failures<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}
