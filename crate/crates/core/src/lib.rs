//! Simulation, analysis and optimization of death–birth evolutionary dynamics
//! on k-regular networks where the game on every edge switches over time.
//!
//! The crate is organised bottom-up:
//!
//! * [`games`]: normalized dilemma-strength games, duration laws and the
//!   stationary game distribution of the switching process.
//! * [`network`]: k-regular population structures.
//! * [`engine`]: Monte Carlo death–birth dynamics and fixation estimates.
//! * [`theory`]: pair-approximation closed forms and ODE trajectories.
//! * [`optimizer`]: optimal game distributions.
//! * [`oracle`]: exact fixation probabilities for small populations.

pub mod engine;
pub mod error;
pub mod games;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
pub use games::{
    expected_dilemmas, DilemmaGame, DurationDistribution, GameDistribution, GameProcess, Strategy,
};
pub use network::RegularGraph;
pub use seed::{derive_run_seed, SimRng};
