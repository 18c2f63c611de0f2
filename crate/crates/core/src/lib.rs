//! Repeated Nash demand game laboratory.
//!
//! Optimising players plan over a finite horizon against a model of their
//! opponent's next demand. The model is either fixed (uniform or
//! heuristic-shaped) or learned online from Dirichlet pseudo-counts. Their
//! reward trades raw profit against the unclaimed part of the pot, which
//! drives them to coordinate without communicating.
//!
//! - [`game`]: demands, states, profit and reward
//! - [`opponent`]: heuristic, uniform and learned opponent models
//! - [`planner`]: backward induction and the receding-horizon agent
//! - [`engine`]: the round loop, pretraining and game logs
//! - [`experiments`]: the five standard tests and grid sweeps
//! - [`cli`]: the `ndg` binary

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod game;
pub mod opponent;
pub mod oracle;
pub mod planner;

pub use error::{Error, Result};
pub use game::{Demand, GameConfig, GameLog, JointState, Role, RoundRecord};
