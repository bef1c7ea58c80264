//! Discrete-time market making with a single dealer and with two competing
//! dealers: exact dynamic programming, seeded simulators, tabular
//! Q-learning and Nash-Q learning.

pub mod config;
pub mod dp;
pub mod env;
pub mod error;
pub mod experiments;
pub mod game;
pub mod model;
pub mod nash;
pub mod plot;
pub mod qlearn;
pub mod registry;
pub mod table;

pub use error::{Error, Result};
