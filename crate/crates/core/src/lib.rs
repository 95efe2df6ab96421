//! Inverted pendulum balancing on a robot flange: free-oscillation system
//! identification, a CLIK acceleration-tracking model, and tabular Q-learning
//! with domain randomization.

pub mod clik;
pub mod config;
pub mod dynamics;
pub mod io;
pub mod par;
pub mod rl;
pub mod sysid;

pub use config::{ConfigError, RunConfig};
