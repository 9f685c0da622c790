//! Traffic on a ring road with random accidents.
//!
//! The density follows a scalar conservation law `rho_t + (a(x) f(rho))_x = 0`
//! with `f(rho) = rho (1 - rho)`, solved by a Lax-Friedrichs scheme. Accidents
//! appear and disappear at random times and scale the capacity `a` down
//! locally. The pair (accidents, density) is a piecewise deterministic Markov
//! process whose jump rate and jump kernel depend on the current density.

pub mod capacity;
pub mod grid;
pub mod measures;
pub mod pdp;
pub mod solver;
pub mod stats;

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod io;

use thiserror::Error;

/// Any failure of a command. Configuration and usage problems exit with
/// code 1, everything detected while running with code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] pdp::PdpError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            _ => 2,
        }
    }
}
