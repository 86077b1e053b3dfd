//! Simulation experiments for F-screened selective inference.
//!
//! Each [`Experiment`] generates datasets from a Gaussian linear model,
//! applies the overall F screen and records the selective and comparator
//! procedures on the screened datasets. Results come back as a
//! [`ResultTable`] that writes to CSV with a `#`-prefixed metadata block.
//! Replicate `i` of design point `k` always reads from
//! `rng.derive(k).derive(i)`, so output does not depend on thread count.

pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::{Experiment, McSettings, SimConfig, Target};
pub use error::{Result, SimError};
pub use run::run_experiment;
pub use table::{qq_table, ResultTable, Row};
