//! Crossing-tree tests of the continuous local martingale hypothesis.
//!
//! A path observed at irregular times is linearly interpolated, its first
//! passages over the nested lattices `δ₀ + δ·2ˡ·ℤ` are organised into a
//! crossing tree, and the per-level subcrossing counts and excursion
//! indicators are tested against their Brownian null laws. A quadratic
//! variation baseline, exact crossing simulators for several diffusions,
//! δ calibration and a reproducible study harness are included.

pub mod calibration;
pub mod critical_values;
pub mod crossing_tree;
pub mod error;
pub mod harness;
pub mod indep_tests;
pub mod outcome;
pub mod quadrature;
pub mod rng;
pub mod series_model;
pub mod sim;

pub use critical_values::{CvSet, CvTable};
pub use crossing_tree::{build_tree, CrossingTree};
pub use error::{Error, Result};
pub use outcome::{TestId, TestOutcome};
pub use series_model::{InterpolatedPath, TickSeries};
pub use sim::ProcessSpec;
