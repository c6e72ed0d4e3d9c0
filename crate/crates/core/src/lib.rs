//! Estimation of the ambiguity function of nonstationary processes from a
//! single realization: the empirical ambiguity function (EMAF), its
//! thresholded variants, their closed-form moments and a Monte Carlo bench.

pub mod bench;
pub mod emaf;
pub mod error;
pub mod moments;
pub mod signal;
pub mod special;
pub mod spread;
pub mod threshold;

pub use bench::{run_bench, Estimator, MCConfig, MCReport};
pub use emaf::{compute_emaf, standardize, AmbiguityGrid, GridKind, Lattice};
pub use error::{Error, Result};
pub use signal::{generate, ComplexSignal, ProcessSpec, Seed};
pub use spread::{total_spread, SpreadRegion, SpreadReport};
pub use threshold::{estimate, Method, ThresholdConfig};
