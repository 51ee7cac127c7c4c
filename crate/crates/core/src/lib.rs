//! Numerical toolkit for weighted Besov spaces of vector-valued functions,
//! Fourier multipliers with operator-valued symbols, and the degenerate
//! ordinary differential equations they are applied to.

pub mod doe;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod multiplier;
pub mod opcalc;
pub mod partition;
pub mod quadrature;
pub mod spaces;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{Domain, Fiber, Flag, Flagged, Grid, SampledFunction};
pub use linalg::C64;
pub use weights::{Weight, WeightFunction};
