//! Stratified random cubature on metric measure spaces.
//!
//! The crate builds equal-measure partitions of the flat torus `T^d`
//! (wraparound sup-metric) and of the unit sphere `S^2`, draws one uniform
//! node per cell, and measures the resulting integration errors:
//!
//! * [`cubature`]: the error functional and the fixed-function moment `B_N`;
//! * [`wce`]: the dual worst-case error over potential-space unit balls, the
//!   averaged quantity `A_N`, and the bracketing quantities `Γ(Φ)` / `Δ(Φ)`;
//! * [`besov`]: φ-gradients, tube measures, Poincaré checks and the Besov
//!   error bounds together with the functions that make them sharp;
//! * [`mz`]: empirical Marcinkiewicz–Zygmund ratios;
//! * [`experiments`]: rate fitting, configuration, CSV/JSON output.
//!
//! Every random quantity is drawn from a counter-keyed stream ([`rng`]), so
//! results depend only on the seed and never on the worker count.

pub mod besov;
pub mod cubature;
pub mod error;
pub mod experiments;
pub mod functions;
pub mod kernel;
pub mod mz;
pub mod partition;
pub mod rng;
pub mod space;
pub mod stats;
pub mod wce;

pub use error::{Error, Result};
pub use partition::{Cell, CellGeometry, Partition};
pub use space::{Point, SpaceDescriptor, SpaceKind};
