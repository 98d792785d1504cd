//! Estimation of generalized dimensions, hitting-time statistics, extreme
//! value laws and large-deviation rate functions for invariant measures of
//! dynamical systems, from simulated or ingested trajectories.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`dynsys`] — trajectory generators for the model systems and the
//!   closed-form invariant densities of the interval maps;
//! * [`recurrence`] — correlation, hitting-time and return-time integrals
//!   as Birkhoff averages on radius grids;
//! * [`scaling`] — tau(q) / D_q extraction by local slopes, least squares
//!   and finite-size extrapolation;
//! * [`evt`] — exceedance tails on product systems, peaks-over-threshold
//!   local dimensions, block maxima and GEV fitting;
//! * [`dei`] — the dynamical extremal index: Süveges estimation on product
//!   observables and the analytic closed forms;
//! * [`largedev`] — free energy, Legendre-Fenchel transforms and empirical
//!   rate functions;
//! * [`ingest`] — empirical state series and the quantile-threshold
//!   spectrum workflow.

// `!(x > 0.0)` guards are deliberate: they reject NaN, which `x <= 0.0`
// would let through. Indexed loops over parallel numeric arrays stay as
// written for symmetry with the formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dei;
pub mod dynsys;
pub mod error;
pub mod evt;
mod grid;
pub mod ingest;
pub mod largedev;
pub mod quad;
pub mod recurrence;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use dynsys::{
    density_model, distance, DensityModel, Metric, SystemKind, SystemSpec, Trajectory,
    TrajectorySource,
};
pub use error::{Error, Result};
pub use recurrence::{RadiusGrid, ScalingTable, TableKind};
pub use rng::SplitMix64;
pub use scaling::{DimensionSpectrum, FitMethod};
