//! Analysis toolkit for superconducting coplanar-waveguide resonators.
//!
//! The crate turns complex transmission sweeps of notch-coupled resonators
//! into quality factors, calibrates the mean intracavity photon number from
//! an input-line attenuation budget, fits the two-level-system saturation
//! model across drive power and reports loss decompositions. It also carries
//! the forward design equations for quarter-wave CPW resonators.
//!
//! Module map:
//!
//! - [`units`]: quality-factor algebra, power conversion, constants
//! - [`design`]: CPW line parameters and coupling design
//! - [`model`]: notch-type S21 lineshape and synthetic sweeps
//! - [`fit`]: delay, circle, phase and full complex lineshape fits
//! - [`power`]: attenuation budget, photon number, power series
//! - [`tls`]: TLS loss model fit, RRSD, decomposition, cohorts
//! - [`io`]: sweep file formats, run config, reports and SVG plots
//! - [`pipeline`] / [`synth`]: batch orchestration and synthetic chips
//! - [`batch`]: data-parallel map with a sequential fallback

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod design;
pub mod error;
pub mod fit;
pub mod io;
pub mod lm;
pub mod model;
pub mod pipeline;
pub mod power;
pub mod synth;
pub mod tls;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
