//! Inverse problem: resonance and background parameters from a sweep.

pub mod circle;
pub mod delay;
pub mod phase;
pub mod resonance;

pub use circle::{fit_circle, Circle};
pub use delay::estimate_delay;
pub use phase::{fit_phase, PhaseFit};
pub use resonance::{fit_resonance, fit_resonance_with, keys, FitGates, ResonanceFit, METHOD_TAG};
