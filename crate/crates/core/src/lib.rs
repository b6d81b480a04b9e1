//! Volumetric radar nowcasting.
//!
//! A reflectivity volume sequence is evolved under an advection-diffusion-source
//! equation whose velocity comes from scalar and vector potentials. The fields
//! driving the solver are fitted to an observed sequence by adjoint gradients,
//! stochastic ensembles are assembled from (structure, residual) sample pairs, and
//! forecasts are scored with neighborhood CSI, radial power spectra, pooled CRPS
//! and wind-profiler matching.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod fitting;
pub mod helmholtz;
pub mod interp;
pub mod nv3d;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod verify;
pub mod volgrid;

pub use error::{Error, Result};
pub use volgrid::{GridMeta, VolumeSequence};

/// Reflectivity assigned to voxels with no echo, out-of-domain reads and
/// invalid data (dBZ).
pub const NO_ECHO_DBZ: f32 = -10.0;
/// Upper end of the accepted reflectivity range (dBZ).
pub const MAX_DBZ: f32 = 75.0;

/// Clip a reflectivity value to the physical radar range.
#[inline]
pub fn clip_dbz(v: f64) -> f64 {
    v.clamp(NO_ECHO_DBZ as f64, MAX_DBZ as f64)
}
