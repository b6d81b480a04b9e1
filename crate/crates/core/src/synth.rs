//! Manufactured reflectivity sequences with closed-form truth.
//!
//! Every case is a Gaussian echo (50 dBZ peak over the −10 dBZ background)
//! evaluated analytically at each frame, never by the solver, together with
//! the physical fields that generate it.

use ndarray::{s, Array4, Axis};

use crate::helmholtz::DEFAULT_V_MAX;
use crate::solver::PhysicalFields;
use crate::volgrid::{GridMeta, VolumeSequence};
use crate::{Error, Result, NO_ECHO_DBZ};

/// Peak excess over background of every blob (dBZ).
pub const BLOB_AMPLITUDE: f64 = 60.0;
pub const GROWTH_SIGMA: f64 = 3.0;
pub const DIFFUSION_SIGMA0: f64 = 2.0;
pub const ROTATION_SIGMAS: (f64, f64) = (4.0, 1.5);

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    Translation { velocity: [f64; 3], center0: [f64; 3], sigma: f64 },
    Rotation { omega: f64, center: [f64; 3], sigma_major: f64, sigma_minor: f64 },
    Growth { rate: f64, center: [f64; 3], sigma: f64 },
    Diffusion { kappa: f64, center: [f64; 3], sigma0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub name: String,
    pub seed: u64,
    /// Fields for the T−1 steps between consecutive frames.
    pub truth_fields: PhysicalFields,
    pub sequence: VolumeSequence,
    pub descriptor: Descriptor,
    /// Set when the echo comes within three sigma of a lateral face.
    pub leaves_domain: bool,
}

impl SynthCase {
    /// Closed-form reflectivity of frame `t` (any real `t`) at index-space point `p`.
    pub fn analytic(&self, t: f64, p: [f64; 3]) -> f64 {
        self.descriptor.value(t, p)
    }
}

impl Descriptor {
    pub fn value(&self, t: f64, p: [f64; 3]) -> f64 {
        let bg = NO_ECHO_DBZ as f64;
        match *self {
            Descriptor::Translation { velocity, center0, sigma } => {
                let c = [0, 1, 2].map(|a| center0[a] + velocity[a] * t);
                bg + BLOB_AMPLITUDE * gauss(p, c, [sigma; 3])
            }
            Descriptor::Rotation { omega, center, sigma_major, sigma_minor } => {
                // trace back to the initial orientation: rotate by +ωt
                let (sn, cs) = (omega * t).sin_cos();
                let (dy, dx) = (p[1] - center[1], p[2] - center[2]);
                let x0 = cs * dx - sn * dy;
                let y0 = sn * dx + cs * dy;
                let q = [p[0], center[1] + y0, center[2] + x0];
                bg + BLOB_AMPLITUDE * gauss(q, center, [sigma_minor, sigma_minor, sigma_major])
            }
            Descriptor::Growth { rate, center, sigma } => bg + BLOB_AMPLITUDE * gauss(p, center, [sigma; 3]) + rate * t,
            Descriptor::Diffusion { kappa, center, sigma0 } => {
                let var = sigma0 * sigma0 + 2.0 * kappa * t;
                let amp = BLOB_AMPLITUDE * (sigma0 * sigma0 / var).powf(1.5);
                bg + amp * gauss(p, center, [var.sqrt(); 3])
            }
        }
    }
}

fn gauss(p: [f64; 3], c: [f64; 3], sigma: [f64; 3]) -> f64 {
    let mut e = 0.0;
    for a in 0..3 {
        let u = (p[a] - c[a]) / sigma[a];
        e += u * u;
    }
    (-0.5 * e).exp()
}

fn center_of(dims: (usize, usize, usize)) -> [f64; 3] {
    [(dims.0 - 1) as f64 / 2.0, (dims.1 - 1) as f64 / 2.0, (dims.2 - 1) as f64 / 2.0]
}

fn node_center(dims: (usize, usize, usize)) -> [f64; 3] {
    [((dims.0 - 1) / 2) as f64, ((dims.1 - 1) / 2) as f64, ((dims.2 - 1) / 2) as f64]
}

fn check_dims(dims: (usize, usize, usize), frames: usize) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 || frames == 0 {
        return Err(Error::Shape(format!("synthetic case needs non-empty dims, got {dims:?} x {frames}")));
    }
    Ok(())
}

fn render(desc: &Descriptor, dims: (usize, usize, usize), frames: usize) -> Result<VolumeSequence> {
    let (d, h, w) = dims;
    let data = Array4::from_shape_fn((frames, d, h, w), |(t, z, y, x)| {
        desc.value(t as f64, [z as f64, y as f64, x as f64]) as f32
    });
    VolumeSequence::from_data(data, GridMeta::default_for_depth(d))
}

fn build(
    name: &str,
    desc: Descriptor,
    dims: (usize, usize, usize),
    frames: usize,
    fields: PhysicalFields,
    leaves_domain: bool,
) -> Result<SynthCase> {
    Ok(SynthCase {
        name: name.into(),
        seed: 0,
        sequence: render(&desc, dims, frames)?,
        truth_fields: fields,
        descriptor: desc,
        leaves_domain,
    })
}

/// Blob moving with constant velocity `v` (cells/frame, ordered z, y, x),
/// centered on the domain midway through the sequence.
pub fn make_translation(dims: (usize, usize, usize), v: [f64; 3], sigma: f64, frames: usize) -> Result<SynthCase> {
    check_dims(dims, frames)?;
    let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(speed <= DEFAULT_V_MAX) || !(sigma > 0.0) {
        return Err(Error::Input(format!("translation needs |v| <= {DEFAULT_V_MAX} and sigma > 0")));
    }
    let mid = center_of(dims);
    let half = (frames - 1) as f64 / 2.0;
    let center0 = [0, 1, 2].map(|a| mid[a] - v[a] * half);
    let extent = [dims.0, dims.1, dims.2];
    let leaves = (0..frames).any(|t| {
        (1..3).any(|a| {
            let c = center0[a] + v[a] * t as f64;
            c - 3.0 * sigma < 0.0 || c + 3.0 * sigma > (extent[a] - 1) as f64
        })
    });
    let (d, h, w) = dims;
    let mut fields = PhysicalFields::zeros(frames - 1, d, h, w);
    for a in 0..3 {
        fields.velocity.v.slice_mut(s![.., a, .., .., ..]).fill(v[a]);
    }
    build("translation", Descriptor::Translation { velocity: v, center0, sigma }, dims, frames, fields, leaves)
}

/// Elongated blob spinning about the vertical axis through the domain center
/// at `omega` rad/frame; the truth stream function is `ψ_z = ω r²/2`.
/// The speed at one major-axis sigma must stay within the velocity guard.
pub fn make_rotation(dims: (usize, usize, usize), omega: f64, frames: usize) -> Result<SynthCase> {
    check_dims(dims, frames)?;
    let (major, minor) = ROTATION_SIGMAS;
    if !(omega.abs() * major <= DEFAULT_V_MAX) {
        return Err(Error::Input(format!("rotation rim speed exceeds {DEFAULT_V_MAX} cells/frame")));
    }
    let center = center_of(dims);
    let (d, h, w) = dims;
    let mut fields = PhysicalFields::zeros(frames - 1, d, h, w);
    for t in 0..frames - 1 {
        let mut v = fields.velocity.v.index_axis_mut(Axis(0), t);
        for y in 0..h {
            for x in 0..w {
                let (ry, rx) = (y as f64 - center[1], x as f64 - center[2]);
                v.slice_mut(s![1, .., y, x]).fill(-omega * rx);
                v.slice_mut(s![2, .., y, x]).fill(omega * ry);
            }
        }
    }
    let leaves = 3.0 * major > center[1].min(center[2]);
    let desc = Descriptor::Rotation { omega, center, sigma_major: major, sigma_minor: minor };
    build("rotation", desc, dims, frames, fields, leaves)
}

/// Static blob on which every voxel gains `rate` dBZ per frame, so the truth
/// source is the constant `rate`. Negative rates clip at the no-echo floor.
pub fn make_growth(dims: (usize, usize, usize), rate: f64, frames: usize) -> Result<SynthCase> {
    check_dims(dims, frames)?;
    if !rate.is_finite() {
        return Err(Error::Input("growth rate must be finite".into()));
    }
    let center = node_center(dims);
    let (d, h, w) = dims;
    let mut fields = PhysicalFields::zeros(frames - 1, d, h, w);
    fields.source.fill(rate);
    let leaves = 3.0 * GROWTH_SIGMA > center[1].min(center[2]);
    build("growth", Descriptor::Growth { rate, center, sigma: GROWTH_SIGMA }, dims, frames, fields, leaves)
}

/// Blob spreading under isotropic diffusivity `kappa`: variance
/// `σ₀² + 2κt` with the heat-kernel amplitude decay.
pub fn make_diffusion(dims: (usize, usize, usize), kappa: f64, frames: usize) -> Result<SynthCase> {
    check_dims(dims, frames)?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Input("kappa must be finite and non-negative".into()));
    }
    let center = node_center(dims);
    let (d, h, w) = dims;
    let mut fields = PhysicalFields::zeros(frames - 1, d, h, w);
    fields.kappa.fill(kappa);
    let sigma_end = (DIFFUSION_SIGMA0.powi(2) + 2.0 * kappa * (frames - 1) as f64).sqrt();
    let leaves = 3.0 * sigma_end > center[1].min(center[2]);
    let desc = Descriptor::Diffusion { kappa, center, sigma0: DIFFUSION_SIGMA0 };
    build("diffusion", desc, dims, frames, fields, leaves)
}

/// Case by name with its default parameter, for the command line.
pub fn make_named(name: &str, dims: (usize, usize, usize), frames: usize, param: Option<f64>, seed: u64) -> Result<SynthCase> {
    let mut case = match name {
        "translation" => make_translation(dims, [0.0, 0.0, param.unwrap_or(1.0)], 3.0, frames)?,
        "rotation" => make_rotation(dims, param.unwrap_or(0.1), frames)?,
        "growth" => make_growth(dims, param.unwrap_or(1.0), frames)?,
        "diffusion" => make_diffusion(dims, param.unwrap_or(0.5), frames)?,
        other => return Err(Error::Input(format!("unknown synthetic case '{other}'"))),
    };
    case.seed = seed;
    Ok(case)
}

/// Weighted per-axis variance of `(R − background)` over a 3D frame.
pub fn second_moments(frame: ndarray::ArrayView3<f64>) -> [f64; 3] {
    let bg = NO_ECHO_DBZ as f64;
    let mut mass = 0.0;
    let mut mean = [0.0; 3];
    for ((z, y, x), &v) in frame.indexed_iter() {
        let wgt = v - bg;
        mass += wgt;
        mean[0] += wgt * z as f64;
        mean[1] += wgt * y as f64;
        mean[2] += wgt * x as f64;
    }
    let mean = mean.map(|m| m / mass);
    let mut var = [0.0; 3];
    for ((z, y, x), &v) in frame.indexed_iter() {
        let wgt = v - bg;
        let p = [z as f64, y as f64, x as f64];
        for a in 0..3 {
            var[a] += wgt * (p[a] - mean[a]).powi(2);
        }
    }
    var.map(|v| v / mass)
}
