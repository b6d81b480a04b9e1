//! Finite-difference vector calculus on a collocated grid and reconstruction
//! of velocity from a scalar and a vector potential, `v = ∇φ + ∇×ψ`.
//!
//! Vector fields are stored as 3×D×H×W with components ordered (z, y, x),
//! matching the spatial axes. Unit grid spacing throughout: central
//! differences inside, first-order one-sided differences on the faces.

use ndarray::{Array3, Array4, Array5, ArrayView3, ArrayView4, ArrayViewMut3, Axis, Zip};
use rayon::prelude::*;

use crate::{Error, Result};

/// Default velocity magnitude guard in cells per frame.
pub const DEFAULT_V_MAX: f64 = 8.0;

/// Per-frame potentials over the forecast horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFields {
    /// T×D×H×W
    pub phi: Array4<f64>,
    /// T×3×D×H×W
    pub psi: Array5<f64>,
}

impl PotentialFields {
    pub fn zeros(t: usize, d: usize, h: usize, w: usize) -> Self {
        PotentialFields { phi: Array4::zeros((t, d, h, w)), psi: Array5::zeros((t, 3, d, h, w)) }
    }

    fn check(&self) -> Result<()> {
        let (t, d, h, w) = self.phi.dim();
        if self.psi.dim() != (t, 3, d, h, w) {
            return Err(Error::Shape(format!(
                "phi {:?} vs psi {:?}",
                self.phi.shape(),
                self.psi.shape()
            )));
        }
        Ok(())
    }
}

/// T×3×D×H×W velocity in cells per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub v: Array5<f64>,
}

impl VelocityField {
    pub fn zeros(t: usize, d: usize, h: usize, w: usize) -> Self {
        VelocityField { v: Array5::zeros((t, 3, d, h, w)) }
    }

    pub fn frames(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn max_magnitude(&self) -> f64 {
        let mut best = 0.0f64;
        for frame in self.v.outer_iter() {
            Zip::from(frame.index_axis(Axis(0), 0))
                .and(frame.index_axis(Axis(0), 1))
                .and(frame.index_axis(Axis(0), 2))
                .for_each(|a, b, c| best = best.max((a * a + b * b + c * c).sqrt()));
        }
        best
    }
}

fn check_dims(shape: &[usize]) -> Result<()> {
    if shape.iter().any(|&n| n < 2) {
        return Err(Error::Shape(format!("every dimension must be at least 2, got {shape:?}")));
    }
    Ok(())
}

/// Derivative along one spatial axis (0 = z, 1 = y, 2 = x).
pub fn diff_axis(field: ArrayView3<f64>, axis: usize) -> Array3<f64> {
    let mut out = Array3::zeros(field.raw_dim());
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(field.lanes(Axis(axis)))
        .for_each(|mut o, f| {
            let n = f.len();
            o[0] = f[1] - f[0];
            o[n - 1] = f[n - 1] - f[n - 2];
            for i in 1..n - 1 {
                o[i] = 0.5 * (f[i + 1] - f[i - 1]);
            }
        });
    out
}

/// Accumulates the transpose of [`diff_axis`] applied to `g` into `acc`,
/// scaled by `sign`.
pub fn diff_axis_adjoint(g: ArrayView3<f64>, axis: usize, sign: f64, mut acc: ArrayViewMut3<f64>) {
    Zip::from(acc.lanes_mut(Axis(axis)))
        .and(g.lanes(Axis(axis)))
        .for_each(|mut a, g| {
            let n = g.len();
            a[1] += sign * g[0];
            a[0] -= sign * g[0];
            a[n - 1] += sign * g[n - 1];
            a[n - 2] -= sign * g[n - 1];
            for i in 1..n - 1 {
                let half = 0.5 * sign * g[i];
                a[i + 1] += half;
                a[i - 1] -= half;
            }
        });
}

pub fn gradient(field: ArrayView3<f64>) -> Result<Array4<f64>> {
    check_dims(field.shape())?;
    let (d, h, w) = field.dim();
    let mut out = Array4::zeros((3, d, h, w));
    for axis in 0..3 {
        out.index_axis_mut(Axis(0), axis).assign(&diff_axis(field, axis));
    }
    Ok(out)
}

fn vector_dims(field: &ArrayView4<f64>) -> Result<()> {
    if field.shape()[0] != 3 {
        return Err(Error::Shape(format!("expected 3 components, got {}", field.shape()[0])));
    }
    check_dims(&field.shape()[1..])
}

/// Curl with components (z, y, x):
/// `c_z = ∂x ψ_y − ∂y ψ_x`, `c_y = ∂z ψ_x − ∂x ψ_z`, `c_x = ∂y ψ_z − ∂z ψ_y`.
pub fn curl(field: ArrayView4<f64>) -> Result<Array4<f64>> {
    vector_dims(&field)?;
    let c = |i: usize| field.index_axis(Axis(0), i);
    let (pz, py, px) = (c(0), c(1), c(2));
    let mut out = Array4::zeros(field.raw_dim());
    out.index_axis_mut(Axis(0), 0).assign(&(diff_axis(py, 2) - diff_axis(px, 1)));
    out.index_axis_mut(Axis(0), 1).assign(&(diff_axis(px, 0) - diff_axis(pz, 2)));
    out.index_axis_mut(Axis(0), 2).assign(&(diff_axis(pz, 1) - diff_axis(py, 0)));
    Ok(out)
}

pub fn divergence(field: ArrayView4<f64>) -> Result<Array3<f64>> {
    vector_dims(&field)?;
    let mut out = diff_axis(field.index_axis(Axis(0), 0), 0);
    out += &diff_axis(field.index_axis(Axis(0), 1), 1);
    out += &diff_axis(field.index_axis(Axis(0), 2), 2);
    Ok(out)
}

/// Transpose of [`gradient`].
pub fn gradient_adjoint(g: ArrayView4<f64>) -> Array3<f64> {
    let mut acc = Array3::zeros(g.index_axis(Axis(0), 0).raw_dim());
    for axis in 0..3 {
        diff_axis_adjoint(g.index_axis(Axis(0), axis), axis, 1.0, acc.view_mut());
    }
    acc
}

/// Transpose of [`curl`].
pub fn curl_adjoint(g: ArrayView4<f64>) -> Array4<f64> {
    let mut acc = Array4::zeros(g.raw_dim());
    let (gz, gy, gx) = (g.index_axis(Axis(0), 0), g.index_axis(Axis(0), 1), g.index_axis(Axis(0), 2));
    {
        let mut az = acc.index_axis_mut(Axis(0), 0);
        diff_axis_adjoint(gy, 2, -1.0, az.view_mut());
        diff_axis_adjoint(gx, 1, 1.0, az.view_mut());
    }
    {
        let mut ay = acc.index_axis_mut(Axis(0), 1);
        diff_axis_adjoint(gz, 2, 1.0, ay.view_mut());
        diff_axis_adjoint(gx, 0, -1.0, ay.view_mut());
    }
    {
        let mut ax = acc.index_axis_mut(Axis(0), 2);
        diff_axis_adjoint(gz, 1, -1.0, ax.view_mut());
        diff_axis_adjoint(gy, 0, 1.0, ax.view_mut());
    }
    acc
}

/// Scale vectors longer than `v_max` back onto the sphere of radius `v_max`.
/// Returns the number of voxels affected.
pub fn clamp_magnitude(v: &mut Array4<f64>, v_max: f64) -> usize {
    let mut count = 0;
    let (a, b, c) = v.multi_slice_mut((
        ndarray::s![0, .., .., ..],
        ndarray::s![1, .., .., ..],
        ndarray::s![2, .., .., ..],
    ));
    Zip::from(a)
        .and(b)
        .and(c)
        .for_each(|vz, vy, vx| {
            let mag = (*vz * *vz + *vy * *vy + *vx * *vx).sqrt();
            if mag > v_max {
                let k = v_max / mag;
                *vz *= k;
                *vy *= k;
                *vx *= k;
                count += 1;
            }
        });
    count
}

/// Velocity of one frame from its potentials, before clamping.
pub fn velocity_frame(phi: ArrayView3<f64>, psi: ArrayView4<f64>) -> Result<Array4<f64>> {
    let mut v = gradient(phi)?;
    v += &curl(psi)?;
    Ok(v)
}

/// `v_t = ∇φ_t + ∇×ψ_t` for every frame, then magnitude-clamped to `v_max`.
/// Returns the velocity and the number of clamped voxels.
pub fn reconstruct_velocity(p: &PotentialFields, v_max: f64) -> Result<(VelocityField, usize)> {
    p.check()?;
    let (t, d, h, w) = p.phi.dim();
    check_dims(&[d, h, w])?;
    if let Some(index) = p.phi.iter().chain(p.psi.iter()).position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { tensor: "potentials".into(), index });
    }
    let frames: Vec<(Array4<f64>, usize)> = (0..t)
        .into_par_iter()
        .map(|ti| {
            let mut v = velocity_frame(p.phi.index_axis(Axis(0), ti), p.psi.index_axis(Axis(0), ti))?;
            let n = clamp_magnitude(&mut v, v_max);
            Ok((v, n))
        })
        .collect::<Result<_>>()?;
    let mut out = VelocityField::zeros(t, d, h, w);
    let mut clamped = 0;
    for (ti, (v, n)) in frames.into_iter().enumerate() {
        out.v.index_axis_mut(Axis(0), ti).assign(&v);
        clamped += n;
    }
    Ok((out, clamped))
}
