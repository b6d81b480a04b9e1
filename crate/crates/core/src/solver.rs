//! Operator-splitting integrator for `∂R/∂t = −v·∇R + κ∇²R + s`.
//!
//! One step traces every voxel back along the flow and averages `M`
//! trilinear reads at `x − v(x)Δt + η⁽ᵐ⁾(x)`, with `η` drawn per axis from
//! `N(0, 2κΔt)`, then adds the source and clips to the radar range.
//! Reads outside the grid return the no-echo value.

use ndarray::{Array3, Array4, Array5, ArrayView3, ArrayView4, Axis};
use rayon::prelude::*;

use crate::helmholtz::VelocityField;
use crate::interp::{Dims3, Sampler};
use crate::rng::{NoiseKey, Stream};
use crate::{clip_dbz, Error, Result, NO_ECHO_DBZ};

/// Out-of-domain treatment for departure points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Reads outside the grid see no echo (−10 dBZ).
    #[default]
    ZeroEcho,
}

impl Boundary {
    pub fn fill(self) -> f64 {
        match self {
            Boundary::ZeroEcho => NO_ECHO_DBZ as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Monte-Carlo samples per voxel and step.
    pub m_samples: usize,
    pub seed: u64,
    /// Step length in frames.
    pub dt: f64,
    pub v_max: f64,
    pub boundary: Boundary,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            m_samples: 8,
            seed: 0,
            dt: 1.0,
            v_max: crate::helmholtz::DEFAULT_V_MAX,
            boundary: Boundary::ZeroEcho,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_samples == 0 {
            return Err(Error::Config("m_samples must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::Config("v_max must be positive".into()));
        }
        Ok(())
    }
}

/// Velocity, diagonal diffusivity and source for every step of a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalFields {
    pub velocity: VelocityField,
    /// T×3×D×H×W, components (κ_z, κ_y, κ_x) in cells²/frame.
    pub kappa: Array5<f64>,
    /// T×D×H×W in dBZ/frame.
    pub source: Array4<f64>,
}

/// Borrowed fields for a single step.
#[derive(Debug, Clone, Copy)]
pub struct FieldsFrame<'a> {
    pub v: ArrayView4<'a, f64>,
    pub kappa: ArrayView4<'a, f64>,
    pub source: ArrayView3<'a, f64>,
}

impl PhysicalFields {
    pub fn zeros(t: usize, d: usize, h: usize, w: usize) -> Self {
        PhysicalFields {
            velocity: VelocityField::zeros(t, d, h, w),
            kappa: Array5::zeros((t, 3, d, h, w)),
            source: Array4::zeros((t, d, h, w)),
        }
    }

    pub fn frames(&self) -> usize {
        self.source.shape()[0]
    }

    pub fn spatial_dims(&self) -> (usize, usize, usize) {
        let s = self.source.shape();
        (s[1], s[2], s[3])
    }

    pub fn frame(&self, t: usize) -> FieldsFrame<'_> {
        FieldsFrame {
            v: self.velocity.v.index_axis(Axis(0), t),
            kappa: self.kappa.index_axis(Axis(0), t),
            source: self.source.index_axis(Axis(0), t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d, h, w) = self.source.dim();
        let want = (t, 3, d, h, w);
        if self.velocity.v.dim() != want || self.kappa.dim() != want {
            return Err(Error::Shape(format!(
                "velocity {:?}, kappa {:?}, source {:?}",
                self.velocity.v.shape(),
                self.kappa.shape(),
                self.source.shape()
            )));
        }
        check_finite("velocity", self.velocity.v.iter())?;
        check_finite("kappa", self.kappa.iter())?;
        check_finite("source", self.source.iter())?;
        if let Some(index) = self.kappa.iter().position(|&k| k < 0.0) {
            return Err(Error::Input(format!("negative kappa at flat index {index}")));
        }
        Ok(())
    }

    /// Fields for a horizon of `t` steps that repeat frame `src`.
    pub fn persist(&self, src: usize, t: usize) -> Self {
        let (d, h, w) = self.spatial_dims();
        let mut out = PhysicalFields::zeros(t, d, h, w);
        let f = self.frame(src);
        for ti in 0..t {
            out.velocity.v.index_axis_mut(Axis(0), ti).assign(&f.v);
            out.kappa.index_axis_mut(Axis(0), ti).assign(&f.kappa);
            out.source.index_axis_mut(Axis(0), ti).assign(&f.source);
        }
        out
    }
}

fn check_finite<'a>(name: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    match it.position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { tensor: name.into(), index }),
        None => Ok(()),
    }
}

fn dims_of(r: &ArrayView3<f64>) -> Dims3 {
    r.dim().into()
}

fn check_vector(name: &str, r: &ArrayView3<f64>, f: &ArrayView4<f64>) -> Result<()> {
    let (d, h, w) = r.dim();
    if f.dim() != (3, d, h, w) {
        return Err(Error::Shape(format!("{name} {:?} for field {:?}", f.shape(), r.shape())));
    }
    Ok(())
}

fn contiguous(r: ArrayView3<'_, f64>) -> std::borrow::Cow<'_, [f64]> {
    match r.to_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(r.iter().copied().collect()),
    }
}

fn comps<'a>(f: &'a ArrayView4<f64>) -> [std::borrow::Cow<'a, [f64]>; 3] {
    [
        contiguous(f.index_axis(Axis(0), 0)),
        contiguous(f.index_axis(Axis(0), 1)),
        contiguous(f.index_axis(Axis(0), 2)),
    ]
}

/// Departure point of voxel `(z, y, x)` under velocity `v` for step `dt`.
#[inline]
pub fn departure(z: usize, y: usize, x: usize, v: [f64; 3], dt: f64) -> [f64; 3] {
    [z as f64 - v[0] * dt, y as f64 - v[1] * dt, x as f64 - v[2] * dt]
}

/// Semi-Lagrangian advection: `out(x) = R(x − v(x)Δt)` by trilinear reads.
pub fn advect(r: ArrayView3<f64>, v: ArrayView4<f64>, dt: f64) -> Result<Array3<f64>> {
    check_vector("velocity", &r, &v)?;
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Input("NaN in velocity".into()));
    }
    let dims = dims_of(&r);
    let data = contiguous(r);
    let sampler = Sampler::new(&data, dims, NO_ECHO_DBZ as f64);
    let [vz, vy, vx] = comps(&v);
    let out: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let (z, y, x) = dims.unravel(i);
            sampler.sample(departure(z, y, x, [vz[i], vy[i], vx[i]], dt))
        })
        .collect();
    Ok(Array3::from_shape_vec(r.raw_dim(), out).expect("shape"))
}

/// Per-axis standard deviation of the random displacement, `sqrt(2κΔt)`.
#[inline]
pub fn displacement_std(kappa: [f64; 3], dt: f64) -> [f64; 3] {
    [(2.0 * kappa[0] * dt).sqrt(), (2.0 * kappa[1] * dt).sqrt(), (2.0 * kappa[2] * dt).sqrt()]
}

fn check_kappa(kappa: &ArrayView4<f64>) -> Result<()> {
    if let Some(index) = kappa.iter().position(|&k| !(k >= 0.0) || !k.is_finite()) {
        return Err(Error::Input(format!("kappa must be finite and non-negative (flat index {index})")));
    }
    Ok(())
}

/// Averages `m` reads at `base + η⁽ᵐ⁾`; a voxel with zero diffusivity reads once.
#[inline]
pub(crate) fn mc_average(
    sampler: &Sampler<'_>,
    key: &NoiseKey,
    index: usize,
    base: [f64; 3],
    sd: [f64; 3],
    m: usize,
) -> f64 {
    if sd == [0.0; 3] {
        return sampler.sample(base);
    }
    let mut acc = 0.0;
    for s in 0..m {
        acc += sampler.sample(sample_position(base, sd, key.normal3(index as u64, s as u64)));
    }
    acc / m as f64
}

/// Monte-Carlo diffusion: `out(x) = (1/M) Σ_m R(x + η⁽ᵐ⁾(x))`.
pub fn diffuse_mc(r: ArrayView3<f64>, kappa: ArrayView4<f64>, dt: f64, m: usize, seed: u64) -> Result<Array3<f64>> {
    check_vector("kappa", &r, &kappa)?;
    check_kappa(&kappa)?;
    if m == 0 {
        return Err(Error::Input("at least one Monte-Carlo sample required".into()));
    }
    let dims = dims_of(&r);
    let data = contiguous(r);
    let sampler = Sampler::new(&data, dims, NO_ECHO_DBZ as f64);
    let key = NoiseKey::new(seed, Stream::Diffusion, 0);
    let [kz, ky, kx] = comps(&kappa);
    let out: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let (z, y, x) = dims.unravel(i);
            let sd = displacement_std([kz[i], ky[i], kx[i]], dt);
            mc_average(&sampler, &key, i, [z as f64, y as f64, x as f64], sd, m)
        })
        .collect();
    Ok(Array3::from_shape_vec(r.raw_dim(), out).expect("shape"))
}

/// Result of one step with the intermediates used by the fitting losses.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Clipped `R_{t+1}`.
    pub next: Array3<f64>,
    /// Advection-only read `R_t(x − vΔt)`.
    pub advected: Option<Array3<f64>>,
    /// Monte-Carlo average before the source is added.
    pub pre_source: Option<Array3<f64>>,
}

/// One combined update; `t` keys the noise so successive steps draw fresh
/// displacements.
pub fn step(r: ArrayView3<f64>, fields: FieldsFrame<'_>, cfg: &SolverConfig, t: usize) -> Result<Array3<f64>> {
    Ok(step_full(r, fields, cfg, t, false)?.next)
}

pub fn step_full(
    r: ArrayView3<f64>,
    fields: FieldsFrame<'_>,
    cfg: &SolverConfig,
    t: usize,
    intermediates: bool,
) -> Result<StepOutput> {
    cfg.validate()?;
    let key = NoiseKey::new(cfg.seed, Stream::Diffusion, t as u64);
    step_with_key(r, fields, cfg, &key, intermediates)
}

/// Position of Monte-Carlo read `m`: departure point plus the scaled
/// standard-normal displacement.
#[inline]
pub(crate) fn sample_position(base: [f64; 3], sd: [f64; 3], xi: [f64; 3]) -> [f64; 3] {
    [base[0] + sd[0] * xi[0], base[1] + sd[1] * xi[1], base[2] + sd[2] * xi[2]]
}

/// [`step_full`] with an explicit noise key.
pub(crate) fn step_with_key(
    r: ArrayView3<f64>,
    fields: FieldsFrame<'_>,
    cfg: &SolverConfig,
    key: &NoiseKey,
    intermediates: bool,
) -> Result<StepOutput> {
    check_vector("velocity", &r, &fields.v)?;
    check_vector("kappa", &r, &fields.kappa)?;
    if fields.source.dim() != r.dim() {
        return Err(Error::Shape(format!("source {:?} for field {:?}", fields.source.shape(), r.shape())));
    }
    if fields.v.iter().any(|x| x.is_nan()) {
        return Err(Error::Input("NaN in velocity".into()));
    }
    check_kappa(&fields.kappa)?;

    let dims = dims_of(&r);
    let data = contiguous(r);
    let sampler = Sampler::new(&data, dims, cfg.boundary.fill());
    let [vz, vy, vx] = comps(&fields.v);
    let [kz, ky, kx] = comps(&fields.kappa);
    let src = contiguous(fields.source);
    let dt = cfg.dt;

    let per_voxel: Vec<(f64, f64, f64)> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let (z, y, x) = dims.unravel(i);
            let base = departure(z, y, x, [vz[i], vy[i], vx[i]], dt);
            let sd = displacement_std([kz[i], ky[i], kx[i]], dt);
            let pre = mc_average(&sampler, key, i, base, sd, cfg.m_samples);
            let adv = if intermediates { sampler.sample(base) } else { 0.0 };
            (clip_dbz(pre + src[i] * dt), adv, pre)
        })
        .collect();

    let shape = r.raw_dim();
    let next = Array3::from_shape_vec(shape, per_voxel.iter().map(|p| p.0).collect()).expect("shape");
    let (advected, pre_source) = if intermediates {
        (
            Some(Array3::from_shape_vec(shape, per_voxel.iter().map(|p| p.1).collect()).expect("shape")),
            Some(Array3::from_shape_vec(shape, per_voxel.iter().map(|p| p.2).collect()).expect("shape")),
        )
    } else {
        (None, None)
    };
    Ok(StepOutput { next, advected, pre_source })
}

/// Frames `R_1..R_T` plus, when requested, the per-step intermediates.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub frames: Array4<f64>,
    pub advected: Option<Array4<f64>>,
    pub pre_source: Option<Array4<f64>>,
}

/// Integrate from `r0` through every step of `fields`.
pub fn rollout(r0: ArrayView3<f64>, fields: &PhysicalFields, cfg: &SolverConfig, intermediates: bool) -> Result<Rollout> {
    fields.validate()?;
    let t_len = fields.frames();
    if fields.spatial_dims() != r0.dim() {
        return Err(Error::Shape(format!(
            "fields {:?} for initial state {:?}",
            fields.spatial_dims(),
            r0.shape()
        )));
    }
    let (d, h, w) = r0.dim();
    let mut frames = Array4::zeros((t_len, d, h, w));
    let mut advected = intermediates.then(|| Array4::zeros((t_len, d, h, w)));
    let mut pre_source = intermediates.then(|| Array4::zeros((t_len, d, h, w)));
    let mut current = r0.to_owned();
    for t in 0..t_len {
        let out = step_full(current.view(), fields.frame(t), cfg, t, intermediates)?;
        if let (Some(acc), Some(a)) = (advected.as_mut(), out.advected) {
            acc.index_axis_mut(Axis(0), t).assign(&a);
        }
        if let (Some(acc), Some(p)) = (pre_source.as_mut(), out.pre_source) {
            acc.index_axis_mut(Axis(0), t).assign(&p);
        }
        frames.index_axis_mut(Axis(0), t).assign(&out.next);
        current = out.next;
    }
    Ok(Rollout { frames, advected, pre_source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Array4};

    fn bump(dims: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(dims, |(z, y, x)| ((z * 13 + y * 7 + x * 3) % 17) as f64 * 3.0 - 5.0)
    }

    fn uniform_v(dims: (usize, usize, usize), v: [f64; 3]) -> Array4<f64> {
        let (d, h, w) = dims;
        Array4::from_shape_fn((3, d, h, w), |(c, _, _, _)| v[c])
    }

    #[test]
    fn zero_velocity_is_identity() {
        let r = bump((3, 4, 5));
        let out = advect(r.view(), Array4::zeros((3, 3, 4, 5)).view(), 1.0).unwrap();
        assert!(out.iter().zip(r.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn unit_shift_fills_upwind_face() {
        let r = bump((2, 3, 6));
        let out = advect(r.view(), uniform_v((2, 3, 6), [0.0, 0.0, 1.0]).view(), 1.0).unwrap();
        for ((z, y, x), &v) in out.indexed_iter() {
            let want = if x == 0 { -10.0 } else { r[[z, y, x - 1]] };
            assert_eq!(v, want);
        }
    }

    #[test]
    fn half_cell_profile() {
        let r = Array3::from_shape_vec((1, 1, 3), vec![-10.0, 30.0, -10.0]).unwrap();
        let out = advect(r.view(), uniform_v((1, 1, 3), [0.0, 0.0, 0.5]).view(), 1.0).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[-10.0, 10.0, 10.0]);
    }

    #[test]
    fn nan_velocity_rejected() {
        let r = bump((2, 2, 2));
        let mut v = Array4::zeros((3, 2, 2, 2));
        v[[1, 0, 1, 0]] = f64::NAN;
        assert!(matches!(advect(r.view(), v.view(), 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn zero_kappa_is_identity_and_negative_rejected() {
        let r = bump((3, 4, 5));
        let k = Array4::zeros((3, 3, 4, 5));
        let out = diffuse_mc(r.view(), k.view(), 1.0, 7, 3).unwrap();
        assert!(out.iter().zip(r.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut k = k;
        k[[0, 0, 0, 0]] = -1e-3;
        assert!(matches!(diffuse_mc(r.view(), k.view(), 1.0, 1, 3), Err(Error::Input(_))));
    }

    #[test]
    fn single_sample_matches_scalar_reference() {
        // independent scalar loop with nested linear interpolation
        fn read(r: &Array3<f64>, z: isize, y: isize, x: isize) -> f64 {
            let (d, h, w) = r.dim();
            if z < 0 || y < 0 || x < 0 || z >= d as isize || y >= h as isize || x >= w as isize {
                -10.0
            } else {
                r[[z as usize, y as usize, x as usize]]
            }
        }
        fn lerp(a: f64, b: impl FnOnce() -> f64, f: f64) -> f64 {
            if f == 0.0 {
                a
            } else {
                a + f * (b() - a)
            }
        }
        fn tri(r: &Array3<f64>, p: [f64; 3]) -> f64 {
            let (z0, y0, x0) = (p[0].floor(), p[1].floor(), p[2].floor());
            let (fz, fy, fx) = (p[0] - z0, p[1] - y0, p[2] - x0);
            let (z0, y0, x0) = (z0 as isize, y0 as isize, x0 as isize);
            let line = |z: isize, y: isize| lerp(read(r, z, y, x0), || read(r, z, y, x0 + 1), fx);
            let plane = |z: isize| lerp(line(z, y0), || line(z, y0 + 1), fy);
            lerp(plane(z0), || plane(z0 + 1), fz)
        }

        let dims = (3, 5, 6);
        let r = bump(dims);
        let k = Array4::from_shape_fn((3, 3, 5, 6), |(c, z, y, x)| 0.1 + 0.05 * ((c + z + y + x) % 4) as f64);
        let out = diffuse_mc(r.view(), k.view(), 1.0, 1, 99).unwrap();
        let key = NoiseKey::new(99, Stream::Diffusion, 0);
        let mut i = 0;
        for z in 0..3 {
            for y in 0..5 {
                for x in 0..6 {
                    let eta = [0, 1, 2].map(|a| (2.0 * k[[a, z, y, x]]).sqrt() * key.normal(i as u64, 0, a as u64));
                    let want = tri(&r, [z as f64 + eta[0], y as f64 + eta[1], x as f64 + eta[2]]);
                    assert_eq!(out[[z, y, x]].to_bits(), want.to_bits(), "voxel {z},{y},{x}");
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn step_examples() {
        let dims = (2, 3, 4);
        let r = bump(dims);
        let (d, h, w) = dims;
        let mut fields = PhysicalFields::zeros(1, d, h, w);
        let cfg = SolverConfig::default();
        let out = step(r.view(), fields.frame(0), &cfg, 0).unwrap();
        assert_eq!(out, r.mapv(clip_dbz));

        fields.source.fill(2.0);
        let out = step(r.view(), fields.frame(0), &cfg, 0).unwrap();
        assert_eq!(out, r.mapv(|v| clip_dbz(v + 2.0)));
    }

    #[test]
    fn shift_plus_source_on_ramp() {
        let n = 8;
        let r = Array3::from_shape_fn((n, n, n), |(z, y, x)| (z + 2 * y + 3 * x) as f64);
        let mut fields = PhysicalFields::zeros(1, n, n, n);
        fields.velocity.v.slice_mut(s![0, 2, .., .., ..]).fill(1.0);
        fields.source.fill(1.5);
        let out = step(r.view(), fields.frame(0), &SolverConfig::default(), 0).unwrap();
        for ((z, y, x), &v) in out.indexed_iter() {
            let shifted = if x == 0 { -10.0 } else { r[[z, y, x - 1]] };
            assert_eq!(v, clip_dbz(shifted + 1.5));
        }
    }

    #[test]
    fn rollout_examples() {
        let dims = (2, 4, 9);
        let (d, h, w) = dims;
        let r0 = bump(dims).mapv(clip_dbz);
        let cfg = SolverConfig::default();

        let zero = PhysicalFields::zeros(3, d, h, w);
        let out = rollout(r0.view(), &zero, &cfg, false).unwrap();
        for t in 0..3 {
            assert_eq!(out.frames.index_axis(Axis(0), t), r0);
        }

        let mut shift = PhysicalFields::zeros(5, d, h, w);
        shift.velocity.v.slice_mut(s![.., 2, .., .., ..]).fill(1.0);
        let out = rollout(r0.view(), &shift, &cfg, true).unwrap();
        for t in 0..5 {
            for ((z, y, x), &v) in out.frames.index_axis(Axis(0), t).indexed_iter() {
                let want = if x <= t { -10.0 } else { r0[[z, y, x - t - 1]] };
                assert_eq!(v, want);
            }
        }
        assert!(out.advected.is_some() && out.pre_source.is_some());

        let one = rollout(r0.view(), &shift.persist(0, 1), &cfg, false).unwrap();
        let single = step(r0.view(), shift.frame(0), &cfg, 0).unwrap();
        assert_eq!(one.frames.index_axis(Axis(0), 0), single);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn maximum_principle_without_source(
                r in proptest::collection::vec(-10.0f64..75.0, 2 * 3 * 4),
                v in proptest::collection::vec(-3.0f64..3.0, 3 * 2 * 3 * 4),
                k in proptest::collection::vec(0.0f64..2.0, 3 * 2 * 3 * 4),
                seed in any::<u64>(),
                m in 1usize..6,
            ) {
                let r = Array3::from_shape_vec((2, 3, 4), r).unwrap();
                let fields = PhysicalFields {
                    velocity: VelocityField { v: Array5::from_shape_vec((1, 3, 2, 3, 4), v).unwrap() },
                    kappa: Array5::from_shape_vec((1, 3, 2, 3, 4), k).unwrap(),
                    source: Array4::zeros((1, 2, 3, 4)),
                };
                let cfg = SolverConfig { m_samples: m, seed, ..Default::default() };
                let out = step(r.view(), fields.frame(0), &cfg, 0).unwrap();
                let lo = r.iter().cloned().fold(-10.0f64, f64::min);
                let hi = r.iter().cloned().fold(-10.0f64, f64::max);
                // convex combinations up to rounding of the final average
                let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
                for &x in out.iter() {
                    prop_assert!(x >= lo - slack && x <= hi + slack, "{x} outside [{lo}, {hi}]");
                }
            }
        }
    }
}
