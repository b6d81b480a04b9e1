//! Probabilistic forecasts from (structure, residual) sample pairs.
//!
//! Each pair expands into three members:
//! full-field `S_struct`, physics-corrected `R_det + S_res` and hybrid
//! `S_struct + α·S_res`. Structure samples re-run the solver under perturbed
//! fields; residual samples are smoothed Gaussian noise scaled by the
//! per-voxel prediction error seen while fitting.

use ndarray::{Array3, Array4, ArrayView3, ArrayView4, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::helmholtz::{clamp_magnitude, gradient};
use crate::rng::{derive_seed, NoiseKey, Stream};
use crate::solver::{rollout, PhysicalFields, SolverConfig};
use crate::{clip_dbz, Error, Result};

/// Width of the box filter that correlates sampled noise.
pub const SMOOTHING_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Number of sample pairs; the ensemble has three times as many members.
    pub k_members: usize,
    pub alpha: f64,
    pub perturbation_scale: f64,
    /// Multiplier on the fitted residual spread.
    pub residual_scale: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { k_members: 4, alpha: 0.5, perturbation_scale: 0.1, residual_scale: 1.0, seed: 0 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_members == 0 {
            return Err(Error::Config("k_members must be at least 1".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        if !(self.perturbation_scale >= 0.0 && self.perturbation_scale.is_finite()) {
            return Err(Error::Config("perturbation_scale must be finite and non-negative".into()));
        }
        if !(self.residual_scale >= 0.0 && self.residual_scale.is_finite()) {
            return Err(Error::Config("residual_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FullField,
    PhysicsCorrected,
    Hybrid,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::FullField => "full-field",
            Provenance::PhysicsCorrected => "physics-corrected",
            Provenance::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub s_struct: Array4<f64>,
    pub s_res: Array4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub members: Vec<Array4<f64>>,
    pub provenance: Vec<Provenance>,
    pub alpha: f64,
}

impl EnsembleForecast {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Mean L1 distance over all unordered member pairs.
    pub fn spread(&self) -> f64 {
        let n = self.members.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                let d: f64 = Zip::from(&self.members[i])
                    .and(&self.members[j])
                    .fold(0.0, |acc, a, b| acc + (a - b).abs());
                total += d / self.members[i].len().max(1) as f64;
                pairs += 1;
            }
        }
        total / pairs as f64
    }
}

/// Unit-variance, spatially correlated Gaussian noise: iid normals box-
/// filtered along every axis with periodic wrap and rescaled by
/// `sqrt(width)` per axis.
pub fn smooth_noise(dims: (usize, usize, usize), key: &NoiseKey) -> Array3<f64> {
    let n = dims.0 * dims.1 * dims.2;
    let white: Vec<f64> = (0..n).into_par_iter().map(|i| key.normal(i as u64, 0, 0)).collect();
    let mut field = Array3::from_shape_vec(dims, white).expect("shape");
    for axis in 0..3 {
        field = box_filter(field.view(), axis);
    }
    field
}

fn box_filter(field: ArrayView3<f64>, axis: usize) -> Array3<f64> {
    let len = field.shape()[axis];
    let width = SMOOTHING_WIDTH.min(len);
    let half = (width / 2) as isize;
    let norm = (width as f64).sqrt();
    let mut out = Array3::zeros(field.raw_dim());
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(field.lanes(Axis(axis)))
        .for_each(|mut o, f| {
            for i in 0..len {
                let mut s = 0.0;
                for k in 0..width as isize {
                    let j = (i as isize + k - half).rem_euclid(len as isize) as usize;
                    s += f[j];
                }
                o[i] = s / norm;
            }
        });
    out
}

fn rms<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in it {
        s += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Stochastic variant of `fields`: a smooth curl-free velocity perturbation
/// and a smooth source perturbation, each with RMS `scale` times that of the
/// field, and every diffusivity component of every frame multiplied by
/// `exp(scale·ξ)`.
pub fn perturb_fields(fields: &PhysicalFields, scale: f64, seed: u64, v_max: f64) -> Result<PhysicalFields> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Input("perturbation scale must be finite and non-negative".into()));
    }
    fields.validate()?;
    if scale == 0.0 {
        return Ok(fields.clone());
    }
    let (t_len, d, h, w) = fields.source.dim();
    let dims = (d, h, w);
    let mut out = fields.clone();

    let v_rms = rms(fields.velocity.v.iter());
    if v_rms > 0.0 {
        let mut dv = ndarray::Array5::zeros(fields.velocity.v.raw_dim());
        for t in 0..t_len {
            let pot = smooth_noise(dims, &NoiseKey::new(seed, Stream::VelocityPerturb, t as u64));
            dv.index_axis_mut(Axis(0), t).assign(&gradient(pot.view())?);
        }
        let dv_rms = rms(dv.iter());
        if dv_rms > 0.0 {
            out.velocity.v.scaled_add(scale * v_rms / dv_rms, &dv);
        }
        for t in 0..t_len {
            let mut frame = out.velocity.v.index_axis(Axis(0), t).to_owned();
            clamp_magnitude(&mut frame, v_max);
            out.velocity.v.index_axis_mut(Axis(0), t).assign(&frame);
        }
    }

    let s_rms = rms(fields.source.iter());
    if s_rms > 0.0 {
        for t in 0..t_len {
            let noise = smooth_noise(dims, &NoiseKey::new(seed, Stream::SourcePerturb, t as u64));
            out.source.index_axis_mut(Axis(0), t).scaled_add(scale * s_rms, &noise);
        }
    }

    let key = NoiseKey::new(seed, Stream::KappaPerturb, 0);
    for t in 0..t_len {
        for a in 0..3 {
            let f = (scale * key.normal(t as u64, a as u64, 0)).exp();
            out.kappa.index_axis_mut(Axis(0), t).index_axis_mut(Axis(0), a).mapv_inplace(|k| k * f);
        }
    }
    Ok(out)
}

/// Residual field over `frames` frames: smooth unit noise times the local
/// spread `stats`.
pub fn sample_residual(stats: ArrayView3<f64>, frames: usize, seed: u64) -> Result<Array4<f64>> {
    if let Some(index) = stats.iter().position(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::Input(format!("residual spread must be finite and non-negative (flat index {index})")));
    }
    let (d, h, w) = stats.dim();
    let mut out = Array4::zeros((frames, d, h, w));
    if stats.iter().all(|&s| s == 0.0) {
        return Ok(out);
    }
    for t in 0..frames {
        let noise = smooth_noise((d, h, w), &NoiseKey::new(seed, Stream::Residual, t as u64));
        out.index_axis_mut(Axis(0), t).assign(&(&noise * &stats));
    }
    Ok(out)
}

/// The three members of one pair, in provenance order.
pub fn combine(pair: &SamplePair, r_det: ArrayView4<f64>, alpha: f64) -> Result<[Array4<f64>; 3]> {
    if pair.s_struct.shape() != r_det.shape() || pair.s_res.shape() != r_det.shape() {
        return Err(Error::Shape(format!(
            "structure {:?}, residual {:?}, deterministic {:?}",
            pair.s_struct.shape(),
            pair.s_res.shape(),
            r_det.shape()
        )));
    }
    let full = pair.s_struct.mapv(clip_dbz);
    let corrected = Zip::from(&r_det).and(&pair.s_res).map_collect(|&r, &e| clip_dbz(r + e));
    let hybrid = Zip::from(&pair.s_struct).and(&pair.s_res).map_collect(|&s, &e| clip_dbz(s + alpha * e));
    Ok([full, corrected, hybrid])
}

/// `K` sample pairs expanded into `3K` members. `fields` drive the horizon
/// (one frame per lead) and `residual_std` is the per-voxel spread from the
/// fitting window.
pub fn build_ensemble(
    last: ArrayView3<f64>,
    r_det: ArrayView4<f64>,
    fields: &PhysicalFields,
    residual_std: ArrayView3<f64>,
    cfg: &EnsembleConfig,
    solver: &SolverConfig,
) -> Result<EnsembleForecast> {
    cfg.validate()?;
    let horizon = r_det.shape()[0];
    if fields.frames() != horizon {
        return Err(Error::Shape(format!("{} field frames for horizon {horizon}", fields.frames())));
    }
    if residual_std.dim() != last.dim() {
        return Err(Error::Shape(format!("residual spread {:?} for grid {:?}", residual_std.shape(), last.shape())));
    }
    let stats = residual_std.mapv(|s| s * cfg.residual_scale);
    let triples: Vec<[Array4<f64>; 3]> = (0..cfg.k_members)
        .into_par_iter()
        .map(|k| {
            let seed_k = derive_seed(cfg.seed, k as u64);
            let perturbed = perturb_fields(fields, cfg.perturbation_scale, seed_k, solver.v_max)?;
            let s_struct = if horizon == 0 {
                Array4::zeros(r_det.raw_dim())
            } else {
                rollout(last, &perturbed, solver, false)?.frames
            };
            let s_res = sample_residual(stats.view(), horizon, seed_k)?;
            combine(&SamplePair { s_struct, s_res }, r_det, cfg.alpha)
        })
        .collect::<Result<_>>()?;
    let mut members = Vec::with_capacity(3 * cfg.k_members);
    let mut provenance = Vec::with_capacity(3 * cfg.k_members);
    for triple in triples {
        for (m, tag) in triple.into_iter().zip([Provenance::FullField, Provenance::PhysicsCorrected, Provenance::Hybrid]) {
            members.push(m);
            provenance.push(tag);
        }
    }
    Ok(EnsembleForecast { members, provenance, alpha: cfg.alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    fn fields(t: usize, dims: (usize, usize, usize)) -> PhysicalFields {
        let (d, h, w) = dims;
        let mut f = PhysicalFields::zeros(t, d, h, w);
        f.velocity.v.slice_mut(s![.., 2, .., .., ..]).fill(1.0);
        f.velocity.v.slice_mut(s![.., 1, .., .., ..]).fill(-0.5);
        f.kappa.fill(0.05);
        f.source.fill(0.3);
        f
    }

    fn scalar(v: f64) -> Array4<f64> {
        Array4::from_elem((1, 1, 1, 1), v)
    }

    #[test]
    fn combine_scalar_toy() {
        let pair = SamplePair { s_struct: scalar(10.0), s_res: scalar(2.0) };
        let m = combine(&pair, scalar(9.0).view(), 0.5).unwrap();
        assert_eq!([m[0][[0, 0, 0, 0]], m[1][[0, 0, 0, 0]], m[2][[0, 0, 0, 0]]], [10.0, 11.0, 11.0]);
    }

    #[test]
    fn combine_degeneracies() {
        let s = Array4::from_shape_fn((2, 1, 2, 3), |(t, _, y, x)| (t * 7 + y * 3 + x) as f64 * 4.5 - 9.0);
        let r = Array4::from_shape_fn((2, 1, 2, 3), |(t, _, y, x)| (t + y + x) as f64 * 3.3);
        let pair = SamplePair { s_struct: s.clone(), s_res: Array4::zeros(s.raw_dim()) };
        let m = combine(&pair, r.view(), 0.7).unwrap();
        assert_eq!(m[1], r);
        assert_eq!(m[2], m[0]);
        let pair = SamplePair { s_struct: s.clone(), s_res: s.mapv(|v| v * 0.1 + 1.0) };
        let m = combine(&pair, r.view(), 0.0).unwrap();
        assert_eq!(m[2], m[0]);
        let bad = SamplePair { s_struct: s.clone(), s_res: Array4::zeros((1, 1, 2, 3)) };
        assert!(matches!(combine(&bad, r.view(), 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn members_are_clipped() {
        let pair = SamplePair { s_struct: scalar(80.0), s_res: scalar(-100.0) };
        let m = combine(&pair, scalar(0.0).view(), 1.0).unwrap();
        assert_eq!([m[0][[0, 0, 0, 0]], m[1][[0, 0, 0, 0]], m[2][[0, 0, 0, 0]]], [75.0, -10.0, -10.0]);
    }

    #[test]
    fn zero_scale_keeps_fields() {
        let f = fields(2, (2, 6, 6));
        assert_eq!(perturb_fields(&f, 0.0, 9, 8.0).unwrap(), f);
        let a = perturb_fields(&f, 0.1, 1, 8.0).unwrap();
        let b = perturb_fields(&f, 0.1, 2, 8.0).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.velocity.v.shape(), b.velocity.v.shape());
        assert_eq!(a, perturb_fields(&f, 0.1, 1, 8.0).unwrap());
    }

    #[test]
    fn perturbation_rms_tracks_scale() {
        let f = fields(2, (3, 12, 12));
        let scale = 0.1;
        for seed in 0..20 {
            let p = perturb_fields(&f, scale, seed, 8.0).unwrap();
            let ratio_v = rms((&p.velocity.v - &f.velocity.v).iter()) / rms(f.velocity.v.iter());
            let ratio_s = rms((&p.source - &f.source).iter()) / rms(f.source.iter());
            for r in [ratio_v, ratio_s] {
                assert!((0.5 * scale..=2.0 * scale).contains(&r), "seed {seed}: {r}");
            }
        }
    }

    #[test]
    fn residual_samples() {
        let zero = Array3::zeros((2, 8, 8));
        assert!(sample_residual(zero.view(), 3, 1).unwrap().iter().all(|&v| v == 0.0));
        let sigma = 2.5;
        let stats = Array3::from_elem((4, 16, 16), sigma);
        let mut var = 0.0;
        let mut n = 0.0;
        for seed in 0..20 {
            let r = sample_residual(stats.view(), 2, seed).unwrap();
            var += r.iter().map(|v| v * v).sum::<f64>();
            n += r.len() as f64;
        }
        let std = (var / n).sqrt();
        assert!((std - sigma).abs() < 0.15 * sigma, "{std}");
        let a = sample_residual(stats.view(), 2, 7).unwrap();
        assert_eq!(a, sample_residual(stats.view(), 2, 7).unwrap());
        let mut bad = stats.clone();
        bad[[0, 0, 0]] = -1.0;
        assert!(sample_residual(bad.view(), 1, 0).is_err());
    }

    #[test]
    fn ensemble_counts_and_collapse() {
        let dims = (2, 10, 10);
        let last = Array3::from_shape_fn(dims, |(z, y, x)| ((z + 2 * y + 3 * x) % 11) as f64 * 5.0 - 10.0);
        let f = fields(3, dims);
        let solver = SolverConfig { seed: 4, ..Default::default() };
        let r_det = rollout(last.view(), &f, &solver, false).unwrap().frames;
        let zero_cfg = EnsembleConfig { k_members: 2, perturbation_scale: 0.0, ..Default::default() };
        let e = build_ensemble(last.view(), r_det.view(), &f, Array3::zeros(dims).view(), &zero_cfg, &solver).unwrap();
        assert_eq!(e.len(), 6);
        assert!(e.members.iter().all(|m| *m == r_det));
        let tags: Vec<_> = e.provenance.iter().map(|p| p.tag()).collect();
        assert_eq!(&tags[..3], &["full-field", "physics-corrected", "hybrid"]);

        let cfg = EnsembleConfig { k_members: 4, seed: 3, ..Default::default() };
        let spread_stats = Array3::from_elem(dims, 1.0);
        let a = build_ensemble(last.view(), r_det.view(), &f, spread_stats.view(), &cfg, &solver).unwrap();
        let b = build_ensemble(last.view(), r_det.view(), &f, spread_stats.view(), &cfg, &solver).unwrap();
        assert_eq!(a.len(), 12);
        assert!(a.spread() > 0.0);
        assert_eq!(a, b);
        for p in [Provenance::FullField, Provenance::PhysicsCorrected, Provenance::Hybrid] {
            assert_eq!(a.provenance.iter().filter(|&&q| q == p).count(), 4);
        }
    }
}
