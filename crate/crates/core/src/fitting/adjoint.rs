//! Forward model from control grids to the loss, and its reverse-mode
//! gradient.
//!
//! The forward pass runs the solver step itself with noise keyed by
//! `(seed, epoch, step)`, so for a fixed epoch the loss is a deterministic,
//! piecewise-smooth function of the controls. Subgradients are zero at L1
//! kinks; trilinear reads use the slope rule of [`Sampler::sample_grad`].

use ndarray::{Array3, Array4, Array5, ArrayView3, Axis};
use rayon::prelude::*;

use super::controls::{ControlFields, Upsampler};
use super::loss::{loss_terms, LossBreakdown, LossChain, LossWeights};
use crate::helmholtz::{clamp_magnitude, curl_adjoint, gradient_adjoint, velocity_frame};
use crate::interp::{cell_of, scatter, Dims3, Sampler};
use crate::rng::{NoiseKey, Stream};
use crate::solver::{departure, displacement_std, sample_position, step_with_key, Boundary, PhysicalFields, SolverConfig};
use crate::volgrid::VolumeSequence;
use crate::{Error, Result, MAX_DBZ, NO_ECHO_DBZ};

/// Settings of the forward model that stay fixed during a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub dt: f64,
    pub m_samples: usize,
    pub seed: u64,
    pub v_max: f64,
    pub weights: LossWeights,
    /// Start every step from the observed frame instead of the previous
    /// prediction.
    pub teacher_forcing: bool,
}

/// Fitting problem: initial state, targets and the control parameterization.
#[derive(Debug, Clone)]
pub struct Problem {
    /// Observed frames `0..T`, invalid voxels filled; step inputs under
    /// teacher forcing.
    observed: Array4<f64>,
    truth: Array4<f64>,
    valid: Array4<bool>,
    counts: Vec<usize>,
    up: Upsampler,
    settings: ModelSettings,
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Velocity before the magnitude guard, T×3×D×H×W.
    pub raw_velocity: Array5<f64>,
    pub fields: PhysicalFields,
    /// `R_0..R_T`
    pub states: Array4<f64>,
    /// State read by each step: `states[t]`, or the observed frame `t`
    /// under teacher forcing.
    pub inputs: Array4<f64>,
    pub advected: Array4<f64>,
    pub pre_source: Array4<f64>,
    pub loss: LossBreakdown,
}

fn check_finite<'a>(name: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    match it.position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { tensor: name.into(), index }),
        None => Ok(()),
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn noise_key(seed: u64, epoch: usize, t: usize) -> NoiseKey {
    NoiseKey::new(seed, Stream::FitNoise, ((epoch as u64) << 32) | t as u64)
}

impl Problem {
    /// Frame 0 of `history` is the initial state; frames `1..` are the targets.
    pub fn new(history: &VolumeSequence, up: Upsampler, settings: ModelSettings) -> Result<Self> {
        let (t_len, d, h, w) = history.dims();
        if t_len < 2 {
            return Err(Error::Input(format!("fitting needs at least 2 frames, got {t_len}")));
        }
        if up.fine != Dims3::new(d, h, w) {
            return Err(Error::Shape(format!("control upsampler targets {} but grid is {:?}", up.fine, (d, h, w))));
        }
        if settings.m_samples == 0 || !(settings.dt > 0.0) || !(settings.v_max > 0.0) {
            return Err(Error::Config("m_samples, dt and v_max must be positive".into()));
        }
        settings.weights.validate()?;
        let mut observed = Array4::zeros((t_len - 1, d, h, w));
        for t in 0..t_len - 1 {
            observed.index_axis_mut(Axis(0), t).assign(&history.frame_filled(t)?);
        }
        let truth = history.data().slice(ndarray::s![1.., .., .., ..]).mapv(f64::from);
        let valid = history.mask().slice(ndarray::s![1.., .., .., ..]).to_owned();
        let counts = valid.outer_iter().map(|m| m.iter().filter(|&&b| b).count()).collect();
        Ok(Problem { observed, truth, valid, counts, up, settings })
    }

    pub fn steps(&self) -> usize {
        self.truth.shape()[0]
    }

    pub fn grid(&self) -> Dims3 {
        self.up.fine
    }

    pub fn upsampler(&self) -> &Upsampler {
        &self.up
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn initial_state(&self) -> ArrayView3<'_, f64> {
        self.observed.index_axis(Axis(0), 0)
    }

    pub fn truth(&self) -> &Array4<f64> {
        &self.truth
    }

    pub fn valid(&self) -> &Array4<bool> {
        &self.valid
    }

    fn check_controls(&self, c: &ControlFields) -> Result<()> {
        if c.steps != self.steps() || c.grid != self.up.coarse {
            return Err(Error::Shape(format!(
                "controls {} x {} for problem {} x {}",
                c.steps,
                c.grid,
                self.steps(),
                self.up.coarse
            )));
        }
        check_finite("controls", c.params.iter())
    }

    /// Full-resolution fields from the controls: returns the unclamped
    /// velocity alongside the clamped physical fields.
    pub fn expand(&self, c: &ControlFields) -> Result<(Array5<f64>, PhysicalFields)> {
        self.check_controls(c)?;
        let Dims3 { d, h, w } = self.up.fine;
        let t_len = self.steps();
        let mut fields = PhysicalFields::zeros(t_len, d, h, w);
        let mut raw = Array5::zeros((t_len, 3, d, h, w));
        let (phi, psi, lk, src) = (c.phi(), c.psi(), c.log_kappa(), c.source());
        for t in 0..t_len {
            let phi_f = self.up.up(phi.index_axis(Axis(0), t));
            let mut psi_f = Array4::zeros((3, d, h, w));
            for a in 0..3 {
                psi_f.index_axis_mut(Axis(0), a).assign(&self.up.up(psi.index_axis(Axis(0), t).index_axis(Axis(0), a)));
                let k = self.up.up(lk.index_axis(Axis(0), t).index_axis(Axis(0), a)).mapv(f64::exp);
                fields.kappa.index_axis_mut(Axis(0), t).index_axis_mut(Axis(0), a).assign(&k);
            }
            let mut v = velocity_frame(phi_f.view(), psi_f.view())?;
            raw.index_axis_mut(Axis(0), t).assign(&v);
            clamp_magnitude(&mut v, self.settings.v_max);
            fields.velocity.v.index_axis_mut(Axis(0), t).assign(&v);
            fields.source.index_axis_mut(Axis(0), t).assign(&self.up.up(src.index_axis(Axis(0), t)));
        }
        check_finite("velocity", fields.velocity.v.iter())?;
        check_finite("kappa", fields.kappa.iter())?;
        check_finite("source", fields.source.iter())?;
        Ok((raw, fields))
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            m_samples: self.settings.m_samples,
            seed: self.settings.seed,
            dt: self.settings.dt,
            v_max: self.settings.v_max,
            boundary: Boundary::ZeroEcho,
        }
    }

    pub fn forward(&self, c: &ControlFields, epoch: usize) -> Result<Forward> {
        let (raw_velocity, fields) = self.expand(c)?;
        let Dims3 { d, h, w } = self.up.fine;
        let t_len = self.steps();
        let cfg = self.solver_config();
        let mut states = Array4::zeros((t_len + 1, d, h, w));
        let mut advected = Array4::zeros((t_len, d, h, w));
        let mut pre_source = Array4::zeros((t_len, d, h, w));
        let mut inputs = Array4::zeros((t_len, d, h, w));
        states.index_axis_mut(Axis(0), 0).assign(&self.observed.index_axis(Axis(0), 0));
        for t in 0..t_len {
            let src = if self.settings.teacher_forcing { &self.observed } else { &states };
            inputs.index_axis_mut(Axis(0), t).assign(&src.index_axis(Axis(0), t));
            let key = noise_key(self.settings.seed, epoch, t);
            let out = step_with_key(inputs.index_axis(Axis(0), t), fields.frame(t), &cfg, &key, true)?;
            check_finite("state", out.next.iter())?;
            advected.index_axis_mut(Axis(0), t).assign(out.advected.as_ref().expect("intermediates"));
            pre_source.index_axis_mut(Axis(0), t).assign(out.pre_source.as_ref().expect("intermediates"));
            states.index_axis_mut(Axis(0), t + 1).assign(&out.next);
        }
        let predicted = states.slice(ndarray::s![1.., .., .., ..]);
        let chain = LossChain { advected: advected.view(), pre_source: pre_source.view(), predicted };
        let loss = loss_terms(&chain, &self.truth, &self.valid, self.settings.weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite { tensor: "loss".into(), index: 0 });
        }
        Ok(Forward { raw_velocity, fields, states, inputs, advected, pre_source, loss })
    }

    /// Loss only.
    pub fn loss(&self, c: &ControlFields, epoch: usize) -> Result<LossBreakdown> {
        Ok(self.forward(c, epoch)?.loss)
    }

    /// Loss and its gradient with respect to every control parameter.
    pub fn gradient(&self, c: &ControlFields, epoch: usize) -> Result<(LossBreakdown, ControlFields)> {
        let fwd = self.forward(c, epoch)?;
        let grad = self.backward(&fwd, epoch)?;
        Ok((fwd.loss, grad))
    }

    /// L1 subgradient of a per-step mean against the targets of step `t`.
    fn l1_grad(&self, t: usize, a: &[f64], i: usize) -> f64 {
        let n = self.counts[t];
        if n == 0 || !self.valid_flat(t)[i] {
            return 0.0;
        }
        sign(a[i] - self.truth_flat(t)[i]) / n as f64
    }

    fn truth_flat(&self, t: usize) -> &[f64] {
        let n = self.up.fine.len();
        &self.truth.as_slice().expect("standard layout")[t * n..(t + 1) * n]
    }

    fn valid_flat(&self, t: usize) -> &[bool] {
        let n = self.up.fine.len();
        &self.valid.as_slice().expect("standard layout")[t * n..(t + 1) * n]
    }

    fn backward(&self, fwd: &Forward, epoch: usize) -> Result<ControlFields> {
        let dims = self.up.fine;
        let n = dims.len();
        let t_len = self.steps();
        let ModelSettings { dt, m_samples: m, seed, v_max, weights, teacher_forcing } = self.settings.clone();
        let lo = NO_ECHO_DBZ as f64;
        let hi = MAX_DBZ as f64;
        let flat = |a: &Array4<f64>, t: usize| -> Vec<f64> { a.index_axis(Axis(0), t).iter().copied().collect() };

        let mut grad = ControlFields::zeros(t_len, self.up.coarse);
        // adjoint of the state that the current step produces
        let mut g_next = vec![0.0; n];
        for t in (0..t_len).rev() {
            let state = flat(&fwd.inputs, t);
            let next = flat(&fwd.states, t + 1);
            let adv = flat(&fwd.advected, t);
            let pre = flat(&fwd.pre_source, t);
            let frame = fwd.fields.frame(t);
            let v: Vec<[f64; 3]> = (0..n).map(|i| { let (z, y, x) = dims.unravel(i); [0, 1, 2].map(|a| frame.v[[a, z, y, x]]) }).collect();
            let kappa: Vec<[f64; 3]> = (0..n).map(|i| { let (z, y, x) = dims.unravel(i); [0, 1, 2].map(|a| frame.kappa[[a, z, y, x]]) }).collect();
            let src: Vec<f64> = frame.source.iter().copied().collect();
            let sampler = Sampler::new(&state, dims, lo);
            let key = noise_key(seed, epoch, t);

            let taps_per = m + 1;
            let mut taps = vec![([0.0f64; 3], 0.0f64); n * taps_per];
            // per voxel: dL/dv (3), dL/dlog κ (3), dL/ds
            let mut local = vec![[0.0f64; 7]; n];
            taps.par_chunks_mut(taps_per)
                .zip(local.par_iter_mut())
                .enumerate()
                .for_each(|(i, (tp, out))| {
                    let (z, y, x) = dims.unravel(i);
                    let gn = g_next[i] + self.l1_grad(t, &next, i);
                    let r_out = pre[i] + src[i] * dt;
                    let g_out = if (lo..=hi).contains(&r_out) { gn } else { 0.0 };
                    out[6] = g_out * dt;
                    let g_pre = g_out + weights.lambda_diff * self.l1_grad(t, &pre, i);
                    let g_adv = weights.lambda_adv * self.l1_grad(t, &adv, i);

                    let base = departure(z, y, x, v[i], dt);
                    let sd = displacement_std(kappa[i], dt);
                    let mut g_base = [0.0; 3];
                    let mut g_sd = [0.0; 3];
                    if sd == [0.0; 3] {
                        let (_, dv) = sampler.sample_grad(base);
                        for a in 0..3 {
                            g_base[a] += g_pre * dv[a];
                        }
                        tp[0] = (base, g_pre);
                    } else {
                        let gm = g_pre / m as f64;
                        for s in 0..m {
                            let xi = key.normal3(i as u64, s as u64);
                            let p = sample_position(base, sd, xi);
                            let (_, dv) = sampler.sample_grad(p);
                            for a in 0..3 {
                                g_base[a] += gm * dv[a];
                                g_sd[a] += gm * dv[a] * xi[a];
                            }
                            tp[s] = (p, gm);
                        }
                    }
                    if g_adv != 0.0 {
                        let (_, dv) = sampler.sample_grad(base);
                        for a in 0..3 {
                            g_base[a] += g_adv * dv[a];
                        }
                        tp[m] = (base, g_adv);
                    }
                    for a in 0..3 {
                        out[a] = -dt * g_base[a];
                        // sd = sqrt(2Δt·exp(log κ)) so d sd / d log κ = sd / 2
                        out[3 + a] = g_sd[a] * 0.5 * sd[a];
                    }
                });

            // state adjoint for the previous step; sequential for a fixed summation order
            let mut g_state = vec![0.0; n];
            if t > 0 && !teacher_forcing {
                for &(p, g) in &taps {
                    scatter(&mut g_state, dims, p, g);
                }
            }

            // magnitude guard: v = k·u with k = v_max/|u| where the guard is active
            let raw = fwd.raw_velocity.index_axis(Axis(0), t);
            let mut g_raw = Array4::zeros((3, dims.d, dims.h, dims.w));
            for (i, l) in local.iter().enumerate() {
                let (z, y, x) = dims.unravel(i);
                let u = [0, 1, 2].map(|a| raw[[a, z, y, x]]);
                let mag = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                let gv = [l[0], l[1], l[2]];
                let g = if mag > v_max {
                    let k = v_max / mag;
                    let dot = (gv[0] * u[0] + gv[1] * u[1] + gv[2] * u[2]) / (mag * mag);
                    [0, 1, 2].map(|a| k * (gv[a] - u[a] * dot))
                } else {
                    gv
                };
                for a in 0..3 {
                    g_raw[[a, z, y, x]] = g[a];
                }
            }
            let g_phi = gradient_adjoint(g_raw.view());
            let g_psi = curl_adjoint(g_raw.view());
            let g_lk = Array4::from_shape_fn((3, dims.d, dims.h, dims.w), |(a, z, y, x)| local[dims.index(z, y, x)][3 + a]);
            let g_src = Array3::from_shape_fn((dims.d, dims.h, dims.w), |(z, y, x)| local[dims.index(z, y, x)][6]);

            grad.phi_mut().index_axis_mut(Axis(0), t).assign(&self.up.up_transpose(g_phi.view()));
            for a in 0..3 {
                grad.psi_mut()
                    .index_axis_mut(Axis(0), t)
                    .index_axis_mut(Axis(0), a)
                    .assign(&self.up.up_transpose(g_psi.index_axis(Axis(0), a)));
                grad.log_kappa_mut()
                    .index_axis_mut(Axis(0), t)
                    .index_axis_mut(Axis(0), a)
                    .assign(&self.up.up_transpose(g_lk.index_axis(Axis(0), a)));
            }
            grad.source_mut().index_axis_mut(Axis(0), t).assign(&self.up.up_transpose(g_src.view()));
            g_next = g_state;
        }
        check_finite("gradient", grad.params.iter())?;
        Ok(grad)
    }

    /// Discrete state of every non-smooth operation in the forward pass:
    /// trilinear cells of all reads, L1 residual signs, clip and guard
    /// activity. Equal signatures at two control points mean the loss is
    /// smooth along the segment between them (up to events of measure zero).
    pub fn kink_signature(&self, c: &ControlFields, epoch: usize) -> Result<Vec<i64>> {
        let fwd = self.forward(c, epoch)?;
        let dims = self.up.fine;
        let n = dims.len();
        let dt = self.settings.dt;
        let m = self.settings.m_samples;
        let (lo, hi) = (NO_ECHO_DBZ as f64, MAX_DBZ as f64);
        let mut sig = Vec::new();
        for t in 0..self.steps() {
            let frame = fwd.fields.frame(t);
            let key = noise_key(self.settings.seed, epoch, t);
            let truth = self.truth_flat(t);
            let valid = self.valid_flat(t);
            let raw = fwd.raw_velocity.index_axis(Axis(0), t);
            for i in 0..n {
                let (z, y, x) = dims.unravel(i);
                let v = [0, 1, 2].map(|a| frame.v[[a, z, y, x]]);
                let k = [0, 1, 2].map(|a| frame.kappa[[a, z, y, x]]);
                let base = departure(z, y, x, v, dt);
                sig.extend(cell_of(base));
                let sd = displacement_std(k, dt);
                if sd != [0.0; 3] {
                    for s in 0..m {
                        sig.extend(cell_of(sample_position(base, sd, key.normal3(i as u64, s as u64))));
                    }
                }
                let pre = fwd.pre_source[[t, z, y, x]];
                let out = pre + frame.source[[z, y, x]] * dt;
                sig.push(if out < lo { -1 } else if out > hi { 1 } else { 0 });
                let mag2: f64 = (0..3).map(|a| raw[[a, z, y, x]].powi(2)).sum();
                sig.push((mag2.sqrt() > self.settings.v_max) as i64);
                if valid[i] {
                    for val in [fwd.advected[[t, z, y, x]], pre, fwd.states[[t + 1, z, y, x]]] {
                        sig.push(sign(val - truth[i]) as i64);
                    }
                }
            }
        }
        Ok(sig)
    }

    /// Per-voxel root-mean-square of the prediction error over the steps,
    /// counting valid voxels only.
    pub fn residual_rms(&self, fwd: &Forward) -> Array3<f64> {
        let Dims3 { d, h, w } = self.up.fine;
        let mut sum = Array3::<f64>::zeros((d, h, w));
        let mut cnt = Array3::<f64>::zeros((d, h, w));
        for t in 0..self.steps() {
            ndarray::Zip::from(&mut sum)
                .and(&mut cnt)
                .and(fwd.states.index_axis(Axis(0), t + 1))
                .and(self.truth.index_axis(Axis(0), t))
                .and(self.valid.index_axis(Axis(0), t))
                .for_each(|s, c, &p, &y, &ok| {
                    if ok {
                        *s += (p - y) * (p - y);
                        *c += 1.0;
                    }
                });
        }
        ndarray::Zip::from(&sum).and(&cnt).map_collect(|&s, &c| if c > 0.0 { (s / c).sqrt() } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::GridMeta;

    fn settings(m: usize) -> ModelSettings {
        ModelSettings { dt: 1.0, m_samples: m, seed: 5, v_max: 8.0, weights: LossWeights::default(), teacher_forcing: false }
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn zero_everything_gives_zero_gradient() {
        let dims = (2, 4, 4);
        let seq = VolumeSequence::from_data(Array4::from_elem((3, 2, 4, 4), -10.0f32), GridMeta::default_for_depth(2)).unwrap();
        let up = Upsampler::coarsened(dims.into(), [1, 2, 2]).unwrap();
        let p = Problem::new(&seq, up.clone(), settings(2)).unwrap();
        let c = ControlFields::initial(2, up.coarse, (1e-2f64).ln());
        let (loss, g) = p.gradient(&c, 0).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn source_gradient_by_hand() {
        // 2-voxel column per level; one step with no motion and tiny diffusivity
        let data = Array4::from_shape_vec((2, 2, 2, 2), vec![
            0.0f32, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            1.0, -1.0, 3.0, 0.0, 2.0, 5.0, -2.0, 0.25,
        ])
        .unwrap();
        let seq = VolumeSequence::from_data(data, GridMeta::default_for_depth(2)).unwrap();
        let up = Upsampler::new(Dims3::new(1, 1, 1), Dims3::new(2, 2, 2)).unwrap();
        let w = LossWeights { lambda_adv: 0.0, lambda_diff: 0.0 };
        let s = ModelSettings { dt: 0.5, m_samples: 1, seed: 1, v_max: 8.0, weights: w, teacher_forcing: false };
        let p = Problem::new(&seq, up.clone(), s).unwrap();
        let mut c = ControlFields::initial(1, up.coarse, -60.0);
        c.source_mut().fill(1.0);
        let (_, g) = p.gradient(&c, 0).unwrap();
        // prediction is 0.5 everywhere: sum of sign(0.5 - truth)·Δt/N over voxels
        let truth = [1.0, -1.0, 3.0, 0.0, 2.0, 5.0, -2.0, 0.25];
        let want: f64 = truth.iter().map(|&y: &f64| sign(0.5 - y) * 0.5 / 8.0).sum();
        assert!((g.source()[[0, 0, 0, 0]] - want).abs() < 1e-15);
    }

    /// Random full-resolution instance for finite-difference checks.
    pub(crate) fn random_instance(seed: u64, teacher_forcing: bool) -> (Problem, ControlFields) {
        let mut st = seed;
        let (t, d, h, w) = (6, 8, 8, 8);
        let data = Array4::from_shape_fn((t + 1, d, h, w), |_| (-10.0 + 70.0 * lcg(&mut st)) as f32);
        let seq = VolumeSequence::from_data(data, GridMeta::default_for_depth(d)).unwrap();
        let up = Upsampler::new(Dims3::new(d, h, w), Dims3::new(d, h, w)).unwrap();
        let p = Problem::new(&seq, up.clone(), ModelSettings { teacher_forcing, ..settings(2) }).unwrap();
        let mut c = ControlFields::zeros(t, up.coarse);
        let nb = t * d * h * w;
        for (k, v) in c.params.iter_mut().enumerate() {
            let u = lcg(&mut st) - 0.5;
            *v = match k / nb {
                0..=3 => 1.5 * u,
                4..=6 => -1.5 + u,
                _ => 4.0 * u,
            };
        }
        (p, c)
    }

    fn check_finite_differences(teacher_forcing: bool) {
        let (p, c) = random_instance(11, teacher_forcing);
        let (_, g) = p.gradient(&c, 3).unwrap();
        let sig0 = p.kink_signature(&c, 3).unwrap();
        let h = 1e-3;
        let mut st = 99u64;
        let mut checked = 0;
        let mut tries = 0;
        while checked < 40 && tries < 2000 {
            tries += 1;
            let k = (lcg(&mut st) * c.params.len() as f64) as usize;
            let mut cp = c.clone();
            cp.params[k] += h;
            let mut cm = c.clone();
            cm.params[k] -= h;
            if p.kink_signature(&cp, 3).unwrap() != sig0 || p.kink_signature(&cm, 3).unwrap() != sig0 {
                continue;
            }
            let fd = (p.loss(&cp, 3).unwrap().total - p.loss(&cm, 3).unwrap().total) / (2.0 * h);
            let a = g.params[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "{} [{k}]: adjoint {a} vs fd {fd}", c.block_name(k));
            checked += 1;
        }
        assert_eq!(checked, 40);
    }

    #[test]
    fn finite_differences_agree_chained() {
        check_finite_differences(false);
    }

    #[test]
    fn finite_differences_agree_forced() {
        check_finite_differences(true);
    }
}
