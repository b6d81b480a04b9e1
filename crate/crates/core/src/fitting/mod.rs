//! Estimation of the velocity potentials, diffusivity and source from an
//! observed sequence by gradient descent on the step-wise physics loss.

pub mod adjoint;
pub mod controls;
pub mod loss;
pub mod prior;

use ndarray::{Array3, Array4, ArrayView3};
use serde::{Deserialize, Serialize};

pub use adjoint::{Forward, ModelSettings, Problem};
pub use controls::{ControlFields, Upsampler};
pub use loss::{loss_phys, LossBreakdown, LossChain, LossWeights};

use crate::solver::{rollout, PhysicalFields, SolverConfig};
use crate::volgrid::VolumeSequence;
use crate::{Error, Result};

/// Loss above which a fit is abandoned.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Learning-rate factor applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Step-size multipliers per control block, which carry different units.
    pub lr_scale_potential: f64,
    pub lr_scale_log_kappa: f64,
    pub lr_scale_source: f64,
    /// Monte-Carlo samples per voxel while fitting.
    pub m_fit: usize,
    /// Draw fresh Monte-Carlo noise every epoch instead of reusing one set.
    pub resample_noise: bool,
    /// Start each fitted step from the observed frame (see [`ModelSettings`]).
    pub teacher_forcing: bool,
    pub seed: u64,
    pub lambda_adv: f64,
    pub lambda_diff: f64,
    /// Weight of the penalty on the squared Laplacian of the coarse scalar
    /// potential (the divergence of its velocity).
    pub lambda_div: f64,
    /// Same penalty on each vector-potential component.
    pub lambda_curl: f64,
    /// Coarsening of the control grid per spatial axis (z, y, x).
    pub control_factor: [usize; 3],
    pub kappa0: f64,
    pub dt: f64,
    pub v_max: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 500,
            lr: 0.1,
            lr_decay: 0.95,
            decay_every: 5,
            lr_scale_potential: 2.0,
            lr_scale_log_kappa: 5.0,
            lr_scale_source: 1.0,
            m_fit: 4,
            resample_noise: true,
            teacher_forcing: true,
            seed: 0,
            lambda_adv: 1.0,
            lambda_diff: 1.0,
            lambda_div: 30.0,
            lambda_curl: 3.0,
            control_factor: [1, 4, 4],
            kappa0: 1e-2,
            dt: 1.0,
            v_max: crate::helmholtz::DEFAULT_V_MAX,
        }
    }
}

impl FitConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_adv: self.lambda_adv, lambda_diff: self.lambda_diff }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return bad("lr_decay must lie in (0, 1] and decay_every must be positive");
        }
        let scales = [self.lr_scale_potential, self.lr_scale_log_kappa, self.lr_scale_source];
        if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("lr scales must be positive");
        }
        if self.m_fit == 0 {
            return bad("m_fit must be at least 1");
        }
        if self.control_factor.contains(&0) {
            return bad("control_factor entries must be positive");
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return bad("kappa0 must be positive");
        }
        if ![self.lambda_div, self.lambda_curl].iter().all(|l| *l >= 0.0 && l.is_finite()) {
            return bad("curvature weights must be non-negative");
        }
        if !(self.dt > 0.0) || !(self.v_max > 0.0) {
            return bad("dt and v_max must be positive");
        }
        self.weights().validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    fn block_scales(&self, c: &ControlFields) -> Vec<f64> {
        (0..c.params.len())
            .map(|i| match c.block_name(i) {
                "phi" | "psi" => self.lr_scale_potential,
                "log_kappa" => self.lr_scale_log_kappa,
                _ => self.lr_scale_source,
            })
            .collect()
    }

    fn settings(&self) -> ModelSettings {
        ModelSettings {
            dt: self.dt,
            m_samples: self.m_fit,
            seed: self.seed,
            v_max: self.v_max,
            weights: self.weights(),
            teacher_forcing: self.teacher_forcing,
        }
    }
}

/// Bias-corrected first/second-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step_scaled(params, grad, lr, |_| 1.0);
    }

    /// Step with a per-parameter multiplier on the learning rate.
    pub fn step_scaled(&mut self, params: &mut [f64], grad: &[f64], lr: f64, scale: impl Fn(usize) -> f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, ((p, &g), (m, v))) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())).enumerate() {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * scale(i) * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Best-loss iterate.
    pub controls: ControlFields,
    /// Full-resolution fields of the best iterate, one frame per fitted step.
    pub fields: PhysicalFields,
    pub best_epoch: usize,
    pub best: LossBreakdown,
    /// Loss of every epoch.
    pub trace: Vec<LossBreakdown>,
    /// Best loss so far after every epoch.
    pub best_trace: Vec<f64>,
    /// Per-voxel RMS prediction error of the best iterate over the window.
    pub residual_std: Array3<f64>,
}

/// Fit fields to `history`: frame 0 is the initial state and every later
/// frame a target.
pub fn fit_fields(history: &VolumeSequence, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (t_len, d, h, w) = history.dims();
    if t_len < 2 {
        return Err(Error::Input(format!("fitting needs at least 2 frames, got {t_len}")));
    }
    let up = Upsampler::coarsened((d, h, w).into(), cfg.control_factor)?;
    let problem = Problem::new(history, up.clone(), cfg.settings())?;
    let mut controls = ControlFields::initial(t_len - 1, up.coarse, cfg.kappa0.ln());
    let mut adam = Adam::new(controls.params.len());
    let scales = cfg.block_scales(&controls);

    let mut best: Option<(usize, LossBreakdown, ControlFields)> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best_trace = Vec::with_capacity(cfg.epochs);
    let noise_epoch = |epoch: usize| if cfg.resample_noise { epoch } else { 0 };
    for epoch in 0..cfg.epochs {
        let (mut loss, mut grad) = problem.gradient(&controls, noise_epoch(epoch))?;
        loss.total += prior::curvature_penalty(&controls, &up, cfg.lambda_div, cfg.lambda_curl, Some(&mut grad));
        if !(loss.total <= DIVERGENCE_LOSS) {
            let mut totals: Vec<f64> = trace.iter().map(|l: &LossBreakdown| l.total).collect();
            totals.push(loss.total);
            return Err(Error::Diverged { epoch, loss: loss.total, trace: totals });
        }
        if best.as_ref().is_none_or(|b| loss.total < b.1.total) {
            best = Some((epoch, loss.clone(), controls.clone()));
        }
        best_trace.push(best.as_ref().map(|b| b.1.total).expect("set above"));
        trace.push(loss);
        adam.step_scaled(&mut controls.params, &grad.params, cfg.lr_at(epoch), |i| scales[i]);
    }
    let (best_epoch, best_loss, controls) = best.expect("at least one epoch");
    let fwd = problem.forward(&controls, noise_epoch(best_epoch))?;
    let residual_std = problem.residual_rms(&fwd);
    Ok(FitResult { controls, fields: fwd.fields, best_epoch, best: best_loss, trace, best_trace, residual_std })
}

/// Roll out `horizon` frames from `last` with the final fitted frame of the
/// fields held constant.
pub fn forecast_with_fields(
    last: ArrayView3<f64>,
    fields: &PhysicalFields,
    horizon: usize,
    solver: &SolverConfig,
) -> Result<Array4<f64>> {
    let (d, h, w) = last.dim();
    if horizon == 0 {
        return Ok(Array4::zeros((0, d, h, w)));
    }
    if fields.frames() == 0 {
        return Err(Error::Input("no fitted fields to extrapolate".into()));
    }
    let held = fields.persist(fields.frames() - 1, horizon);
    Ok(rollout(last, &held, solver, false)?.frames)
}

/// Deterministic forecast: fit on `past`, then extrapolate from its last frame.
pub fn forecast_from_history(
    past: &VolumeSequence,
    horizon: usize,
    fit: &FitConfig,
    solver: &SolverConfig,
) -> Result<(Array4<f64>, FitResult)> {
    let result = fit_fields(past, fit)?;
    let last = past.frame_filled(past.frames() - 1)?;
    let frames = forecast_with_fields(last.view(), &result.fields, horizon, solver)?;
    Ok((frames, result))
}
