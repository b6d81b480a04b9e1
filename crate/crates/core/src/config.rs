//! Flat run configuration covering every module, read from and written to
//! TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleConfig;
use crate::fitting::FitConfig;
use crate::solver::{Boundary, SolverConfig};
use crate::verify::Pooling;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,

    // solver
    pub m_samples: usize,
    pub dt: f64,
    pub v_max: f64,

    // fitting
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub lr_scale_potential: f64,
    pub lr_scale_log_kappa: f64,
    pub lr_scale_source: f64,
    pub m_fit: usize,
    pub resample_noise: bool,
    pub teacher_forcing: bool,
    pub lambda_adv: f64,
    pub lambda_diff: f64,
    pub lambda_div: f64,
    pub lambda_curl: f64,
    pub control_factor: [usize; 3],
    pub kappa0: f64,

    // forecast and ensemble
    pub horizon: usize,
    pub k_members: usize,
    pub alpha: f64,
    pub perturbation_scale: f64,
    pub residual_scale: f64,

    // verification
    pub thresholds: Vec<f64>,
    pub radii: Vec<usize>,
    pub pooling: usize,
    pub wind_radius_m: f64,
    pub wind_vtol_m: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        let f = FitConfig::default();
        let e = EnsembleConfig::default();
        RunConfig {
            seed: 0,
            m_samples: s.m_samples,
            dt: s.dt,
            v_max: s.v_max,
            epochs: f.epochs,
            lr: f.lr,
            lr_decay: f.lr_decay,
            decay_every: f.decay_every,
            lr_scale_potential: f.lr_scale_potential,
            lr_scale_log_kappa: f.lr_scale_log_kappa,
            lr_scale_source: f.lr_scale_source,
            m_fit: f.m_fit,
            resample_noise: f.resample_noise,
            teacher_forcing: f.teacher_forcing,
            lambda_adv: f.lambda_adv,
            lambda_diff: f.lambda_diff,
            lambda_div: f.lambda_div,
            lambda_curl: f.lambda_curl,
            control_factor: f.control_factor,
            kappa0: f.kappa0,
            horizon: 6,
            k_members: e.k_members,
            alpha: e.alpha,
            perturbation_scale: e.perturbation_scale,
            residual_scale: e.residual_scale,
            thresholds: vec![20.0, 30.0, 40.0, 50.0],
            radii: vec![1, 2, 4],
            pooling: 4,
            wind_radius_m: 5_000.0,
            wind_vtol_m: 500.0,
        }
    }
}

impl RunConfig {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig { m_samples: self.m_samples, seed: self.seed, dt: self.dt, v_max: self.v_max, boundary: Boundary::ZeroEcho }
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            lr: self.lr,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            lr_scale_potential: self.lr_scale_potential,
            lr_scale_log_kappa: self.lr_scale_log_kappa,
            lr_scale_source: self.lr_scale_source,
            m_fit: self.m_fit,
            resample_noise: self.resample_noise,
            teacher_forcing: self.teacher_forcing,
            seed: self.seed,
            lambda_adv: self.lambda_adv,
            lambda_diff: self.lambda_diff,
            lambda_div: self.lambda_div,
            lambda_curl: self.lambda_curl,
            control_factor: self.control_factor,
            kappa0: self.kappa0,
            dt: self.dt,
            v_max: self.v_max,
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            k_members: self.k_members,
            alpha: self.alpha,
            perturbation_scale: self.perturbation_scale,
            residual_scale: self.residual_scale,
            seed: self.seed,
        }
    }

    pub fn poolings(&self) -> [Pooling; 3] {
        [Pooling::None, Pooling::Avg(self.pooling), Pooling::Max(self.pooling)]
    }

    pub fn validate(&self) -> Result<()> {
        self.solver().validate()?;
        self.fit().validate()?;
        self.ensemble().validate()?;
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        if self.pooling == 0 {
            return Err(Error::Config("pooling window must be at least 1".into()));
        }
        if !(self.wind_radius_m > 0.0 && self.wind_vtol_m > 0.0) {
            return Err(Error::Config("wind radius and vertical tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
