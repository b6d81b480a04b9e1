//! Radially averaged power spectrum of a 2D field.

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Integer radial wavenumbers, ascending from 1.
    pub wavenumbers: Vec<usize>,
    /// `N / k` in cells with `N = min(H, W)`; descending.
    pub wavelengths: Vec<f64>,
    /// Mean power per bin.
    pub power: Vec<f64>,
    /// Number of Fourier coefficients per bin.
    pub counts: Vec<usize>,
    /// Log-log slope over wavelengths in `[4, N/4]` cells; `None` when
    /// fewer than two bins there carry power.
    pub slope: Option<f64>,
}

impl Spectrum {
    /// Wavelength of the bin with the largest mean power.
    pub fn dominant_wavelength(&self) -> Option<f64> {
        let (i, p) = self.power.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        (*p > 0.0).then(|| self.wavelengths[i])
    }

    /// Sum of all coefficient powers; equals the field variance.
    pub fn total_power(&self) -> f64 {
        self.power.iter().zip(&self.counts).map(|(p, &c)| p * c as f64).sum()
    }
}

fn fft2(field: ArrayView2<f64>) -> Array2<Complex<f64>> {
    let (h, w) = field.dim();
    let mean = field.mean().unwrap_or(0.0);
    let mut buf = field.mapv(|v| Complex::new(v - mean, 0.0));
    let mut planner = FftPlanner::new();
    for (axis, n) in [(Axis(1), w), (Axis(0), h)] {
        let fft = planner.plan_fft_forward(n);
        let mut scratch = vec![Complex::default(); n];
        for mut lane in buf.lanes_mut(axis) {
            scratch.iter_mut().zip(lane.iter()).for_each(|(s, v)| *s = *v);
            fft.process(&mut scratch);
            lane.iter_mut().zip(&scratch).for_each(|(v, s)| *v = *s);
        }
    }
    buf
}

fn signed_freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

pub fn psd_radial(field: ArrayView2<f64>) -> Result<Spectrum> {
    let (h, w) = field.dim();
    if h < 8 || w < 8 {
        return Err(Error::Shape(format!("spectrum needs at least 8x8, got {h}x{w}")));
    }
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("spectrum input has non-finite values".into()));
    }
    let n = h.min(w);
    let norm = ((h * w) as f64).powi(2);
    let spec = fft2(field);

    let kmax = (n as f64 * 0.5f64.hypot(0.5)).round() as usize;
    let mut sum = vec![0.0; kmax + 1];
    let mut count = vec![0usize; kmax + 1];
    for ((y, x), c) in spec.indexed_iter() {
        if y == 0 && x == 0 {
            continue;
        }
        let r = n as f64 * (signed_freq(y, h) / h as f64).hypot(signed_freq(x, w) / w as f64);
        let k = (r.round() as usize).clamp(1, kmax);
        sum[k] += c.norm_sqr() / norm;
        count[k] += 1;
    }

    let mut out = Spectrum { wavenumbers: vec![], wavelengths: vec![], power: vec![], counts: vec![], slope: None };
    for k in 1..=kmax {
        if count[k] == 0 {
            continue;
        }
        out.wavenumbers.push(k);
        out.wavelengths.push(n as f64 / k as f64);
        out.power.push(sum[k] / count[k] as f64);
        out.counts.push(count[k]);
    }

    let band: Vec<(f64, f64)> = out
        .wavenumbers
        .iter()
        .zip(&out.power)
        .filter(|(&k, &p)| k >= 4 && k <= n / 4 && p > 0.0)
        .map(|(&k, &p)| ((k as f64).ln(), p.ln()))
        .collect();
    if band.len() >= 2 {
        let m = band.len() as f64;
        let mx = band.iter().map(|b| b.0).sum::<f64>() / m;
        let my = band.iter().map(|b| b.1).sum::<f64>() / m;
        let sxy: f64 = band.iter().map(|b| (b.0 - mx) * (b.1 - my)).sum();
        let sxx: f64 = band.iter().map(|b| (b.0 - mx).powi(2)).sum();
        out.slope = Some(sxy / sxx);
    }
    Ok(out)
}
