//! Deep-supervision physics loss: L1 misfit of the advected state, the
//! diffused state and the final prediction against the next observed frame,
//! summed over steps.

use ndarray::{Array4, ArrayView4, Axis, Zip};

use crate::volgrid::VolumeSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_diff: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_adv: 1.0, lambda_diff: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_adv >= 0.0 && self.lambda_diff >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-step intermediates of a rollout, each T×D×H×W: step `t` maps `R_t`
/// to `R_{t+1}`.
#[derive(Debug, Clone, Copy)]
pub struct LossChain<'a> {
    pub advected: ArrayView4<'a, f64>,
    pub pre_source: ArrayView4<'a, f64>,
    pub predicted: ArrayView4<'a, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    /// `Σ_t (λ_adv·L_adv + λ_diff·L_diff + L_pred)`
    pub total: f64,
    /// Unweighted sums over steps.
    pub adv: f64,
    pub diff: f64,
    pub pred: f64,
    /// `[L_adv, L_diff, L_pred]` for every step.
    pub per_step: Vec<[f64; 3]>,
}

/// Mean absolute difference over valid voxels (0 when none are valid).
fn masked_l1(a: ndarray::ArrayView3<f64>, b: ndarray::ArrayView3<f64>, valid: ndarray::ArrayView3<bool>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    Zip::from(a).and(b).and(valid).for_each(|&x, &y, &m| {
        if m {
            sum += (x - y).abs();
            n += 1;
        }
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Loss against `truth` (T×D×H×W, aligned with the chain) restricted to `valid`.
pub fn loss_terms(chain: &LossChain<'_>, truth: &Array4<f64>, valid: &Array4<bool>, w: LossWeights) -> Result<LossBreakdown> {
    let shape = truth.shape();
    for (name, a) in [("advected", &chain.advected), ("pre_source", &chain.pre_source), ("predicted", &chain.predicted)] {
        if a.shape() != shape {
            return Err(Error::Shape(format!("{name} {:?} vs truth {:?}", a.shape(), shape)));
        }
    }
    if valid.shape() != shape {
        return Err(Error::Shape(format!("mask {:?} vs truth {:?}", valid.shape(), shape)));
    }
    let mut out = LossBreakdown::default();
    for t in 0..shape[0] {
        let tr = truth.index_axis(Axis(0), t);
        let m = valid.index_axis(Axis(0), t);
        let la = masked_l1(chain.advected.index_axis(Axis(0), t), tr, m);
        let ld = masked_l1(chain.pre_source.index_axis(Axis(0), t), tr, m);
        let lp = masked_l1(chain.predicted.index_axis(Axis(0), t), tr, m);
        out.adv += la;
        out.diff += ld;
        out.pred += lp;
        out.total += w.lambda_adv * la + w.lambda_diff * ld + lp;
        out.per_step.push([la, ld, lp]);
    }
    Ok(out)
}

/// [`loss_terms`] against an observed sequence whose frame `t` is the target
/// of chain step `t`.
pub fn loss_phys(chain: &LossChain<'_>, truth: &VolumeSequence, w: LossWeights) -> Result<LossBreakdown> {
    let data = truth.data().mapv(f64::from);
    loss_terms(chain, &data, truth.mask(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::GridMeta;

    fn seq(vals: Vec<f32>, shape: (usize, usize, usize, usize)) -> VolumeSequence {
        VolumeSequence::from_data(Array4::from_shape_vec(shape, vals).unwrap(), GridMeta::default_for_depth(shape.1)).unwrap()
    }

    #[test]
    fn perfect_chain_is_zero() {
        let truth = seq((0..12).map(|v| v as f32).collect(), (2, 1, 2, 3));
        let t = truth.data().mapv(f64::from);
        let chain = LossChain { advected: t.view(), pre_source: t.view(), predicted: t.view() };
        let l = loss_phys(&chain, &truth, LossWeights::default()).unwrap();
        assert_eq!((l.total, l.adv, l.diff, l.pred), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_weights_leave_prediction_term() {
        let truth = seq(vec![0.0; 8], (2, 1, 2, 2));
        let a = Array4::from_elem((2, 1, 2, 2), 3.0);
        let p = Array4::from_elem((2, 1, 2, 2), 1.0);
        let chain = LossChain { advected: a.view(), pre_source: a.view(), predicted: p.view() };
        let w = LossWeights { lambda_adv: 0.0, lambda_diff: 0.0 };
        let l = loss_phys(&chain, &truth, w).unwrap();
        assert_eq!(l.total, l.pred);
        assert_eq!(l.pred, 2.0);
        assert_eq!(l.adv, 6.0);
    }

    #[test]
    fn two_voxel_prediction_term() {
        let truth = seq(vec![2.0, 2.0], (1, 1, 1, 2));
        let p = Array4::from_shape_vec((1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        let chain = LossChain { advected: p.view(), pre_source: p.view(), predicted: p.view() };
        let w = LossWeights { lambda_adv: 0.0, lambda_diff: 0.0 };
        assert_eq!(loss_phys(&chain, &truth, w).unwrap().pred, 1.0);
    }

    #[test]
    fn masked_voxels_are_ignored() {
        let data = Array4::from_shape_vec((1, 1, 1, 3), vec![0.0f32, 0.0, 0.0]).unwrap();
        let mask = Array4::from_shape_vec((1, 1, 1, 3), vec![true, false, true]).unwrap();
        let truth = VolumeSequence::new(data, mask, GridMeta::default_for_depth(1)).unwrap();
        let p = Array4::from_shape_vec((1, 1, 1, 3), vec![1.0, 100.0, 3.0]).unwrap();
        let chain = LossChain { advected: p.view(), pre_source: p.view(), predicted: p.view() };
        assert_eq!(loss_phys(&chain, &truth, LossWeights::default()).unwrap().pred, 2.0);
    }

    #[test]
    fn shape_mismatch() {
        let truth = seq(vec![0.0; 4], (1, 1, 2, 2));
        let p = Array4::zeros((2, 1, 2, 2));
        let chain = LossChain { advected: p.view(), pre_source: p.view(), predicted: p.view() };
        assert!(matches!(loss_phys(&chain, &truth, LossWeights::default()), Err(Error::Shape(_))));
    }
}
