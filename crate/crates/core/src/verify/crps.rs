//! Empirical ensemble CRPS with optional spatial pooling.

use ndarray::{s, Array2, ArrayView2};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    None,
    /// Window and stride `n`; partial windows at the edges are kept.
    Avg(usize),
    Max(usize),
}

impl Pooling {
    pub fn label(&self) -> String {
        match self {
            Pooling::None => "none".into(),
            Pooling::Avg(n) => format!("avg{n}"),
            Pooling::Max(n) => format!("max{n}"),
        }
    }

    pub fn apply(&self, field: ArrayView2<f64>) -> Array2<f64> {
        let (n, avg) = match *self {
            Pooling::None => return field.to_owned(),
            Pooling::Avg(n) => (n.max(1), true),
            Pooling::Max(n) => (n.max(1), false),
        };
        let (h, w) = field.dim();
        Array2::from_shape_fn((h.div_ceil(n), w.div_ceil(n)), |(y, x)| {
            let win = field.slice(s![y * n..((y + 1) * n).min(h), x * n..((x + 1) * n).min(w)]);
            if avg {
                win.mean().unwrap_or(0.0)
            } else {
                win.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        })
    }
}

/// `mean_i |x_i - y| - 0.5 * mean_ij |x_i - x_j|` for one point.
pub fn crps_point(members: &[f64], y: f64) -> f64 {
    let m = members.len() as f64;
    let skill = members.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    let mut spread = 0.0;
    for a in members {
        for b in members {
            spread += (a - b).abs();
        }
    }
    skill - 0.5 * spread / (m * m)
}

/// Field-mean CRPS of 2D members against a 2D truth.
pub fn crps(members: &[ArrayView2<f64>], truth: ArrayView2<f64>, pooling: Pooling) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Input("CRPS needs at least one member".into()));
    }
    if let Some(m) = members.iter().find(|m| m.shape() != truth.shape()) {
        return Err(Error::Shape(format!("member {:?} vs truth {:?}", m.shape(), truth.shape())));
    }
    let pooled: Vec<Array2<f64>> = members.iter().map(|m| pooling.apply(*m)).collect();
    let y = pooling.apply(truth);
    if y.is_empty() {
        return Ok(0.0);
    }
    let mut xs = vec![0.0; pooled.len()];
    let mut total = 0.0;
    for (idx, &t) in y.indexed_iter() {
        for (x, p) in xs.iter_mut().zip(&pooled) {
            *x = p[idx];
        }
        total += crps_point(&xs, t);
    }
    Ok(total / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_atom_case() {
        assert_eq!(crps_point(&[0.0, 2.0], 1.0), 0.5);
    }

    #[test]
    fn perfect_ensemble_is_zero() {
        let t = Array2::from_shape_fn((5, 6), |(y, x)| (y * x) as f64);
        let v = [t.view(), t.view(), t.view()];
        assert_eq!(crps(&v, t.view(), Pooling::Avg(4)).unwrap(), 0.0);
    }

    #[test]
    fn pooling_windows() {
        let f = Array2::from_shape_fn((3, 5), |(y, x)| (y * 5 + x) as f64);
        let a = Pooling::Avg(2).apply(f.view());
        assert_eq!(a.dim(), (2, 3));
        assert_eq!(a[[0, 0]], (0.0 + 1.0 + 5.0 + 6.0) / 4.0);
        assert_eq!(a[[1, 2]], 14.0);
        let m = Pooling::Max(2).apply(f.view());
        assert_eq!(m[[0, 1]], 8.0);
        assert_eq!(m[[1, 1]], 13.0);
    }

    #[test]
    fn errors() {
        let t = Array2::<f64>::zeros((2, 2));
        assert!(crps(&[], t.view(), Pooling::None).is_err());
        let bad = Array2::<f64>::zeros((2, 3));
        assert!(crps(&[bad.view()], t.view(), Pooling::None).is_err());
    }

    proptest! {
        #[test]
        fn single_member_is_mae(vals in proptest::collection::vec(-10.0f64..75.0, 2 * 36)) {
            let x = Array2::from_shape_vec((6, 6), vals[..36].to_vec()).unwrap();
            let y = Array2::from_shape_vec((6, 6), vals[36..].to_vec()).unwrap();
            let mae = (&x - &y).mapv(f64::abs).mean().unwrap();
            let c = crps(&[x.view()], y.view(), Pooling::None).unwrap();
            prop_assert!((c - mae).abs() < 1e-7);
        }

        #[test]
        fn non_negative(members in proptest::collection::vec(-10.0f64..75.0, 1..12), y in -10.0f64..75.0) {
            prop_assert!(crps_point(&members, y) >= -1e-12);
        }
    }
}
