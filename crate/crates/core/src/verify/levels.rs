//! Error profile as a function of altitude.

use ndarray::Axis;

use crate::volgrid::VolumeSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStat {
    pub level: usize,
    pub altitude_m: f32,
    /// `None` when the level has no jointly valid voxel.
    pub mae: Option<f64>,
    pub mean_observed: Option<f64>,
    /// Jointly valid fraction of the level.
    pub coverage: f64,
}

pub fn mae_by_level(forecast: &VolumeSequence, truth: &VolumeSequence) -> Result<Vec<LevelStat>> {
    if forecast.dims() != truth.dims() {
        return Err(Error::Shape(format!("forecast {:?} vs truth {:?}", forecast.dims(), truth.dims())));
    }
    let (_, depth, _, _) = truth.dims();
    let mut out = Vec::with_capacity(depth);
    for d in 0..depth {
        let f = forecast.data().index_axis(Axis(1), d);
        let o = truth.data().index_axis(Axis(1), d);
        let fm = forecast.mask().index_axis(Axis(1), d);
        let om = truth.mask().index_axis(Axis(1), d);
        let (mut err, mut obs, mut n) = (0.0, 0.0, 0usize);
        ndarray::Zip::from(&f).and(&o).and(&fm).and(&om).for_each(|&a, &b, &ma, &mb| {
            if ma && mb {
                err += (f64::from(a) - f64::from(b)).abs();
                obs += f64::from(b);
                n += 1;
            }
        });
        let total = f.len();
        out.push(LevelStat {
            level: d,
            altitude_m: truth.meta().z_levels[d],
            mae: (n > 0).then(|| err / n as f64),
            mean_observed: (n > 0).then(|| obs / n as f64),
            coverage: if total == 0 { 0.0 } else { n as f64 / total as f64 },
        });
    }
    Ok(out)
}
