//! Coarse control grids and their trilinear (align-corners) upsampling to
//! the full forecast grid.

use ndarray::{Array3, ArrayView3, ArrayView4, ArrayView5, ArrayViewMut4, ArrayViewMut5, Axis, Zip};

use crate::interp::Dims3;
use crate::{Error, Result};

/// Linear interpolation weights from `coarse` nodes onto `fine` nodes with
/// both end points aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMap {
    coarse: usize,
    taps: Vec<(usize, f64, usize, f64)>,
}

impl AxisMap {
    pub fn new(coarse: usize, fine: usize) -> Self {
        assert!(coarse >= 1 && fine >= 1 && coarse <= fine);
        let taps = (0..fine)
            .map(|i| {
                if coarse == 1 {
                    (0, 1.0, 0, 0.0)
                } else if coarse == fine {
                    (i, 1.0, i, 0.0)
                } else {
                    let pos = i as f64 * (coarse - 1) as f64 / (fine - 1) as f64;
                    let j0 = (pos.floor() as usize).min(coarse - 2);
                    let f = pos - j0 as f64;
                    (j0, 1.0 - f, j0 + 1, f)
                }
            })
            .collect();
        AxisMap { coarse, taps }
    }

    fn fine(&self) -> usize {
        self.taps.len()
    }

    fn apply(&self, input: ArrayView3<f64>, axis: usize) -> Array3<f64> {
        let mut shape = input.raw_dim();
        shape[axis] = self.fine();
        let mut out = Array3::zeros(shape);
        Zip::from(out.lanes_mut(Axis(axis)))
            .and(input.lanes(Axis(axis)))
            .for_each(|mut o, i| {
                for (k, &(j0, w0, j1, w1)) in self.taps.iter().enumerate() {
                    o[k] = if w1 == 0.0 { w0 * i[j0] } else { w0 * i[j0] + w1 * i[j1] };
                }
            });
        out
    }

    fn apply_transpose(&self, input: ArrayView3<f64>, axis: usize) -> Array3<f64> {
        let mut shape = input.raw_dim();
        shape[axis] = self.coarse;
        let mut out = Array3::zeros(shape);
        Zip::from(out.lanes_mut(Axis(axis)))
            .and(input.lanes(Axis(axis)))
            .for_each(|mut o, i| {
                for (k, &(j0, w0, j1, w1)) in self.taps.iter().enumerate() {
                    o[j0] += w0 * i[k];
                    if w1 != 0.0 {
                        o[j1] += w1 * i[k];
                    }
                }
            });
        out
    }
}

/// Separable 3D upsampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsampler {
    pub coarse: Dims3,
    pub fine: Dims3,
    maps: [AxisMap; 3],
}

impl Upsampler {
    pub fn new(coarse: Dims3, fine: Dims3) -> Result<Self> {
        let ok = |c: usize, f: usize| c >= 1 && c <= f;
        if !(ok(coarse.d, fine.d) && ok(coarse.h, fine.h) && ok(coarse.w, fine.w)) {
            return Err(Error::Shape(format!("control grid {coarse} does not fit {fine}")));
        }
        Ok(Upsampler {
            coarse,
            fine,
            maps: [AxisMap::new(coarse.d, fine.d), AxisMap::new(coarse.h, fine.h), AxisMap::new(coarse.w, fine.w)],
        })
    }

    /// Control grid for a full grid coarsened by `factor` per axis (at least
    /// two nodes along every axis that has two cells).
    pub fn coarsened(fine: Dims3, factor: [usize; 3]) -> Result<Self> {
        let shrink = |n: usize, f: usize| if n < 2 { n } else { n.div_ceil(f.max(1)).max(2) };
        Self::new(Dims3::new(shrink(fine.d, factor[0]), shrink(fine.h, factor[1]), shrink(fine.w, factor[2])), fine)
    }

    pub fn up(&self, coarse: ArrayView3<f64>) -> Array3<f64> {
        let a = self.maps[0].apply(coarse, 0);
        let b = self.maps[1].apply(a.view(), 1);
        self.maps[2].apply(b.view(), 2)
    }

    pub fn up_transpose(&self, fine: ArrayView3<f64>) -> Array3<f64> {
        let a = self.maps[2].apply_transpose(fine, 2);
        let b = self.maps[1].apply_transpose(a.view(), 1);
        self.maps[0].apply_transpose(b.view(), 0)
    }
}

/// Flat parameter vector holding, per step, the coarse scalar potential, the
/// three vector-potential components, three log-diffusivities and the source.
/// The same layout carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFields {
    pub steps: usize,
    pub grid: Dims3,
    pub params: Vec<f64>,
}

impl ControlFields {
    pub fn zeros(steps: usize, grid: Dims3) -> Self {
        ControlFields { steps, grid, params: vec![0.0; steps * grid.len() * 8] }
    }

    /// Zero potentials and source with `log_kappa` set to `log_kappa0`.
    pub fn initial(steps: usize, grid: Dims3, log_kappa0: f64) -> Self {
        let mut c = Self::zeros(steps, grid);
        c.log_kappa_mut().fill(log_kappa0);
        c
    }

    fn block(&self) -> usize {
        self.steps * self.grid.len()
    }

    fn shape4(&self) -> (usize, usize, usize, usize) {
        (self.steps, self.grid.d, self.grid.h, self.grid.w)
    }

    fn shape5(&self) -> (usize, usize, usize, usize, usize) {
        (self.steps, 3, self.grid.d, self.grid.h, self.grid.w)
    }

    fn range(&self, start: usize, blocks: usize) -> std::ops::Range<usize> {
        start * self.block()..(start + blocks) * self.block()
    }

    pub fn phi(&self) -> ArrayView4<'_, f64> {
        ArrayView4::from_shape(self.shape4(), &self.params[self.range(0, 1)]).expect("layout")
    }

    pub fn psi(&self) -> ArrayView5<'_, f64> {
        ArrayView5::from_shape(self.shape5(), &self.params[self.range(1, 3)]).expect("layout")
    }

    pub fn log_kappa(&self) -> ArrayView5<'_, f64> {
        ArrayView5::from_shape(self.shape5(), &self.params[self.range(4, 3)]).expect("layout")
    }

    pub fn source(&self) -> ArrayView4<'_, f64> {
        ArrayView4::from_shape(self.shape4(), &self.params[self.range(7, 1)]).expect("layout")
    }

    pub fn phi_mut(&mut self) -> ArrayViewMut4<'_, f64> {
        let (shape, r) = (self.shape4(), self.range(0, 1));
        ArrayViewMut4::from_shape(shape, &mut self.params[r]).expect("layout")
    }

    pub fn psi_mut(&mut self) -> ArrayViewMut5<'_, f64> {
        let (shape, r) = (self.shape5(), self.range(1, 3));
        ArrayViewMut5::from_shape(shape, &mut self.params[r]).expect("layout")
    }

    pub fn log_kappa_mut(&mut self) -> ArrayViewMut5<'_, f64> {
        let (shape, r) = (self.shape5(), self.range(4, 3));
        ArrayViewMut5::from_shape(shape, &mut self.params[r]).expect("layout")
    }

    pub fn source_mut(&mut self) -> ArrayViewMut4<'_, f64> {
        let (shape, r) = (self.shape4(), self.range(7, 1));
        ArrayViewMut4::from_shape(shape, &mut self.params[r]).expect("layout")
    }

    /// Name of the block a flat parameter index belongs to.
    pub fn block_name(&self, index: usize) -> &'static str {
        match index / self.block().max(1) {
            0 => "phi",
            1..=3 => "psi",
            4..=6 => "log_kappa",
            _ => "source",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant_maps() {
        let up = Upsampler::new(Dims3::new(3, 4, 5), Dims3::new(3, 4, 5)).unwrap();
        let a = Array3::from_shape_fn((3, 4, 5), |(z, y, x)| (z * 20 + y * 5 + x) as f64);
        assert_eq!(up.up(a.view()), a);
        let up = Upsampler::new(Dims3::new(1, 1, 1), Dims3::new(2, 3, 4)).unwrap();
        let c = Array3::from_elem((1, 1, 1), 2.5);
        assert!(up.up(c.view()).iter().all(|&v| v == 2.5));
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let up = Upsampler::coarsened(Dims3::new(2, 17, 13), [1, 4, 4]).unwrap();
        assert_eq!(up.coarse, Dims3::new(2, 5, 4));
        let sy = 16.0 / 4.0;
        let sx = 12.0 / 3.0;
        let coarse = Array3::from_shape_fn((2, 5, 4), |(z, y, x)| z as f64 + 0.5 * y as f64 * sy - x as f64 * sx);
        let fine = up.up(coarse.view());
        for ((z, y, x), &v) in fine.indexed_iter() {
            assert!((v - (z as f64 + 0.5 * y as f64 - x as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_matches_inner_products() {
        let up = Upsampler::coarsened(Dims3::new(3, 10, 9), [2, 3, 4]).unwrap();
        let c = up.coarse;
        let coarse = Array3::from_shape_fn((c.d, c.h, c.w), |(z, y, x)| ((z * 7 + y * 3 + x) as f64).sin());
        let fine = Array3::from_shape_fn((3, 10, 9), |(z, y, x)| ((z + y * 2 + x * 5) as f64).cos());
        let lhs = (up.up(coarse.view()) * &fine).sum();
        let rhs = (&coarse * &up.up_transpose(fine.view())).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn flat_layout_blocks() {
        let mut c = ControlFields::initial(2, Dims3::new(1, 2, 2), -1.0);
        assert_eq!(c.params.len(), 2 * 4 * 8);
        assert!(c.log_kappa().iter().all(|&v| v == -1.0));
        assert!(c.phi().iter().chain(c.source().iter()).all(|&v| v == 0.0));
        c.source_mut()[[1, 0, 1, 1]] = 3.0;
        assert_eq!(*c.params.last().unwrap(), 3.0);
        assert_eq!(c.block_name(0), "phi");
        assert_eq!(c.block_name(8), "psi");
        assert_eq!(c.block_name(8 * 4), "log_kappa");
        assert_eq!(c.block_name(c.params.len() - 1), "source");
    }
}
