//! Trilinear sampling of a D×H×W field with a constant fill value outside the
//! grid, plus the derivatives needed by the adjoint.
//!
//! Positions are in index space ordered (z, y, x). Axes whose fractional
//! offset is exactly zero read a single node, so integer positions return the
//! stored value bit-for-bit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims3 {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims3 {
    pub fn new(d: usize, h: usize, w: usize) -> Self {
        Dims3 { d, h, w }
    }

    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.w;
        let y = (idx / self.w) % self.h;
        let z = idx / (self.w * self.h);
        (z, y, x)
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.h + y) * self.w + x
    }

    fn tuple(&self) -> (usize, usize, usize) {
        (self.d, self.h, self.w)
    }
}

impl From<(usize, usize, usize)> for Dims3 {
    fn from((d, h, w): (usize, usize, usize)) -> Self {
        Dims3 { d, h, w }
    }
}

impl std::fmt::Display for Dims3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.tuple())
    }
}

#[derive(Clone, Copy)]
enum Mode {
    Lerp,
    Diff,
}

#[inline]
fn split(p: f64) -> (isize, f64) {
    let fl = p.floor();
    (fl as isize, p - fl)
}

#[inline]
fn along(mode: Mode, i0: isize, f: f64, mut sub: impl FnMut(isize) -> f64) -> f64 {
    match mode {
        Mode::Lerp => {
            let a = sub(i0);
            if f == 0.0 {
                a
            } else {
                a + f * (sub(i0 + 1) - a)
            }
        }
        // At a node the one-sided slopes differ; their average is used.
        Mode::Diff => {
            if f == 0.0 {
                0.5 * (sub(i0 + 1) - sub(i0 - 1))
            } else {
                sub(i0 + 1) - sub(i0)
            }
        }
    }
}

/// Read-only view of a field with out-of-domain fill.
#[derive(Clone, Copy)]
pub struct Sampler<'a> {
    data: &'a [f64],
    dims: Dims3,
    fill: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a [f64], dims: Dims3, fill: f64) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        Sampler { data, dims, fill }
    }

    #[inline]
    fn at(&self, z: isize, y: isize, x: isize) -> f64 {
        let Dims3 { d, h, w } = self.dims;
        if z < 0 || y < 0 || x < 0 || z >= d as isize || y >= h as isize || x >= w as isize {
            self.fill
        } else {
            self.data[self.dims.index(z as usize, y as usize, x as usize)]
        }
    }

    #[inline]
    fn eval(&self, p: [f64; 3], modes: [Mode; 3]) -> f64 {
        let (z0, fz) = split(p[0]);
        let (y0, fy) = split(p[1]);
        let (x0, fx) = split(p[2]);
        along(modes[0], z0, fz, |z| {
            along(modes[1], y0, fy, |y| along(modes[2], x0, fx, |x| self.at(z, y, x)))
        })
    }

    /// Trilinear value at `p`.
    #[inline]
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        self.eval(p, [Mode::Lerp; 3])
    }

    /// Value and spatial derivative (d/dz, d/dy, d/dx) at `p`.
    #[inline]
    pub fn sample_grad(&self, p: [f64; 3]) -> (f64, [f64; 3]) {
        use Mode::*;
        (
            self.eval(p, [Lerp, Lerp, Lerp]),
            [
                self.eval(p, [Diff, Lerp, Lerp]),
                self.eval(p, [Lerp, Diff, Lerp]),
                self.eval(p, [Lerp, Lerp, Diff]),
            ],
        )
    }
}

/// Adds `g` times the interpolation weights of `p` into `acc` (the transpose
/// of [`Sampler::sample`] with respect to the field values). Out-of-domain
/// corners carry the constant fill and receive nothing.
#[inline]
pub fn scatter(acc: &mut [f64], dims: Dims3, p: [f64; 3], g: f64) {
    if g == 0.0 {
        return;
    }
    let taps = |q: f64| {
        let (i0, f) = split(q);
        if f == 0.0 {
            [(i0, 1.0), (i0, 0.0)]
        } else {
            [(i0, 1.0 - f), (i0 + 1, f)]
        }
    };
    let (tz, ty, tx) = (taps(p[0]), taps(p[1]), taps(p[2]));
    for &(z, wz) in &tz {
        if wz == 0.0 || z < 0 || z >= dims.d as isize {
            continue;
        }
        for &(y, wy) in &ty {
            if wy == 0.0 || y < 0 || y >= dims.h as isize {
                continue;
            }
            for &(x, wx) in &tx {
                if wx == 0.0 || x < 0 || x >= dims.w as isize {
                    continue;
                }
                acc[dims.index(z as usize, y as usize, x as usize)] += g * wz * wy * wx;
            }
        }
    }
}

/// Integer cell of a position; a change in this signature marks a crossing of
/// a trilinear cell boundary.
#[inline]
pub fn cell_of(p: [f64; 3]) -> [i64; 3] {
    [p[0].floor() as i64, p[1].floor() as i64, p[2].floor() as i64]
}
