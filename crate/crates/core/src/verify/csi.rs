//! Critical success index with spatial tolerance: both fields are
//! thresholded and dilated by a square max filter before counting.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Contingency {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_negatives: u64,
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_negatives
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiResult {
    pub score: f64,
    pub counts: Contingency,
    /// Neither field has an event after dilation; the score is defined as 1.
    pub no_event: bool,
}

/// Events at or above `threshold`.
pub fn binarize(field: ArrayView2<f64>, threshold: f64) -> Array2<bool> {
    field.mapv(|v| v >= threshold)
}

/// Square max filter of half-width `radius`.
pub fn dilate(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let mut out = mask.clone();
    for axis in 0..2 {
        let src = out.clone();
        Zip::from(out.lanes_mut(Axis(axis))).and(src.lanes(Axis(axis))).for_each(|mut o, s| {
            let n = s.len();
            for i in 0..n {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(n - 1);
                o[i] = (lo..=hi).any(|j| s[j]);
            }
        });
    }
    out
}

pub fn neighborhood_csi(forecast: ArrayView2<f64>, truth: ArrayView2<f64>, threshold: f64, radius: usize) -> Result<CsiResult> {
    if forecast.shape() != truth.shape() {
        return Err(Error::Shape(format!("forecast {:?} vs truth {:?}", forecast.shape(), truth.shape())));
    }
    let f = dilate(&binarize(forecast, threshold), radius);
    let o = dilate(&binarize(truth, threshold), radius);
    let mut c = Contingency::default();
    Zip::from(&f).and(&o).for_each(|&a, &b| match (a, b) {
        (true, true) => c.hits += 1,
        (false, true) => c.misses += 1,
        (true, false) => c.false_alarms += 1,
        (false, false) => c.correct_negatives += 1,
    });
    let denom = c.hits + c.misses + c.false_alarms;
    Ok(if denom == 0 {
        CsiResult { score: 1.0, counts: c, no_event: true }
    } else {
        CsiResult { score: c.hits as f64 / denom as f64, counts: c, no_event: false }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: &[&str]) -> Array2<f64> {
        let h = rows.len();
        let w = rows[0].len();
        Array2::from_shape_fn((h, w), |(y, x)| if rows[y].as_bytes()[x] == b'#' { 30.0 } else { 0.0 })
    }

    /// Direct neighborhood search per pixel.
    fn brute(f: &Array2<f64>, o: &Array2<f64>, thr: f64, r: usize) -> Contingency {
        let (h, w) = f.dim();
        let near = |a: &Array2<f64>, y: usize, x: usize| {
            let mut hit = false;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    hit |= a[[yy, xx]] >= thr;
                }
            }
            hit
        };
        let mut c = Contingency::default();
        for y in 0..h {
            for x in 0..w {
                match (near(f, y, x), near(o, y, x)) {
                    (true, true) => c.hits += 1,
                    (false, true) => c.misses += 1,
                    (true, false) => c.false_alarms += 1,
                    (false, false) => c.correct_negatives += 1,
                }
            }
        }
        c
    }

    #[test]
    fn identical_and_disjoint() {
        let a = grid(&["#...", "....", "....", "...#"]);
        assert_eq!(neighborhood_csi(a.view(), a.view(), 20.0, 2).unwrap().score, 1.0);
        let f = grid(&["#.......", "........"]);
        let o = grid(&["........", ".......#"]);
        assert_eq!(neighborhood_csi(f.view(), o.view(), 20.0, 1).unwrap().score, 0.0);
    }

    #[test]
    fn four_by_four_case() {
        let f = grid(&["##..", "....", "....", "..#."]);
        let o = grid(&["##..", "....", "....", "...#"]);
        let r0 = neighborhood_csi(f.view(), o.view(), 20.0, 0).unwrap();
        assert_eq!((r0.counts.hits, r0.counts.misses, r0.counts.false_alarms), (2, 1, 1));
        assert_eq!(r0.score, 0.5);
        let r1 = neighborhood_csi(f.view(), o.view(), 20.0, 1).unwrap();
        assert_eq!(r1.counts, brute(&f, &o, 20.0, 1));
        assert!(r1.score > r0.score);
    }

    #[test]
    fn empty_fields_are_flagged() {
        let z = Array2::zeros((3, 3));
        let r = neighborhood_csi(z.view(), z.view(), 20.0, 1).unwrap();
        assert!(r.no_event);
        assert_eq!(r.score, 1.0);
        assert!(neighborhood_csi(z.view(), Array2::zeros((3, 4)).view(), 20.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_grows_with_radius(
            h in 1usize..=16, w in 1usize..=16, bits in proptest::collection::vec(0u8..4, 512), r in 0usize..4,
        ) {
            let f = Array2::from_shape_fn((h, w), |(y, x)| if bits[y * w + x] == 0 { 40.0 } else { 0.0 });
            let o = Array2::from_shape_fn((h, w), |(y, x)| if bits[256 + y * w + x] == 0 { 40.0 } else { 0.0 });
            let got = neighborhood_csi(f.view(), o.view(), 20.0, r).unwrap();
            prop_assert_eq!(got.counts, brute(&f, &o, 20.0, r));
            prop_assert_eq!(got.counts.total(), (h * w) as u64);
            prop_assert!((0.0..=1.0).contains(&got.score));
            // Dilated masks are nested, so hits and the event union only grow.
            let wider = neighborhood_csi(f.view(), o.view(), 20.0, r + 1).unwrap();
            let union = |c: Contingency| c.hits + c.misses + c.false_alarms;
            prop_assert!(wider.counts.hits >= got.counts.hits);
            prop_assert!(union(wider.counts) >= union(got.counts));
        }

        #[test]
        fn isolated_pair_score_grows_with_radius(dy in 0usize..6, dx in 0usize..6) {
            let mut f = Array2::zeros((40, 40));
            let mut o = Array2::zeros((40, 40));
            f[[15, 15]] = 30.0;
            o[[15 + dy, 15 + dx]] = 30.0;
            let mut last = 0.0;
            for r in 0..8 {
                let s = neighborhood_csi(f.view(), o.view(), 20.0, r).unwrap().score;
                prop_assert!(s >= last);
                last = s;
            }
        }
    }
}
