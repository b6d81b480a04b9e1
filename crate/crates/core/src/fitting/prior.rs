//! Quadratic penalty on the curvature of the coarse potentials.
//!
//! The Laplacian of φ is the divergence of its velocity, which can trade off
//! against the source on growing or decaying echoes; the Laplacian of ψ
//! measures the non-uniform part of the rotational flow. Uniform translation
//! (potentials linear in space) costs nothing.

use super::controls::{ControlFields, Upsampler};

/// Node spacing of each coarse axis in fine cells (0 for axes with fewer
/// than three nodes, which carry no second difference).
fn spacings(up: &Upsampler) -> [f64; 3] {
    let c = [up.coarse.d, up.coarse.h, up.coarse.w];
    let f = [up.fine.d, up.fine.h, up.fine.w];
    [0, 1, 2].map(|a| if c[a] >= 3 { (f[a] - 1) as f64 / (c[a] - 1) as f64 } else { 0.0 })
}

/// `weight · mean over nodes of (∇²φ)²` plus `psi_weight` times the same
/// for each ψ component, with the gradient added into `grad`.
pub fn curvature_penalty(
    c: &ControlFields,
    up: &Upsampler,
    weight: f64,
    psi_weight: f64,
    mut grad: Option<&mut ControlFields>,
) -> f64 {
    let block = c.steps * c.grid.len();
    let mut total = 0.0;
    for (b, wb) in [(0, weight), (1, psi_weight), (2, psi_weight), (3, psi_weight)] {
        if wb == 0.0 || block == 0 {
            continue;
        }
        let view = ndarray::ArrayView4::from_shape(
            (c.steps, c.grid.d, c.grid.h, c.grid.w),
            &c.params[b * block..(b + 1) * block],
        )
        .expect("layout");
        let g = grad.as_deref_mut().map(|g| {
            ndarray::ArrayViewMut4::from_shape((c.steps, c.grid.d, c.grid.h, c.grid.w), &mut g.params[b * block..(b + 1) * block])
                .expect("layout")
        });
        total += laplacian_penalty(view, up, wb, g);
    }
    total
}

fn laplacian_penalty(
    phi: ndarray::ArrayView4<f64>,
    up: &Upsampler,
    weight: f64,
    grad: Option<ndarray::ArrayViewMut4<f64>>,
) -> f64 {
    let h = spacings(up);
    let (steps, d, hh, w) = phi.dim();
    let dims = [d, hh, w];
    let mut lap = ndarray::Array4::<f64>::zeros(phi.raw_dim());
    for ((t, z, y, x), l) in lap.indexed_iter_mut() {
        let p = [z, y, x];
        let mut acc = 0.0;
        for a in 0..3 {
            if h[a] == 0.0 || p[a] == 0 || p[a] + 1 == dims[a] {
                continue;
            }
            let mut lo = p;
            let mut hi = p;
            lo[a] -= 1;
            hi[a] += 1;
            acc += (phi[[t, lo[0], lo[1], lo[2]]] - 2.0 * phi[[t, z, y, x]] + phi[[t, hi[0], hi[1], hi[2]]]) / (h[a] * h[a]);
        }
        *l = acc;
    }
    let n = (steps * d * hh * w) as f64;
    let value = weight * lap.iter().map(|v| v * v).sum::<f64>() / n;
    if let Some(mut gphi) = grad {
        for ((t, z, y, x), &l) in lap.indexed_iter() {
            let s = 2.0 * weight * l / n;
            let p = [z, y, x];
            for a in 0..3 {
                if h[a] == 0.0 || p[a] == 0 || p[a] + 1 == dims[a] {
                    continue;
                }
                let k = s / (h[a] * h[a]);
                let mut lo = p;
                let mut hi = p;
                lo[a] -= 1;
                hi[a] += 1;
                gphi[[t, lo[0], lo[1], lo[2]]] += k;
                gphi[[t, z, y, x]] -= 2.0 * k;
                gphi[[t, hi[0], hi[1], hi[2]]] += k;
            }
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::Dims3;

    #[test]
    fn linear_potential_is_free() {
        let up = Upsampler::coarsened(Dims3::new(4, 16, 16), [1, 4, 4]).unwrap();
        let mut c = ControlFields::zeros(2, up.coarse);
        let lin = |z: usize, y: usize, x: usize| 0.3 * z as f64 - 1.5 * y as f64 + 2.0 * x as f64;
        c.phi_mut().indexed_iter_mut().for_each(|((_, z, y, x), v)| *v = lin(z, y, x));
        c.psi_mut().indexed_iter_mut().for_each(|((_, k, z, y, x), v)| *v = k as f64 * lin(z, y, x));
        assert!(curvature_penalty(&c, &up, 10.0, 10.0, None).abs() < 1e-20);
    }

    #[test]
    fn gradient_matches_differences() {
        let up = Upsampler::coarsened(Dims3::new(4, 16, 16), [1, 4, 4]).unwrap();
        let mut c = ControlFields::zeros(2, up.coarse);
        let n = 4 * c.phi().len();
        for (i, v) in c.params[..n].iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64 - 5.0) * 0.3;
        }
        let mut g = ControlFields::zeros(2, up.coarse);
        curvature_penalty(&c, &up, 3.0, 0.5, Some(&mut g));
        let h = 1e-4;
        for i in (0..n).step_by(7) {
            let mut p = c.clone();
            p.params[i] += h;
            let mut m = c.clone();
            m.params[i] -= h;
            let f = |c: &ControlFields| curvature_penalty(c, &up, 3.0, 0.5, None);
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g.params[i]).abs() < 1e-8 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g.params[i]);
        }
        assert!(g.params[n..].iter().all(|&v| v == 0.0));
    }
}
