//! Finite-difference gradients and Hessians.

use nalgebra::DMatrix;

/// Central-difference gradient with per-coordinate step
/// `rel_step * max(1, |x_i|)`. Falls back to one-sided differences when a
/// probe leaves the objective's support.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel_step: f64) -> Vec<f64> {
    let f0 = f(x);
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * h)
        } else if fp.is_finite() && f0.is_finite() {
            (fp - f0) / h
        } else if fm.is_finite() && f0.is_finite() {
            (f0 - fm) / h
        } else {
            0.0
        };
    }
    g
}

/// Full-stencil central-difference Hessian with per-coordinate steps
/// `max(1e-4, 1e-4 |x_i|)`, optionally shrunk to keep probes above zero
/// for positivity-constrained coordinates. Both (i, j) and (j, i) cross
/// terms are evaluated; the returned matrix is symmetrised and the
/// maximum asymmetry reported alongside.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    positive: &[bool],
) -> (DMatrix<f64>, f64) {
    let d = x.len();
    let mut steps = vec![0.0; d];
    for i in 0..d {
        let mut h = 1e-4f64.max(1e-4 * x[i].abs());
        if positive[i] && x[i] > 0.0 && x[i] - h <= 0.0 {
            h = 0.49 * x[i];
        }
        steps[i] = h;
    }
    let mut a = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let f0 = f(x);
    for i in 0..d {
        let hi = steps[i];
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        a[(i, i)] = if fp.is_finite() && fm.is_finite() {
            (fp - 2.0 * f0 + fm) / (hi * hi)
        } else {
            // one-sided second difference on the feasible side
            let sgn = if fp.is_finite() { 1.0 } else { -1.0 };
            xp[i] = x[i] + sgn * hi;
            let f1 = f(&xp);
            xp[i] = x[i] + sgn * 2.0 * hi;
            let f2 = f(&xp);
            xp[i] = x[i] + sgn * 3.0 * hi;
            let f3 = f(&xp);
            xp[i] = x[i];
            (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / (hi * hi)
        };
    }
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let (hi, hj) = (steps[i], steps[j]);
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let (fpp, fpm, fmp, fmm) = (eval(1.0, 1.0), eval(1.0, -1.0), eval(-1.0, 1.0), eval(-1.0, -1.0));
            a[(i, j)] = if fpp.is_finite() && fpm.is_finite() && fmp.is_finite() && fmm.is_finite()
            {
                (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
            } else {
                // forward in both coordinates
                let f00 = f0;
                let f10 = eval(1.0, 0.0);
                let f01 = eval(0.0, 1.0);
                let f11 = eval(1.0, 1.0);
                (f11 - f10 - f01 + f00) / (hi * hj)
            };
        }
    }
    let mut max_dev: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            max_dev = max_dev.max((a[(i, j)] - a[(j, i)]).abs());
            max_abs = max_abs.max(a[(i, j)].abs());
        }
    }
    let sym = 0.5 * (&a + a.transpose());
    (sym, if max_abs > 0.0 { max_dev / max_abs } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_and_hessian_of_quadratic() {
        // f = x^2 + x y + 2 y^2
        let f = |v: &[f64]| v[0] * v[0] + v[0] * v[1] + 2.0 * v[1] * v[1];
        let g = fd_gradient(&f, &[1.0, -2.0], 1e-6);
        assert!((g[0] - 0.0).abs() < 1e-6);
        assert!((g[1] - (-7.0)).abs() < 1e-5);
        let (h, dev) = fd_hessian(&f, &[1.0, -2.0], &[false, false]);
        assert!((h[(0, 0)] - 2.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 4.0).abs() < 1e-5);
        assert!(dev < 1e-6);
    }

    #[test]
    fn hessian_near_support_wall() {
        // defined only for x > 0; evaluate at a point so close to the wall
        // that the default step would cross it. The shrunken stencil loses
        // accuracy but must stay finite and in the right ballpark.
        let f = |v: &[f64]| if v[0] > 0.0 { v[0].ln().powi(2) } else { f64::INFINITY };
        let x = [1e-5];
        let (h, _) = fd_hessian(&f, &x, &[true]);
        // d2/dx2 (ln x)^2 = 2(1 - ln x)/x^2
        let expect = 2.0 * (1.0 - x[0].ln()) / (x[0] * x[0]);
        assert!(h[(0, 0)].is_finite());
        assert!((h[(0, 0)] - expect).abs() / expect < 0.5);

        // with a comfortable margin from the wall the stencil is accurate
        let x = [0.5];
        let (h, _) = fd_hessian(&f, &x, &[true]);
        let expect = 2.0 * (1.0 - x[0].ln()) / (x[0] * x[0]);
        assert!((h[(0, 0)] - expect).abs() / expect < 1e-5);
    }
}
