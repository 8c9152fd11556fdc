//! Small dense linear-algebra and numerics helpers shared by all modules.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, Inverse, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigen-decomposition of a real matrix, returning complex pairs.
pub fn eig_real(a: &Array2<f64>) -> Result<(Array1<C64>, Array2<C64>)> {
    if a.nrows() == 1 {
        // LAPACK wrappers reject the degenerate 1×1 layout.
        return Ok((array![C64::new(a[[0, 0]], 0.0)], array![[C64::new(1.0, 0.0)]]));
    }
    a.eig().map_err(|e| Error::Eigen(format!("real eig: {e}")))
}

/// Eigen-decomposition of a complex matrix.
pub fn eig_complex(a: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    if a.nrows() == 1 {
        return Ok((array![a[[0, 0]]], array![[C64::new(1.0, 0.0)]]));
    }
    a.eig().map_err(|e| Error::Eigen(format!("complex eig: {e}")))
}

/// Solve a x = b for complex dense a.
pub fn solve_c(a: &Array2<C64>, b: &Array1<C64>) -> Result<Array1<C64>> {
    a.solve(b).map_err(|e| Error::Singular(format!("complex solve: {e}")))
}

/// Solve a x = b for real dense a.
pub fn solve_r(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    a.solve(b).map_err(|e| Error::Singular(format!("real solve: {e}")))
}

/// Inverse of a complex dense matrix.
pub fn inv_c(a: &Array2<C64>) -> Result<Array2<C64>> {
    a.inv().map_err(|e| Error::Singular(format!("complex inverse: {e}")))
}

/// Inverse of a real dense matrix.
pub fn inv_r(a: &Array2<f64>) -> Result<Array2<f64>> {
    a.inv().map_err(|e| Error::Singular(format!("real inverse: {e}")))
}

/// Lift a real matrix into the complex field.
pub fn to_c(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

/// Frobenius norm of a complex matrix.
pub fn fro_c(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius norm of a real matrix.
pub fn fro_r(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sup norm of a real vector.
pub fn sup(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Ordinary least-squares line fit y = a + b x; returns (slope, intercept, r²).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Composite-trapezoid quadrature of uniformly sampled values.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    dx * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Linear interpolation of a sampled function on a uniform grid.
/// Values outside the grid clamp to the end samples.
pub fn interp_uniform(x0: f64, dx: f64, values: ArrayView1<f64>, x: f64) -> f64 {
    let n = values.len();
    let t = (x - x0) / dx;
    if t <= 0.0 {
        return values[0];
    }
    if t >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i = t.floor() as usize;
    let w = t - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Error function, accurate to about 1e-14: Taylor series for small
/// arguments, Lentz continued fraction for the complement at large ones.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.0 {
        // erf(x) = (2/sqrt(pi)) sum_k (-1)^k x^(2k+1) / (k! (2k+1))
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for k in 1..200 {
            term *= -x2 / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    } else if ax > 6.5 {
        x.signum()
    } else {
        // erfc(ax) = exp(-ax^2)/sqrt(pi) * K(ax), continued fraction
        // K = 1/(ax + 1/2/(ax + 1/(ax + 3/2/(ax + ...))))
        let mut f = ax;
        for m in (1..=60).rev() {
            f = ax + 0.5 * m as f64 / f;
        }
        let erfc = (-ax * ax).exp() / std::f64::consts::PI.sqrt() / f;
        x.signum() * (1.0 - erfc)
    }
}

/// Central finite-difference Jacobian of a vector-valued map.
pub fn fd_jacobian<F>(f: F, x: &Array1<f64>, m_out: usize) -> Array2<f64>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    let n = x.len();
    let mut jac = Array2::zeros((m_out, n));
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..m_out {
            jac[[i, j]] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Classic fourth-order Runge-Kutta step for a vector ODE y' = f(x, y).
pub fn rk4_step<F>(f: &F, x: f64, y: &Array1<f64>, h: f64) -> Array1<f64>
where
    F: Fn(f64, &Array1<f64>) -> Array1<f64>,
{
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, &(y + &(0.5 * h * &k1)));
    let k3 = f(x + 0.5 * h, &(y + &(0.5 * h * &k2)));
    let k4 = f(x + h, &(y + &(h * &k3)));
    y + &((h / 6.0) * &(k1 + 2.0 * &k2 + 2.0 * &k3 + k4))
}

/// RK4 step for a complex matrix ODE Y' = F(x, Y).
pub fn rk4_step_cmat<F>(f: &F, x: f64, y: &Array2<C64>, h: f64) -> Array2<C64>
where
    F: Fn(f64, &Array2<C64>) -> Array2<C64>,
{
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, &(y + &k1.mapv(|z| z * 0.5 * h)));
    let k3 = f(x + 0.5 * h, &(y + &k2.mapv(|z| z * 0.5 * h)));
    let k4 = f(x + h, &(y + &k3.mapv(|z| z * h)));
    let mut sum = k1;
    sum = sum + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4;
    y + &sum.mapv(|z| z * (h / 6.0))
}
