//! Traveling-wave profiles: construction on a uniform grid, connection
//! index classification, and a-posteriori verification (first integral,
//! endstate errors, tail-decay rates).

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ModelKind, RelaxationModel, ShockData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShockType {
    Lax,
    Overcompressive,
    Undercompressive,
    Mixed,
}

impl std::fmt::Display for ShockType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ShockType::Lax => "Lax",
            ShockType::Overcompressive => "overcompressive",
            ShockType::Undercompressive => "undercompressive",
            ShockType::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// Connection indices of a shock: equilibrium in/out characteristic counts
/// i_±, manifold dimensions d_± from the profile-ODE rest points, and the
/// resulting type.
#[derive(Debug, Clone)]
pub struct Classification {
    pub i_minus: usize,
    pub i_plus: usize,
    pub i: usize,
    pub d_minus: usize,
    pub d_plus: usize,
    pub d: usize,
    /// Dimension of the connection manifold (1 assumed throughout).
    pub ell: usize,
    pub kind: ShockType,
    /// True if all equilibrium characteristics enter from one side
    /// (i_- = n or i_+ = n).
    pub extreme: bool,
    /// Predicted tail rates: slowest unstable rate at -∞, slowest stable
    /// rate (absolute value) at +∞ of the profile-ODE rest points.
    pub nu_minus_pred: f64,
    pub nu_plus_pred: f64,
}

/// A traveling-wave profile sampled on a uniform grid x ∈ [-X, X].
pub struct ShockProfile {
    pub shock: ShockData,
    pub x_half: f64,
    pub dx: f64,
    pub x: Array1<f64>,
    /// npts × n.
    pub u: Array2<f64>,
    /// npts × r.
    pub v: Array2<f64>,
    pub du: Array2<f64>,
    pub dv: Array2<f64>,
    pub classification: Classification,
}

impl ShockProfile {
    pub fn npts(&self) -> usize {
        self.x.len()
    }

    /// Profile state at arbitrary x by linear interpolation (clamped).
    pub fn at(&self, x: f64) -> (Array1<f64>, Array1<f64>) {
        let interp = |arr: &Array2<f64>| {
            Array1::from_iter(
                (0..arr.ncols())
                    .map(|j| linalg::interp_uniform(-self.x_half, self.dx, arr.column(j), x)),
            )
        };
        (interp(&self.u), interp(&self.v))
    }

    /// Profile derivative at arbitrary x.
    pub fn d_at(&self, x: f64) -> (Array1<f64>, Array1<f64>) {
        let interp = |arr: &Array2<f64>| {
            Array1::from_iter(
                (0..arr.ncols())
                    .map(|j| linalg::interp_uniform(-self.x_half, self.dx, arr.column(j), x)),
            )
        };
        (interp(&self.du), interp(&self.dv))
    }
}

/// Rest-point matrix of the first-order profile/eigenvalue system at a
/// state: M = (A - sI)⁻¹ Q.
pub fn rest_point_matrix(
    model: &RelaxationModel,
    u: &Array1<f64>,
    v: &Array1<f64>,
    s: f64,
) -> Result<Array2<f64>> {
    let (a, q) = model.jacobians(u, v)?;
    let shifted = &a - s * &Array2::eye(a.nrows());
    let inv = linalg::inv_r(&shifted)
        .map_err(|_| Error::Singular("A - sI at rest point (characteristic speed)".into()))?;
    Ok(inv.dot(&q))
}

/// Connection indices and shock type from the endstate data alone.
pub fn classify(model: &RelaxationModel, shock: &ShockData) -> Result<Classification> {
    let n = model.n;
    let r = model.r;
    let jump = linalg::sup(&shock.jump_u());
    if jump < 1e-12 {
        return Err(Error::Degenerate("endstates coincide: not a shock".into()));
    }

    let eq_minus = model.equilibrium_data(&shock.u_minus)?;
    let eq_plus = model.equilibrium_data(&shock.u_plus)?;
    let (i_minus, i_plus, i, extreme) =
        equilibrium_indices(&eq_minus.speeds, &eq_plus.speeds, shock.s);

    let m_minus = rest_point_matrix(model, &shock.u_minus, &shock.v_minus, shock.s)?;
    let m_plus = rest_point_matrix(model, &shock.u_plus, &shock.v_plus, shock.s)?;
    let (wm, _) = linalg::eig_real(&m_minus)?;
    let (wp, _) = linalg::eig_real(&m_plus)?;
    let tol = 1e-10 * (1.0 + linalg::fro_r(&m_minus).max(linalg::fro_r(&m_plus)));
    let d_minus = wm.iter().filter(|z| z.re > tol).count();
    let d_plus = wp.iter().filter(|z| z.re < -tol).count();
    let d = d_minus + d_plus;

    if (d as i64) - (r as i64) != (i as i64) - (n as i64) {
        return Err(Error::Precondition(format!(
            "index identity violated: d - r = {} but i - n = {}",
            d as i64 - r as i64,
            i as i64 - n as i64
        )));
    }

    let kind = match i.cmp(&(n + 1)) {
        std::cmp::Ordering::Equal => ShockType::Lax,
        std::cmp::Ordering::Greater => ShockType::Overcompressive,
        std::cmp::Ordering::Less => {
            if i == n {
                ShockType::Undercompressive
            } else {
                ShockType::Mixed
            }
        }
    };

    let nu_minus_pred = wm
        .iter()
        .filter(|z| z.re > tol)
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    let nu_plus_pred = wp
        .iter()
        .filter(|z| z.re < -tol)
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);

    Ok(Classification {
        i_minus,
        i_plus,
        i,
        d_minus,
        d_plus,
        d,
        ell: 1,
        kind,
        extreme,
        nu_minus_pred,
        nu_plus_pred,
    })
}

/// Incoming-characteristic counts from the equilibrium speeds:
/// i_- = #{a*_j(u_-) > s}, i_+ = #{a*_j(u_+) < s}.
pub fn equilibrium_indices(
    speeds_minus: &[f64],
    speeds_plus: &[f64],
    s: f64,
) -> (usize, usize, usize, bool) {
    let i_minus = speeds_minus.iter().filter(|&&a| a > s).count();
    let i_plus = speeds_plus.iter().filter(|&&a| a < s).count();
    let n = speeds_minus.len();
    // "Extreme" is only meaningful for genuine systems; for n = 1 every
    // Lax shock trivially has i_- = n.
    let extreme = n >= 2 && (i_minus == n || i_plus == n);
    (i_minus, i_plus, i_minus + i_plus, extreme)
}

/// Solve the traveling-wave ODE on [-X, X] with phase condition
/// ū₁(0) = (u₋₁ + u₊₁)/2. Jin-Xin models use the scalar reduced equation;
/// custom models are solved by single shooting from the unstable manifold
/// at -∞.
pub fn solve_profile(
    model: &RelaxationModel,
    shock: &ShockData,
    x_half: f64,
    dx: f64,
) -> Result<ShockProfile> {
    if linalg::sup(&shock.jump_u()) < 1e-12 {
        return Err(Error::Degenerate("endstates coincide: not a shock".into()));
    }
    let classification = classify(model, shock)?;
    match model.kind {
        ModelKind::JinXin { a } => solve_jin_xin(model, shock, a, x_half, dx, classification),
        ModelKind::Custom => solve_shooting(model, shock, x_half, dx, classification),
    }
}

fn grid(x_half: f64, dx: f64) -> Array1<f64> {
    let half = (x_half / dx).round() as usize;
    Array1::from_iter((0..=2 * half).map(|i| -x_half + i as f64 * dx))
}

fn solve_jin_xin(
    model: &RelaxationModel,
    shock: &ShockData,
    a: f64,
    x_half: f64,
    dx: f64,
    classification: Classification,
) -> Result<ShockProfile> {
    let (h, _dh) = model.jin_xin_h().expect("jin-xin model carries h");
    let s = shock.s;
    let denom = a * a - s * s;
    if denom.abs() < 1e-12 {
        return Err(Error::Singular("a² - s² vanishes (characteristic frame)".into()));
    }
    let (um, up) = (shock.u_minus[0], shock.u_plus[0]);
    let c = h.eval(um) - s * um;
    let rhs = |u: f64| (h.eval(u) - s * u - c) / denom;
    let bound = um.abs().max(up.abs()) + 1.0;

    let x = grid(x_half, dx);
    let npts = x.len();
    let mid_idx = npts / 2;
    let mut uvals = vec![0.0; npts];
    uvals[mid_idx] = 0.5 * (um + up);
    // March from the midpoint both ways, 4 RK4 substeps per cell.
    for dir in [1i64, -1i64] {
        let h_step = dir as f64 * dx / 4.0;
        let mut u = uvals[mid_idx];
        let mut idx = mid_idx as i64;
        loop {
            let next = idx + dir;
            if next < 0 || next as usize >= npts {
                break;
            }
            for _ in 0..4 {
                let arr = linalg::rk4_step(&|_, y: &Array1<f64>| array![rhs(y[0])], 0.0, &array![u], h_step);
                u = arr[0];
            }
            if !u.is_finite() || u.abs() > bound {
                return Err(Error::NoConnection(format!("profile blow-up at x={}", x[next as usize])));
            }
            idx = next;
            uvals[idx as usize] = u;
        }
    }

    let v_const = shock.v_minus[0] - s * um;
    let mut u = Array2::zeros((npts, 1));
    let mut v = Array2::zeros((npts, 1));
    let mut du = Array2::zeros((npts, 1));
    let mut dv = Array2::zeros((npts, 1));
    for i in 0..npts {
        u[[i, 0]] = uvals[i];
        v[[i, 0]] = s * uvals[i] + v_const;
        du[[i, 0]] = rhs(uvals[i]);
        dv[[i, 0]] = s * du[[i, 0]];
    }
    Ok(ShockProfile { shock: shock.clone(), x_half, dx, x, u, v, du, dv, classification })
}

/// Full profile-ODE right-hand side z' = (A(z) - s)⁻¹ (0, q(z)).
fn profile_rhs(model: &RelaxationModel, z: &Array1<f64>, s: f64) -> Result<Array1<f64>> {
    let n = model.n;
    let u = z.slice(s![..n]).to_owned();
    let v = z.slice(s![n..]).to_owned();
    let (a, _) = model.jacobians(&u, &v)?;
    let shifted = &a - s * &Array2::eye(a.nrows());
    let mut rhs = Array1::zeros(model.dim());
    rhs.slice_mut(s![n..]).assign(&model.q(&u, &v));
    linalg::solve_r(&shifted, &rhs).map_err(|_| Error::Singular("A - sI along profile".into()))
}

fn solve_shooting(
    model: &RelaxationModel,
    shock: &ShockData,
    x_half: f64,
    dx: f64,
    classification: Classification,
) -> Result<ShockProfile> {
    let s = shock.s;
    let nn = model.dim();
    let z_minus = ndarray::concatenate![Axis(0), shock.u_minus.clone(), shock.v_minus.clone()];
    let z_plus = ndarray::concatenate![Axis(0), shock.u_plus.clone(), shock.v_plus.clone()];

    // Unstable direction at -∞ of the rest-point matrix; ℓ = 1 requires a
    // one-dimensional unstable manifold.
    let m_minus = rest_point_matrix(model, &shock.u_minus, &shock.v_minus, s)?;
    let (w, vecs) = linalg::eig_real(&m_minus)?;
    let tol = 1e-10 * (1.0 + linalg::fro_r(&m_minus));
    let unstable: Vec<usize> = (0..nn).filter(|&j| w[j].re > tol).collect();
    if unstable.len() != 1 {
        return Err(Error::NoConnection(format!(
            "unstable manifold at -∞ has dimension {} (ℓ=1 required)",
            unstable.len()
        )));
    }
    let mut dir: Array1<f64> = vecs.column(unstable[0]).mapv(|z| z.re);
    dir /= dir.dot(&dir).sqrt();
    // Orient toward u_+ in the first component.
    let mid = 0.5 * (shock.u_minus[0] + shock.u_plus[0]);
    if dir[0] * (shock.u_plus[0] - shock.u_minus[0]) < 0.0 {
        dir *= -1.0;
    }

    // Shoot from z_- + ε·dir; locate the phase-condition crossing by
    // in-step bisection, then resample centered at that crossing.
    let eps = 1e-6 * (1.0 + linalg::sup(&z_minus));
    let h_step = dx / 4.0;
    let bound = 10.0 * (1.0 + linalg::sup(&z_minus) + linalg::sup(&z_plus));
    let mut z = &z_minus + &(eps * &dir);
    let max_steps = (4.0 * x_half / dx) as usize * 8;
    let mut crossing: Option<Array1<f64>> = None;
    let cross_sign = (shock.u_plus[0] - shock.u_minus[0]).signum();
    for _ in 0..max_steps {
        let z_next = rk4_profile(model, &z, s, h_step)?;
        if linalg::sup(&z_next) > bound {
            return Err(Error::NoConnection("shooting trajectory blow-up".into()));
        }
        if (z_next[0] - mid) * cross_sign >= 0.0 {
            // Bisect inside the step for the crossing state.
            let (mut lo, mut hi) = (0.0f64, h_step);
            let mut z_mid = z.clone();
            for _ in 0..60 {
                let t = 0.5 * (lo + hi);
                z_mid = rk4_profile(model, &z, s, t)?;
                if (z_mid[0] - mid) * cross_sign >= 0.0 {
                    hi = t;
                } else {
                    lo = t;
                }
            }
            crossing = Some(z_mid);
            break;
        }
        z = z_next;
    }
    let z0 = crossing.ok_or_else(|| {
        Error::NoConnection("shooting never reached the phase condition".into())
    })?;

    let x = grid(x_half, dx);
    let npts = x.len();
    let mid_idx = npts / 2;
    let mut uarr = Array2::zeros((npts, model.n));
    let mut varr = Array2::zeros((npts, model.r));
    let mut duarr = Array2::zeros((npts, model.n));
    let mut dvarr = Array2::zeros((npts, model.r));
    let store = |z: &Array1<f64>,
                 dz: &Array1<f64>,
                 i: usize,
                 uarr: &mut Array2<f64>,
                 varr: &mut Array2<f64>,
                 duarr: &mut Array2<f64>,
                 dvarr: &mut Array2<f64>| {
        uarr.row_mut(i).assign(&z.slice(s![..model.n]));
        varr.row_mut(i).assign(&z.slice(s![model.n..]));
        duarr.row_mut(i).assign(&dz.slice(s![..model.n]));
        dvarr.row_mut(i).assign(&dz.slice(s![model.n..]));
    };
    let dz0 = profile_rhs(model, &z0, s)?;
    store(&z0, &dz0, mid_idx, &mut uarr, &mut varr, &mut duarr, &mut dvarr);
    for dir_sign in [1i64, -1i64] {
        let h_sub = dir_sign as f64 * dx / 4.0;
        let mut zc = z0.clone();
        let mut idx = mid_idx as i64;
        loop {
            let next = idx + dir_sign;
            if next < 0 || next as usize >= npts {
                break;
            }
            for _ in 0..4 {
                zc = rk4_profile(model, &zc, s, h_sub)?;
            }
            if linalg::sup(&zc) > bound {
                return Err(Error::NoConnection("profile blow-up during resampling".into()));
            }
            idx = next;
            let dz = profile_rhs(model, &zc, s)?;
            store(&zc, &dz, idx as usize, &mut uarr, &mut varr, &mut duarr, &mut dvarr);
        }
    }
    Ok(ShockProfile {
        shock: shock.clone(),
        x_half,
        dx,
        x,
        u: uarr,
        v: varr,
        du: duarr,
        dv: dvarr,
        classification,
    })
}

fn rk4_profile(model: &RelaxationModel, z: &Array1<f64>, s: f64, h: f64) -> Result<Array1<f64>> {
    // rk4_step takes an infallible closure; stash the first error aside.
    let err = std::cell::RefCell::new(None);
    let out = linalg::rk4_step(
        &|_, y: &Array1<f64>| match profile_rhs(model, y, s) {
            Ok(d) => d,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                Array1::zeros(y.len())
            }
        },
        0.0,
        z,
        h,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// A-posteriori verification report. All quantities are reported; nothing
/// is thrown.
#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub rh_residual: f64,
    pub first_integral_drift: f64,
    pub endstate_err_minus: f64,
    pub endstate_err_plus: f64,
    pub nu_minus_fit: f64,
    pub nu_plus_fit: f64,
    pub nu_minus_pred: f64,
    pub nu_plus_pred: f64,
    pub r2_minus: f64,
    pub r2_plus: f64,
}

impl ProfileReport {
    pub fn endstates_ok(&self) -> bool {
        self.endstate_err_minus <= 1e-6 && self.endstate_err_plus <= 1e-6
    }
    pub fn decay_matches(&self, rel_tol: f64) -> bool {
        (self.nu_minus_fit - self.nu_minus_pred).abs() <= rel_tol * self.nu_minus_pred
            && (self.nu_plus_fit - self.nu_plus_pred).abs() <= rel_tol * self.nu_plus_pred
            && self.r2_minus >= 0.999
            && self.r2_plus >= 0.999
    }
}

pub fn verify_profile(model: &RelaxationModel, profile: &ShockProfile) -> Result<ProfileReport> {
    let shock = &profile.shock;
    let s = shock.s;
    let rh = &model.f_star(&shock.u_plus)
        - &model.f_star(&shock.u_minus)
        - s * (&shock.u_plus - &shock.u_minus);
    let rh_residual = linalg::sup(&rh);

    // First integral f(ū, v̄) - sū against its left-endstate value.
    let reference = &model.f(&shock.u_minus, &shock.v_minus) - &(s * &shock.u_minus);
    let mut drift: f64 = 0.0;
    for i in 0..profile.npts() {
        let u = profile.u.row(i).to_owned();
        let v = profile.v.row(i).to_owned();
        let val = &model.f(&u, &v) - &(s * &u);
        drift = drift.max(linalg::sup(&(&val - &reference)));
    }

    let npts = profile.npts();
    let u_first = profile.u.row(0).to_owned();
    let v_first = profile.v.row(0).to_owned();
    let u_last = profile.u.row(npts - 1).to_owned();
    let v_last = profile.v.row(npts - 1).to_owned();
    let endstate_err_minus = linalg::sup(&(&u_first - &shock.u_minus))
        .max(linalg::sup(&(&v_first - &shock.v_minus)));
    let endstate_err_plus =
        linalg::sup(&(&u_last - &shock.u_plus)).max(linalg::sup(&(&v_last - &shock.v_plus)));

    // Tail fits of log|ū₁ - u_±₁| on the outer half-windows.
    let fit_tail = |left: bool| -> (f64, f64) {
        let target = if left { shock.u_minus[0] } else { shock.u_plus[0] };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..npts {
            let x = profile.x[i];
            let in_window = if left {
                x <= -profile.x_half / 2.0
            } else {
                x >= profile.x_half / 2.0
            };
            if in_window {
                let resid = (profile.u[[i, 0]] - target).abs();
                if resid > 1e-14 {
                    xs.push(x);
                    ys.push(resid.ln());
                }
            }
        }
        if xs.len() < 4 {
            return (f64::NAN, 0.0);
        }
        let (slope, _, r2) = linalg::fit_line(&xs, &ys);
        // Left tail decays like e^{+νx} (x → -∞), right like e^{-νx}.
        (if left { slope } else { -slope }, r2)
    };
    let (nu_minus_fit, r2_minus) = fit_tail(true);
    let (nu_plus_fit, r2_plus) = fit_tail(false);

    Ok(ProfileReport {
        rh_residual,
        first_integral_drift: drift,
        endstate_err_minus,
        endstate_err_plus,
        nu_minus_fit,
        nu_plus_fit,
        nu_minus_pred: profile.classification.nu_minus_pred,
        nu_plus_pred: profile.classification.nu_plus_pred,
        r2_minus,
        r2_plus,
    })
}

/// A constant-state "profile" at an equilibrium u (frozen-coefficient
/// medium for testing/diagnostics against closed-form kernels).
pub fn constant_profile(
    model: &RelaxationModel,
    u: Array1<f64>,
    x_half: f64,
    dx: f64,
) -> Result<ShockProfile> {
    let v = model.v_star(&u);
    let shock = ShockData {
        u_minus: u.clone(),
        u_plus: u.clone(),
        v_minus: v.clone(),
        v_plus: v.clone(),
        s: 0.0,
    };
    let npts = (2.0 * x_half / dx).round() as usize + 1;
    let x = Array1::from_iter((0..npts).map(|i| -x_half + i as f64 * dx));
    let n = model.n;
    let r = model.r;
    let mut u_arr = Array2::zeros((npts, n));
    let mut v_arr = Array2::zeros((npts, r));
    for i in 0..npts {
        u_arr.row_mut(i).assign(&u);
        v_arr.row_mut(i).assign(&v);
    }
    let classification = Classification {
        i_minus: 0,
        i_plus: 0,
        i: 0,
        d_minus: 0,
        d_plus: 0,
        d: 0,
        ell: 0,
        kind: ShockType::Lax,
        extreme: false,
        nu_minus_pred: 0.0,
        nu_plus_pred: 0.0,
    };
    Ok(ShockProfile {
        shock,
        x_half,
        dx,
        x,
        u: u_arr,
        v: v_arr,
        du: Array2::zeros((npts, n)),
        dv: Array2::zeros((npts, r)),
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Poly;

    fn setup() -> (RelaxationModel, ShockData) {
        let m = RelaxationModel::jin_xin(2.0, Poly::new(vec![0.0, 0.0, 0.5]));
        let shock = ShockData::new(&m, array![1.0], array![-1.0], 0.0).unwrap();
        (m, shock)
    }

    #[test]
    fn jin_xin_profile_matches_tanh() {
        let (m, shock) = setup();
        let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
        let mut sup = 0.0f64;
        for i in 0..p.npts() {
            let exact = -(p.x[i] / 8.0).tanh();
            sup = sup.max((p.u[[i, 0]] - exact).abs());
            sup = sup.max((p.v[[i, 0]] - 0.5).abs());
        }
        assert!(sup < 1e-8, "sup error {sup}");
    }

    #[test]
    fn odd_symmetry_for_symmetric_flux() {
        let (m, shock) = setup();
        let p = solve_profile(&m, &shock, 40.0, 0.1).unwrap();
        let npts = p.npts();
        for i in 0..npts {
            let diff = (p.u[[i, 0]] + p.u[[npts - 1 - i, 0]]).abs();
            assert!(diff < 1e-8, "asymmetry {diff} at i={i}");
        }
    }

    #[test]
    fn tail_rate_is_quarter() {
        let (m, shock) = setup();
        let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
        let rep = verify_profile(&m, &p).unwrap();
        for (fit, pred) in [
            (rep.nu_minus_fit, rep.nu_minus_pred),
            (rep.nu_plus_fit, rep.nu_plus_pred),
        ] {
            assert!((pred - 0.25).abs() < 1e-12);
            assert!((fit - pred).abs() < 0.02 * pred, "fit {fit} vs pred {pred}");
        }
        assert!(rep.r2_minus >= 0.999 && rep.r2_plus >= 0.999);
    }

    #[test]
    fn burgers_instance_is_lax() {
        let (m, shock) = setup();
        let c = classify(&m, &shock).unwrap();
        assert_eq!((c.i_minus, c.i_plus, c.i), (1, 1, 2));
        assert_eq!((c.d_minus, c.d_plus), (1, 1));
        assert_eq!(c.kind, ShockType::Lax);
        assert_eq!(c.d as i64 - 1, c.i as i64 - 1); // d - r = i - n with n = r = 1
        assert!(!c.extreme);
    }

    #[test]
    fn constant_state_rejected() {
        let (m, _) = setup();
        let shock = ShockData {
            u_minus: array![1.0],
            u_plus: array![1.0],
            v_minus: array![0.5],
            v_plus: array![0.5],
            s: 0.0,
        };
        assert!(matches!(classify(&m, &shock), Err(Error::Degenerate(_))));
    }

    #[test]
    fn extreme_index_counting() {
        // All equilibrium speeds on the left exceed s: i_- = n.
        let (i_minus, i_plus, i, extreme) = equilibrium_indices(&[1.0, 2.0], &[0.5, 1.5], 0.0);
        assert_eq!((i_minus, i_plus, i), (2, 0, 2));
        assert!(extreme);
    }

    #[test]
    fn closed_form_profile_verifies_clean() {
        let (m, shock) = setup();
        let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
        let rep = verify_profile(&m, &p).unwrap();
        assert!(rep.rh_residual <= 1e-8);
        assert!(rep.first_integral_drift <= 1e-8, "drift {}", rep.first_integral_drift);
        assert!(rep.endstates_ok(), "{rep:?}");
    }

    #[test]
    fn short_domain_flags_endstate_error() {
        let (m, shock) = setup();
        let p = solve_profile(&m, &shock, 5.0, 0.05).unwrap();
        let rep = verify_profile(&m, &p).unwrap();
        assert!(rep.endstate_err_minus > 1e-6 && rep.endstate_err_plus > 1e-6);
    }

    #[test]
    fn perturbed_profile_flags_drift() {
        let (m, shock) = setup();
        let mut p = solve_profile(&m, &shock, 40.0, 0.1).unwrap();
        // Deterministic 1e-3 oscillatory contamination of v̄ (the first
        // integral for this model is f - sū = v̄, insensitive to ū noise).
        for i in 0..p.npts() {
            p.v[[i, 0]] += 1e-3 * (p.x[i] * 7.3).sin();
        }
        let rep = verify_profile(&m, &p).unwrap();
        assert!(
            rep.first_integral_drift > 2e-4 && rep.first_integral_drift < 1e-2,
            "drift {}",
            rep.first_integral_drift
        );
    }

    #[test]
    fn shooting_path_matches_scalar_solver() {
        // Run the same Jin-Xin model through the generic shooting solver.
        let (m, shock) = setup();
        let a2 = 4.0;
        let h = Poly::new(vec![0.0, 0.0, 0.5]);
        let hc = h.clone();
        let dh = h.deriv();
        let generic = RelaxationModel::custom(
            1,
            1,
            Box::new(|_u, v| v.clone()),
            Box::new(move |u, _v| array![a2 * u[0]]),
            Box::new(move |u, v| array![hc.eval(u[0]) - v[0]]),
            Box::new(move |u| array![h.eval(u[0])]),
            None,
        );
        let _ = dh;
        let p_ref = solve_profile(&m, &shock, 30.0, 0.1).unwrap();
        let shock_g = ShockData::new(&generic, array![1.0], array![-1.0], 0.0).unwrap();
        let p = solve_profile(&generic, &shock_g, 30.0, 0.1).unwrap();
        let mut sup = 0.0f64;
        for i in 0..p.npts() {
            sup = sup.max((p.u[[i, 0]] - p_ref.u[[i, 0]]).abs());
        }
        assert!(sup < 1e-4, "shooting vs scalar sup {sup}");
    }
}
