//! Time-domain Green's-function decomposition G ≈ H + E + S: the
//! scattering table, characteristic (hyperbolic) transport with
//! dissipation, the excited term with its shift kernel e(y,t), the
//! scattered Gaussians, and a truncated contour inversion of the
//! resolvent for cross-validation.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::evans::EvansSystem;
use crate::linalg::{self, C64};
use crate::model::{RelaxationModel, ShockData};
use crate::profile::{ShockProfile, ShockType};

/// errfn(z) = (1/√π)∫_{−∞}^z e^{−s²} ds = (1 + erf z)/2.
pub fn errfn(z: f64) -> f64 {
    0.5 * (1.0 + linalg::erf(z))
}

/// One incoming column of the scattering table: coefficients of the
/// outgoing equilibrium modes on each side and of the mass vectors.
#[derive(Debug, Clone)]
pub struct ScatterColumn {
    /// Incoming equilibrium family index.
    pub k: usize,
    /// Coefficients of outgoing left modes, indexed like `out_minus`.
    pub reflected: Vec<f64>,
    /// Coefficients of outgoing right modes, indexed like `out_plus`.
    pub transmitted: Vec<f64>,
    /// Coefficients of the mass vectors m_j, j = 1..ℓ.
    pub masses: Vec<f64>,
    /// Linear-solve residual.
    pub residual: f64,
}

/// Scattering data of a Lax (or pure overcompressive) profile.
#[derive(Debug, Clone)]
pub struct ScatteringTable {
    /// Outgoing family indices: a*_j < s at −∞, a*_j > s at +∞.
    pub out_minus: Vec<usize>,
    pub out_plus: Vec<usize>,
    /// Incoming family indices: a*_k > s at −∞, a*_k < s at +∞.
    pub in_minus: Vec<usize>,
    pub in_plus: Vec<usize>,
    /// Columns for data incoming from the left / right.
    pub cols_minus: Vec<ScatterColumn>,
    pub cols_plus: Vec<ScatterColumn>,
    /// Mass vectors m_j = ∫ ∂_δj ū dx as columns (n × ℓ).
    pub masses: Array2<f64>,
    /// Left zero effective eigenfunctions π_j as rows (ℓ × (n+r)).
    pub pi: Array2<f64>,
    /// Inviscid stability determinant Δ and the sign relating the
    /// scattering-system determinant to it.
    pub delta: f64,
    pub det_sign: f64,
    /// Worst linear-solve residual over all incoming columns.
    pub residual: f64,
    /// Cross-side π-consistency defect.
    pub pi_consistency: f64,
    /// Endstate data used to assemble E and S.
    pub a_star_minus: Vec<f64>,
    pub a_star_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub beta_plus: Vec<f64>,
    /// (n+r) × n lifted right vectors R*_j = (r*_j, ∂v*/∂u · r*_j).
    pub r_lift_minus: Array2<f64>,
    pub r_lift_plus: Array2<f64>,
    /// (n+r) × n lifted left vectors L*_j = (l*_j, 0).
    pub l_lift_minus: Array2<f64>,
    pub l_lift_plus: Array2<f64>,
}

/// Solve the scattering linear systems for every incoming family on both
/// sides and assemble the π functionals.
pub fn scattering_solve(
    model: &RelaxationModel,
    shock: &ShockData,
    profile: &ShockProfile,
) -> Result<ScatteringTable> {
    let n = model.n;
    let r = model.r;
    let ell = profile.classification.ell;
    match profile.classification.kind {
        ShockType::Lax | ShockType::Overcompressive => {}
        ref k => {
            return Err(Error::Precondition(format!(
                "scattering table requires Lax/overcompressive type, got {k}"
            )))
        }
    }
    let eq_minus = model.equilibrium_data(&shock.u_minus)?;
    let eq_plus = model.equilibrium_data(&shock.u_plus)?;
    let ce_minus = model.chapman_enskog(&shock.u_minus)?;
    let ce_plus = model.chapman_enskog(&shock.u_plus)?;
    let s = shock.s;

    let out_minus: Vec<usize> = (0..n).filter(|&j| eq_minus.speeds[j] < s).collect();
    let out_plus: Vec<usize> = (0..n).filter(|&j| eq_plus.speeds[j] > s).collect();
    let in_minus: Vec<usize> = (0..n).filter(|&j| eq_minus.speeds[j] > s).collect();
    let in_plus: Vec<usize> = (0..n).filter(|&j| eq_plus.speeds[j] < s).collect();

    // Mass vectors m_j = ∫ ∂_δj ū dx; the shift parametrization
    // ū^δ(x) = ū(x − δ) gives ∂_δ ū = −ū′.
    let mut masses = Array2::zeros((n, ell));
    for j in 0..ell {
        for comp in 0..n {
            let col: Vec<f64> = profile.du.column(comp).iter().map(|&d| -d).collect();
            masses[[comp, j]] = linalg::trapezoid(&col, profile.dx);
        }
    }

    if out_minus.len() + out_plus.len() + ell != n {
        return Err(Error::Precondition(format!(
            "scattering system not square: {} + {} + {ell} ≠ {n}",
            out_minus.len(),
            out_plus.len()
        )));
    }
    // System matrix: [outgoing r*⁻ | outgoing r*⁺ | m₁ … m_ℓ].
    let mut sys = Array2::zeros((n, n));
    let mut c = 0usize;
    for &j in &out_minus {
        sys.column_mut(c).assign(&eq_minus.rstar.column(j));
        c += 1;
    }
    for &j in &out_plus {
        sys.column_mut(c).assign(&eq_plus.rstar.column(j));
        c += 1;
    }
    for j in 0..ell {
        sys.column_mut(c).assign(&masses.column(j));
        c += 1;
    }
    let delta = crate::evans::liu_majda_delta(model, shock)?;
    let det_sys = {
        use ndarray_linalg::Determinant;
        linalg::to_c(&sys)
            .det()
            .map_err(|e| Error::Eigen(format!("scattering determinant: {e}")))?
            .re
    };
    if det_sys.abs() < 1e-10 {
        return Err(Error::Singular(
            "scattering system: Δ = 0, inviscid stability condition (D2) fails".into(),
        ));
    }
    let det_sign = (det_sys / delta).signum();

    let mut residual: f64 = 0.0;
    let nm = out_minus.len();
    let np = out_plus.len();
    let mut solve_for = |rhs: &Array1<f64>, k: usize| -> Result<ScatterColumn> {
        let sol = linalg::solve_r(&sys, rhs)?;
        let res = linalg::sup(&(&sys.dot(&sol) - rhs));
        residual = residual.max(res);
        if res > 1e-10 {
            return Err(Error::NoConvergence(format!("scattering residual {res:.3e}")));
        }
        Ok(ScatterColumn {
            k,
            reflected: sol.slice(s![..nm]).to_vec(),
            transmitted: sol.slice(s![nm..nm + np]).to_vec(),
            masses: sol.slice(s![nm + np..]).to_vec(),
            residual: res,
        })
    };
    let mut cols_minus = Vec::new();
    for &k in &in_minus {
        cols_minus.push(solve_for(&eq_minus.rstar.column(k).to_owned(), k)?);
    }
    let mut cols_plus = Vec::new();
    for &k in &in_plus {
        cols_plus.push(solve_for(&eq_plus.rstar.column(k).to_owned(), k)?);
    }

    // Lifted vectors R* = (r*, (∂v*/∂u) r*) = (r*, −q_v⁻¹ q_u r*),
    // L* = (l*, 0).
    let lift = |u: &Array1<f64>,
                eq: &crate::model::EquilibriumData|
     -> Result<(Array2<f64>, Array2<f64>)> {
        let v = model.v_star(u);
        let qv = model.q_v(u, &v);
        let qu = model.q_u(u, &v);
        let vstar_u = linalg::inv_r(&qv)?.dot(&qu).mapv(|x| -x);
        let mut rl = Array2::zeros((n + r, n));
        let mut ll = Array2::zeros((n + r, n));
        for j in 0..n {
            let rj = eq.rstar.column(j).to_owned();
            rl.slice_mut(s![..n, j]).assign(&rj);
            rl.slice_mut(s![n.., j]).assign(&vstar_u.dot(&rj));
            ll.slice_mut(s![..n, j]).assign(&eq.lstar.row(j));
        }
        Ok((rl, ll))
    };
    let (r_lift_minus, l_lift_minus) = lift(&shock.u_minus, &eq_minus)?;
    let (r_lift_plus, l_lift_plus) = lift(&shock.u_plus, &eq_plus)?;

    // π_j = Σ_{incoming k,−} c^{j,0}_{k,−} L*_k⁻ = Σ_{incoming k,+} ….
    let mut pi = Array2::zeros((ell, n + r));
    let mut pi_plus = Array2::zeros((ell, n + r));
    for col in &cols_minus {
        for j in 0..ell {
            pi.row_mut(j).scaled_add(col.masses[j], &l_lift_minus.column(col.k));
        }
    }
    for col in &cols_plus {
        for j in 0..ell {
            pi_plus.row_mut(j).scaled_add(col.masses[j], &l_lift_plus.column(col.k));
        }
    }
    let pi_consistency = (&pi - &pi_plus).iter().map(|v| v.abs()).fold(0.0, f64::max);
    if pi_consistency > 1e-10 {
        return Err(Error::NoConvergence(format!(
            "π cross-side consistency defect {pi_consistency:.3e}"
        )));
    }

    Ok(ScatteringTable {
        out_minus,
        out_plus,
        in_minus,
        in_plus,
        cols_minus,
        cols_plus,
        masses,
        pi,
        delta,
        det_sign,
        residual,
        pi_consistency,
        a_star_minus: eq_minus.speeds.iter().map(|a| a - s).collect(),
        a_star_plus: eq_plus.speeds.iter().map(|a| a - s).collect(),
        beta_minus: ce_minus.beta.clone(),
        beta_plus: ce_plus.beta.clone(),
        r_lift_minus,
        r_lift_plus,
        l_lift_minus,
        l_lift_plus,
    })
}

/// Characteristic data of the frozen flux Jacobian sampled on the profile
/// grid, with eigenvector signs made continuous in x. All path
/// integrations interpolate from here, keeping the hot loops free of
/// eigendecompositions.
pub struct CharCache {
    pub x_half: f64,
    pub dx: f64,
    pub npts: usize,
    pub nn: usize,
    pub mults: Vec<usize>,
    /// speed[fam][node].
    speed: Vec<Array1<f64>>,
    /// η entries flattened row-major, (npts × m²) per family.
    eta: Vec<Array2<f64>>,
    /// Right blocks flattened, (npts × nn·m) per family.
    rmat: Vec<Array2<f64>>,
    /// Left blocks flattened, (npts × m·nn) per family.
    lmat: Vec<Array2<f64>>,
    /// min |speed| over the grid, 0 when the family speed changes sign.
    min_abs_speed: Vec<f64>,
    max_abs_speed: f64,
}

impl CharCache {
    pub fn new(model: &RelaxationModel, profile: &ShockProfile) -> Result<Self> {
        let npts = profile.npts();
        let nn = model.dim();
        let md0 = {
            let (u, v) = profile.at(profile.x[0]);
            model.hyperbolic_modes(&u, &v, profile.shock.s)?
        };
        let nfam = md0.families.len();
        let mults: Vec<usize> = md0.families.iter().map(|f| f.mult).collect();
        let mut speed = vec![Array1::zeros(npts); nfam];
        let mut eta: Vec<Array2<f64>> =
            mults.iter().map(|&m| Array2::zeros((npts, m * m))).collect();
        let mut rmat: Vec<Array2<f64>> =
            mults.iter().map(|&m| Array2::zeros((npts, nn * m))).collect();
        let mut lmat: Vec<Array2<f64>> =
            mults.iter().map(|&m| Array2::zeros((npts, m * nn))).collect();
        for i in 0..npts {
            let (u, v) = profile.at(profile.x[i]);
            let md = model.hyperbolic_modes(&u, &v, profile.shock.s)?;
            if md.families.len() != nfam {
                return Err(Error::NonHyperbolic(
                    "characteristic family count changes across the profile".into(),
                ));
            }
            for (j, fam) in md.families.iter().enumerate() {
                if fam.mult != mults[j] {
                    return Err(Error::NonHyperbolic(
                        "characteristic multiplicity changes across the profile".into(),
                    ));
                }
                let m = mults[j];
                let mut rj = fam.r.clone();
                let mut lj = fam.l.clone();
                let mut ej = fam.eta.clone();
                // Sign continuity against the previous node. Flipping a
                // column of r with the matching row of l preserves l·r = I
                // and flips the off-diagonal entries of η in that row and
                // column.
                if i > 0 {
                    for c in 0..m {
                        let mut dot = 0.0;
                        for a in 0..nn {
                            dot += fam.r[[a, c]] * rmat[j][[i - 1, a * m + c]];
                        }
                        if dot < 0.0 {
                            rj.column_mut(c).mapv_inplace(|v| -v);
                            lj.row_mut(c).mapv_inplace(|v| -v);
                            for b in 0..m {
                                if b != c {
                                    ej[[c, b]] = -ej[[c, b]];
                                    ej[[b, c]] = -ej[[b, c]];
                                }
                            }
                        }
                    }
                }
                speed[j][i] = fam.speed;
                for a in 0..nn {
                    for b in 0..m {
                        rmat[j][[i, a * m + b]] = rj[[a, b]];
                    }
                }
                for a in 0..m {
                    for b in 0..nn {
                        lmat[j][[i, a * nn + b]] = lj[[a, b]];
                    }
                }
                for a in 0..m {
                    for b in 0..m {
                        eta[j][[i, a * m + b]] = ej[[a, b]];
                    }
                }
            }
        }
        let min_abs_speed = speed
            .iter()
            .map(|sp| {
                let all_pos = sp.iter().all(|&v| v > 0.0);
                let all_neg = sp.iter().all(|&v| v < 0.0);
                if all_pos || all_neg {
                    sp.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                }
            })
            .collect();
        let max_abs_speed = speed
            .iter()
            .flat_map(|sp| sp.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        Ok(CharCache {
            x_half: profile.x_half,
            dx: profile.dx,
            npts,
            nn,
            mults,
            speed,
            eta,
            rmat,
            lmat,
            min_abs_speed,
            max_abs_speed,
        })
    }

    pub fn n_families(&self) -> usize {
        self.mults.len()
    }

    fn clampx(&self, x: f64) -> f64 {
        x.clamp(-self.x_half, self.x_half)
    }

    pub fn speed_at(&self, fam: usize, x: f64) -> f64 {
        linalg::interp_uniform(-self.x_half, self.dx, self.speed[fam].view(), self.clampx(x))
    }

    pub fn eta_at(&self, fam: usize, x: f64) -> Array2<f64> {
        let m = self.mults[fam];
        let x = self.clampx(x);
        Array2::from_shape_fn((m, m), |(a, b)| {
            linalg::interp_uniform(-self.x_half, self.dx, self.eta[fam].column(a * m + b), x)
        })
    }

    pub fn r_at(&self, fam: usize, x: f64) -> Array2<f64> {
        let m = self.mults[fam];
        let x = self.clampx(x);
        Array2::from_shape_fn((self.nn, m), |(a, b)| {
            linalg::interp_uniform(-self.x_half, self.dx, self.rmat[fam].column(a * m + b), x)
        })
    }

    pub fn l_at(&self, fam: usize, x: f64) -> Array2<f64> {
        let m = self.mults[fam];
        let x = self.clampx(x);
        Array2::from_shape_fn((m, self.nn), |(a, b)| {
            linalg::interp_uniform(-self.x_half, self.dx, self.lmat[fam].column(a * self.nn + b), x)
        })
    }
}

/// Result of following one characteristic path for time t.
#[derive(Debug, Clone)]
pub struct PathData {
    /// Arrival point z_j(y, t).
    pub z_end: f64,
    /// Dissipation matrix ζ_j(y,t) (m_j × m_j).
    pub zeta: Array2<f64>,
    /// Time average of (tr η_j)/m_j along the path.
    pub eta_bar: f64,
}

/// Integrate dz/dt = a_j(z), dζ/dt = −η_j(z)ζ from y for time t with RK4
/// at step min(Δx/max|a|, t/100).
pub fn characteristic_path(cache: &CharCache, family: usize, y: f64, t: f64) -> Result<PathData> {
    if t < 0.0 {
        return Err(Error::Precondition("characteristic_path needs t ≥ 0".into()));
    }
    if family >= cache.n_families() {
        return Err(Error::Precondition(format!("family {family} out of range")));
    }
    let m = cache.mults[family];
    if t == 0.0 {
        return Ok(PathData { z_end: y, zeta: Array2::eye(m), eta_bar: 0.0 });
    }
    let dt = (cache.dx / cache.max_abs_speed.max(1e-12)).min(t / 100.0);
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut z = y;
    let mut zeta = Array2::<f64>::eye(m);
    let mut eta_int = 0.0;
    let tr = |e: &Array2<f64>| e.diag().sum() / m as f64;
    for _ in 0..steps {
        let k1z = cache.speed_at(family, z);
        let e1 = cache.eta_at(family, z);
        let k1m = -e1.dot(&zeta);
        let k2z = cache.speed_at(family, z + 0.5 * h * k1z);
        let e2 = cache.eta_at(family, z + 0.5 * h * k1z);
        let k2m = -e2.dot(&(&zeta + &(&k1m * (0.5 * h))));
        let k3z = cache.speed_at(family, z + 0.5 * h * k2z);
        let e3 = cache.eta_at(family, z + 0.5 * h * k2z);
        let k3m = -e3.dot(&(&zeta + &(&k2m * (0.5 * h))));
        let k4z = cache.speed_at(family, z + h * k3z);
        let e4 = cache.eta_at(family, z + h * k3z);
        let k4m = -e4.dot(&(&zeta + &(&k3m * h)));
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        zeta = &zeta + &((k1m + &k2m * 2.0 + &k3m * 2.0 + k4m) * (h / 6.0));
        eta_int += h / 6.0 * (tr(&e1) + 2.0 * tr(&e2) + 2.0 * tr(&e3) + tr(&e4));
    }
    Ok(PathData { z_end: z, zeta, eta_bar: eta_int / t })
}

/// Backward arrival: the y with z_j(y, t) = x, found by integrating the
/// reversed flow dz/ds = −a_j(z).
fn backward_point(cache: &CharCache, family: usize, x: f64, t: f64) -> f64 {
    if t == 0.0 {
        return x;
    }
    let dt = (cache.dx / cache.max_abs_speed.max(1e-12)).min(t / 100.0);
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut z = x;
    for _ in 0..steps {
        let k1 = -cache.speed_at(family, z);
        let k2 = -cache.speed_at(family, z + 0.5 * h * k1);
        let k3 = -cache.speed_at(family, z + 0.5 * h * k2);
        let k4 = -cache.speed_at(family, z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    z
}

/// Apply the hyperbolic term: (Hf)(x) = Σ_j r_j(x) ζ_j(y_j,t) l_jᵗ(y_j)
/// f(y_j), y_j the backward characteristic arrival (unit delta weight —
/// the a_j⁻¹ prefactor cancels the path Jacobian). `f` is sampled on the
/// profile grid ((n+r) columns); values outside the grid count as zero.
pub fn h_apply(cache: &CharCache, f: &Array2<f64>, t: f64) -> Result<Array2<f64>> {
    let npts = cache.npts;
    let nn = cache.nn;
    if f.nrows() != npts || f.ncols() != nn {
        return Err(Error::Precondition("f must be sampled on the profile grid".into()));
    }
    let sample_f = |y: f64| -> Array1<f64> {
        Array1::from_iter(
            (0..nn).map(|c| linalg::interp_uniform(-cache.x_half, cache.dx, f.column(c), y)),
        )
    };
    let margin = cache.dx;
    let mut out = Array2::zeros((npts, nn));
    for fam in 0..cache.n_families() {
        // A strictly one-signed family whose minimum sweep exceeds the
        // domain diameter has no preimage anywhere on the grid.
        if cache.min_abs_speed[fam] * t > 2.0 * cache.x_half + margin {
            continue;
        }
        for i in 0..npts {
            let x = -cache.x_half + i as f64 * cache.dx;
            let y_j = backward_point(cache, fam, x, t);
            if y_j < -cache.x_half - margin || y_j > cache.x_half + margin {
                continue;
            }
            let fy = sample_f(y_j.clamp(-cache.x_half, cache.x_half));
            if fy.iter().all(|v| v.abs() < 1e-300) {
                continue;
            }
            let path = characteristic_path(cache, fam, y_j, t)?;
            let coords = cache.l_at(fam, y_j).dot(&fy);
            let weighted = path.zeta.dot(&coords);
            let contrib = cache.r_at(fam, x).dot(&weighted);
            out.row_mut(i).zip_mut_with(&contrib, |o, &c| *o += c);
        }
    }
    Ok(out)
}

/// ∂_δŪ(x) = −(ū′, v̄′)(x) for the shift parametrization Ū^δ(x) = Ū(x−δ),
/// as a column of length n+r.
pub fn d_delta_profile(profile: &ShockProfile, x: f64) -> Array1<f64> {
    let (du, dv) = profile.d_at(x);
    let mut out = Array1::zeros(du.len() + dv.len());
    out.slice_mut(s![..du.len()]).assign(&du.mapv(|v| -v));
    out.slice_mut(s![du.len()..]).assign(&dv.mapv(|v| -v));
    out
}

/// Shift kernel rows e_j(y,t) (ℓ × (n+r)): errfn-difference brackets
/// weighted by the mass coefficients c^{j,0} and the lifted left vectors,
/// so that E = Σ_j ∂_δj Ū(x) · e_j(y,t).
pub fn e_kernel(table: &ScatteringTable, y: f64, t: f64) -> Array2<f64> {
    let nn = table.l_lift_minus.nrows();
    let ell = table.pi.nrows();
    let mut out = Array2::zeros((ell, nn));
    if t <= 0.0 {
        return out;
    }
    let (cols, l_lift, a_star, beta) = if y <= 0.0 {
        (&table.cols_minus, &table.l_lift_minus, &table.a_star_minus, &table.beta_minus)
    } else {
        (&table.cols_plus, &table.l_lift_plus, &table.a_star_plus, &table.beta_plus)
    };
    let y_tilde = -y.abs();
    for col in cols {
        let a = a_star[col.k].abs();
        let b = beta[col.k];
        let denom = (4.0 * b * t).sqrt();
        let bracket = errfn((y_tilde + a * t) / denom) - errfn((y_tilde - a * t) / denom);
        for j in 0..ell {
            out.row_mut(j).scaled_add(col.masses[j] * bracket, &l_lift.column(col.k));
        }
    }
    out
}

/// Excited term E(x,t;y) = Σ_j ∂_δj Ū(x) · e_j(y,t) as an (n+r) × (n+r)
/// matrix kernel.
pub fn e_eval(
    profile: &ShockProfile,
    table: &ScatteringTable,
    x: f64,
    t: f64,
    y: f64,
) -> Array2<f64> {
    let e = e_kernel(table, y, t);
    let du = d_delta_profile(profile, x);
    let nn = du.len();
    let mut out = Array2::zeros((nn, nn));
    for j in 0..e.nrows() {
        for a in 0..nn {
            for b in 0..nn {
                out[[a, b]] += du[a] * e[[j, b]];
            }
        }
    }
    out
}

/// (4πv)^{−1/2} e^{−z²/v} with v = 4βt, cut at 12 standard deviations.
fn gaussian(z: f64, var4: f64) -> f64 {
    if var4 <= 0.0 {
        return 0.0;
    }
    let sig2 = var4 / 2.0;
    if z * z > 144.0 * sig2 {
        return 0.0;
    }
    (std::f64::consts::PI * var4).powf(-0.5) * (-z * z / var4).exp()
}

/// Scattering term S(x,t;y): direct, reflected, and transmitted Gaussians
/// along the scattered characteristic paths, with the smooth side weights
/// e^{∓x}/(e^x + e^{−x}); zero for t < 1.
pub fn s_eval(table: &ScatteringTable, x: f64, t: f64, y: f64) -> Array2<f64> {
    let nn = table.r_lift_minus.nrows();
    let mut out = Array2::zeros((nn, nn));
    if t < 1.0 {
        return out;
    }
    let xc = x.clamp(-300.0, 300.0);
    let (ex, emx) = (xc.exp(), (-xc).exp());
    let w_left = emx / (ex + emx);
    let w_right = ex / (ex + emx);
    // Data-side quantities (the formula is mirror-symmetric in y).
    let (cols, a_in, b_in, r_in, l_in, w_same) = if y <= 0.0 {
        (&table.cols_minus, &table.a_star_minus, &table.beta_minus, &table.r_lift_minus, &table.l_lift_minus, w_left)
    } else {
        (&table.cols_plus, &table.a_star_plus, &table.beta_plus, &table.r_lift_plus, &table.l_lift_plus, w_right)
    };
    let (out_same, a_same, b_same, r_same, w_refl) = if y <= 0.0 {
        (&table.out_minus, &table.a_star_minus, &table.beta_minus, &table.r_lift_minus, w_left)
    } else {
        (&table.out_plus, &table.a_star_plus, &table.beta_plus, &table.r_lift_plus, w_right)
    };
    let (out_other, a_other, b_other, r_other, w_trans) = if y <= 0.0 {
        (&table.out_plus, &table.a_star_plus, &table.beta_plus, &table.r_lift_plus, w_right)
    } else {
        (&table.out_minus, &table.a_star_minus, &table.beta_minus, &table.r_lift_minus, w_left)
    };

    let add_outer = |out: &mut Array2<f64>, rj: ArrayView1<f64>, lk: ArrayView1<f64>, w: f64| {
        for a in 0..nn {
            for b in 0..nn {
                out[[a, b]] += w * rj[a] * lk[b];
            }
        }
    };

    // Free Gaussians of the purely outgoing families on the data side.
    for &j in out_same {
        let g = gaussian(x - y - a_same[j] * t, 4.0 * b_same[j] * t);
        if g > 0.0 {
            add_outer(&mut out, r_same.column(j), l_in.column(j), g);
        }
    }
    for col in cols {
        let k = col.k;
        // Direct incoming Gaussian, absorbed once it crosses the shock
        // (the transferred mass reappears in E and the scattered terms).
        let g = gaussian(x - y - a_in[k] * t, 4.0 * b_in[k] * t);
        if g > 0.0 {
            add_outer(&mut out, r_in.column(k), l_in.column(k), g * w_same);
        }
        let t_hit = y.abs() / a_in[k].abs().max(1e-300);
        // Reflected: outgoing on the data side.
        for (jj, &j) in out_same.iter().enumerate() {
            let c = col.reflected[jj];
            if c == 0.0 {
                continue;
            }
            let z_star = a_same[j] * (t - t_hit);
            let x_side = if y <= 0.0 { x.min(0.0).abs() } else { x.max(0.0) };
            let beta_bar = x_side / (a_same[j].abs() * t).max(1e-300) * b_same[j]
                + y.abs() / (a_in[k].abs() * t).max(1e-300) * (a_same[j] / a_in[k]).powi(2) * b_in[k];
            let g = gaussian(x - z_star, 4.0 * beta_bar * t);
            if g > 0.0 {
                add_outer(&mut out, r_same.column(j), l_in.column(k), c * g * w_refl);
            }
        }
        // Transmitted: outgoing on the far side.
        for (jj, &j) in out_other.iter().enumerate() {
            let c = col.transmitted[jj];
            if c == 0.0 {
                continue;
            }
            let z_star = a_other[j] * (t - t_hit);
            let x_side = if y <= 0.0 { x.max(0.0) } else { x.min(0.0).abs() };
            let beta_bar = x_side / (a_other[j].abs() * t).max(1e-300) * b_other[j]
                + y.abs() / (a_in[k].abs() * t).max(1e-300) * (a_other[j] / a_in[k]).powi(2) * b_in[k];
            let g = gaussian(x - z_star, 4.0 * beta_bar * t);
            if g > 0.0 {
                add_outer(&mut out, r_other.column(j), l_in.column(k), c * g * w_trans);
            }
        }
    }
    out
}

/// Instantaneous shift δ(t) = ∫ e(y,t) U₀(y) dy and the asymptotic
/// perturbation φ(x,t) = Σ_j δ_j(t) ∂_δj Ū(x).
pub fn linear_shift(
    profile: &ShockProfile,
    table: &ScatteringTable,
    u0: &Array2<f64>,
    t: f64,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let npts = profile.npts();
    let nn = table.l_lift_minus.nrows();
    if u0.nrows() != npts || u0.ncols() != nn {
        return Err(Error::Precondition("U₀ must be sampled on the profile grid".into()));
    }
    let ell = table.pi.nrows();
    let mut delta = Array1::zeros(ell);
    for j in 0..ell {
        let integrand: Vec<f64> = (0..npts)
            .map(|i| e_kernel(table, profile.x[i], t).row(j).dot(&u0.row(i)))
            .collect();
        delta[j] = linalg::trapezoid(&integrand, profile.dx);
    }
    let mut phi = Array2::zeros((npts, nn));
    for i in 0..npts {
        let du = d_delta_profile(profile, profile.x[i]);
        for j in 0..ell {
            phi.row_mut(i).scaled_add(delta[j], &du);
        }
    }
    Ok((delta, phi))
}

/// Full approximate Green's action: H f + ∫(E+S)(x,t;y) f(y) dy.
pub fn green_apply(
    profile: &ShockProfile,
    cache: &CharCache,
    table: &ScatteringTable,
    f: &Array2<f64>,
    t: f64,
) -> Result<Array2<f64>> {
    let mut out = h_apply(cache, f, t)?;
    let npts = profile.npts();
    // E is rank-ℓ in x: one kernel integral.
    let (_, phi) = linear_shift(profile, table, f, t)?;
    out += &phi;
    if t >= 1.0 {
        for iy in 0..npts {
            let y = profile.x[iy];
            let fy = f.row(iy);
            if fy.iter().all(|v| v.abs() < 1e-300) {
                continue;
            }
            let wq = if iy == 0 || iy == npts - 1 { 0.5 } else { 1.0 } * profile.dx;
            for ix in 0..npts {
                let s_mat = s_eval(table, profile.x[ix], t, y);
                if s_mat.iter().all(|v| *v == 0.0) {
                    continue;
                }
                out.row_mut(ix).scaled_add(wq, &s_mat.dot(&fy));
            }
        }
    }
    Ok(out)
}

/// Apply the linearized spatial operator L f = −(A f)′ + Q f on the grid
/// (traveling frame; fourth-order interior differences).
pub fn apply_linearized(
    model: &RelaxationModel,
    profile: &ShockProfile,
    f: &Array2<f64>,
) -> Result<Array2<f64>> {
    let npts = profile.npts();
    let nn = model.dim();
    let s = profile.shock.s;
    let mut af = Array2::zeros((npts, nn));
    let mut qf = Array2::zeros((npts, nn));
    for i in 0..npts {
        let (u, v) = profile.at(profile.x[i]);
        let (a0, q) = model.jacobians(&u, &v)?;
        let a = &a0 - s * &Array2::eye(nn);
        af.row_mut(i).assign(&a.dot(&f.row(i).to_owned()));
        qf.row_mut(i).assign(&q.dot(&f.row(i).to_owned()));
    }
    let dx = profile.dx;
    let mut out = Array2::zeros((npts, nn));
    for c in 0..nn {
        for i in 0..npts {
            let d = if i >= 2 && i + 2 < npts {
                (af[[i - 2, c]] - 8.0 * af[[i - 1, c]] + 8.0 * af[[i + 1, c]] - af[[i + 2, c]])
                    / (12.0 * dx)
            } else if i == 0 {
                (af[[1, c]] - af[[0, c]]) / dx
            } else if i == npts - 1 {
                (af[[i, c]] - af[[i - 1, c]]) / dx
            } else {
                (af[[i + 1, c]] - af[[i - 1, c]]) / (2.0 * dx)
            };
            out[[i, c]] = -d + qf[[i, c]];
        }
    }
    Ok(out)
}

/// Apply the resolvent (λ−L)⁻¹ to a grid function by variation of
/// constants from the marched decaying bases: the kernel action is
/// (G g)(x) = −Φ⁺(x)∫_{−X}^x M_top dy + Φ⁻(x)∫_x^X M_bot dy with
/// M(y) = Φ(y)⁻¹A(y)⁻¹g(y), and (λ−L)⁻¹g = −(G g). O(npts) per λ.
pub fn resolvent_apply(
    system: &EvansSystem<'_>,
    lambda: C64,
    g: &Array2<f64>,
) -> Result<Array2<C64>> {
    let profile = system.profile;
    let npts = profile.npts();
    let nn = system.dim();
    if g.nrows() != npts || g.ncols() != nn {
        return Err(Error::Precondition("g must be sampled on the profile grid".into()));
    }
    let basis = system.resolvent_basis(lambda)?;
    let k = basis.k;
    let mut tops: Vec<Array1<C64>> = Vec::with_capacity(npts);
    let mut bots: Vec<Array1<C64>> = Vec::with_capacity(npts);
    for i in 0..npts {
        let mut phi = Array2::<C64>::zeros((nn, nn));
        phi.slice_mut(s![.., ..k]).assign(&basis.phi_plus[i]);
        phi.slice_mut(s![.., k..]).assign(&basis.phi_minus[i]);
        let m = linalg::solve_c(&phi, &g.row(i).mapv(|v| C64::new(v, 0.0)))?;
        tops.push(m.slice(s![..k]).to_owned());
        bots.push(m.slice(s![k..]).to_owned());
    }
    let half = C64::new(0.5 * profile.dx, 0.0);
    let mut cplus = Array1::<C64>::zeros(k);
    let mut cminus = Array1::<C64>::zeros(nn - k);
    for i in 1..npts {
        cminus = &cminus + &((&bots[i - 1] + &bots[i]) * half);
    }
    let mut out = Array2::<C64>::zeros((npts, nn));
    for i in 0..npts {
        if i > 0 {
            cplus = &cplus + &((&tops[i - 1] + &tops[i]) * half);
            cminus = &cminus - &((&bots[i - 1] + &bots[i]) * half);
        }
        // Z = Φ⁺ c⁺ − Φ⁻ c⁻ solves Z′ = (Q − λ)A⁻¹Z + g; W = A⁻¹Z.
        let z = basis.phi_plus[i].dot(&cplus) - basis.phi_minus[i].dot(&cminus);
        let w = linalg::to_c(system.a_inv_at(profile.x[i])).dot(&z);
        out.row_mut(i).assign(&w);
    }
    Ok(out)
}

/// Truncated Bromwich inversion of the resolvent:
/// e^{Lt}f = f + t·Lf + (1/2πi)∫ e^{λt} λ⁻² (λ−L)⁻¹ L²f dλ over the
/// vertical contour Re λ = η₀, |Im λ| ≤ Ξ (double resolvent-identity
/// subtraction makes the integrand O(|λ|⁻³); conjugate symmetry halves
/// the samples). Returns the field and a truncation-tail estimate.
/// Thread count from RELAX_EVANS_THREADS (default 1).
pub fn contour_green(
    model: &RelaxationModel,
    profile: &ShockProfile,
    f: &Array2<f64>,
    t: f64,
    eta0: f64,
    xi_max: f64,
    d_xi: f64,
) -> Result<(Array2<f64>, f64)> {
    if t <= 0.0 {
        return Err(Error::Precondition("contour_green needs t > 0".into()));
    }
    let npts = profile.npts();
    let nn = model.dim();
    let lf = apply_linearized(model, profile, f)?;
    let llf = apply_linearized(model, profile, &lf)?;
    let system = EvansSystem::new(model, profile)?;

    // Real part of e^{λt}λ⁻²(λ−L)⁻¹L²f / π at ξ ≥ 0 (conjugate symmetry;
    // the ξ = 0 sample carries half weight).
    let eval_xi = |xi: f64| -> Result<Array2<f64>> {
        let lambda = C64::new(eta0, xi);
        let w = resolvent_apply(&system, lambda, &llf)?;
        let factor = (lambda * t).exp() / (lambda * lambda);
        let sym = if xi == 0.0 { 0.5 } else { 1.0 };
        Ok(w.mapv(|z| (z * factor).re * sym / std::f64::consts::PI))
    };
    let n_samples = (xi_max / d_xi).ceil() as usize;
    let xis: Vec<f64> = (0..=n_samples).map(|i| i as f64 * d_xi).collect();
    let threads: usize = std::env::var("RELAX_EVANS_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1);
    let mut contributions: Vec<Option<Array2<f64>>> = vec![None; xis.len()];
    if threads <= 1 {
        for (i, &xi) in xis.iter().enumerate() {
            contributions[i] = Some(eval_xi(xi)?);
        }
    } else {
        let results: Vec<Result<(usize, Array2<f64>)>> = std::thread::scope(|scope| {
            let eval = &eval_xi;
            let handles: Vec<_> = (0..threads)
                .map(|tid| {
                    let chunk: Vec<(usize, f64)> = xis
                        .iter()
                        .cloned()
                        .enumerate()
                        .filter(|(i, _)| i % threads == tid)
                        .collect();
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|(i, xi)| eval(xi).map(|m| (i, m)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("contour worker")).collect()
        });
        for rr in results {
            let (i, m) = rr?;
            contributions[i] = Some(m);
        }
    }
    let mut integral = Array2::<f64>::zeros((npts, nn));
    for (i, c) in contributions.iter().enumerate() {
        let c = c.as_ref().expect("all ξ evaluated");
        let w = if i == 0 || i == n_samples { 0.5 } else { 1.0 };
        integral.scaled_add(w * d_xi, c);
    }
    // |integrand| ≲ e^{η₀t}‖L²f‖/ξ² beyond the truncation point.
    let llf_norm = llf.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tail = (eta0 * t).exp() * llf_norm / (std::f64::consts::PI * xi_max);
    let out = f + &lf.mapv(|v| v * t) + &integral;
    Ok((out, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Poly;
    use crate::profile::solve_profile;

    fn fixture() -> (RelaxationModel, ShockData, ShockProfile) {
        let m = RelaxationModel::jin_xin(2.0, Poly::new(vec![0.0, 0.0, 0.5]));
        let shock = ShockData::new(&m, array![1.0], array![-1.0], 0.0).unwrap();
        let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
        (m, shock, p)
    }

    /// ∫η along the +2 characteristic from x0 to x1: η = (2 − ū)/4 with
    /// ū = −tanh(x/8), via the log-cosh antiderivative, divided by the
    /// speed to convert the space integral to a time integral.
    fn eta_integral_fast(x0: f64, x1: f64) -> f64 {
        let anti = |x: f64| (2.0 * x + 8.0 * (x / 8.0).cosh().ln()) / (4.0 * 2.0);
        anti(x1) - anti(x0)
    }

    #[test]
    fn errfn_values() {
        assert!((errfn(0.0) - 0.5).abs() < 1e-14);
        for z in [-3.0, -0.7, 0.2, 1.5, 4.0] {
            assert!((errfn(z) + errfn(-z) - 1.0).abs() < 1e-12);
        }
        // Simpson quadrature oracle of the defining integral at z = 1
        // (trapezoid is only ~1e-8 accurate at this panel count).
        let (lo, hi, n) = (-8.0f64, 1.0f64, 40_000usize);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let s = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * h / 3.0 * (-s * s).exp();
        }
        acc /= std::f64::consts::PI.sqrt();
        assert!((errfn(1.0) - acc).abs() < 1e-12);
        assert!((errfn(1.0) - 0.921350).abs() < 1e-6);
    }

    #[test]
    fn scattering_table_scalar() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // Scalar Lax shock: no outgoing equilibrium families at all.
        assert!(table.out_minus.is_empty());
        assert!(table.out_plus.is_empty());
        assert_eq!(table.in_minus, vec![0]);
        assert_eq!(table.in_plus, vec![0]);
        // 1×1 solve c·m₁ = r* = 1 with m₁ = 2 ⇒ c = 0.5 on both sides.
        // The grid mass sees the truncated tails: m₁ = 2 − 2(1 − tanh(X/8))
        // = 2 − 1.22e-6 at X = 60, so these hold to ~2e-6, not machine.
        assert!((table.masses[[0, 0]] - 2.0).abs() < 2e-6);
        assert!((table.cols_minus[0].masses[0] - 0.5).abs() < 1e-6);
        assert!((table.cols_plus[0].masses[0] - 0.5).abs() < 1e-6);
        assert!(table.cols_minus[0].reflected.is_empty());
        assert!(table.cols_minus[0].transmitted.is_empty());
        // π₁ = (0.5, 0); det(system) = ±Δ with Δ = 2.
        assert!((table.pi[[0, 0]] - 0.5).abs() < 1e-6);
        assert!(table.pi[[0, 1]].abs() < 1e-12);
        assert!((table.delta - 2.0).abs() < 1e-10);
        assert!((table.det_sign.abs() - 1.0).abs() < 1e-12);
        assert!(table.residual <= 1e-10);
        assert!(table.pi_consistency <= 1e-10);
    }

    #[test]
    fn characteristic_path_constant_speed() {
        let (m, _, p) = fixture();
        let cache = CharCache::new(&m, &p).unwrap();
        // Jin-Xin frozen speeds are constant ±a: exact translation.
        let pd = characteristic_path(&cache, 1, -50.0, 1.0).unwrap();
        assert!((pd.z_end - -48.0).abs() < 1e-10);
        let eta_exact = eta_integral_fast(-50.0, -48.0);
        assert!((pd.eta_bar - eta_exact).abs() < 1e-6, "{} vs {eta_exact}", pd.eta_bar);
        assert!((pd.eta_bar - 0.25).abs() < 2e-3);
        assert!((pd.zeta[[0, 0]] - (-eta_exact).exp()).abs() < 1e-6);
        assert!((pd.zeta[[0, 0]] - 0.7788).abs() < 2e-3);
    }

    #[test]
    fn zeta_decays_at_dissipation_rate() {
        let (m, _, p) = fixture();
        let cache = CharCache::new(&m, &p).unwrap();
        for (fam, y) in [(0usize, 30.0), (1usize, -30.0)] {
            let mut min_eta = f64::INFINITY;
            let mut ts = Vec::new();
            let mut lns = Vec::new();
            for i in 1..=6 {
                let t = 2.0 * i as f64;
                let pd = characteristic_path(&cache, fam, y, t).unwrap();
                min_eta = min_eta.min(pd.eta_bar);
                ts.push(t);
                lns.push(pd.zeta[[0, 0]].ln());
            }
            let (slope, _, _) = linalg::fit_line(&ts, &lns);
            assert!(-slope >= 0.9 * min_eta, "family {fam}: rate {} vs η {min_eta}", -slope);
        }
    }

    #[test]
    fn h_apply_identity_at_t0() {
        let (m, _, p) = fixture();
        let cache = CharCache::new(&m, &p).unwrap();
        let npts = p.npts();
        let mut f = Array2::zeros((npts, 2));
        for i in 0..npts {
            let x = p.x[i];
            f[[i, 0]] = (-0.1 * (x + 10.0) * (x + 10.0)).exp();
            f[[i, 1]] = 0.3 * (-0.05 * x * x).exp();
        }
        let hf = h_apply(&cache, &f, 0.0).unwrap();
        let err = (&hf - &f).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "t=0 identity error {err}");
    }

    #[test]
    fn h_apply_far_field_transport() {
        let (m, _, p) = fixture();
        let cache = CharCache::new(&m, &p).unwrap();
        let npts = p.npts();
        // f in the rightward characteristic direction, bump at −50.
        let (u, v) = p.at(-50.0);
        let md = m.hyperbolic_modes(&u, &v, 0.0).unwrap();
        let r_plus = md.families[1].r.column(0).to_owned();
        let mut f = Array2::zeros((npts, 2));
        for i in 0..npts {
            let bump = (-4.0 * (p.x[i] + 50.0) * (p.x[i] + 50.0)).exp();
            f.row_mut(i).assign(&r_plus.mapv(|c| c * bump));
        }
        let hf = h_apply(&cache, &f, 1.0).unwrap();
        // (Hf)(−48) = e^{−∫η}·r₊ l₊ᵗ f(−50), with ∫η ≈ 0.25 out here.
        let i48 = ((-48.0 + p.x_half) / p.dx).round() as usize;
        let zeta = (-eta_integral_fast(-50.0, -48.0)).exp();
        let expect = r_plus.mapv(|c| c * zeta);
        let err = (&hf.row(i48) - &expect).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "far-field transport error {err}");
        assert!((zeta - (-0.25f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn h_apply_support() {
        let (m, _, p) = fixture();
        let cache = CharCache::new(&m, &p).unwrap();
        let npts = p.npts();
        let mut f = Array2::zeros((npts, 2));
        for i in 0..npts {
            if (-12.0..=-8.0).contains(&p.x[i]) {
                f[[i, 0]] = 1.0;
                f[[i, 1]] = 0.5;
            }
        }
        let t = 2.0;
        let hf = h_apply(&cache, &f, t).unwrap();
        // Supp Hf ⊂ [min supp − |a|t, max supp + |a|t] = [−16, −4].
        for i in 0..npts {
            let x = p.x[i];
            if x < -16.0 - 0.2 || x > -4.0 + 0.2 {
                assert!(
                    hf.row(i).iter().all(|v| v.abs() < 1e-12),
                    "H support violated at x = {x}"
                );
            }
        }
    }

    #[test]
    fn e_limits() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // t→∞: E_u(0,∞,y) → 0.5·(−ū′(0)) = 0.5·(1/8) = 0.0625.
        let e_inf = e_eval(&p, &table, 0.0, 1e7, -3.0);
        assert!((e_inf[[0, 0]] - 0.0625).abs() < 1e-6, "{}", e_inf[[0, 0]]);
        // t→0⁺ at fixed y ≠ 0: E → 0.
        let e_0 = e_eval(&p, &table, 0.0, 1e-6, -3.0);
        assert!(e_0.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12);
        // errfn brackets in [0,1]: entries bounded by c·max|L*|.
        for y in [-20.0, -1.0, 0.5, 12.0] {
            for t in [0.5, 2.0, 50.0] {
                let e = e_kernel(&table, y, t);
                assert!(e.iter().all(|v| v.abs() <= 0.5 + 1e-12));
            }
        }
    }

    #[test]
    fn s_direct_peak() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // Direct-Gaussian peak at x − y = a*₋t for y ≤ x ≤ 0:
        // (4πβ*t)^{−1/2} with β* = 3, t = 4.
        let t = 4.0;
        let (y, x) = (-14.0, -10.0);
        let s = s_eval(&table, x, t, y);
        let expect = (4.0 * std::f64::consts::PI * 3.0 * t).powf(-0.5);
        assert!((s[[0, 0]] - expect).abs() < 1e-6, "{} vs {expect}", s[[0, 0]]);
        assert!((expect - 0.081441).abs() < 1e-5);
        // χ_{t≥1}: S ≡ 0 for t < 1.
        let s0 = s_eval(&table, x, 0.5, y);
        assert!(s0.iter().all(|v| *v == 0.0));
        // Beyond the shock the direct term is absorbed by the weight.
        let (y2, x2) = (2.0 - t, 2.0);
        let s2 = s_eval(&table, x2, t, y2);
        assert!(s2[[0, 0]] < 0.05 * expect, "{}", s2[[0, 0]]);
        // Formula audit at sample points: magnitude re-derived from the
        // Gaussian formula and the side weight.
        for (xx, yy, tt) in [(-8.0, -11.0, 3.0), (-20.0, -22.5, 2.5)] {
            let sv = s_eval(&table, xx, tt, yy)[[0, 0]];
            let g = (4.0 * std::f64::consts::PI * 3.0 * tt).powf(-0.5)
                * (-(xx - yy - tt) * (xx - yy - tt) / (12.0 * tt)).exp();
            let w = (-xx).exp() / (xx.exp() + (-xx).exp());
            assert!((sv - g * w).abs() < 1e-12, "audit at ({xx},{yy},{tt})");
        }
    }

    #[test]
    fn e_s_mass_balance() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // lim_{t→∞} ∫ u-row of (E+S)(x,t;y) dx = (1, 0) at fixed y.
        let t = 4000.0;
        let y = -5.0;
        let npts = p.npts();
        let mut row = [0.0f64; 2];
        for i in 0..npts {
            let w = if i == 0 || i == npts - 1 { 0.5 } else { 1.0 } * p.dx;
            let es = e_eval(&p, &table, p.x[i], t, y) + s_eval(&table, p.x[i], t, y);
            row[0] += w * es[[0, 0]];
            row[1] += w * es[[0, 1]];
        }
        assert!((row[0] - 1.0).abs() < 1e-3, "u-mass {}", row[0]);
        assert!(row[1].abs() < 1e-3, "v-mass {}", row[1]);
    }

    #[test]
    fn shift_kernel_limits() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // t→0⁺ off the shock: e → 0.
        let e = e_kernel(&table, -4.0, 1e-8);
        assert!(e.iter().all(|v| v.abs() < 1e-14));
        // t→∞: e → π₁ = (0.5, 0).
        let e_inf = e_kernel(&table, -4.0, 1e9);
        // π₁ carries the profile-tail truncation of m₁ (~3e-7 off 0.5).
        assert!((e_inf[[0, 0]] - 0.5).abs() < 1e-6);
        assert!(e_inf[[0, 1]].abs() < 1e-12);
        // Unit-mass u-perturbation: δ(∞) = 0.5·∫u₀ = 0.5.
        let npts = p.npts();
        let mut u0 = Array2::zeros((npts, 2));
        let total: f64 = p
            .x
            .iter()
            .map(|&x| (-0.25 * (x + 8.0) * (x + 8.0)).exp())
            .sum::<f64>()
            * p.dx;
        for i in 0..npts {
            u0[[i, 0]] = (-0.25 * (p.x[i] + 8.0) * (p.x[i] + 8.0)).exp() / total;
        }
        let (delta, phi) = linear_shift(&p, &table, &u0, 1e9).unwrap();
        assert!((delta[0] - 0.5).abs() < 1e-6, "δ(∞) = {}", delta[0]);
        // φ = δ·∂_δŪ: u-component at the shock is δ·(−ū′(0)) = δ/8.
        let mid = npts / 2;
        assert!((phi[[mid, 0]] - delta[0] * 0.125).abs() < 1e-8);
        // δ(0⁺) = 0 for data vanishing near the shock.
        let (delta0, _) = linear_shift(&p, &table, &u0, 1e-9).unwrap();
        assert!(delta0[0].abs() < 1e-10);
    }

    #[test]
    fn e_kernel_derivative_bounded() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        // |∂_y e|_{L¹} bounded in t and → 0 as t → 0 (difference of
        // approaching heat kernels).
        let l1_dy = |t: f64| -> f64 {
            let h = 0.01;
            let mut acc = 0.0;
            let mut y = -40.0;
            while y < 40.0 {
                let d = (e_kernel(&table, y + h, t)[[0, 0]]
                    - e_kernel(&table, y - h, t)[[0, 0]])
                    / (2.0 * h);
                acc += d.abs() * 0.05;
                y += 0.05;
            }
            acc
        };
        let vals: Vec<f64> = [0.01, 0.1, 1.0, 10.0].iter().map(|&t| l1_dy(t)).collect();
        assert!(vals.iter().all(|v| *v < 2.0), "{vals:?}");
        assert!(vals[0] < 0.2 * vals[2], "no t→0 decay: {vals:?}");
    }

    #[test]
    fn green_apply_stationary_mode() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        let cache = CharCache::new(&m, &p).unwrap();
        let npts = p.npts();
        let mut f = Array2::zeros((npts, 2));
        for i in 0..npts {
            f[[i, 0]] = p.du[[i, 0]];
            f[[i, 1]] = p.dv[[i, 0]];
        }
        let l1 = |g: &Array2<f64>| -> f64 { g.iter().map(|v| v.abs()).sum::<f64>() * p.dx };
        // The exact solution is G(t)Ū′ = Ū′ for all t. The leading-order
        // H + E + S decomposition reproduces it only up to the residual
        // term, whose L¹ norm decays like (1 + t)^{-1/2}: at short times
        // H has already relaxed mass that the t ≥ 1 Gaussians of S spread
        // over width √(4βt), so the pointwise error is O(1) at t = 1 and
        // closes as the errfn bracket in E saturates. Pin that decay.
        let mut errs = Vec::new();
        for (t, cap) in [(1.0, 2.5), (5.0, 1.0), (20.0, 0.3)] {
            let gf = green_apply(&p, &cache, &table, &f, t).unwrap();
            let err = l1(&(&gf - &f));
            assert!(err <= cap, "t = {t}: L¹ error {err} exceeds {cap}");
            errs.push((t, err));
        }
        for w in errs.windows(2) {
            assert!(w[1].1 < w[0].1, "residual must decay: {errs:?}");
        }
        // Rate check: err·(1+t)^{1/2} stays bounded (no slower-than-
        // diffusive tail in the residual).
        for &(t, err) in &errs {
            assert!(err * (1.0 + t).sqrt() < 3.5, "t = {t}: scaled residual {}", err * (1.0 + t).sqrt());
        }
    }

    #[test]
    fn green_apply_mass_conservation() {
        let (m, shock, p) = fixture();
        let table = scattering_solve(&m, &shock, &p).unwrap();
        let cache = CharCache::new(&m, &p).unwrap();
        let npts = p.npts();
        // Near-delta at y₀ = −10 in u, unit grid mass.
        let mut f = Array2::zeros((npts, 2));
        let total: f64 = p
            .x
            .iter()
            .map(|&x| (-16.0 * (x + 10.0) * (x + 10.0)).exp())
            .sum::<f64>()
            * p.dx;
        for i in 0..npts {
            f[[i, 0]] = (-16.0 * (p.x[i] + 10.0) * (p.x[i] + 10.0)).exp() / total;
        }
        let t = 200.0;
        let gf = green_apply(&p, &cache, &table, &f, t).unwrap();
        let mass: f64 = gf.column(0).sum() * p.dx;
        assert!((mass - 1.0).abs() < 1e-6, "u-mass {mass}");
    }

    #[test]
    fn resolvent_apply_inverts_lambda_minus_l() {
        let (m, _, p) = fixture();
        let system = EvansSystem::new(&m, &p).unwrap();
        let npts = p.npts();
        let mut g = Array2::zeros((npts, 2));
        for i in 0..npts {
            let x = p.x[i];
            g[[i, 0]] = (-0.2 * (x - 4.0) * (x - 4.0)).exp();
            g[[i, 1]] = 0.5 * (-0.3 * (x + 6.0) * (x + 6.0)).exp();
        }
        let lambda = C64::new(0.5, 0.3);
        let w = resolvent_apply(&system, lambda, &g).unwrap();
        // Check (λ − L)W = g on the interior via the real and imaginary
        // parts separately (L is real).
        let wr = w.mapv(|z| z.re);
        let wi = w.mapv(|z| z.im);
        let lwr = apply_linearized(&m, &p, &wr).unwrap();
        let lwi = apply_linearized(&m, &p, &wi).unwrap();
        let gsup = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for i in 0..npts {
            if p.x[i].abs() > 50.0 {
                continue;
            }
            for c in 0..2 {
                let lhs = C64::new(
                    lambda.re * wr[[i, c]] - lambda.im * wi[[i, c]] - lwr[[i, c]],
                    lambda.re * wi[[i, c]] + lambda.im * wr[[i, c]] - lwi[[i, c]],
                );
                worst = worst.max((lhs - C64::new(g[[i, c]], 0.0)).norm());
            }
        }
        assert!(worst < 1e-3 * gsup.max(1.0), "resolvent residual {worst}");
    }
}
