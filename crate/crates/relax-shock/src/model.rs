//! Relaxation systems: the general callable interface, the built-in Jin-Xin
//! family, Jacobians, equilibrium reduction, Chapman-Enskog quantities,
//! characteristic/dissipation data, and hypothesis checks.

use ndarray::prelude::*;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};

/// Real polynomial in one variable, lowest coefficient first.
#[derive(Debug, Clone)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn deriv(&self) -> Poly {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Poly { coeffs }
    }
}

type VecFn = Box<dyn Fn(&Array1<f64>, &Array1<f64>) -> Array1<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(&Array1<f64>, &Array1<f64>) -> Array2<f64> + Send + Sync>;
type EqFn = Box<dyn Fn(&Array1<f64>) -> Array1<f64> + Send + Sync>;

/// Analytic Jacobian blocks of (f, g, q) with respect to (u, v).
pub struct AnalyticJacobians {
    pub f_u: MatFn,
    pub f_v: MatFn,
    pub g_u: MatFn,
    pub g_v: MatFn,
    pub q_u: MatFn,
    pub q_v: MatFn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    JinXin { a: f64 },
    Custom,
}

/// A relaxation system (u, v)_t + (f, g)(u, v)_x = (0, q)(u, v) with
/// n conserved and r relaxing variables and equilibrium manifold
/// v = v*(u), q(u, v*(u)) = 0.
pub struct RelaxationModel {
    pub n: usize,
    pub r: usize,
    pub kind: ModelKind,
    f: VecFn,
    g: VecFn,
    q: VecFn,
    v_star: EqFn,
    jac: Option<AnalyticJacobians>,
    /// Equilibrium flux h and its derivative for the Jin-Xin family.
    jin_xin_h: Option<(Poly, Poly)>,
}

impl RelaxationModel {
    /// Scalar Jin-Xin model u_t + v_x = 0, v_t + a² u_x = h(u) - v
    /// with frozen speed a > 0 and polynomial equilibrium flux h.
    pub fn jin_xin(a: f64, h: Poly) -> Self {
        assert!(a > 0.0, "Jin-Xin speed a must be positive");
        let dh = h.deriv();
        let (hc, dhc) = (h.clone(), dh.clone());
        let h2 = h.clone();
        let a2 = a * a;
        RelaxationModel {
            n: 1,
            r: 1,
            kind: ModelKind::JinXin { a },
            f: Box::new(|_u, v| v.clone()),
            g: Box::new(move |u, _v| array![a2 * u[0]]),
            q: Box::new(move |u, v| array![hc.eval(u[0]) - v[0]]),
            v_star: Box::new(move |u| array![h2.eval(u[0])]),
            jac: Some(AnalyticJacobians {
                f_u: Box::new(|_, _| array![[0.0]]),
                f_v: Box::new(|_, _| array![[1.0]]),
                g_u: Box::new(move |_, _| array![[a2]]),
                g_v: Box::new(|_, _| array![[0.0]]),
                q_u: Box::new(move |u, _| array![[dhc.eval(u[0])]]),
                q_v: Box::new(|_, _| array![[-1.0]]),
            }),
            jin_xin_h: Some((h, dh)),
        }
    }

    /// General model from callables. Pass `jac: None` to request central
    /// finite-difference Jacobians (step 1e-6·(1+|u|)).
    pub fn custom(
        n: usize,
        r: usize,
        f: VecFn,
        g: VecFn,
        q: VecFn,
        v_star: EqFn,
        jac: Option<AnalyticJacobians>,
    ) -> Self {
        RelaxationModel { n, r, kind: ModelKind::Custom, f, g, q, v_star, jac, jin_xin_h: None }
    }

    pub fn dim(&self) -> usize {
        self.n + self.r
    }

    pub fn f(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        (self.f)(u, v)
    }
    pub fn g(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        (self.g)(u, v)
    }
    pub fn q(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        (self.q)(u, v)
    }
    pub fn v_star(&self, u: &Array1<f64>) -> Array1<f64> {
        (self.v_star)(u)
    }

    /// Equilibrium flux f*(u) = f(u, v*(u)).
    pub fn f_star(&self, u: &Array1<f64>) -> Array1<f64> {
        self.f(u, &self.v_star(u))
    }

    /// Jin-Xin equilibrium flux h and dh, if this is a Jin-Xin model.
    pub fn jin_xin_h(&self) -> Option<(&Poly, &Poly)> {
        self.jin_xin_h.as_ref().map(|(h, dh)| (h, dh))
    }

    fn block<F1, F2>(&self, analytic: F1, fallback: F2, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64>
    where
        F1: Fn(&AnalyticJacobians) -> &MatFn,
        F2: Fn() -> Array2<f64>,
    {
        match &self.jac {
            Some(j) => analytic(j)(u, v),
            None => {
                let _ = u;
                let _ = v;
                fallback()
            }
        }
    }

    pub fn f_u(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.f_u, || linalg::fd_jacobian(|x| self.f(x, v), u, self.n), u, v)
    }
    pub fn f_v(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.f_v, || linalg::fd_jacobian(|x| self.f(u, x), v, self.n), u, v)
    }
    pub fn g_u(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.g_u, || linalg::fd_jacobian(|x| self.g(x, v), u, self.r), u, v)
    }
    pub fn g_v(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.g_v, || linalg::fd_jacobian(|x| self.g(u, x), v, self.r), u, v)
    }
    pub fn q_u(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.q_u, || linalg::fd_jacobian(|x| self.q(x, v), u, self.r), u, v)
    }
    pub fn q_v(&self, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
        self.block(|j| &j.q_v, || linalg::fd_jacobian(|x| self.q(u, x), v, self.r), u, v)
    }

    /// Full flux Jacobian A = d(f, g) and source Jacobian Q = (0; d q)
    /// at the state (u, v). Errors on non-finite entries; reports a
    /// diagnostic if A has eigenvalues with imaginary part beyond
    /// 1e-10·(1+‖A‖) (hyperbolicity failure).
    pub fn jacobians(&self, u: &Array1<f64>, v: &Array1<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let (n, r, nn) = (self.n, self.r, self.dim());
        let mut a = Array2::zeros((nn, nn));
        let mut q = Array2::zeros((nn, nn));
        a.slice_mut(s![..n, ..n]).assign(&self.f_u(u, v));
        a.slice_mut(s![..n, n..]).assign(&self.f_v(u, v));
        a.slice_mut(s![n.., ..n]).assign(&self.g_u(u, v));
        a.slice_mut(s![n.., n..]).assign(&self.g_v(u, v));
        q.slice_mut(s![n.., ..n]).assign(&self.q_u(u, v));
        q.slice_mut(s![n.., n..]).assign(&self.q_v(u, v));
        let _ = r;
        if a.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonHyperbolic("non-finite Jacobian entries".into()));
        }
        let (w, _) = linalg::eig_real(&a)?;
        let scale = 1.0 + linalg::fro_r(&a);
        if w.iter().any(|z| z.im.abs() > 1e-10 * scale) {
            return Err(Error::NonHyperbolic(format!(
                "complex characteristic speeds detected: {w}"
            )));
        }
        Ok((a, q))
    }

    /// Equilibrium data at u: f*(u), df*(u) = f_u - f_v q_v⁻¹ q_u, and the
    /// eigen-decomposition of df* with speeds sorted ascending and
    /// l*ᵀ r* = I.
    pub fn equilibrium_data(&self, u: &Array1<f64>) -> Result<EquilibriumData> {
        let v = self.v_star(u);
        let qv_inv = linalg::inv_r(&self.q_v(u, &v)).map_err(|_| Error::Singular("q_v".into()))?;
        let df_star = &self.f_u(u, &v) - &self.f_v(u, &v).dot(&qv_inv).dot(&self.q_u(u, &v));
        let (speeds, rstar, lstar) = real_eigensystem(&df_star, "df*")?;
        Ok(EquilibriumData { f_star: self.f_star(u), df_star, speeds, rstar, lstar })
    }

    /// Chapman-Enskog effective diffusion B*(u) = -f_v q_v⁻¹ (g*_u - v*_u f*_u)
    /// and the per-family rates β*_j = l*_jᵀ B* r*_j.
    pub fn chapman_enskog(&self, u: &Array1<f64>) -> Result<ChapmanEnskog> {
        let v = self.v_star(u);
        let qv = self.q_v(u, &v);
        let qv_inv = linalg::inv_r(&qv).map_err(|_| Error::Singular("q_v".into()))?;
        // v*_u = -q_v⁻¹ q_u (implicit differentiation of q(u, v*(u)) = 0);
        // g*_u and f*_u are the total u-derivatives along the equilibrium
        // manifold.
        let vstar_u = -qv_inv.dot(&self.q_u(u, &v));
        let fstar_u = &self.f_u(u, &v) + &self.f_v(u, &v).dot(&vstar_u);
        let gstar_u = &self.g_u(u, &v) + &self.g_v(u, &v).dot(&vstar_u);
        let b_star = -self
            .f_v(u, &v)
            .dot(&qv_inv)
            .dot(&(&gstar_u - &vstar_u.dot(&fstar_u)));
        let eq = self.equilibrium_data(u)?;
        let mut beta = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let lj = eq.lstar.row(j);
            let rj = eq.rstar.column(j);
            beta.push(lj.dot(&b_star.dot(&rj)));
        }
        Ok(ChapmanEnskog { b_star, beta })
    }

    /// Characteristic families of A(u, v): speeds with multiplicities,
    /// biorthonormal right/left blocks, and dissipation blocks
    /// η_j = -l_jᵀ Q r_j. `shift` subtracts a frame speed s from all
    /// characteristic speeds (eigenvectors are unaffected).
    pub fn hyperbolic_modes(&self, u: &Array1<f64>, v: &Array1<f64>, shift: f64) -> Result<ModeData> {
        let (a, q) = self.jacobians(u, v)?;
        let (speeds, rmat, lmat) = real_eigensystem(&a, "A")?;
        let scale = 1e-8 * (1.0 + linalg::fro_r(&a));
        // Cluster sorted speeds into families.
        let mut families: Vec<CharFamily> = Vec::new();
        let mut start = 0;
        while start < speeds.len() {
            let mut end = start + 1;
            while end < speeds.len() && (speeds[end] - speeds[start]).abs() <= scale {
                end += 1;
            }
            let m = end - start;
            let r_blk = rmat.slice(s![.., start..end]).to_owned();
            let l_blk = lmat.slice(s![start..end, ..]).to_owned();
            let eta = -l_blk.dot(&q).dot(&r_blk);
            families.push(CharFamily {
                speed: speeds[start..end].iter().sum::<f64>() / m as f64 - shift,
                mult: m,
                r: r_blk,
                l: l_blk,
                eta,
            });
            start = end;
        }
        Ok(ModeData { families })
    }

    /// Eigenvalues of the frozen symbol -iξ A + Q at the equilibrium point
    /// (u, v*(u)), unsorted.
    pub fn dispersion_exact(&self, u: &Array1<f64>, xi: f64) -> Result<Vec<C64>> {
        let v = self.v_star(u);
        let (a, q) = self.jacobians(u, &v)?;
        let sym = linalg::to_c(&q) - linalg::to_c(&a).mapv(|z| z * C64::new(0.0, xi));
        let (w, _) = linalg::eig_complex(&sym)?;
        Ok(w.to_vec())
    }

    /// Dispersion curves λ_j(ξ) over a ξ-sweep, with branches matched for
    /// continuity by minimal-distance assignment between consecutive
    /// samples (half-stepping on ambiguity).
    pub fn dispersion_sweep(&self, u: &Array1<f64>, xis: &[f64]) -> Result<Array2<C64>> {
        let nn = self.dim();
        let mut out = Array2::zeros((xis.len(), nn));
        let mut prev: Option<Vec<C64>> = None;
        for (row, &xi) in xis.iter().enumerate() {
            let mut vals = self.dispersion_exact(u, xi)?;
            if let Some(p) = &prev {
                // Refine with a half-step if the assignment is ambiguous.
                let assigned = match match_branches(p, &vals) {
                    Some(a) => a,
                    None => {
                        let xi_half = if row > 0 { 0.5 * (xis[row - 1] + xi) } else { xi };
                        let mid = self.dispersion_exact(u, xi_half)?;
                        let m1 = match_branches(p, &mid).ok_or_else(|| {
                            Error::Eigen("dispersion branch matching failed".into())
                        })?;
                        let mid_sorted: Vec<C64> = m1;
                        match_branches(&mid_sorted, &vals)
                            .ok_or_else(|| Error::Eigen("dispersion branch matching failed".into()))?
                    }
                };
                vals = assigned;
            } else {
                // Deterministic start: sort by (re, im).
                vals.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
            }
            for (j, z) in vals.iter().enumerate() {
                out[[row, j]] = *z;
            }
            prev = Some(vals);
        }
        Ok(out)
    }

    /// Structural hypothesis report at a shock: multiplicity constancy,
    /// distinct equilibrium speeds with s avoided, dissipativity of the
    /// frozen symbols at the endstates, and (Jin-Xin) the subcharacteristic
    /// condition. Failures are reported, never thrown.
    pub fn check_hypotheses(&self, shock: &ShockData) -> Result<HypothesisReport> {
        let mut notes = Vec::new();

        // (H1): constant characteristic multiplicities along the segment
        // between the endstates (on the equilibrium manifold).
        let samples = 21;
        let mut mult_pattern: Option<Vec<usize>> = None;
        let mut h1 = true;
        for i in 0..samples {
            let t = i as f64 / (samples - 1) as f64;
            let u = (1.0 - t) * &shock.u_minus + t * &shock.u_plus;
            let v = self.v_star(&u);
            match self.hyperbolic_modes(&u, &v, 0.0) {
                Ok(md) => {
                    let pat: Vec<usize> = md.families.iter().map(|f| f.mult).collect();
                    match &mult_pattern {
                        None => mult_pattern = Some(pat),
                        Some(p) if *p != pat => {
                            h1 = false;
                            notes.push(format!("multiplicity change at segment point {t:.3}"));
                        }
                        _ => {}
                    }
                }
                Err(e) => {
                    h1 = false;
                    notes.push(format!("hyperbolicity failure at segment point {t:.3}: {e}"));
                }
            }
        }

        // (H2): simple real equilibrium characteristics at the endstates,
        // noncharacteristic shock speed.
        let mut h2 = true;
        for (tag, u) in [("-", &shock.u_minus), ("+", &shock.u_plus)] {
            match self.equilibrium_data(u) {
                Ok(eq) => {
                    for w in eq.speeds.windows(2) {
                        if (w[1] - w[0]).abs() < 1e-8 {
                            h2 = false;
                            notes.push(format!("equilibrium speeds not distinct at u{tag}"));
                        }
                    }
                    if eq.speeds.iter().any(|&aj| (aj - shock.s).abs() < 1e-8) {
                        h2 = false;
                        notes.push(format!("s characteristic for df* at u{tag}"));
                    }
                }
                Err(e) => {
                    h2 = false;
                    notes.push(format!("equilibrium data failed at u{tag}: {e}"));
                }
            }
            let v = self.v_star(u);
            let (a, _) = self.jacobians(u, &v)?;
            let (w, _) = linalg::eig_real(&a)?;
            if w.iter().any(|z| (z.re - shock.s).abs() < 1e-8) {
                h2 = false;
                notes.push(format!("s characteristic for (df,dg) at u{tag}"));
            }
        }

        // (H3): dissipativity estimate from a logarithmic ξ-grid sweep of
        // the frozen symbol at both endstates. θ := min over the grid of
        // -max_j Re λ_j(ξ) · (1+ξ²)/ξ².
        let theta_minus = self.dissipativity_theta(&shock.u_minus)?;
        let theta_plus = self.dissipativity_theta(&shock.u_plus)?;
        let h3 = theta_minus > 0.0 && theta_plus > 0.0;

        // Jin-Xin subcharacteristic condition a² > dh(u_±)², strictly.
        let subcharacteristic = match (&self.kind, self.jin_xin_h()) {
            (ModelKind::JinXin { a }, Some((_, dh))) => {
                let d_minus = dh.eval(shock.u_minus[0]);
                let d_plus = dh.eval(shock.u_plus[0]);
                Some(a * a > d_minus * d_minus && a * a > d_plus * d_plus)
            }
            _ => None,
        };

        // Interior dissipativity, reported as a warning only.
        let mut interior_warning = None;
        for i in 1..8 {
            let t = i as f64 / 8.0;
            let u = (1.0 - t) * &shock.u_minus + t * &shock.u_plus;
            let theta = self.dissipativity_theta(&u)?;
            if theta <= 0.0 {
                interior_warning =
                    Some(format!("dissipativity fails at interior state t={t:.3}: theta={theta:.3e}"));
                break;
            }
        }

        Ok(HypothesisReport {
            h1,
            h2,
            h3,
            theta_minus,
            theta_plus,
            subcharacteristic,
            interior_warning,
            notes,
        })
    }

    /// The (H3) ratio estimate at a single equilibrium state.
    pub fn dissipativity_theta(&self, u: &Array1<f64>) -> Result<f64> {
        let xis = log_grid(1e-3, 1e3, 400);
        let mut theta = f64::INFINITY;
        for &xi in &xis {
            let ws = self.dispersion_exact(u, xi)?;
            let max_re = ws.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            theta = theta.min(-max_re * (1.0 + xi * xi) / (xi * xi));
        }
        Ok(theta)
    }
}

/// Logarithmically spaced grid (inclusive endpoints).
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Shock endstates and speed.
#[derive(Debug, Clone)]
pub struct ShockData {
    pub u_minus: Array1<f64>,
    pub u_plus: Array1<f64>,
    pub v_minus: Array1<f64>,
    pub v_plus: Array1<f64>,
    pub s: f64,
}

impl ShockData {
    /// Build from endstates, putting v_± on the equilibrium manifold, and
    /// validate the Rankine-Hugoniot condition for the relaxed flux.
    pub fn new(model: &RelaxationModel, u_minus: Array1<f64>, u_plus: Array1<f64>, s: f64) -> Result<Self> {
        let v_minus = model.v_star(&u_minus);
        let v_plus = model.v_star(&u_plus);
        let rh = &model.f_star(&u_plus) - &model.f_star(&u_minus) - s * (&u_plus - &u_minus);
        if linalg::sup(&rh) > 1e-10 {
            return Err(Error::Precondition(format!(
                "Rankine-Hugoniot residual {} exceeds 1e-10",
                linalg::sup(&rh)
            )));
        }
        Ok(ShockData { u_minus, u_plus, v_minus, v_plus, s })
    }

    pub fn jump_u(&self) -> Array1<f64> {
        &self.u_minus - &self.u_plus
    }
}

/// Equilibrium (relaxed) system data at a state u.
#[derive(Debug, Clone)]
pub struct EquilibriumData {
    pub f_star: Array1<f64>,
    pub df_star: Array2<f64>,
    /// Equilibrium characteristic speeds a*_j, ascending.
    pub speeds: Vec<f64>,
    /// Right eigenvectors as columns.
    pub rstar: Array2<f64>,
    /// Left eigenvectors as rows, with lstar · rstar = I.
    pub lstar: Array2<f64>,
}

/// Chapman-Enskog diffusion matrix and modal rates.
#[derive(Debug, Clone)]
pub struct ChapmanEnskog {
    pub b_star: Array2<f64>,
    pub beta: Vec<f64>,
}

/// One characteristic family of the frozen flux Jacobian.
#[derive(Debug, Clone)]
pub struct CharFamily {
    pub speed: f64,
    pub mult: usize,
    /// N×m right block.
    pub r: Array2<f64>,
    /// m×N left block, biorthonormal to `r`.
    pub l: Array2<f64>,
    /// m×m dissipation block η_j = -l_jᵀ Q r_j.
    pub eta: Array2<f64>,
}

/// Characteristic data at a state point.
#[derive(Debug, Clone)]
pub struct ModeData {
    pub families: Vec<CharFamily>,
}

impl ModeData {
    pub fn total_dim(&self) -> usize {
        self.families.iter().map(|f| f.mult).sum()
    }
}

/// Outcome of the structural hypothesis checks. Failures are reported
/// through the flags, never as errors.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub theta_minus: f64,
    pub theta_plus: f64,
    /// Jin-Xin only; None for custom models.
    pub subcharacteristic: Option<bool>,
    pub interior_warning: Option<String>,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h1 && self.h2 && self.h3 && self.subcharacteristic.unwrap_or(true)
    }
}

/// Eigen-decomposition of a real matrix with real semisimple spectrum:
/// speeds ascending, right eigenvectors as unit columns with deterministic
/// sign, left rows from the inverse (biorthonormal by construction).
fn real_eigensystem(a: &Array2<f64>, what: &str) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let (w, vecs) = linalg::eig_real(a)?;
    let scale = 1.0 + linalg::fro_r(a);
    if w.iter().any(|z| z.im.abs() > 1e-10 * scale) {
        return Err(Error::NonHyperbolic(format!("{what} has complex spectrum")));
    }
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[i].re.partial_cmp(&w[j].re).unwrap());
    let mut speeds = Vec::with_capacity(n);
    let mut rmat = Array2::zeros((n, n));
    for (col, &idx) in order.iter().enumerate() {
        speeds.push(w[idx].re);
        let mut v: Array1<f64> = vecs.column(idx).mapv(|z| z.re);
        let norm = v.dot(&v).sqrt();
        if norm < 1e-300 {
            return Err(Error::Eigen(format!("{what}: degenerate eigenvector")));
        }
        v /= norm;
        // Deterministic sign: first component of significant magnitude
        // is positive.
        if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-8) {
            if lead < 0.0 {
                v *= -1.0;
            }
        }
        rmat.column_mut(col).assign(&v);
    }
    let lmat = linalg::inv_r(&rmat)
        .map_err(|_| Error::NonHyperbolic(format!("{what} is defective (eigenbasis singular)")))?;
    Ok((speeds, rmat, lmat))
}

/// Match a new unordered eigenvalue set to a previous ordering by greedy
/// minimal-distance assignment; None if the assignment is ambiguous
/// (two candidates nearly equidistant from different targets).
fn match_branches(prev: &[Complex64], new: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = prev.len();
    let mut taken = vec![false; n];
    let mut out = vec![Complex64::default(); n];
    for (i, p) in prev.iter().enumerate() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let mut second = f64::INFINITY;
        for (j, q) in new.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let d = (p - q).norm();
            if d < best_d {
                second = best_d;
                best_d = d;
                best = j;
            } else if d < second {
                second = d;
            }
        }
        // Ambiguity: second-best nearly as close as best while both far
        // from the target relative to their separation.
        if best_d > 0.45 * second && best_d > 1e-12 && second.is_finite() {
            return None;
        }
        taken[best] = true;
        out[i] = new[best];
    }
    Some(out)
}
