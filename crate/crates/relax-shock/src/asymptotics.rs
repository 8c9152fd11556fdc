//! Appendix machinery: Sylvester/commutator solves, Goodman frame
//! normalization, first-order formal block diagonalization, the gap-lemma
//! contraction for variable-coefficient eigenbases, and the reduced-flow
//! first-order expansion.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};

/// Solve d1·X − X·d2 = F. Refuses when the spectra of d1 and d2 come
/// within 1e-10 of each other (the commutator equation is ill-posed).
/// Returns (X, separation) with the achieved spectral separation.
pub fn sylvester(d1: &Array2<f64>, d2: &Array2<f64>, f: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let (m1, m2) = (d1.nrows(), d2.nrows());
    assert_eq!(f.dim(), (m1, m2));
    let (w1, _) = linalg::eig_real(d1)?;
    let (w2, _) = linalg::eig_real(d2)?;
    let mut sep = f64::INFINITY;
    for a in &w1 {
        for b in &w2 {
            sep = sep.min((a - b).norm());
        }
    }
    if sep < 1e-10 {
        return Err(Error::Singular(format!(
            "sylvester spectra separated by only {sep:.3e}"
        )));
    }
    // Kronecker form: (I ⊗ d1 − d2ᵀ ⊗ I) vec(X) = vec(F), with vec
    // stacking columns.
    let nn = m1 * m2;
    let mut k = Array2::<f64>::zeros((nn, nn));
    for col in 0..m2 {
        for row in 0..m1 {
            let eq = col * m1 + row;
            for r2 in 0..m1 {
                k[[eq, col * m1 + r2]] += d1[[row, r2]];
            }
            for c2 in 0..m2 {
                k[[eq, c2 * m1 + row]] -= d2[[c2, col]];
            }
        }
    }
    let mut rhs = Array1::zeros(nn);
    for col in 0..m2 {
        for row in 0..m1 {
            rhs[col * m1 + row] = f[[row, col]];
        }
    }
    let sol = linalg::solve_r(&k, &rhs).map_err(|_| Error::Singular("sylvester system".into()))?;
    let mut x = Array2::zeros((m1, m2));
    for col in 0..m2 {
        for row in 0..m1 {
            x[[row, col]] = sol[col * m1 + row];
        }
    }
    let resid = &d1.dot(&x) - &x.dot(d2) - f;
    let fnorm = linalg::fro_r(f);
    if linalg::fro_r(&resid) > 1e-12 * (1.0 + fnorm) {
        return Err(Error::NoConvergence(format!(
            "sylvester residual {:.3e}",
            linalg::fro_r(&resid)
        )));
    }
    Ok((x, sep))
}

/// A spectral frame along a grid: per-point right blocks (columns of `r`)
/// and left blocks (rows of `l`), grouped by `blocks` (family sizes in
/// ascending-eigenvalue order).
#[derive(Debug, Clone)]
pub struct Frame {
    pub xs: Vec<f64>,
    pub blocks: Vec<usize>,
    /// Per grid point: N×N right frame.
    pub r: Vec<Array2<f64>>,
    /// Per grid point: N×N left frame with l·r = I.
    pub l: Vec<Array2<f64>>,
    /// Per grid point: eigenvalues, ascending at the first point and
    /// continued by matching thereafter.
    pub eigs: Vec<Vec<f64>>,
}

impl Frame {
    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        let start: usize = self.blocks[..j].iter().sum();
        start..start + self.blocks[j]
    }
}

/// Continuous (naive) eigenframe of A0 along the grid: eigenvectors
/// matched to the previous point by aligning each invariant block with
/// its predecessor.
pub fn eigenframe<F>(a0: F, xs: &[f64]) -> Result<Frame>
where
    F: Fn(f64) -> Array2<f64>,
{
    assert!(xs.len() >= 2);
    let a_first = a0(xs[0]);
    let n = a_first.nrows();
    let scale = 1e-8 * (1.0 + linalg::fro_r(&a_first));
    let mut r_all = Vec::with_capacity(xs.len());
    let mut l_all = Vec::with_capacity(xs.len());
    let mut eig_all = Vec::with_capacity(xs.len());
    let mut blocks: Vec<usize> = Vec::new();
    // For simple eigenvalues the column is scaled so a fixed pivot
    // component equals 1 (the generic pointwise normalization); blocks of
    // higher multiplicity are aligned with their predecessor instead.
    let mut pivots: Vec<Option<usize>> = Vec::new();
    for (k, &x) in xs.iter().enumerate() {
        let a = a0(x);
        let (w, vecs) = linalg::eig_real(&a)?;
        if w.iter().any(|z| z.im.abs() > scale) {
            return Err(Error::NonHyperbolic("A0 has complex spectrum".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| w[i].re.partial_cmp(&w[j].re).unwrap());
        let mut rmat = Array2::<f64>::zeros((n, n));
        let mut eigs = Vec::with_capacity(n);
        for (col, &idx) in order.iter().enumerate() {
            let mut v: Array1<f64> = vecs.column(idx).mapv(|z| z.re);
            v /= v.dot(&v).sqrt();
            rmat.column_mut(col).assign(&v);
            eigs.push(w[idx].re);
        }
        if k == 0 {
            // Cluster the first point to fix block sizes.
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && (eigs[end] - eigs[start]).abs() <= scale {
                    end += 1;
                }
                blocks.push(end - start);
                start = end;
            }
            // Fix pivots at the anchor point.
            let mut start = 0;
            for &m in &blocks {
                if m == 1 {
                    let col = rmat.column(start);
                    let pivot = col
                        .iter()
                        .enumerate()
                        .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
                        .map(|(i, _)| i)
                        .unwrap();
                    pivots.push(Some(pivot));
                } else {
                    pivots.push(None);
                }
                start += m;
            }
        }
        let mut start = 0;
        for (bi, &m) in blocks.iter().enumerate() {
            match pivots[bi] {
                Some(pivot) => {
                    let piv_val = rmat[[pivot, start]];
                    if piv_val.abs() < 1e-10 {
                        return Err(Error::Degenerate("frame pivot component vanished".into()));
                    }
                    let col = rmat.column(start).mapv(|v| v / piv_val);
                    rmat.column_mut(start).assign(&col);
                }
                None if k > 0 => {
                    // Align the block with its predecessor: B ← B·C with
                    // C = (BᵀB)⁻¹ Bᵀ B_prev (keeps span(B), minimizes the
                    // distance to the previous block).
                    let prev: &Array2<f64> = &r_all[k - 1];
                    let b = rmat.slice(s![.., start..start + m]).to_owned();
                    let bp = prev.slice(s![.., start..start + m]).to_owned();
                    let gram = b.t().dot(&b);
                    let proj = b.t().dot(&bp);
                    let mut c = Array2::zeros((m, m));
                    for j in 0..m {
                        let col = linalg::solve_r(&gram, &proj.column(j).to_owned())
                            .map_err(|_| Error::Singular("frame alignment".into()))?;
                        c.column_mut(j).assign(&col);
                    }
                    let aligned = b.dot(&c);
                    rmat.slice_mut(s![.., start..start + m]).assign(&aligned);
                }
                None => {}
            }
            start += m;
        }
        let lmat = linalg::inv_r(&rmat)
            .map_err(|_| Error::NonHyperbolic("defective frame".into()))?;
        r_all.push(rmat);
        l_all.push(lmat);
        eig_all.push(eigs);
    }
    Ok(Frame { xs: xs.to_vec(), blocks, r: r_all, l: l_all, eigs: eig_all })
}

/// Goodman normalization of the eigenframe: per-family right factors
/// α_j(x) solving α_j′ = −(L̃_j R̃_j′) α_j, anchored at the grid point
/// nearest x = 0, so the output satisfies L_j R_j′ ≡ 0.
pub fn goodman_frame<F>(a0: F, xs: &[f64]) -> Result<Frame>
where
    F: Fn(f64) -> Array2<f64>,
{
    let naive = eigenframe(a0, xs)?;
    let npts = xs.len();
    let n = naive.r[0].nrows();
    let dx = xs[1] - xs[0];
    // Per-point generator G_j = L̃_j R̃_j′ (fourth-order central
    // differences in the interior, lower order near the ends).
    let rprime = |k: usize, rng: std::ops::Range<usize>| -> Array2<f64> {
        let blk = |i: usize| naive.r[i].slice(s![.., rng.clone()]).to_owned();
        if k >= 2 && k + 2 < npts {
            (&(&blk(k - 2) - &blk(k + 2)) + &(8.0 * &(&blk(k + 1) - &blk(k - 1)))) / (12.0 * dx)
        } else {
            // Fourth-order one-sided stencil at the boundary band.
            let (i0, sign) = if k < 2 { (k, 1.0) } else { (k, -1.0) };
            let idx = |off: i64| -> usize { (i0 as i64 + sign as i64 * off) as usize };
            (&(-25.0 / 12.0 * &blk(idx(0))) + &(4.0 * &blk(idx(1))) - &(3.0 * &blk(idx(2)))
                + &(4.0 / 3.0 * &blk(idx(3)))
                - &(0.25 * &blk(idx(4))))
                .mapv(|v| v * sign / dx)
        }
    };
    let nblocks = naive.blocks.len();
    let mut gens: Vec<Vec<Array2<f64>>> = vec![Vec::with_capacity(npts); nblocks];
    for k in 0..npts {
        for j in 0..nblocks {
            let rng = naive.block_range(j);
            let l_blk = naive.l[k].slice(s![rng.clone(), ..]).to_owned();
            gens[j].push(l_blk.dot(&rprime(k, rng)));
        }
    }
    // Anchor index nearest x = 0.
    let anchor = xs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    // Integrate α_j with RK4 over the grid, linear interpolation of the
    // generator between samples.
    let mut alphas: Vec<Vec<Array2<f64>>> = Vec::with_capacity(nblocks);
    for (j, gj) in gens.iter().enumerate() {
        let m = naive.blocks[j];
        let mut alpha = vec![Array2::<f64>::zeros((m, m)); npts];
        alpha[anchor] = Array2::eye(m);
        let gen_at = |x: f64| -> Array2<f64> {
            // Cubic (4-point Lagrange) interpolation: keeps the α-ODE at
            // full RK4 order between samples.
            let t = ((x - xs[0]) / dx).clamp(0.0, (npts - 1) as f64);
            let i = (t.floor() as usize).clamp(1, npts - 3);
            let u = t - i as f64;
            let w = [
                -u * (u - 1.0) * (u - 2.0) / 6.0,
                (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
                -(u + 1.0) * u * (u - 2.0) / 2.0,
                (u + 1.0) * u * (u - 1.0) / 6.0,
            ];
            let mut out = Array2::<f64>::zeros(gj[0].dim());
            for (k, &wk) in w.iter().enumerate() {
                out = out + wk * &gj[i - 1 + k];
            }
            out
        };
        for dir in [1i64, -1i64] {
            let mut cur = alpha[anchor].clone();
            let mut idx = anchor as i64;
            loop {
                let next = idx + dir;
                if next < 0 || next as usize >= npts {
                    break;
                }
                let h = dir as f64 * dx;
                let x = xs[idx as usize];
                // One RK4 step of α′ = −G(x)α.
                let f = |xx: f64, a: &Array2<f64>| -gen_at(xx).dot(a);
                let k1 = f(x, &cur);
                let k2 = f(x + 0.5 * h, &(&cur + &(0.5 * h * &k1)));
                let k3 = f(x + 0.5 * h, &(&cur + &(0.5 * h * &k2)));
                let k4 = f(x + h, &(&cur + &(h * &k3)));
                cur = &cur + &((h / 6.0) * &(&k1 + &(2.0 * &k2) + &(2.0 * &k3) + &k4));
                idx = next;
                alpha[idx as usize] = cur.clone();
            }
        }
        for a in &alpha {
            let det_proxy = linalg::inv_r(a);
            if det_proxy.is_err() {
                return Err(Error::Degenerate("Goodman frame factor degenerated".into()));
            }
        }
        alphas.push(alpha);
    }
    // Assemble R_j = R̃_j α_j, L_j = α_j⁻¹ L̃_j.
    let mut r_all = Vec::with_capacity(npts);
    let mut l_all = Vec::with_capacity(npts);
    for k in 0..npts {
        let mut rmat = Array2::<f64>::zeros((n, n));
        let mut lmat = Array2::<f64>::zeros((n, n));
        for j in 0..nblocks {
            let rng = naive.block_range(j);
            let r_blk = naive.r[k].slice(s![.., rng.clone()]).dot(&alphas[j][k]);
            let ainv = linalg::inv_r(&alphas[j][k]).expect("checked above");
            let l_blk = ainv.dot(&naive.l[k].slice(s![rng.clone(), ..]).to_owned());
            rmat.slice_mut(s![.., rng.clone()]).assign(&r_blk);
            lmat.slice_mut(s![rng, ..]).assign(&l_blk);
        }
        r_all.push(rmat);
        l_all.push(lmat);
    }
    Ok(Frame { xs: naive.xs, blocks: naive.blocks, r: r_all, l: l_all, eigs: naive.eigs })
}

/// Maximum of |L_j(x) R_j′(x)| over grid points and families (interior
/// central differences).
pub fn frame_defect(frame: &Frame) -> f64 {
    let npts = frame.xs.len();
    let dx = frame.xs[1] - frame.xs[0];
    let mut worst: f64 = 0.0;
    for k in 2..npts - 2 {
        let rp = (&(&frame.r[k - 2] - &frame.r[k + 2])
            + &(8.0 * &(&frame.r[k + 1] - &frame.r[k - 1])))
            / (12.0 * dx);
        for j in 0..frame.blocks.len() {
            let rng = frame.block_range(j);
            let l_blk = frame.l[k].slice(s![rng.clone(), ..]);
            let rp_blk = rp.slice(s![.., rng]);
            worst = worst.max(linalg::fro_r(&l_blk.dot(&rp_blk)));
        }
    }
    worst
}

/// Maximum of |R_j′(x)| over the grid (scale for the defect tolerance).
pub fn frame_derivative_scale(frame: &Frame) -> f64 {
    let npts = frame.xs.len();
    let dx = frame.xs[1] - frame.xs[0];
    let mut worst: f64 = 0.0;
    for k in 1..npts - 1 {
        let rp = (&frame.r[k + 1] - &frame.r[k - 1]) / (2.0 * dx);
        worst = worst.max(linalg::fro_r(&rp));
    }
    worst
}

/// First-order formal diagonalization stage: T = T₀ + εT₁,
/// D = D₀ + εD₁ with D₁ the block-diagonal part of T₀⁻¹A₁T₀ in the
/// Goodman frame and off-diagonal T₁ blocks from Sylvester solves.
pub struct DiagonalizationStage {
    pub frame: Frame,
    pub eps: f64,
    /// Per grid point: D₀ (block-diagonal eigenvalue matrix).
    pub d0: Vec<Array2<f64>>,
    /// Per grid point: D₁ (block-diagonal first-order correction).
    pub d1: Vec<Array2<f64>>,
    /// Per grid point: T₁ = T₀S with S strictly off-block-diagonal.
    pub t1: Vec<Array2<f64>>,
    /// Sup over the grid of the off-diagonal remainder of
    /// T⁻¹(A₀+εA₁)T − εT⁻¹T′.
    pub residual: f64,
}

pub fn block_diagonalize<F0, F1>(
    a0: F0,
    a1: F1,
    eps: f64,
    xs: &[f64],
) -> Result<DiagonalizationStage>
where
    F0: Fn(f64) -> Array2<f64>,
    F1: Fn(f64) -> Array2<f64>,
{
    let frame = goodman_frame(&a0, xs)?;
    let npts = xs.len();
    let n = frame.r[0].nrows();
    let nblocks = frame.blocks.len();
    let dx = xs[1] - xs[0];

    let mut d0_all = Vec::with_capacity(npts);
    let mut d1_all = Vec::with_capacity(npts);
    let mut t1_all = Vec::with_capacity(npts);
    for k in 0..npts {
        let t0 = &frame.r[k];
        let l0 = &frame.l[k];
        let d0 = l0.dot(&a0(xs[k])).dot(t0);
        // C = T₀⁻¹A₁T₀ − T₀⁻¹T₀′; the Goodman frame makes the
        // block-diagonal of T₀⁻¹T₀′ vanish, so D₁ is just the diagonal
        // part of T₀⁻¹A₁T₀.
        let t0p = if k == 0 {
            (&frame.r[1] - &frame.r[0]) / dx
        } else if k == npts - 1 {
            (&frame.r[npts - 1] - &frame.r[npts - 2]) / dx
        } else {
            (&frame.r[k + 1] - &frame.r[k - 1]) / (2.0 * dx)
        };
        let c = &l0.dot(&a1(xs[k])).dot(t0) - &l0.dot(&t0p);
        let mut d1 = Array2::<f64>::zeros((n, n));
        let mut s_mat = Array2::<f64>::zeros((n, n));
        for j in 0..nblocks {
            let rj = frame.block_range(j);
            d1.slice_mut(s![rj.clone(), rj.clone()])
                .assign(&frame.l[k].slice(s![rj.clone(), ..]).dot(&a1(xs[k])).dot(&t0.slice(s![.., rj.clone()])));
            for jj in 0..nblocks {
                if jj == j {
                    continue;
                }
                let rk_ = frame.block_range(jj);
                // λ_j S_{j,jj} − S_{j,jj} λ_jj = −C_{j,jj}.
                let dj = d0.slice(s![rj.clone(), rj.clone()]).to_owned();
                let djj = d0.slice(s![rk_.clone(), rk_.clone()]).to_owned();
                let f_blk = -c.slice(s![rj.clone(), rk_.clone()]).to_owned();
                let (x_blk, _) = sylvester(&dj, &djj, &f_blk)?;
                s_mat.slice_mut(s![rj.clone(), rk_]).assign(&x_blk);
            }
        }
        t1_all.push(t0.dot(&s_mat));
        d0_all.push(d0);
        d1_all.push(d1);
    }

    // Residual: off-block-diagonal part of T⁻¹(A₀+εA₁)T − εT⁻¹T′ with
    // T = T₀ + εT₁ and T′ by central differences.
    let t_at = |k: usize| -> Array2<f64> { &frame.r[k] + &(eps * &t1_all[k]) };
    let mut residual: f64 = 0.0;
    for k in 1..npts - 1 {
        let t = t_at(k);
        let tp = (&t_at(k + 1) - &t_at(k - 1)) / (2.0 * dx);
        let tinv = linalg::inv_r(&t).map_err(|_| Error::Singular("T = T0 + εT1".into()))?;
        let a_tot = &a0(xs[k]) + &(eps * &a1(xs[k]));
        let m = &tinv.dot(&a_tot).dot(&t) - &(eps * &tinv.dot(&tp));
        for j in 0..nblocks {
            for jj in 0..nblocks {
                if jj == j {
                    continue;
                }
                let blk = m.slice(s![frame.block_range(j), frame.block_range(jj)]);
                residual = residual.max(linalg::fro_r(&blk.to_owned()));
            }
        }
    }
    Ok(DiagonalizationStage { frame, eps, d0: d0_all, d1: d1_all, t1: t1_all, residual })
}

/// Gap-lemma solution: the variable-coefficient eigen-solution on
/// x ≤ 0 asymptotic to e^{μx}V⁻ at −∞.
pub struct GapSolution {
    pub lambda: C64,
    pub mu: C64,
    pub v_inf: Array1<C64>,
    /// Grid on [-L, 0].
    pub xs: Vec<f64>,
    /// V(x) with W = e^{μx}V.
    pub v: Vec<Array1<C64>>,
    /// Sup-norm differences of successive fixed-point iterates.
    pub contraction_history: Vec<f64>,
    /// The matching cutoff actually used.
    pub m_cut: f64,
}

/// Solve V(x) → V⁻ as x → −∞ for V′ = (𝔸(x) − μ)V by the gap-lemma
/// fixed-point iteration on x ≤ −M, extended to x ≤ 0 by RK4.
/// `alpha` is the decay rate of |𝔸 − 𝔸₋|; M is enlarged automatically
/// until the observed contraction factor drops below 1/2.
pub fn gap_basis<F>(
    coeff: F,
    coeff_inf: &Array2<C64>,
    mu: C64,
    v_inf: &Array1<C64>,
    lambda: C64,
    alpha: f64,
    m_init: f64,
    l_domain: f64,
    dx: f64,
) -> Result<GapSolution>
where
    F: Fn(f64) -> Array2<C64>,
{
    let n = v_inf.len();
    let (w_inf, vecs_inf) = linalg::eig_complex(coeff_inf)?;
    let vecs_inv = linalg::inv_c(&vecs_inf).map_err(|_| Error::Eigen("𝔸₋ defective".into()))?;
    // Split the spectrum of 𝔸₋ − μ at ᾱ₁ = 0.45α: modes with
    // Re(ν − μ) ≤ ᾱ₁ integrate from −∞ (projection P), the rest from −M
    // backward (projection Q).
    let alpha1 = 0.45 * alpha;
    let shifted: Vec<C64> = w_inf.iter().map(|&w| w - mu).collect();
    let p_modes: Vec<usize> = (0..n).filter(|&j| shifted[j].re <= alpha1).collect();
    let q_modes: Vec<usize> = (0..n).filter(|&j| shifted[j].re > alpha1).collect();

    // exp((𝔸₋ − μ)t) restricted to a mode set, via the eigendecomposition.
    let expm = |t: f64, modes: &[usize]| -> Array2<C64> {
        let mut diag = Array2::<C64>::zeros((n, n));
        for &j in modes {
            diag[[j, j]] = (shifted[j] * t).exp();
        }
        vecs_inf.dot(&diag).dot(&vecs_inv)
    };

    let mut m_cut = m_init;
    for _attempt in 0..8 {
        // Grid on [-L, -M].
        let npts = (((l_domain - m_cut) / dx).round() as usize).max(8) + 1;
        let xs: Vec<f64> = (0..npts).map(|i| -l_domain + i as f64 * dx).collect();
        let theta: Vec<Array2<C64>> = xs.iter().map(|&x| &coeff(x) - coeff_inf).collect();

        let mut v: Vec<Array1<C64>> = vec![v_inf.clone(); npts];
        let mut history = Vec::new();
        let mut converged = false;
        let mut contraction_ok = true;
        for _it in 0..100 {
            // g(z) = Θ(z)V(z) sampled.
            let g: Vec<Array1<C64>> = (0..npts).map(|i| theta[i].dot(&v[i])).collect();
            let mut v_new = vec![Array1::<C64>::zeros(n); npts];
            // Forward cumulative integral for the P part:
            // I_P(x) = ∫_{-L}^{x} e^{(𝔸₋-μ)(x-z)} P g(z) dz, computed
            // recursively: I_P(x+dx) = e^{(𝔸₋-μ)dx}P I_P(x) + trapezoid.
            let step_p = expm(dx, &p_modes);
            let proj_p = expm(0.0, &p_modes);
            let mut acc = Array1::<C64>::zeros(n);
            let mut p_int = vec![Array1::<C64>::zeros(n); npts];
            for i in 1..npts {
                let half = C64::new(0.5 * dx, 0.0);
                acc = step_p.dot(&acc)
                    + step_p.dot(&proj_p.dot(&g[i - 1])).mapv(|z| z * half)
                    + proj_p.dot(&g[i]).mapv(|z| z * half);
                p_int[i] = acc.clone();
            }
            // Backward cumulative integral for the Q part:
            // I_Q(x) = ∫_{x}^{-M} e^{(𝔸₋-μ)(x-z)} Q g(z) dz.
            let step_q = expm(-dx, &q_modes);
            let proj_q = expm(0.0, &q_modes);
            let mut accq = Array1::<C64>::zeros(n);
            let mut q_int = vec![Array1::<C64>::zeros(n); npts];
            for i in (0..npts - 1).rev() {
                let half = C64::new(0.5 * dx, 0.0);
                accq = step_q.dot(&accq)
                    + step_q.dot(&proj_q.dot(&g[i + 1])).mapv(|z| z * half)
                    + proj_q.dot(&g[i]).mapv(|z| z * half);
                q_int[i] = accq.clone();
            }
            let mut diff: f64 = 0.0;
            for i in 0..npts {
                v_new[i] = v_inf + &p_int[i] - &q_int[i];
                let d: f64 = v_new[i]
                    .iter()
                    .zip(v[i].iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                diff = diff.max(d);
            }
            v = v_new;
            if let Some(&last) = history.last() {
                if last > 1e-13 && diff / last > 0.5 {
                    contraction_ok = false;
                }
            }
            history.push(diff);
            if diff <= 1e-10 {
                converged = true;
                break;
            }
        }
        if !converged || !contraction_ok {
            m_cut *= 1.5;
            if m_cut >= l_domain * 0.9 {
                return Err(Error::NoConvergence(
                    "gap-lemma iteration failed to contract within the domain".into(),
                ));
            }
            continue;
        }
        // Extend from -M to 0 by RK4 on V′ = (𝔸 − μ)V.
        let rhs = |x: f64, y: &Array2<C64>| -> Array2<C64> {
            let m = &coeff(x) - &(Array2::<C64>::eye(n).mapv(|z| z * mu));
            m.dot(y)
        };
        let mut xs_full = xs.clone();
        let mut v_full = v.clone();
        let mut cur = Array2::<C64>::zeros((n, 1));
        for (j, z) in v.last().unwrap().iter().enumerate() {
            cur[[j, 0]] = *z;
        }
        let mut x = *xs.last().unwrap();
        let sub = 4;
        while x < -1e-12 {
            let h = (dx / sub as f64).min(-x);
            for _ in 0..sub {
                cur = linalg::rk4_step_cmat(&rhs, x, &cur, h);
                x += h;
                if x >= -1e-12 {
                    break;
                }
            }
            xs_full.push(x);
            v_full.push(cur.column(0).to_owned());
        }
        return Ok(GapSolution {
            lambda,
            mu,
            v_inf: v_inf.clone(),
            xs: xs_full,
            v: v_full,
            contraction_history: history,
            m_cut,
        });
    }
    Err(Error::NoConvergence("gap-lemma cutoff enlargement exhausted".into()))
}

/// Reduced-flow first-order expansion: for z′ = (M(x) + δΘ(x))z the
/// solution operator F̄^{y→x} is approximated by
/// F + (δ/η)ℰ with ℰ = η ∫ F^{z→x} Θ(z) F^{y→z} dz.
/// Returns (F̄, F, ℰ).
pub fn reduced_flow_first_order<FM, FT>(
    m: FM,
    theta: FT,
    delta: f64,
    eta: f64,
    y: f64,
    x: f64,
    dx: f64,
    dim: usize,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)>
where
    FM: Fn(f64) -> Array2<f64>,
    FT: Fn(f64) -> Array2<f64>,
{
    assert!(x > y, "flow direction y → x with x > y");
    let steps = (((x - y) / dx).ceil() as usize).max(4);
    let h = (x - y) / steps as f64;
    // Cumulative flows F^{y→z_k} by RK4 on F′ = M F.
    let rhs = |xx: f64, f_: &Array2<f64>| m(xx).dot(f_);
    let mut flows = Vec::with_capacity(steps + 1);
    let mut cur = Array2::<f64>::eye(dim);
    flows.push(cur.clone());
    let mut xx = y;
    for _ in 0..steps {
        let k1 = rhs(xx, &cur);
        let k2 = rhs(xx + 0.5 * h, &(&cur + &(0.5 * h * &k1)));
        let k3 = rhs(xx + 0.5 * h, &(&cur + &(0.5 * h * &k2)));
        let k4 = rhs(xx + h, &(&cur + &(h * &k3)));
        cur = &cur + &((h / 6.0) * &(&k1 + &(2.0 * &k2) + &(2.0 * &k3) + &k4));
        xx += h;
        flows.push(cur.clone());
    }
    let f_total = flows[steps].clone();

    // Decay precondition: |F^{y→z}| must not grow along the way
    // (Eq-style bound |F| ≤ Ce^{-θη|x-y|}); reject clear growth.
    let norm0 = linalg::fro_r(&flows[0]);
    let norm_end = linalg::fro_r(&f_total);
    if norm_end > 10.0 * norm0 {
        return Err(Error::Precondition(format!(
            "reduced flow grows (|F| {norm0:.3e} → {norm_end:.3e}); decay bound violated"
        )));
    }

    // ℰ = η ∫ F^{z→x} Θ(z) F^{y→z} dz with F^{z→x} = F^{y→x}(F^{y→z})⁻¹,
    // composite trapezoid on the sub-grid.
    let mut integral = Array2::<f64>::zeros((dim, dim));
    for k in 0..=steps {
        let z = y + k as f64 * h;
        let finv = linalg::inv_r(&flows[k]).map_err(|_| Error::Singular("flow inverse".into()))?;
        let term = f_total.dot(&finv).dot(&theta(z)).dot(&flows[k]);
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        integral = integral + w * h * &term;
    }
    let e1 = eta * &integral;
    let fbar = &f_total + &((delta / eta) * &e1);
    Ok((fbar, f_total, e1))
}
