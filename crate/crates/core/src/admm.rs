//! Per-realization transmit solver: a four-block ADMM over the mask samples
//! `Q`, the oversampled time samples `X`, the per-antenna symbols `W` and the
//! RF-chain symbols `T`.
//!
//! Rows of `W`, `X`, `Q` are antennas. The coupling constraints are
//! `Q = W A_n^T`, `X = W (F^H)^T` and `W = S(T)` where `S` copies row
//! `t[m_a]` to antenna `a`. The minimized objective is
//!
//! ```text
//! Σ_{k,s} ||B_k^s t^s - ω_k^s||^2 + η_t/2 ||T||^2 + η_w/2 ||W||^2
//! ```

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::combiner::RxState;
use crate::channel::ChannelSet;
use crate::linalg::{fro2, hermitian_part, solve_hpd, CMat, CVec, SplitMat, C64};
use crate::model::{AntennaMap, SystemConfig};
use crate::rf::build_vrf;
use crate::spectral::{IdftGrid, MaskSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct TxState {
    pub t: CMat,
    pub w: CMat,
    pub x: CMat,
    pub q: CMat,
    pub lambda_q: CMat,
    pub lambda_x: CMat,
    pub lambda_w: CMat,
    /// Power-constraint multipliers of the last T update.
    pub mu: Vec<f64>,
    /// Ratio of the adapted penalty to the problem's base `ρ`; carried over
    /// by warm starts.
    pub rho_scale: f64,
}

impl TxState {
    pub fn zeros(n_t: usize, n_rf: usize, n_sc: usize, grid_len: usize, g: usize) -> Self {
        TxState {
            t: CMat::zeros(n_rf, n_sc),
            w: CMat::zeros(n_t, n_sc),
            x: CMat::zeros(n_t, grid_len),
            q: CMat::zeros(n_t, g),
            lambda_q: CMat::zeros(n_t, g),
            lambda_x: CMat::zeros(n_t, grid_len),
            lambda_w: CMat::zeros(n_t, n_sc),
            mu: vec![0.0; n_sc],
            rho_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AdmmReport {
    pub iterations: usize,
    /// `[mask, clip, coupling]` primal residual norms per iteration.
    pub primal_residuals: Vec<[f64; 3]>,
    pub dual_residuals: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Largest primal residual relative to its scale at termination.
    pub final_rel_residual: f64,
    /// Uniform factor applied to `T` to land exactly inside the feasible set.
    pub feasibility_scale: f64,
    /// Penalty in effect at termination.
    pub final_rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Scale the final `T` into the feasible set.
    pub finalize: bool,
    /// Optional gate on the dual residual (relative); off by default.
    pub tol_dual: Option<f64>,
    /// Rows of `A_n` are rescaled to this norm (limits with them) inside the
    /// solver; 0 keeps the raw scaling.
    pub mask_row_norm: f64,
    /// Residual balancing of `ρ` during the first half of the iterations.
    pub adaptive_rho: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            tol_abs: 1e-8,
            tol_rel: 1e-6,
            max_iters: 2000,
            finalize: true,
            tol_dual: None,
            mask_row_norm: 30.0,
            adaptive_rho: true,
        }
    }
}

/// Immutable inputs of one transmit solve.
#[derive(Debug, Clone)]
pub struct AdmmProblem<'a> {
    /// `b_eff[k][s]`: `n_k x N_RF`.
    pub b_eff: &'a [Vec<CMat>],
    /// `omega[k][s]`: length `n_k`.
    pub omega: &'a [Vec<CVec>],
    pub mask: &'a MaskSpec,
    pub idft: &'a IdftGrid,
    pub map: &'a AntennaMap,
    pub power: Vec<f64>,
    pub clip: f64,
    pub eta_w: f64,
    pub eta_t: f64,
    pub rho: f64,
}

impl<'a> AdmmProblem<'a> {
    pub fn new(
        cfg: &SystemConfig,
        b_eff: &'a [Vec<CMat>],
        omega: &'a [Vec<CVec>],
        mask: &'a MaskSpec,
        idft: &'a IdftGrid,
        map: &'a AntennaMap,
    ) -> Self {
        let rho = cfg.admm_rho * mean_b_energy(b_eff).max(f64::MIN_POSITIVE);
        AdmmProblem {
            b_eff,
            omega,
            mask,
            idft,
            map,
            power: cfg.power_budget(),
            clip: cfg.clip_level,
            eta_w: cfg.eta_w(),
            eta_t: cfg.eta_t(),
            rho,
        }
    }

    pub fn n_sc(&self) -> usize {
        self.idft.s
    }

    pub fn n_rf(&self) -> usize {
        self.map.n_rf()
    }

    pub fn n_t(&self) -> usize {
        self.map.n_antennas()
    }

    fn subarray(&self) -> f64 {
        self.map.subarray_size() as f64
    }

    fn check(&self) -> Result<()> {
        let s = self.n_sc();
        if self.mask.a_n.ncols() != s || self.power.len() != s {
            return Err(Error::Dimension("mask, power and IDFT disagree on S".into()));
        }
        if self.b_eff.len() != self.omega.len() {
            return Err(Error::Dimension("channel and symbol user counts differ".into()));
        }
        for (bk, wk) in self.b_eff.iter().zip(self.omega) {
            if bk.len() != s || wk.len() != s {
                return Err(Error::Dimension("per-user subcarrier count mismatch".into()));
            }
            for (b, w) in bk.iter().zip(wk) {
                if b.ncols() != self.n_rf() || b.nrows() != w.len() {
                    return Err(Error::Dimension("effective channel shape".into()));
                }
            }
        }
        if !(self.eta_w > 0.0 && self.eta_t > 0.0 && self.rho > 0.0 && self.clip > 0.0) {
            return Err(Error::config("admm", "η_w, η_t, ρ and χ must be positive"));
        }
        Ok(())
    }
}

pub fn mean_b_energy(b_eff: &[Vec<CMat>]) -> f64 {
    let (sum, n) = b_eff
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(acc, n), b| (acc + fro2(b), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Radial clamp of entry `(a, j)` to `sqrt(r_j)`.
pub fn project_mask(v: &CMat, limits_r: &[f64]) -> CMat {
    let mut out = v.clone();
    for (j, r) in limits_r.iter().enumerate() {
        let bound = r.sqrt();
        for z in out.column_mut(j).iter_mut() {
            let m2 = z.norm_sqr();
            if m2 > *r {
                *z *= bound / m2.sqrt();
            }
        }
    }
    out
}

/// Elementwise magnitude clamp to `chi`.
pub fn project_clip(v: &CMat, chi: f64) -> CMat {
    let chi2 = chi * chi;
    v.map(|z| {
        let m2 = z.norm_sqr();
        if m2 > chi2 {
            z * (chi / m2.sqrt())
        } else {
            z
        }
    })
}

/// Solver for `M_w w = b`, `M_w = (η_w + 2ρ) I + ρ A^H A`.
#[derive(Debug, Clone)]
pub enum WSolver {
    Direct { m_w: CMat },
    /// `M_w^{-1} = υ^{-1} I - υ^{-2} A^H (ρ^{-1} I + υ^{-1} A A^H)^{-1} A`.
    Woodbury { upsilon: f64, a: CMat, inner: CMat },
}

impl WSolver {
    pub fn new(a_n: &CMat, eta_w: f64, rho: f64) -> Self {
        if 2 * a_n.nrows() < a_n.ncols() {
            Self::woodbury(a_n, eta_w, rho)
        } else {
            Self::direct(a_n, eta_w, rho)
        }
    }

    pub fn direct(a_n: &CMat, eta_w: f64, rho: f64) -> Self {
        let s = a_n.ncols();
        let m_w = CMat::identity(s, s) * C64::from(eta_w + 2.0 * rho) + a_n.adjoint() * a_n * C64::from(rho);
        WSolver::Direct { m_w }
    }

    pub fn woodbury(a_n: &CMat, eta_w: f64, rho: f64) -> Self {
        let g = a_n.nrows();
        let upsilon = eta_w + 2.0 * rho;
        let inner = CMat::identity(g, g) * C64::from(1.0 / rho) + a_n * a_n.adjoint() * C64::from(1.0 / upsilon);
        WSolver::Woodbury {
            upsilon,
            a: a_n.clone(),
            inner,
        }
    }

    /// `M_w^{-T}`, so that a row-stacked update is `W = R M_w^{-T}`.
    pub fn inverse_transpose(&self) -> Result<SplitMat> {
        let n = match self {
            WSolver::Direct { m_w } => m_w.nrows(),
            WSolver::Woodbury { a, .. } => a.ncols(),
        };
        Ok(SplitMat::new(&self.solve(&CMat::identity(n, n))?.transpose()))
    }

    /// Solves `M_w X = B` column by column.
    pub fn solve(&self, b: &CMat) -> Result<CMat> {
        match self {
            WSolver::Direct { m_w } => solve_hpd(m_w, b),
            WSolver::Woodbury { upsilon, a, inner } => {
                if a.nrows() == 0 {
                    return Ok(b / C64::from(*upsilon));
                }
                let ab = a * b;
                let y = solve_hpd(inner, &ab)?;
                let u = *upsilon;
                Ok(b / C64::from(u) - a.adjoint() * y / C64::from(u * u))
            }
        }
    }
}

/// Per-subcarrier eigen-decomposition of `2 Σ_k B^H B` plus the constant
/// part `2 Σ_k B^H ω` of the right-hand side.
#[derive(Debug, Clone)]
pub struct TSolver {
    vecs: Vec<CMat>,
    vals: Vec<Vec<f64>>,
    h: Vec<CVec>,
    ridge: f64,
    subarray: f64,
    budget: Vec<f64>,
}

impl TSolver {
    pub fn new(prob: &AdmmProblem) -> Self {
        let n_rf = prob.n_rf();
        let mut vecs = Vec::with_capacity(prob.n_sc());
        let mut vals = Vec::with_capacity(prob.n_sc());
        let mut h = Vec::with_capacity(prob.n_sc());
        for s in 0..prob.n_sc() {
            let mut g = CMat::zeros(n_rf, n_rf);
            let mut hs = CVec::zeros(n_rf);
            for (bk, wk) in prob.b_eff.iter().zip(prob.omega) {
                g += bk[s].adjoint() * &bk[s] * C64::from(2.0);
                hs += bk[s].adjoint() * &wk[s] * C64::from(2.0);
            }
            let g = hermitian_part(&g);
            let eig = SymmetricEigen::new(g);
            vals.push(eig.eigenvalues.iter().map(|v| v.max(0.0)).collect());
            vecs.push(eig.eigenvectors);
            h.push(hs);
        }
        TSolver {
            vecs,
            vals,
            h,
            ridge: prob.eta_t + prob.rho * prob.subarray(),
            subarray: prob.subarray(),
            budget: prob.power.clone(),
        }
    }

    /// Re-targets the solver to a new penalty without refactoring.
    pub fn set_rho(&mut self, eta_t: f64, rho: f64) {
        self.ridge = eta_t + rho * self.subarray;
    }

    fn coords(&self, s: usize, d: &CVec) -> CVec {
        self.vecs[s].adjoint() * (&self.h[s] + d)
    }

    /// `(N_t/N_RF) ||t(μ)||^2` for right-hand side extra term `d`.
    pub fn power_at(&self, s: usize, d: &CVec, mu: f64) -> f64 {
        let z = self.coords(s, d);
        self.power_of(s, &z, mu)
    }

    fn power_of(&self, s: usize, z: &CVec, mu: f64) -> f64 {
        let z2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
        self.power_sq(s, &z2, mu)
    }

    fn power_sq(&self, s: usize, z2: &[f64], mu: f64) -> f64 {
        let c = self.ridge + 2.0 * mu * self.subarray;
        self.subarray
            * z2.iter()
                .zip(&self.vals[s])
                .map(|(zi, l)| zi / ((l + c) * (l + c)))
                .sum::<f64>()
    }

    fn t_of(&self, s: usize, z: &CVec, mu: f64) -> CVec {
        let c = self.ridge + 2.0 * mu * self.subarray;
        let scaled = CVec::from_fn(z.len(), |i, _| z[i] / (self.vals[s][i] + c));
        &self.vecs[s] * scaled
    }

    /// Returns `(t^s, μ^s)`.
    pub fn solve(&self, s: usize, d: &CVec) -> Result<(CVec, f64)> {
        let z = self.coords(s, d);
        let p = self.budget[s];
        let z2: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
        if self.power_sq(s, &z2, 0.0) <= p {
            return Ok((self.t_of(s, &z, 0.0), 0.0));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.power_sq(s, &z2, hi) > p {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::Numerical(format!(
                    "power bisection bracket failed on subcarrier {s}"
                )));
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let pm = self.power_sq(s, &z2, mid);
            if pm > p {
                lo = mid;
            } else {
                hi = mid;
                if p - pm <= 1e-12 * p {
                    break;
                }
            }
        }
        Ok((self.t_of(s, &z, hi), hi))
    }
}

/// `S(T)`: row `a` is `t[m_a, :]`.
pub fn spread_rows(t: &CMat, map: &AntennaMap) -> CMat {
    CMat::from_fn(map.n_antennas(), t.ncols(), |a, s| t[(map.chain(a), s)])
}

/// `d[m, s] = Σ_{a: m_a = m} (ρ W[a,s] + Λ_w[a,s])`.
fn gather_rows(w: &CMat, lw: &CMat, rho: f64, map: &AntennaMap) -> CMat {
    let mut d = CMat::zeros(map.n_rf(), w.ncols());
    for a in 0..map.n_antennas() {
        let m = map.chain(a);
        for s in 0..w.ncols() {
            d[(m, s)] += w[(a, s)] * rho + lw[(a, s)];
        }
    }
    d
}

/// Right-hand side rows of the W update.
fn w_rhs(state: &TxState, map: &AntennaMap, rho: f64, a_conj: &CMat, f_conj: &CMat) -> CMat {
    let rho = C64::from(rho);
    let mut r = spread_rows(&state.t, map) * rho - &state.lambda_w;
    if a_conj.nrows() > 0 {
        r += (&state.q * rho + &state.lambda_q) * a_conj;
    }
    r += (&state.x * rho + &state.lambda_x) * f_conj;
    r
}

/// [`w_rhs`] with split-form operators.
fn w_rhs_split(state: &TxState, map: &AntennaMap, rho: f64, a_conj: &SplitMat, f_conj: &SplitMat) -> CMat {
    let rho = C64::from(rho);
    let mut r = spread_rows(&state.t, map) * rho - &state.lambda_w;
    if a_conj.nrows() > 0 {
        r += a_conj.left_mul(&(&state.q * rho + &state.lambda_q));
    }
    r += f_conj.left_mul(&(&state.x * rho + &state.lambda_x));
    r
}

/// One W update with a freshly built solver.
pub fn update_w(state: &TxState, prob: &AdmmProblem) -> Result<CMat> {
    let solver = WSolver::new(&prob.mask.a_n, prob.eta_w, prob.rho);
    let r = w_rhs(state, prob.map, prob.rho, &prob.mask.a_n.conjugate(), &prob.idft.matrix.conjugate());
    Ok(solver.solve(&r.transpose())?.transpose())
}

/// One T update with a freshly built solver; returns `(T, μ)`.
pub fn update_t(state: &TxState, prob: &AdmmProblem) -> Result<(CMat, Vec<f64>)> {
    let solver = TSolver::new(prob);
    t_step(&solver, state, prob, prob.rho)
}

fn t_step(solver: &TSolver, state: &TxState, prob: &AdmmProblem, rho: f64) -> Result<(CMat, Vec<f64>)> {
    let d = gather_rows(&state.w, &state.lambda_w, rho, prob.map);
    let mut t = CMat::zeros(prob.n_rf(), prob.n_sc());
    let mut mus = vec![0.0; prob.n_sc()];
    for s in 0..prob.n_sc() {
        let (ts, mu) = solver.solve(s, &d.column(s).into_owned())?;
        t.set_column(s, &ts);
        mus[s] = mu;
    }
    Ok((t, mus))
}

/// Transmit objective at `(T, W)`.
pub fn objective(prob: &AdmmProblem, t: &CMat, w: &CMat) -> f64 {
    let mut f = 0.0;
    for (bk, wk) in prob.b_eff.iter().zip(prob.omega) {
        for s in 0..prob.n_sc() {
            let e = &bk[s] * t.column(s) - &wk[s];
            f += e.norm_squared();
        }
    }
    f + 0.5 * prob.eta_t * fro2(t) + 0.5 * prob.eta_w * fro2(w)
}

/// Matched-filter start `Σ_k B^H ω`, scaled onto each power budget.
pub fn matched_filter_init(prob: &AdmmProblem) -> CMat {
    let mut t = CMat::zeros(prob.n_rf(), prob.n_sc());
    for s in 0..prob.n_sc() {
        let mut col = CVec::zeros(prob.n_rf());
        for (bk, wk) in prob.b_eff.iter().zip(prob.omega) {
            col += bk[s].adjoint() * &wk[s];
        }
        let p = prob.subarray() * col.norm_squared();
        if p > 0.0 {
            col *= C64::from((prob.power[s] / p).sqrt());
        }
        t.set_column(s, &col);
    }
    t
}

/// Largest `c <= 1` such that `c T` meets the mask, clipping and power
/// constraints exactly.
pub fn feasibility_scale(t: &CMat, prob: &AdmmProblem) -> f64 {
    let mut c: f64 = 1.0;
    if !prob.mask.is_empty() {
        let spec = &prob.mask.a_n * t.transpose();
        for m in 0..t.nrows() {
            for (j, r) in prob.mask.limits_r.iter().enumerate() {
                let mag = spec[(j, m)].norm();
                if mag > 0.0 {
                    c = c.min(r.sqrt() / mag);
                }
            }
        }
    }
    let time = &prob.idft.matrix * t.transpose();
    let peak = time.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        c = c.min(prob.clip / peak);
    }
    for s in 0..t.ncols() {
        let p = prob.subarray() * t.column(s).norm_squared();
        if p > 0.0 {
            c = c.min((prob.power[s] / p).sqrt());
        }
    }
    c.min(1.0)
}

/// Rows of `A_n` rescaled to norm `kappa`, limits rescaled to match.
fn equilibrate(a_n: &CMat, limits_r: &[f64], kappa: f64) -> (CMat, Vec<f64>) {
    let mut a = a_n.clone();
    let mut lim = limits_r.to_vec();
    for j in 0..a.nrows() {
        let n = a.row(j).norm();
        if n > 0.0 {
            let d = kappa / n;
            a.row_mut(j).scale_mut(d);
            lim[j] *= d * d;
        }
    }
    (a, lim)
}

const ADAPT_EVERY: usize = 25;
const ADAPT_RATIO: f64 = 10.0;

fn rel(res: f64, a: f64, b: f64) -> f64 {
    let scale = a.max(b);
    if scale > 0.0 {
        res / scale
    } else {
        res
    }
}

/// Runs the cyclic Q -> X -> W -> T -> dual iteration.
pub fn admm_solve(
    prob: &AdmmProblem,
    warm_start: Option<&TxState>,
    opts: &AdmmOptions,
) -> Result<(TxState, AdmmReport)> {
    prob.check()?;
    let (n_t, n_sc, g) = (prob.n_t(), prob.n_sc(), prob.mask.len());
    let grid = prob.idft.len();
    let mut st = match warm_start {
        Some(ws) => ws.clone(),
        None => {
            let mut st = TxState::zeros(n_t, prob.n_rf(), n_sc, grid, g);
            st.t = matched_filter_init(prob);
            st
        }
    };
    if st.q.ncols() != g || st.x.ncols() != grid || st.w.nrows() != n_t || st.t.nrows() != prob.n_rf() {
        return Err(Error::Dimension("warm start does not match the problem".into()));
    }

    let base_scale = if st.rho_scale > 0.0 { st.rho_scale } else { 1.0 };
    let mut rho = prob.rho * base_scale;
    let (a_s, lim_s) = if opts.mask_row_norm > 0.0 {
        equilibrate(&prob.mask.a_n, &prob.mask.limits_r, opts.mask_row_norm)
    } else {
        (prob.mask.a_n.clone(), prob.mask.limits_r.clone())
    };
    let a_t = SplitMat::new(&a_s.transpose());
    let a_conj = SplitMat::new(&a_s.conjugate());
    let f_t = SplitMat::new(&prob.idft.matrix.transpose());
    let f_conj = SplitMat::new(&prob.idft.matrix.conjugate());
    let mut w_inv = WSolver::new(&a_s, prob.eta_w, rho).inverse_transpose()?;
    let mut t_solver = TSolver::new(prob);
    t_solver.set_rho(prob.eta_t, rho);

    let mut report = AdmmReport {
        feasibility_scale: 1.0,
        ..Default::default()
    };
    let tol_abs = opts.tol_abs;
    let tol_rel = opts.tol_rel;
    let mut wa = if g > 0 { a_t.left_mul(&st.w) } else { CMat::zeros(n_t, 0) };
    let mut wf = f_t.left_mul(&st.w);
    for it in 0..opts.max_iters {
        let inv_rho = C64::from(1.0 / rho);
        st.q = project_mask(&(&wa - &st.lambda_q * inv_rho), &lim_s);
        st.x = project_clip(&(&wf - &st.lambda_x * inv_rho), prob.clip);

        let r = w_rhs_split(&st, prob.map, rho, &a_conj, &f_conj);
        st.w = w_inv.left_mul(&r);

        let t_prev = st.t.clone();
        let (t, mus) = t_step(&t_solver, &st, prob, rho)?;
        st.t = t;
        st.mu = mus;

        wa = if g > 0 { a_t.left_mul(&st.w) } else { CMat::zeros(n_t, 0) };
        wf = f_t.left_mul(&st.w);
        let st_rows = spread_rows(&st.t, prob.map);
        let rq = &st.q - &wa;
        let rx = &st.x - &wf;
        let rw = &st.w - &st_rows;
        let crho = C64::from(rho);
        st.lambda_q += &rq * crho;
        st.lambda_x += &rx * crho;
        st.lambda_w += &rw * crho;

        let (nq, nx, nw) = (rq.norm(), rx.norm(), rw.norm());
        let dual = rho * (spread_rows(&(&st.t - &t_prev), prob.map)).norm();
        report.primal_residuals.push([nq, nx, nw]);
        report.dual_residuals.push(dual);
        report.objective_trace.push(objective(prob, &st.t, &st.w));
        report.iterations = it + 1;

        let ok_q = nq <= tol_abs + tol_rel * st.q.norm().max(wa.norm());
        let ok_x = nx <= tol_abs + tol_rel * st.x.norm().max(wf.norm());
        let ok_w = nw <= tol_abs + tol_rel * st.w.norm().max(st_rows.norm());
        let primal_rel = rel(nq, st.q.norm(), wa.norm())
            .max(rel(nx, st.x.norm(), wf.norm()))
            .max(rel(nw, st.w.norm(), st_rows.norm()));
        report.final_rel_residual = primal_rel;
        let dual_rel = rel(dual, st.lambda_w.norm(), 0.0);
        let ok_dual = match opts.tol_dual {
            Some(td) => dual <= tol_abs + td * st.lambda_w.norm(),
            None => true,
        };
        if ok_q && ok_x && ok_w && ok_dual {
            report.converged = true;
            break;
        }

        // residual balancing
        if opts.adaptive_rho && (it + 1) % ADAPT_EVERY == 0 && it + 1 < opts.max_iters / 2 {
            let factor = if primal_rel > ADAPT_RATIO * dual_rel {
                2.0
            } else if dual_rel > ADAPT_RATIO * primal_rel {
                0.5
            } else {
                1.0
            };
            let next = (rho * factor).clamp(prob.rho * 1e-3, prob.rho * 1e3);
            if next != rho {
                rho = next;
                w_inv = WSolver::new(&a_s, prob.eta_w, rho).inverse_transpose()?;
                t_solver.set_rho(prob.eta_t, rho);
            }
        }
    }
    report.final_rho = rho;
    st.rho_scale = rho / prob.rho;

    if opts.finalize {
        let c = feasibility_scale(&st.t, prob);
        report.feasibility_scale = c;
        if c < 1.0 {
            st.t *= C64::from(c);
        }
    }
    Ok((st, report))
}

/// Minimum-norm digital precoders with `Σ_k V_k ω_k = t`:
/// `V_k[m, :] = t[m] ω_k^H / Σ_j ||ω_j||^2`.
pub fn recover_digital_precoders(t: &CVec, omega: &[CVec]) -> Result<Vec<CMat>> {
    let energy: f64 = omega.iter().map(|w| w.norm_squared()).sum();
    if !(energy > 0.0) {
        return Err(Error::Degenerate("zero symbol energy on a subcarrier".into()));
    }
    Ok(omega
        .iter()
        .map(|w| t * w.adjoint() / C64::from(energy))
        .collect())
}

/// `B_k^s = U_k^{sH} U_RF,k^H H_k^s V_RF`.
pub fn build_effective_channels(
    channels: &ChannelSet,
    v_ps: &CVec,
    rx: &RxState,
    map: &AntennaMap,
) -> Vec<Vec<CMat>> {
    let vrf = build_vrf(v_ps, map);
    channels
        .h
        .iter()
        .enumerate()
        .map(|(k, hk)| {
            let left = rx.u_rf[k].adjoint();
            hk.iter()
                .enumerate()
                .map(|(s, h)| rx.u_dig[k][s].adjoint() * (&left * (h * &vrf)))
                .collect()
        })
        .collect()
}

/// Residual check used by tests and reports: `(mask, clip, power)` worst
/// ratios of measured value to limit for `T`.
pub fn constraint_ratios(t: &CMat, prob: &AdmmProblem) -> (f64, f64, f64) {
    let mut mask: f64 = 0.0;
    if !prob.mask.is_empty() {
        let spec = &prob.mask.a_n * t.transpose();
        for m in 0..t.nrows() {
            for (j, r) in prob.mask.limits_r.iter().enumerate() {
                mask = mask.max(spec[(j, m)].norm_sqr() / r);
            }
        }
    }
    let time = &prob.idft.matrix * t.transpose();
    let clip = time.iter().map(|z| z.norm()).fold(0.0, f64::max) / prob.clip;
    let mut power: f64 = 0.0;
    for s in 0..t.ncols() {
        power = power.max(prob.subarray() * t.column(s).norm_squared() / prob.power[s]);
    }
    (mask, clip, power)
}
