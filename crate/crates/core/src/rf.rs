//! Partially-connected RF precoder: unit-modulus phase-shifter vector `v_PS`
//! optimized by cyclic coordinate descent, nominal or robust to Gaussian
//! phase errors.

use serde::Serialize;

use crate::channel::ChannelSet;
use crate::combiner::RxState;
use crate::linalg::{hermitian_part, CMat, CVec, C64};
use crate::model::AntennaMap;
use crate::Result;

/// `N_t x N_RF` RF precoder with `V[a, m_a] = v[a]`.
pub fn build_vrf(v_ps: &CVec, map: &AntennaMap) -> CMat {
    let mut v = CMat::zeros(map.n_antennas(), map.n_rf());
    for a in 0..map.n_antennas() {
        v[(a, map.chain(a))] = v_ps[a];
    }
    v
}

/// Antenna-domain transmit signal `V_RF T` (`N_t x S`).
pub fn antenna_signal(v_ps: &CVec, t: &CMat, map: &AntennaMap) -> CMat {
    CMat::from_fn(map.n_antennas(), t.ncols(), |a, s| v_ps[a] * t[(map.chain(a), s)])
}

/// Quadratic model `v^H Q v - 2 Re(u^H v)` of one realization's sum-MSE as a
/// function of the phase-shifter vector.
#[derive(Debug, Clone, Serialize)]
pub struct PsProblem {
    pub q_ps: CMat,
    pub u_ps: CVec,
    pub sigma_e_rad: f64,
}

impl PsProblem {
    /// Off-diagonal attenuation `e^{-σ²}` of the expected quadratic form.
    pub fn quad_factor(&self) -> f64 {
        (-self.sigma_e_rad * self.sigma_e_rad).exp()
    }

    /// Attenuation `e^{-σ²/2}` of the expected linear term.
    pub fn linear_factor(&self) -> f64 {
        (-0.5 * self.sigma_e_rad * self.sigma_e_rad).exp()
    }

    /// Quadratic and linear terms used by the sweep (robust when `σ > 0`).
    pub fn effective(&self) -> (CMat, CVec) {
        let fq = C64::from(self.quad_factor());
        let mut q = &self.q_ps * fq;
        for a in 0..q.nrows() {
            q[(a, a)] = self.q_ps[(a, a)];
        }
        (q, &self.u_ps * C64::from(self.linear_factor()))
    }

    /// Nominal objective at `v`.
    pub fn objective(&self, v: &CVec) -> f64 {
        quad_objective(&self.q_ps, &self.u_ps, v)
    }
}

pub fn quad_objective(q: &CMat, u: &CVec, v: &CVec) -> f64 {
    (v.adjoint() * q * v)[(0, 0)].re - 2.0 * u.dotc(v).re
}

/// Builds the phase-shifter problem of one realization from its RF-chain
/// symbols `t` (`N_RF x S`) and symbols `omega[k][s]`.
pub fn build_ps_problem(
    channels: &ChannelSet,
    t: &CMat,
    rx: &RxState,
    omega: &[Vec<CVec>],
    map: &AntennaMap,
    sigma_e_rad: f64,
) -> Result<PsProblem> {
    let n_t = map.n_antennas();
    let mut q = CMat::zeros(n_t, n_t);
    let mut u = CVec::zeros(n_t);
    for (k, hk) in channels.h.iter().enumerate() {
        let left = &rx.u_rf[k];
        for (s, h) in hk.iter().enumerate() {
            // c = H^H U_RF U  (N_t x n_k)
            let c = h.adjoint() * (left * &rx.u_dig[k][s]);
            let cw = CMat::from_fn(n_t, c.ncols(), |a, i| t[(map.chain(a), s)].conj() * c[(a, i)]);
            q += &cw * cw.adjoint();
            u += &cw * &omega[k][s];
        }
    }
    Ok(PsProblem {
        q_ps: hermitian_part(&q),
        u_ps: u,
        sigma_e_rad,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub v: CVec,
    /// Nominal objective before any update followed by the value after each
    /// single-coordinate update.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    /// Largest single-update increase of the nominal objective (0 when every
    /// update was non-increasing).
    pub max_increase: f64,
}

/// Gauss-Seidel sweeps `v[a] = -y/|y|` with
/// `y = Q[a,:] v - Q[a,a] v[a] - u[a]` in natural antenna order. A zero `y`
/// leaves the entry unchanged.
pub fn ps_coordinate_sweep(problem: &PsProblem, v: &CVec, n_sweeps: usize) -> SweepResult {
    let (q, u) = problem.effective();
    let n = v.len();
    let mut v = v.clone();
    let mut f = problem.objective(&v);
    let mut trace = vec![f];
    let mut max_increase: f64 = 0.0;
    let mut sweeps = 0;
    for _ in 0..n_sweeps {
        let f_start = f;
        for a in 0..n {
            let mut y = -u[a];
            for b in 0..n {
                if b != a {
                    y += q[(a, b)] * v[b];
                }
            }
            let m = y.norm();
            if m > 0.0 {
                v[a] = -y / m;
            }
            let f_new = problem.objective(&v);
            max_increase = max_increase.max(f_new - f);
            f = f_new;
            trace.push(f);
        }
        sweeps += 1;
        if f_start - f < 1e-10 {
            break;
        }
    }
    SweepResult {
        v,
        objective_trace: trace,
        sweeps,
        max_increase,
    }
}
