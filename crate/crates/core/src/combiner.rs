//! Symbol-agnostic receivers: batch-MMSE digital combiners and unit-modulus
//! analog combiners updated by coordinate descent.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::linalg::{cis, hermitian_part, solve_hpd, CMat, CVec, C64};
use crate::model::SystemConfig;
use crate::{Error, Result};

/// Which analog-combiner entries carry a phase shifter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Full,
    /// Antenna `a` connects only to RF chain `a * N_RF,k / N_r`.
    Partial,
}

#[derive(Debug, Clone, Serialize)]
pub struct RxState {
    /// Per user, `N_r x N_RF,k`.
    pub u_rf: Vec<CMat>,
    /// `u_dig[k][s]`: `N_RF,k x n_k`.
    pub u_dig: Vec<Vec<CMat>>,
    /// Per user, the support `E_k` in row-major order.
    pub support: Vec<Vec<(usize, usize)>>,
}

pub fn support_for(n_r: usize, n_rf: usize, conn: Connectivity) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n_r {
        for m in 0..n_rf {
            let keep = match conn {
                Connectivity::Full => true,
                Connectivity::Partial => a * n_rf / n_r == m,
            };
            if keep {
                out.push((a, m));
            }
        }
    }
    out
}

impl RxState {
    /// Analog combiners with orthogonal columns (DFT phases `e^{j2π am/N_r}`
    /// when fully connected, all-ones on the support otherwise) and selector
    /// digital combiners `[I_{n_k}; 0]`.
    pub fn initial(cfg: &SystemConfig, conn: Connectivity) -> Self {
        let (n_r, n_rf, n_k) = (cfg.n_rx_antennas, cfg.n_rf_chains_rx, cfg.n_streams_per_user);
        let support = support_for(n_r, n_rf, conn);
        let mut u = CMat::zeros(n_r, n_rf);
        for &(a, m) in &support {
            u[(a, m)] = match conn {
                Connectivity::Full => cis(2.0 * std::f64::consts::PI * (a * m) as f64 / n_r as f64),
                Connectivity::Partial => C64::from(1.0),
            };
        }
        RxState {
            u_rf: vec![u; cfg.n_users],
            u_dig: vec![vec![CMat::identity(n_rf, n_k); cfg.n_subcarriers]; cfg.n_users],
            support: vec![support; cfg.n_users],
        }
    }
}

/// Batch sample statistics per `(k, s)`:
/// `d = (1/B) Σ_b (H y_b)(H y_b)^H + σ² I` and `hr = (1/B) Σ_b (H y_b) ω_b^H`
/// with `y_b = V_RF^(b) t_b^s`.
#[derive(Debug, Clone)]
pub struct RxStats {
    pub d: Vec<Vec<CMat>>,
    pub hr: Vec<Vec<CMat>>,
    /// `(1/B) Σ_b ||ω_b||^2`.
    pub omega_energy: Vec<Vec<f64>>,
}

/// `signals[b]` is the `N_t x S` antenna-domain signal `V_RF^(b) T^(b)`;
/// `omega[b][k][s]` the symbols.
pub fn rx_stats(channels: &ChannelSet, signals: &[CMat], omega: &[Vec<Vec<CVec>>]) -> Result<RxStats> {
    let n_b = signals.len();
    if n_b == 0 || omega.len() != n_b {
        return Err(Error::Dimension("empty or mismatched batch".into()));
    }
    let inv_b = C64::from(1.0 / n_b as f64);
    let mut d = Vec::with_capacity(channels.n_users());
    let mut hr = Vec::with_capacity(channels.n_users());
    let mut energy = Vec::with_capacity(channels.n_users());
    for (k, hk) in channels.h.iter().enumerate() {
        let mut dk = Vec::with_capacity(hk.len());
        let mut hrk = Vec::with_capacity(hk.len());
        let mut ek = Vec::with_capacity(hk.len());
        for (s, h) in hk.iter().enumerate() {
            let n_r = h.nrows();
            let n_k = omega[0][k][s].len();
            let mut ds = CMat::zeros(n_r, n_r);
            let mut hrs = CMat::zeros(n_r, n_k);
            let mut e = 0.0;
            for b in 0..n_b {
                let hy = h * signals[b].column(s);
                ds += &hy * hy.adjoint();
                hrs += &hy * omega[b][k][s].adjoint();
                e += omega[b][k][s].norm_squared();
            }
            let mut ds = hermitian_part(&(ds * inv_b));
            for i in 0..n_r {
                ds[(i, i)] += C64::from(channels.noise_var[k][s]);
            }
            dk.push(ds);
            hrk.push(hrs * inv_b);
            ek.push(e / n_b as f64);
        }
        d.push(dk);
        hr.push(hrk);
        energy.push(ek);
    }
    Ok(RxStats {
        d,
        hr,
        omega_energy: energy,
    })
}

/// `tr(U^H U_RF^H D U_RF U) - 2 Re tr(U^H U_RF^H HR) + E||ω||^2` for one
/// `(k, s)`.
pub fn mse_ks(stats: &RxStats, k: usize, s: usize, u_rf: &CMat, u_dig: &CMat) -> f64 {
    let g = u_rf * u_dig;
    let quad = (g.adjoint() * &stats.d[k][s] * &g).trace().re;
    let lin = (g.adjoint() * &stats.hr[k][s]).trace().re;
    quad - 2.0 * lin + stats.omega_energy[k][s]
}

/// Analog-combiner cost of user `k` summed over subcarriers.
pub fn user_cost(stats: &RxStats, k: usize, u_rf: &CMat, u_dig: &[CMat]) -> f64 {
    (0..u_dig.len()).map(|s| mse_ks(stats, k, s, u_rf, &u_dig[s])).sum()
}

/// Batch objective `Σ_{k,s}` of the per-`(k,s)` MSE.
pub fn stats_objective(stats: &RxStats, rx: &RxState) -> f64 {
    (0..rx.u_rf.len())
        .map(|k| user_cost(stats, k, &rx.u_rf[k], &rx.u_dig[k]))
        .sum()
}

/// `U_k^s = (U_RF^H D U_RF)^{-1} U_RF^H HR`.
pub fn mmse_digital_combiner(stats: &RxStats, u_rf: &[CMat]) -> Result<Vec<Vec<CMat>>> {
    let mut out = Vec::with_capacity(u_rf.len());
    for (k, urf) in u_rf.iter().enumerate() {
        let mut uk = Vec::with_capacity(stats.d[k].len());
        for s in 0..stats.d[k].len() {
            let lhs = hermitian_part(&(urf.adjoint() * &stats.d[k][s] * urf));
            let rhs = urf.adjoint() * &stats.hr[k][s];
            // a rank-deficient analog combiner leaves a family of minimizers;
            // take the minimum-norm one
            let u = match solve_hpd(&lhs, &rhs) {
                Ok(u) => u,
                Err(_) => {
                    let scale = lhs.norm().max(f64::MIN_POSITIVE);
                    let pinv = lhs.pseudo_inverse(1e-12 * scale).map_err(|e| {
                        Error::Numerical(format!("MMSE combiner for user {k}, subcarrier {s}: {e}"))
                    })?;
                    pinv * rhs
                }
            };
            uk.push(u);
        }
        out.push(uk);
    }
    Ok(out)
}

/// `(β1, β2)` of entry `(a, m)` with `U_RF^{(a,m)}` the combiner with that
/// entry zeroed.
pub fn analog_combiner_betas(stats: &RxStats, k: usize, u_rf: &CMat, u_dig: &[CMat], a: usize, m: usize) -> (C64, C64) {
    let mut masked = u_rf.clone();
    masked[(a, m)] = C64::from(0.0);
    let mut b1 = C64::from(0.0);
    let mut b2 = C64::from(0.0);
    for (s, u) in u_dig.iter().enumerate() {
        let p = u * u.adjoint();
        b1 += (stats.hr[k][s].row(a) * u.adjoint().column(m))[(0, 0)];
        let dm = stats.d[k][s].row(a) * &masked;
        b2 += (dm * p.column(m))[(0, 0)];
    }
    (b1, b2)
}

#[derive(Debug, Clone, Serialize)]
pub struct CombinerSweep {
    pub u_rf: CMat,
    /// Nominal user cost before and after every single update.
    pub objective_trace: Vec<f64>,
    pub max_increase: f64,
}

/// Cyclic unit-modulus updates over the support of user `k`:
/// nominal `u = -(β2 - β1)/|β2 - β1|`, robust
/// `u = -(e^{-σ²/2} β2 - β1)/|.|`. Zero denominators keep the entry.
pub fn analog_combiner_sweep(
    stats: &RxStats,
    k: usize,
    rx: &RxState,
    sigma_e_rad: f64,
    n_sweeps: usize,
) -> CombinerSweep {
    let factor = (-0.5 * sigma_e_rad * sigma_e_rad).exp();
    let mut u = rx.u_rf[k].clone();
    let dig = &rx.u_dig[k];
    let mut f = user_cost(stats, k, &u, dig);
    let mut trace = vec![f];
    let mut max_increase: f64 = 0.0;
    for _ in 0..n_sweeps {
        let f_start = f;
        for &(a, m) in &rx.support[k] {
            let (b1, b2) = analog_combiner_betas(stats, k, &u, dig, a, m);
            let z = b2 * factor - b1;
            let n = z.norm();
            if n > 0.0 {
                u[(a, m)] = -z / n;
            }
            let f_new = user_cost(stats, k, &u, dig);
            max_increase = max_increase.max(f_new - f);
            f = f_new;
            trace.push(f);
        }
        if f_start - f < 1e-12 * f_start.abs().max(1e-300) {
            break;
        }
    }
    CombinerSweep {
        u_rf: u,
        objective_trace: trace,
        max_increase,
    }
}
