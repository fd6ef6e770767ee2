//! Reference precoders: ZF and MRT on a fixed all-ones RF stage, optional
//! least-squares spectral notching, and random phase-shifter assignments.

use log::warn;
use rand::Rng;

use crate::channel::ChannelSet;
use crate::combiner::RxState;
use crate::linalg::{cis, hermitian_part, solve_hpd, CMat, CVec, C64};
use crate::model::{AntennaMap, SymbolBatch, SystemConfig};
use crate::rf::{antenna_signal, build_vrf};
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// Per subcarrier, the stacked `(Σ n_k) x N_RF` stream channel
/// `[U_k^H U_RF,k^H H_k^s V_RF]_k` for the given RF stages and digital
/// combiners.
pub fn stacked_stream_channel(channels: &ChannelSet, v_ps: &CVec, rx: &RxState, map: &AntennaMap) -> Vec<CMat> {
    let vrf = build_vrf(v_ps, map);
    (0..channels.n_subcarriers())
        .map(|s| {
            let rows: Vec<CMat> = channels
                .h
                .iter()
                .enumerate()
                .map(|(k, hk)| rx.u_dig[k][s].adjoint() * rx.u_rf[k].adjoint() * &hk[s] * &vrf)
                .collect();
            let n: usize = rows.iter().map(|r| r.nrows()).sum();
            let mut out = CMat::zeros(n, vrf.ncols());
            let mut r0 = 0;
            for r in rows {
                out.view_mut((r0, 0), (r.nrows(), r.ncols())).copy_from(&r);
                r0 += r.nrows();
            }
            out
        })
        .collect()
}

fn normalize(v: CMat, power: f64, subarray: f64) -> CMat {
    let e = subarray * v.norm_squared();
    if e > 0.0 {
        v * C64::from((power / e).sqrt())
    } else {
        v
    }
}

/// ZF precoders `H^H (H H^H)^{-1}` scaled so `(N_t/N_RF)||V||_F^2 = P^s`.
/// Rank-deficient channels fall back to a ridge-regularized inverse.
pub fn zf_precoder(stream_channels: &[CMat], power: &[f64], subarray: usize) -> Result<Vec<CMat>> {
    stream_channels
        .iter()
        .zip(power)
        .map(|(h, p)| {
            let gram = hermitian_part(&(h * h.adjoint()));
            let sv = gram.clone().singular_values();
            let smax = sv.max();
            let smin = sv.min();
            let gram = if h.nrows() > h.ncols() || smin <= 1e-12 * smax {
                warn!("ZF: rank-deficient stream channel, using a regularized inverse");
                let n = gram.nrows();
                gram + CMat::identity(n, n) * C64::from(1e-9 * smax.max(f64::MIN_POSITIVE))
            } else {
                gram
            };
            let x = solve_hpd(&gram, &CMat::identity(h.nrows(), h.nrows()))?;
            Ok(normalize(h.adjoint() * x, *p, subarray as f64))
        })
        .collect()
}

/// MRT precoders `H^H`, scaled like [`zf_precoder`].
pub fn mrt_precoder(stream_channels: &[CMat], power: &[f64], subarray: usize) -> Vec<CMat> {
    stream_channels
        .iter()
        .zip(power)
        .map(|(h, p)| normalize(h.adjoint(), *p, subarray as f64))
        .collect()
}

/// Least-squares notch `w <- (I - A^H (A A^H)^{-1} A) w`. When `G >= S` or
/// `A A^H` is ill-conditioned, the inverse is ridge-regularized with
/// `ridge * λ_max(A A^H)`.
pub fn notch_projector(w: &CVec, a_n: &CMat, ridge: f64) -> Result<CVec> {
    if a_n.nrows() == 0 {
        return Ok(w.clone());
    }
    if a_n.ncols() != w.len() {
        return Err(Error::Dimension("notch: sampling matrix width".into()));
    }
    let gram = hermitian_part(&(a_n * a_n.adjoint()));
    let sv = gram.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let gram = if a_n.nrows() >= a_n.ncols() || smin <= 1e-10 * smax {
        let g = gram.nrows();
        gram + CMat::identity(g, g) * C64::from(ridge * smax)
    } else {
        gram
    };
    let aw = a_n * w;
    let coef = solve_hpd(&gram, &CMat::from_column_slice(aw.len(), 1, aw.as_slice()))?;
    Ok(w - a_n.adjoint() * coef.column(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearPrecoder {
    Zf,
    Mrt,
}

/// RF-chain symbols `t^s = V^s ω^s` of every realization for a linear
/// baseline, optionally notched per antenna.
pub fn baseline_signals(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    symbols: &SymbolBatch,
    map: &AntennaMap,
    kind: LinearPrecoder,
    notch: Option<(&CMat, f64)>,
) -> Result<Vec<CMat>> {
    let v_ps = CVec::from_element(cfg.n_tx_antennas, C64::from(1.0));
    let rx = RxState::initial(cfg, crate::combiner::Connectivity::Full);
    let hs = stacked_stream_channel(channels, &v_ps, &rx, map);
    let power = cfg.power_budget();
    let pre = match kind {
        LinearPrecoder::Zf => zf_precoder(&hs, &power, cfg.subarray_size())?,
        LinearPrecoder::Mrt => mrt_precoder(&hs, &power, cfg.subarray_size()),
    };
    symbols
        .symbols
        .iter()
        .map(|omega| {
            let mut t = CMat::zeros(cfg.n_rf_chains_tx, cfg.n_subcarriers);
            for s in 0..cfg.n_subcarriers {
                let stacked: Vec<C64> = omega.iter().flat_map(|wk| wk[s].iter().copied()).collect();
                t.set_column(s, &(&pre[s] * CVec::from_vec(stacked)));
            }
            let mut sig = antenna_signal(&v_ps, &t, map);
            if let Some((a_n, ridge)) = notch {
                for a in 0..sig.nrows() {
                    let row = sig.row(a).transpose();
                    let notched = notch_projector(&row, a_n, ridge)?;
                    sig.set_row(a, &notched.transpose());
                }
            }
            Ok(sig)
        })
        .collect()
}

/// Uniformly random phases for every realization's phase shifters and every
/// user's analog combiner support.
pub fn random_phases(cfg: &SystemConfig, rx: &RxState, seed: u64) -> (Vec<CVec>, Vec<CMat>) {
    let two_pi = std::f64::consts::TAU;
    let v = (0..cfg.batch_size)
        .map(|b| {
            let mut rng = substream(seed, stream::RANDOM_PS + b as u64);
            CVec::from_fn(cfg.n_tx_antennas, |_, _| cis(rng.random_range(0.0..two_pi)))
        })
        .collect();
    let mut rng = substream(seed, stream::RANDOM_PS + 0x10_0000);
    let u = rx
        .u_rf
        .iter()
        .zip(&rx.support)
        .map(|(u, sup)| {
            let mut out = CMat::zeros(u.nrows(), u.ncols());
            for &(a, m) in sup {
                out[(a, m)] = cis(rng.random_range(0.0..two_pi));
            }
            out
        })
        .collect();
    (v, u)
}
