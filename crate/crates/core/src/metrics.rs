//! Reporting metrics: per-subcarrier MSE, SER, EVM and emitted power.

use serde::Serialize;

use crate::channel::ChannelSet;
use crate::combiner::{mse_ks, rx_stats, RxState};
use crate::linalg::{CMat, CVec};
use crate::model::{qam_decide, QamConstellation, SymbolBatch, SystemConfig};
use crate::rng::{complex_normal, stream, substream};
use crate::spectral::{
    build_sampling_matrix, dense_grid, gamma_to_freq_hz, w_per_hz_to_dbm_per_100khz, MaskProfile, MaskSpec,
};
use crate::Result;

/// Reporting floor for zero power.
pub const FLOOR_DBM: f64 = -400.0;

fn to_dbm(watts: f64) -> f64 {
    if watts > 0.0 {
        (10.0 * watts.log10() + 30.0).max(FLOOR_DBM)
    } else {
        FLOOR_DBM
    }
}

/// `mse[k][s]`: noise-averaged batch MSE of user `k` on subcarrier `s`.
pub fn per_user_subcarrier_mse(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
) -> Result<Vec<Vec<f64>>> {
    let stats = rx_stats(channels, signals, &symbols.symbols)?;
    Ok((0..channels.n_users())
        .map(|k| {
            (0..channels.n_subcarriers())
                .map(|s| mse_ks(&stats, k, s, &rx.u_rf[k], &rx.u_dig[k][s]))
                .collect()
        })
        .collect())
}

/// `MSE_s = Σ_k mse[k][s]`; sums to the batch objective.
pub fn per_subcarrier_mse(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
) -> Result<Vec<f64>> {
    let m = per_user_subcarrier_mse(channels, signals, rx, symbols)?;
    let n_sc = channels.n_subcarriers();
    Ok((0..n_sc).map(|s| m.iter().map(|mk| mk[s]).sum()).collect())
}

/// `EVM[k][s] = sqrt(mse[k][s] / n_k)` for unit-energy symbols.
pub fn evm(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
) -> Result<Vec<Vec<f64>>> {
    let m = per_user_subcarrier_mse(channels, signals, rx, symbols)?;
    Ok(m.iter()
        .enumerate()
        .map(|(k, mk)| {
            let n_k = rx.u_dig[k][0].ncols() as f64;
            mk.iter().map(|v| (v.max(0.0) / n_k).sqrt()).collect()
        })
        .collect())
}

/// Estimated symbols `U^H U_RF^H (H y + n)` for one realization.
fn estimate(h: &CMat, y: &CVec, noise: Option<&CVec>, u_rf: &CMat, u_dig: &CMat) -> CVec {
    let mut r = h * y;
    if let Some(n) = noise {
        r += n;
    }
    u_dig.adjoint() * (u_rf.adjoint() * r)
}

/// Per-subcarrier fraction of wrongly decided stream symbols over the batch
/// and `n_noise_draws` noise draws per realization.
pub fn symbol_error_rate(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
    constellation: &QamConstellation,
    n_noise_draws: usize,
    seed: u64,
) -> Vec<f64> {
    let n_sc = channels.n_subcarriers();
    let mut errors = vec![0usize; n_sc];
    let mut total = vec![0usize; n_sc];
    for (b, sig) in signals.iter().enumerate() {
        let mut rng = substream(seed, stream::NOISE + b as u64);
        for _ in 0..n_noise_draws.max(1) {
            for (k, hk) in channels.h.iter().enumerate() {
                for (s, h) in hk.iter().enumerate() {
                    let y = sig.column(s).into_owned();
                    let var = channels.noise_var[k][s];
                    let n = CVec::from_fn(h.nrows(), |_, _| complex_normal(&mut rng, var));
                    let est = estimate(h, &y, Some(&n), &rx.u_rf[k], &rx.u_dig[k][s]);
                    let dec = qam_decide(&est, constellation);
                    let sent = &symbols.symbols[b][k][s];
                    errors[s] += dec.iter().zip(sent.iter()).filter(|(a, b)| (*a - *b).norm() > 1e-9).count();
                    total[s] += sent.len();
                }
            }
        }
    }
    errors
        .iter()
        .zip(&total)
        .map(|(e, t)| *e as f64 / (*t).max(1) as f64)
        .collect()
}

/// Monte-Carlo average of `||ŝ - ω||^2` summed over users and subcarriers.
pub fn monte_carlo_objective(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
    n_draws: usize,
    seed: u64,
) -> f64 {
    let mut acc = 0.0;
    for (b, sig) in signals.iter().enumerate() {
        let mut rng = substream(seed, stream::NOISE + b as u64);
        for _ in 0..n_draws {
            for (k, hk) in channels.h.iter().enumerate() {
                for (s, h) in hk.iter().enumerate() {
                    let y = sig.column(s).into_owned();
                    let n = CVec::from_fn(h.nrows(), |_, _| complex_normal(&mut rng, channels.noise_var[k][s]));
                    let est = estimate(h, &y, Some(&n), &rx.u_rf[k], &rx.u_dig[k][s]);
                    acc += (est - &symbols.symbols[b][k][s]).norm_squared();
                }
            }
        }
    }
    acc / (signals.len() * n_draws) as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct EmissionReport {
    pub inband_dbm: f64,
    pub oob_dbm: f64,
    /// Minimum over antennas, enforcement samples and realizations of
    /// `limit - psd` in dB.
    pub worst_mask_margin_db: f64,
    pub freqs_hz: Vec<f64>,
    /// Batch-averaged PSD per antenna on the dense grid, dBm / 100 kHz.
    pub per_antenna_psd: Vec<Vec<f64>>,
    /// Mask limit on the dense grid (`None` where inactive).
    pub mask_dbm: Vec<Option<f64>>,
    /// Enforcement sample frequencies and their limits.
    pub enforcement_freqs_hz: Vec<f64>,
    pub enforcement_limits_db: Vec<f64>,
    /// Batch-averaged PSD per antenna at the enforcement samples, dBm / 100 kHz.
    pub enforcement_psd: Vec<Vec<f64>>,
}

impl EmissionReport {
    /// Minimum of `limit - psd` over antennas and enforcement samples of the
    /// batch-averaged export.
    pub fn export_margin_db(&self) -> f64 {
        self.enforcement_psd
            .iter()
            .flat_map(|row| row.iter().zip(&self.enforcement_limits_db).map(|(p, l)| l - p))
            .fold(f64::INFINITY, f64::min)
    }
}

fn averaged_psd(a: &CMat, signals: &[CMat], denom: f64) -> Vec<Vec<f64>> {
    let n_t = signals.first().map_or(0, |s| s.nrows());
    let n_b = signals.len().max(1) as f64;
    let mut psd = vec![vec![0.0; a.nrows()]; n_t];
    for sig in signals {
        // rows of A x^T are frequencies, columns antennas
        let spec = a * sig.transpose();
        for (ant, row) in psd.iter_mut().enumerate() {
            for (i, p) in row.iter_mut().enumerate() {
                *p += spec[(i, ant)].norm_sqr() / denom / n_b;
            }
        }
    }
    psd
}

fn psd_dbm(psd: &[Vec<f64>]) -> Vec<Vec<f64>> {
    psd.iter()
        .map(|row| {
            row.iter()
                .map(|p| if *p > 0.0 { w_per_hz_to_dbm_per_100khz(*p) } else { FLOOR_DBM })
                .collect()
        })
        .collect()
}

fn trapezoid(freqs: &[f64], vals: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let mut acc = 0.0;
    for i in 1..freqs.len() {
        if keep(freqs[i - 1]) && keep(freqs[i]) {
            acc += 0.5 * (vals[i - 1] + vals[i]) * (freqs[i] - freqs[i - 1]);
        }
    }
    acc
}

/// Emitted power in-band (`|f| <= BW/2`) and over the mask enforcement span,
/// from the batch-averaged dense periodogram summed over antennas.
pub fn emission_report(
    cfg: &SystemConfig,
    signals: &[CMat],
    mask: &MaskSpec,
    profile: Option<&MaskProfile>,
    points_per_bin: usize,
) -> EmissionReport {
    let gamma = dense_grid(cfg, points_per_bin);
    let freqs: Vec<f64> = gamma.iter().map(|g| gamma_to_freq_hz(cfg, *g)).collect();
    let a = build_sampling_matrix(cfg.n_subcarriers, cfg.oversampling, cfg.cp_len, &gamma);
    let denom = cfg.symbol_len() as f64 * cfg.sample_rate_hz();
    let psd = averaged_psd(&a, signals, denom);
    let total: Vec<f64> = (0..gamma.len()).map(|i| psd.iter().map(|r| r[i]).sum()).collect();
    let half_bw = cfg.bandwidth_hz / 2.0;
    let inband = trapezoid(&freqs, &total, |f| f.abs() <= half_bw + 1e-6);
    let (lo, hi) = mask.enforcement_span_hz();
    let oob = if mask.is_empty() {
        0.0
    } else {
        trapezoid(&freqs, &total, |f| f.abs() >= lo - 1e-6 && f.abs() <= hi + 1e-6)
    };

    let mut worst = f64::INFINITY;
    for sig in signals {
        for ant in 0..sig.nrows() {
            worst = worst.min(mask.margin_db(&sig.row(ant).transpose()));
        }
    }

    EmissionReport {
        inband_dbm: to_dbm(inband),
        oob_dbm: to_dbm(oob),
        worst_mask_margin_db: worst,
        mask_dbm: freqs
            .iter()
            .map(|f| profile.and_then(|p| p.limit_db(f / 1e6)))
            .collect(),
        per_antenna_psd: psd_dbm(&psd),
        freqs_hz: freqs,
        enforcement_freqs_hz: mask.freqs_hz.clone(),
        enforcement_limits_db: mask.limits_db.clone(),
        enforcement_psd: psd_dbm(&averaged_psd(&mask.a_n, signals, denom)),
    }
}
