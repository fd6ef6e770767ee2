//! Oversampled IDFT, the CP-inclusive spectral sampling matrix, periodogram
//! PSD samples and spectral masks.
//!
//! Frequencies are baseband offsets from the band centre. Bin location `γ` on
//! the `ℓS` grid maps to `f = (γ - (S-1)/2) * BW/S`, so the occupied
//! subcarriers sit symmetrically inside `[-BW/2, BW/2]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{cis, CMat, CVec, C64};
use crate::model::SystemConfig;
use crate::{Error, Result};

/// `ℓS x S` oversampled IDFT matrix `F^H`.
#[derive(Debug, Clone)]
pub struct IdftGrid {
    pub matrix: CMat,
    pub s: usize,
    pub ell: usize,
}

pub fn build_idft(s: usize, ell: usize) -> IdftGrid {
    let n = ell * s;
    let scale = 1.0 / (n as f64).sqrt();
    let matrix = CMat::from_fn(n, s, |r, c| {
        cis(2.0 * PI * ((r * c) % n) as f64 / n as f64) * scale
    });
    IdftGrid { matrix, s, ell }
}

impl IdftGrid {
    pub fn len(&self) -> usize {
        self.ell * self.s
    }

    pub fn is_empty(&self) -> bool {
        self.s == 0
    }
}

/// One entry of the sampling matrix: the DTFT of the CP-inclusive rectangular
/// pulse of subcarrier `s` evaluated at bin location `gamma`.
pub fn sampling_entry(n_sc: usize, ell: usize, cp_len: usize, gamma: f64, s: usize) -> C64 {
    let n = (ell * n_sc) as f64;
    let l = (ell * (n_sc + cp_len)) as f64;
    let d = (gamma - s as f64) / n;
    if (d - d.round()).abs() < 1e-9 {
        return C64::new(l / n.sqrt(), 0.0);
    }
    let phase = PI * d * ((ell * cp_len) as f64 - n + 1.0);
    let ratio = (PI * d * l).sin() / (PI * d).sin();
    cis(phase) * (ratio / n.sqrt())
}

/// `G x S` sampling matrix at the bin locations `gamma`.
pub fn build_sampling_matrix(n_sc: usize, ell: usize, cp_len: usize, gamma: &[f64]) -> CMat {
    CMat::from_fn(gamma.len(), n_sc, |i, s| {
        sampling_entry(n_sc, ell, cp_len, gamma[i], s)
    })
}

/// Spectrum samples `X(γ_i) = A[i,:] w` of one antenna's frequency-domain
/// symbol vector.
pub fn spectrum_samples(a_rows: &CMat, w: &CVec) -> Result<CVec> {
    if a_rows.ncols() != w.len() {
        return Err(Error::Dimension(format!(
            "sampling matrix has {} columns, symbol vector has {} entries",
            a_rows.ncols(),
            w.len()
        )));
    }
    Ok(a_rows * w)
}

/// Periodogram PSD samples in W/Hz: `|X(γ)|^2 / (L F_s)`.
pub fn psd_samples(a_rows: &CMat, w: &CVec, symbol_len: usize, sample_rate_hz: f64) -> Result<Vec<f64>> {
    let x = spectrum_samples(a_rows, w)?;
    let denom = symbol_len as f64 * sample_rate_hz;
    Ok(x.iter().map(|z| z.norm_sqr() / denom).collect())
}

pub fn gamma_to_freq_hz(cfg: &SystemConfig, gamma: f64) -> f64 {
    (gamma - (cfg.n_subcarriers as f64 - 1.0) / 2.0) * cfg.subcarrier_spacing_hz()
}

pub fn freq_to_gamma(cfg: &SystemConfig, f_hz: f64) -> f64 {
    f_hz / cfg.subcarrier_spacing_hz() + (cfg.n_subcarriers as f64 - 1.0) / 2.0
}

/// dBm per 100 kHz to W/Hz.
pub fn dbm_per_100khz_to_w_per_hz(db: f64) -> f64 {
    10f64.powf(db / 10.0) * 1e-3 / 1e5
}

/// W/Hz to dBm per 100 kHz.
pub fn w_per_hz_to_dbm_per_100khz(psd: f64) -> f64 {
    10.0 * (psd * 1e5).log10() + 30.0
}

/// Linear ramp of the limit (dBm / 100 kHz) over `|f|` in `[start, end]` MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSegment {
    pub freq_start_mhz: f64,
    pub freq_end_mhz: f64,
    pub limit_start_db: f64,
    pub limit_end_db: f64,
}

/// Symmetric piecewise-linear PSD limit. Below `inactive_below_mhz` there is
/// no constraint; past the last segment the final limit extends flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskProfile {
    pub name: String,
    pub inactive_below_mhz: f64,
    pub segments: Vec<MaskSegment>,
    /// Upper edge of the enforcement span; defaults to the Nyquist frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enforce_end_mhz: Option<f64>,
}

impl MaskProfile {
    /// Masks 1-4 ramp from -60/-65/-70/-75 to -70/-75/-80/-85 dBm/100 kHz
    /// over 10.01-12.5 MHz; mask 5 is flat at -90 from 10.01 MHz.
    pub fn standard(id: usize) -> Result<Self> {
        let (start, end) = match id {
            1 => (-60.0, -70.0),
            2 => (-65.0, -75.0),
            3 => (-70.0, -80.0),
            4 => (-75.0, -85.0),
            5 => (-90.0, -90.0),
            _ => return Err(Error::config("mask", format!("unknown mask id {id}"))),
        };
        Ok(MaskProfile {
            name: format!("mask{id}"),
            inactive_below_mhz: 10.01,
            segments: vec![MaskSegment {
                freq_start_mhz: 10.01,
                freq_end_mhz: 12.5,
                limit_start_db: start,
                limit_end_db: end,
            }],
            enforce_end_mhz: None,
        })
    }

    /// The default operating mask (identical to mask 3).
    pub fn default_mask() -> Self {
        let mut m = Self::standard(3).expect("mask 3 exists");
        m.name = "default".into();
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::config("mask.segments", "at least one segment required"));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for seg in &self.segments {
            let vals = [seg.freq_start_mhz, seg.freq_end_mhz, seg.limit_start_db, seg.limit_end_db];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("mask.segments", "non-finite value"));
            }
            if seg.freq_end_mhz < seg.freq_start_mhz || seg.freq_start_mhz < prev_end {
                return Err(Error::config("mask.segments", "segments must be ordered and non-overlapping"));
            }
            prev_end = seg.freq_end_mhz;
        }
        if !(self.inactive_below_mhz >= 0.0) {
            return Err(Error::config("mask.inactive_below_mhz", "must be nonnegative"));
        }
        Ok(())
    }

    /// Limit in dBm / 100 kHz at `|f|` (MHz), or `None` inside the inactive
    /// region.
    pub fn limit_db(&self, f_abs_mhz: f64) -> Option<f64> {
        let f = f_abs_mhz.abs();
        if f < self.inactive_below_mhz {
            return None;
        }
        let first = self.segments.first()?;
        if f < first.freq_start_mhz {
            return Some(first.limit_start_db);
        }
        for seg in &self.segments {
            if f <= seg.freq_end_mhz {
                if f < seg.freq_start_mhz {
                    return Some(seg.limit_start_db);
                }
                let width = seg.freq_end_mhz - seg.freq_start_mhz;
                if width <= 0.0 {
                    return Some(seg.limit_end_db);
                }
                let t = (f - seg.freq_start_mhz) / width;
                return Some(seg.limit_start_db + t * (seg.limit_end_db - seg.limit_start_db));
            }
        }
        self.segments.last().map(|s| s.limit_end_db)
    }
}

/// Discretized mask: enforcement bin locations, the squared-magnitude limits
/// `r_j` and the matching rows `A_n` of the sampling matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MaskSpec {
    pub gamma: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub limits_db: Vec<f64>,
    pub limits_r: Vec<f64>,
    #[serde(skip)]
    pub a_n: CMat,
    pub sample_rate_hz: f64,
    pub cp_len: usize,
    pub symbol_len: usize,
    pub profile_name: String,
    /// `[f_lo, f_hi)` of `|f|` covered by the samples, when built from a
    /// profile.
    pub span_hz: Option<(f64, f64)>,
}

impl MaskSpec {
    /// Span of `|f|` the samples enforce.
    pub fn enforcement_span_hz(&self) -> (f64, f64) {
        if let Some(span) = self.span_hz {
            return span;
        }
        let lo = self.freqs_hz.iter().map(|f| f.abs()).fold(f64::INFINITY, f64::min);
        let hi = self.freqs_hz.iter().map(|f| f.abs()).fold(0.0, f64::max);
        (lo, hi)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// A mask with no samples (spectrum unconstrained).
    pub fn empty(cfg: &SystemConfig) -> Self {
        MaskSpec {
            gamma: vec![],
            freqs_hz: vec![],
            limits_db: vec![],
            limits_r: vec![],
            a_n: CMat::zeros(0, cfg.n_subcarriers),
            sample_rate_hz: cfg.sample_rate_hz(),
            cp_len: cfg.cp_len,
            symbol_len: cfg.symbol_len(),
            profile_name: "none".into(),
            span_hz: None,
        }
    }

    /// Builds a mask from explicit bin locations and limits.
    pub fn from_samples(cfg: &SystemConfig, gamma: Vec<f64>, limits_r: Vec<f64>, name: &str) -> Result<Self> {
        if gamma.len() != limits_r.len() {
            return Err(Error::Dimension("gamma and limits differ in length".into()));
        }
        if limits_r.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("mask", "limits must be positive"));
        }
        let scale = cfg.symbol_len() as f64 * cfg.sample_rate_hz();
        let limits_db = limits_r
            .iter()
            .map(|r| w_per_hz_to_dbm_per_100khz(r / scale))
            .collect();
        let freqs_hz = gamma.iter().map(|g| gamma_to_freq_hz(cfg, *g)).collect();
        let a_n = build_sampling_matrix(cfg.n_subcarriers, cfg.oversampling, cfg.cp_len, &gamma);
        Ok(MaskSpec {
            gamma,
            freqs_hz,
            limits_db,
            limits_r,
            a_n,
            sample_rate_hz: cfg.sample_rate_hz(),
            cp_len: cfg.cp_len,
            symbol_len: cfg.symbol_len(),
            profile_name: name.into(),
            span_hz: None,
        })
    }

    /// Worst margin `limit - psd` in dB of one antenna's symbol vector over
    /// the enforcement samples (`+inf` for an empty mask or silent antenna).
    pub fn margin_db(&self, w: &CVec) -> f64 {
        let x = &self.a_n * w;
        x.iter()
            .zip(&self.limits_r)
            .map(|(z, r)| {
                let p = z.norm_sqr();
                if p <= 0.0 {
                    f64::INFINITY
                } else {
                    10.0 * (r / p).log10()
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Places `samples_per_side` uniformly spaced samples on each side of the
/// band over `[f_lo, f_hi)` where `f_lo` is the profile's activation edge and
/// `f_hi` is `enforce_end_mhz` or Nyquist.
pub fn build_mask(profile: &MaskProfile, cfg: &SystemConfig, samples_per_side: usize) -> Result<MaskSpec> {
    profile.validate()?;
    if samples_per_side == 0 {
        return Ok(MaskSpec {
            profile_name: profile.name.clone(),
            ..MaskSpec::empty(cfg)
        });
    }
    let nyquist_mhz = cfg.sample_rate_hz() / 2.0 / 1e6;
    let f_lo = profile.inactive_below_mhz;
    let f_hi = profile.enforce_end_mhz.unwrap_or(nyquist_mhz);
    if f_hi > nyquist_mhz + 1e-9 {
        return Err(Error::config(
            "mask.enforce_end_mhz",
            format!("{f_hi} MHz exceeds the Nyquist frequency {nyquist_mhz} MHz"),
        ));
    }
    if !(f_lo < f_hi) {
        return Err(Error::config(
            "mask",
            format!("empty enforcement span [{f_lo}, {f_hi}] MHz"),
        ));
    }
    let step = (f_hi - f_lo) / samples_per_side as f64;
    let side: Vec<f64> = (0..samples_per_side).map(|j| f_lo + j as f64 * step).collect();
    let freqs_mhz: Vec<f64> = side
        .iter()
        .rev()
        .map(|f| -f)
        .chain(side.iter().copied())
        .collect();
    let scale = cfg.symbol_len() as f64 * cfg.sample_rate_hz();
    let mut gamma = Vec::with_capacity(freqs_mhz.len());
    let mut limits_db = Vec::with_capacity(freqs_mhz.len());
    let mut limits_r = Vec::with_capacity(freqs_mhz.len());
    for &f in &freqs_mhz {
        let db = profile
            .limit_db(f)
            .ok_or_else(|| Error::config("mask", format!("profile inactive at {f} MHz")))?;
        gamma.push(freq_to_gamma(cfg, f * 1e6));
        limits_db.push(db);
        limits_r.push(scale * dbm_per_100khz_to_w_per_hz(db));
    }
    let a_n = build_sampling_matrix(cfg.n_subcarriers, cfg.oversampling, cfg.cp_len, &gamma);
    Ok(MaskSpec {
        gamma,
        freqs_hz: freqs_mhz.iter().map(|f| f * 1e6).collect(),
        limits_db,
        limits_r,
        a_n,
        sample_rate_hz: cfg.sample_rate_hz(),
        cp_len: cfg.cp_len,
        symbol_len: cfg.symbol_len(),
        profile_name: profile.name.clone(),
        span_hz: Some((f_lo * 1e6, f_hi * 1e6)),
    })
}

/// Dense visualization grid: `points_per_bin` locations per subcarrier
/// spacing covering `[-F_s/2, F_s/2)`.
pub fn dense_grid(cfg: &SystemConfig, points_per_bin: usize) -> Vec<f64> {
    let ppb = points_per_bin.max(1);
    let start = freq_to_gamma(cfg, -cfg.sample_rate_hz() / 2.0);
    (0..cfg.grid_len() * ppb)
        .map(|i| start + i as f64 / ppb as f64)
        .collect()
}
