//! Shared domain types: system configuration, antenna-to-RF-chain map, QAM
//! constellations and symbol batches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{CVec, C64};
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// Per-subcarrier transmit budget in watts: either one value shared by all
/// subcarriers or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerBudget {
    Uniform(f64),
    PerSubcarrier(Vec<f64>),
}

impl PowerBudget {
    pub fn resolve(&self, n_subcarriers: usize) -> Vec<f64> {
        match self {
            PowerBudget::Uniform(p) => vec![*p; n_subcarriers],
            PowerBudget::PerSubcarrier(v) => v.clone(),
        }
    }
}

fn default_rho() -> f64 {
    1.0
}
fn default_noise_psd() -> f64 {
    -174.0
}
fn default_nf() -> f64 {
    8.0
}
fn default_carrier() -> f64 {
    28.0
}
fn default_bandwidth() -> f64 {
    20e6
}

/// All dimensional, power, clipping and regularization parameters of one
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx_antennas: usize,
    pub n_rf_chains_tx: usize,
    pub n_users: usize,
    pub n_rx_antennas: usize,
    pub n_rf_chains_rx: usize,
    pub n_streams_per_user: usize,
    pub n_subcarriers: usize,
    pub oversampling: usize,
    pub cp_len: usize,
    /// Watts per subcarrier.
    pub power_budget_per_subcarrier: PowerBudget,
    pub clip_level: f64,
    pub qam_order: u32,
    pub batch_size: usize,
    /// W-block regularization; defaults to `1e-4 * mean(P^s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_w: Option<f64>,
    /// T-block regularization; defaults to `1e-4 * mean(P^s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg_t: Option<f64>,
    /// Multiplier on the mean squared Frobenius norm of the effective
    /// channels; the ADMM penalty is `admm_rho * mean_ks ||B_k^s||_F^2`.
    #[serde(default = "default_rho")]
    pub admm_rho: f64,
    #[serde(default = "default_noise_psd")]
    pub noise_psd_dbm_hz: f64,
    #[serde(default = "default_nf")]
    pub noise_figure_db: f64,
    #[serde(default = "default_carrier")]
    pub carrier_ghz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Laptop-scale reference configuration: 16 antennas on 8 RF chains, two
    /// users with two antennas, two RF chains and two streams, 16 subcarriers,
    /// 4x oversampling, 4-sample CP, batch of 8, 16-QAM, 25 dBm/subcarrier.
    pub fn desk() -> Self {
        SystemConfig {
            n_tx_antennas: 16,
            n_rf_chains_tx: 8,
            n_users: 2,
            n_rx_antennas: 2,
            n_rf_chains_rx: 2,
            n_streams_per_user: 2,
            n_subcarriers: 16,
            oversampling: 4,
            cp_len: 4,
            power_budget_per_subcarrier: PowerBudget::Uniform(dbm_to_watts(25.0)),
            clip_level: 3.0,
            qam_order: 16,
            batch_size: 8,
            reg_w: None,
            reg_t: None,
            admm_rho: 1.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 8.0,
            carrier_ghz: 28.0,
            bandwidth_hz: 20e6,
            rng_seed: 1,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_tx_antennas", self.n_tx_antennas),
            ("n_rf_chains_tx", self.n_rf_chains_tx),
            ("n_users", self.n_users),
            ("n_rx_antennas", self.n_rx_antennas),
            ("n_rf_chains_rx", self.n_rf_chains_rx),
            ("n_streams_per_user", self.n_streams_per_user),
            ("n_subcarriers", self.n_subcarriers),
            ("oversampling", self.oversampling),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be a positive integer"));
            }
        }
        if self.n_tx_antennas % self.n_rf_chains_tx != 0 {
            return Err(Error::config(
                "n_rf_chains_tx",
                format!(
                    "{} RF chains do not divide {} antennas into equal subarrays",
                    self.n_rf_chains_tx, self.n_tx_antennas
                ),
            ));
        }
        if self.n_streams_per_user > self.n_rf_chains_rx {
            return Err(Error::config(
                "n_streams_per_user",
                "must not exceed n_rf_chains_rx",
            ));
        }
        if self.n_rf_chains_rx > self.n_rx_antennas {
            return Err(Error::config("n_rf_chains_rx", "must not exceed n_rx_antennas"));
        }
        let power = self.power_budget();
        if power.len() != self.n_subcarriers {
            return Err(Error::config(
                "power_budget_per_subcarrier",
                format!("expected {} values, got {}", self.n_subcarriers, power.len()),
            ));
        }
        if power.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::config("power_budget_per_subcarrier", "must be positive"));
        }
        if !(self.clip_level.is_finite() && self.clip_level > 0.0) {
            return Err(Error::config("clip_level", "must be positive"));
        }
        if !matches!(self.qam_order, 4 | 16 | 64 | 256) {
            return Err(Error::config("qam_order", "supported orders are 4, 16, 64, 256"));
        }
        for (name, v) in [("reg_w", self.reg_w), ("reg_t", self.reg_t)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(name, "must be positive"));
                }
            }
        }
        if !(self.admm_rho.is_finite() && self.admm_rho > 0.0) {
            return Err(Error::config("admm_rho", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        if !(self.carrier_ghz > 0.0) {
            return Err(Error::config("carrier_ghz", "must be positive"));
        }
        Ok(())
    }

    pub fn power_budget(&self) -> Vec<f64> {
        self.power_budget_per_subcarrier.resolve(self.n_subcarriers)
    }

    pub fn mean_power(&self) -> f64 {
        let p = self.power_budget();
        p.iter().sum::<f64>() / p.len() as f64
    }

    pub fn eta_w(&self) -> f64 {
        self.reg_w.unwrap_or(1e-4 * self.mean_power())
    }

    pub fn eta_t(&self) -> f64 {
        self.reg_t.unwrap_or(1e-4 * self.mean_power())
    }

    /// Antennas per RF chain, `N_t / N_RF`.
    pub fn subarray_size(&self) -> usize {
        self.n_tx_antennas / self.n_rf_chains_tx
    }

    /// Oversampled grid length `l * S`.
    pub fn grid_len(&self) -> usize {
        self.oversampling * self.n_subcarriers
    }

    /// CP-inclusive symbol length `L = l*S + l*N_CP`.
    pub fn symbol_len(&self) -> usize {
        self.oversampling * (self.n_subcarriers + self.cp_len)
    }

    /// Oversampled sample rate `F_s,l = l * bandwidth`.
    pub fn sample_rate_hz(&self) -> f64 {
        self.oversampling as f64 * self.bandwidth_hz
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Per-subcarrier noise variance in watts: thermal PSD integrated over
    /// one subcarrier spacing plus the receiver noise figure.
    pub fn noise_variance(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz
            + 10.0 * self.subcarrier_spacing_hz().log10()
            + self.noise_figure_db;
        dbm_to_watts(dbm)
    }
}

/// Maps every transmit antenna to the RF chain feeding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntennaMap {
    rf_chain_of_antenna: Vec<usize>,
    n_rf: usize,
}

impl AntennaMap {
    pub fn new(rf_chain_of_antenna: Vec<usize>, n_rf: usize) -> Result<Self> {
        if n_rf == 0 || rf_chain_of_antenna.is_empty() {
            return Err(Error::config("antenna_map", "empty map"));
        }
        let n_t = rf_chain_of_antenna.len();
        if n_t % n_rf != 0 {
            return Err(Error::config("antenna_map", "unequal subarray sizes"));
        }
        let mut counts = vec![0usize; n_rf];
        for &m in &rf_chain_of_antenna {
            if m >= n_rf {
                return Err(Error::config("antenna_map", format!("RF chain {m} out of range")));
            }
            counts[m] += 1;
        }
        if counts.iter().any(|&c| c != n_t / n_rf) {
            return Err(Error::config("antenna_map", "unequal subarray sizes"));
        }
        Ok(AntennaMap {
            rf_chain_of_antenna,
            n_rf,
        })
    }

    /// Contiguous subarrays: antenna `a` feeds chain `a / (N_t / N_RF)`.
    pub fn contiguous(n_t: usize, n_rf: usize) -> Result<Self> {
        if n_rf == 0 || n_t % n_rf != 0 {
            return Err(Error::config("n_rf_chains_tx", "must divide n_tx_antennas"));
        }
        let size = n_t / n_rf;
        AntennaMap::new((0..n_t).map(|a| a / size).collect(), n_rf)
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        Self::contiguous(cfg.n_tx_antennas, cfg.n_rf_chains_tx)
    }

    #[inline]
    pub fn chain(&self, antenna: usize) -> usize {
        self.rf_chain_of_antenna[antenna]
    }

    pub fn chains(&self) -> &[usize] {
        &self.rf_chain_of_antenna
    }

    pub fn n_antennas(&self) -> usize {
        self.rf_chain_of_antenna.len()
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    pub fn subarray_size(&self) -> usize {
        self.n_antennas() / self.n_rf
    }
}

/// Square Gray-labelled QAM scaled to unit average energy. Point `i` carries
/// label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    pub order: u32,
    pub points: Vec<C64>,
    pub normalization: f64,
}

fn gray_to_binary(mut g: u32) -> u32 {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

pub fn make_constellation(order: u32) -> Result<QamConstellation> {
    if !matches!(order, 4 | 16 | 64 | 256) {
        return Err(Error::config("qam_order", format!("unsupported QAM order {order}")));
    }
    let bits = order.trailing_zeros();
    let half = bits / 2;
    let side = 1u32 << half;
    // mean |a + jb|^2 over the odd-integer grid is 2 (side^2 - 1) / 3
    let normalization = (3.0 / (2.0 * (side as f64 * side as f64 - 1.0))).sqrt();
    let level = |g: u32| (2.0 * gray_to_binary(g) as f64 - (side as f64 - 1.0)) * normalization;
    let points = (0..order)
        .map(|i| C64::new(level(i >> half), level(i & (side - 1))))
        .collect();
    Ok(QamConstellation {
        order,
        points,
        normalization,
    })
}

impl QamConstellation {
    /// Index of the nearest point; ties go to the smaller index.
    pub fn nearest_index(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// Componentwise nearest-point projection onto the constellation.
pub fn qam_decide(value: &CVec, constellation: &QamConstellation) -> CVec {
    value.map(|z| constellation.points[constellation.nearest_index(z)])
}

/// `B` realizations of the per-user, per-subcarrier stream vectors, indexed
/// `symbols[b][k][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolBatch {
    pub symbols: Vec<Vec<Vec<CVec>>>,
}

impl SymbolBatch {
    pub fn batch_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn realization(&self, b: usize) -> &[Vec<CVec>] {
        &self.symbols[b]
    }
}

/// Draws i.i.d. uniform constellation points. Realization `b` uses its own
/// substream of `seed`.
pub fn draw_symbol_batch(
    cfg: &SystemConfig,
    constellation: &QamConstellation,
    seed: u64,
) -> SymbolBatch {
    let symbols = (0..cfg.batch_size)
        .map(|b| {
            let mut rng = substream(seed, stream::SYMBOLS + b as u64);
            (0..cfg.n_users)
                .map(|_| {
                    (0..cfg.n_subcarriers)
                        .map(|_| {
                            CVec::from_fn(cfg.n_streams_per_user, |_, _| {
                                constellation.points
                                    [rng.random_range(0..constellation.points.len())]
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    SymbolBatch { symbols }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> Result<f64> {
    if !(watts > 0.0) {
        return Err(Error::Degenerate(format!(
            "cannot express {watts} W in dBm"
        )));
    }
    Ok(10.0 * watts.log10() + 30.0)
}
