//! Frequency-selective Rician multi-user channels with ULA steering and
//! distance-based path loss.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{cis, CMat, CVec, C64};
use crate::model::SystemConfig;
use crate::rng::{complex_normal, normal, stream, substream};
use crate::{Error, Result};

/// ULA response `a[m] = exp(j m 2π d sin(angle))`.
pub fn steering_vector(n: usize, angle_rad: f64, spacing_over_lambda: f64) -> CVec {
    let psi = 2.0 * PI * spacing_over_lambda * angle_rad.sin();
    CVec::from_fn(n, |m, _| cis(m as f64 * psi))
}

/// Path loss in dB: `22 log10(d) + 28 + 20 log10(fc) + shadow`.
pub fn path_loss_db(d_m: f64, fc_ghz: f64, shadow_db: f64) -> f64 {
    22.0 * d_m.log10() + 28.0 + 20.0 * fc_ghz.log10() + shadow_db
}

pub fn path_loss_los(d_m: f64, fc_ghz: f64, shadow_db: f64) -> f64 {
    10f64.powf(-path_loss_db(d_m, fc_ghz, shadow_db) / 10.0)
}

/// NLOS paths share the LOS distance law; only the shadowing spread differs.
pub fn path_loss_nlos(d_m: f64, fc_ghz: f64, shadow_db: f64) -> f64 {
    path_loss_los(d_m, fc_ghz, shadow_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserGeometry {
    pub distance_m: f64,
    pub aod_rad: f64,
    pub aoa_rad: f64,
}

fn default_taps() -> usize {
    4
}
fn default_k_db() -> f64 {
    10.0
}
fn default_spread() -> f64 {
    10.0
}
fn default_spacing() -> f64 {
    0.5
}
fn default_center() -> f64 {
    100.0
}
fn default_radius() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_los_std() -> f64 {
    5.8
}
fn default_nlos_std() -> f64 {
    8.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_taps")]
    pub taps: usize,
    #[serde(default = "default_k_db")]
    pub rician_k_db: f64,
    #[serde(default = "default_spread")]
    pub angle_spread_deg: f64,
    #[serde(default = "default_spacing")]
    pub spacing_over_lambda: f64,
    /// Users are dropped uniformly in a disc this far along broadside.
    #[serde(default = "default_center")]
    pub disc_center_m: f64,
    #[serde(default = "default_radius")]
    pub disc_radius_m: f64,
    #[serde(default = "default_true")]
    pub shadowing: bool,
    #[serde(default = "default_los_std")]
    pub los_shadow_std_db: f64,
    #[serde(default = "default_nlos_std")]
    pub nlos_shadow_std_db: f64,
    /// Fixed user positions; overrides the random drop when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_geometry: Option<Vec<UserGeometry>>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            taps: default_taps(),
            rician_k_db: default_k_db(),
            angle_spread_deg: default_spread(),
            spacing_over_lambda: default_spacing(),
            disc_center_m: default_center(),
            disc_radius_m: default_radius(),
            shadowing: true,
            los_shadow_std_db: default_los_std(),
            nlos_shadow_std_db: default_nlos_std(),
            user_geometry: None,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, n_users: usize) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::config("channel.taps", "must be at least 1"));
        }
        if !self.rician_k_db.is_finite() {
            return Err(Error::config("channel.rician_k_db", "must be finite"));
        }
        if !(self.disc_center_m > self.disc_radius_m && self.disc_radius_m >= 0.0) {
            return Err(Error::config("channel.disc_radius_m", "disc must not contain the array"));
        }
        if let Some(g) = &self.user_geometry {
            if g.len() != n_users {
                return Err(Error::config("channel.user_geometry", "one entry per user required"));
            }
            if g.iter().any(|u| !(u.distance_m > 0.0)) {
                return Err(Error::config("channel.user_geometry", "distances must be positive"));
            }
        }
        Ok(())
    }
}

/// `h[k][s]` is the `N_r x N_t` channel of user `k` on subcarrier `s`;
/// `taps[k][l]` are the delay-domain matrices with
/// `H_k^s = Σ_l taps[k][l] e^{-j2π l s / S}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h: Vec<Vec<CMat>>,
    pub noise_var: Vec<Vec<f64>>,
    pub geometry: Vec<UserGeometry>,
    pub taps: Vec<Vec<CMat>>,
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.h.first().map_or(0, |v| v.len())
    }

    /// Builds a set from explicit per-subcarrier matrices with uniform noise.
    pub fn from_matrices(h: Vec<Vec<CMat>>, noise_var: f64) -> Self {
        let noise = h.iter().map(|hs| vec![noise_var; hs.len()]).collect();
        let k = h.len();
        ChannelSet {
            h,
            noise_var: noise,
            geometry: vec![
                UserGeometry {
                    distance_m: 1.0,
                    aod_rad: 0.0,
                    aoa_rad: 0.0
                };
                k
            ],
            taps: vec![vec![]; k],
        }
    }
}

fn user_channel(cfg: &SystemConfig, ch: &ChannelConfig, seed: u64, k: usize) -> (UserGeometry, Vec<CMat>) {
    let mut rng = substream(seed, stream::USER_CHANNEL + k as u64);
    let geom = match &ch.user_geometry {
        Some(g) => g[k],
        None => {
            let r = ch.disc_radius_m * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let x = ch.disc_center_m + r * phi.cos();
            let y = r * phi.sin();
            UserGeometry {
                distance_m: x.hypot(y),
                aod_rad: y.atan2(x),
                aoa_rad: 0.0,
            }
        }
    };
    let kappa = 10f64.powf(ch.rician_k_db / 10.0);
    let spread = ch.angle_spread_deg.to_radians();
    let (nr, nt) = (cfg.n_rx_antennas, cfg.n_tx_antennas);
    let d = ch.spacing_over_lambda;
    let shadow = |rng: &mut rand_chacha::ChaCha8Rng, std: f64| {
        if ch.shadowing {
            normal(rng, std)
        } else {
            0.0
        }
    };

    let mut taps = Vec::with_capacity(ch.taps);
    let g_los = path_loss_los(geom.distance_m, cfg.carrier_ghz, shadow(&mut rng, ch.los_shadow_std_db));
    let a_r = steering_vector(nr, geom.aoa_rad, d);
    let a_t = steering_vector(nt, geom.aod_rad, d);
    taps.push(&a_r * a_t.adjoint() * C64::new((kappa / (kappa + 1.0) * g_los).sqrt(), 0.0));
    for _ in 1..ch.taps {
        let g = path_loss_nlos(geom.distance_m, cfg.carrier_ghz, shadow(&mut rng, ch.nlos_shadow_std_db));
        let theta = geom.aod_rad + normal(&mut rng, spread);
        let phi = geom.aoa_rad + normal(&mut rng, spread);
        let h = complex_normal(&mut rng, 1.0);
        let a_r = steering_vector(nr, phi, d);
        let a_t = steering_vector(nt, theta, d);
        taps.push(&a_r * a_t.adjoint() * (h * (g / (kappa + 1.0)).sqrt()));
    }
    (geom, taps)
}

/// Frequency response of delay taps on `n_sc` subcarriers.
pub fn taps_to_frequency(taps: &[CMat], n_sc: usize) -> Vec<CMat> {
    (0..n_sc)
        .map(|s| {
            let mut h = taps[0].clone();
            for (l, tap) in taps.iter().enumerate().skip(1) {
                let ph = cis(-2.0 * PI * ((l * s) % n_sc) as f64 / n_sc as f64);
                h += tap * ph;
            }
            h
        })
        .collect()
}

/// Draws one channel realization for all users, each from its own substream
/// of `seed`.
pub fn gen_channels(cfg: &SystemConfig, ch: &ChannelConfig, seed: u64) -> Result<ChannelSet> {
    ch.validate(cfg.n_users)?;
    let users: Vec<(UserGeometry, Vec<CMat>)> = (0..cfg.n_users)
        .into_par_iter()
        .map(|k| user_channel(cfg, ch, seed, k))
        .collect();
    let sigma2 = cfg.noise_variance();
    let mut h = Vec::with_capacity(cfg.n_users);
    let mut geometry = Vec::with_capacity(cfg.n_users);
    let mut taps = Vec::with_capacity(cfg.n_users);
    for (g, t) in users {
        h.push(taps_to_frequency(&t, cfg.n_subcarriers));
        geometry.push(g);
        taps.push(t);
    }
    Ok(ChannelSet {
        h,
        noise_var: vec![vec![sigma2; cfg.n_subcarriers]; cfg.n_users],
        geometry,
        taps,
    })
}
