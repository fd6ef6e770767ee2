//! Experiment plumbing shared by the command-line tool and the acceptance
//! suite: configuration, one-shot runs, power and mask sweeps, baseline
//! comparison and phase-error robustness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmOptions;
use crate::baselines::{baseline_signals, random_phases, LinearPrecoder};
use crate::bcd::{evaluate_objective, run_bcd, BcdInit, BcdOptions, BcdProblem, BcdRun};
use crate::channel::{gen_channels, ChannelConfig, ChannelSet};
use crate::combiner::{mmse_digital_combiner, rx_stats, RxState};
use crate::linalg::{cis, CMat};
use crate::metrics::{emission_report, evm, per_subcarrier_mse, symbol_error_rate, EmissionReport};
use crate::model::{
    dbm_to_watts, draw_symbol_batch, make_constellation, AntennaMap, PowerBudget, QamConstellation,
    SymbolBatch, SystemConfig,
};
use crate::rng::{normal, stream, substream};
use crate::spectral::{build_idft, build_mask, IdftGrid, MaskProfile, MaskSpec};
use crate::{Error, Result};

/// Which spectral mask to enforce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    /// Standard profile 1-5; ignored when `profile` is set.
    pub id: usize,
    pub profile: Option<MaskProfile>,
    pub samples_per_side: usize,
    /// `false` drops the mask constraint entirely.
    pub enforce: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            id: 3,
            profile: None,
            samples_per_side: 16,
            enforce: true,
        }
    }
}

impl MaskConfig {
    pub fn resolve_profile(&self) -> Result<MaskProfile> {
        match &self.profile {
            Some(p) => {
                p.validate()?;
                Ok(p.clone())
            }
            None if self.id == 3 => Ok(MaskProfile::default_mask()),
            None => MaskProfile::standard(self.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub ser_noise_draws: usize,
    pub psd_points_per_bin: usize,
    pub phase_error_draws: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            ser_noise_draws: 200,
            psd_points_per_bin: 8,
            phase_error_draws: 50,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub bcd: BcdOptions,
    #[serde(default)]
    pub admm: AdmmOptions,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        ExperimentConfig {
            system: SystemConfig::desk(),
            channel: ChannelConfig::default(),
            mask: MaskConfig::default(),
            bcd: BcdOptions::default(),
            admm: AdmmOptions::default(),
            metrics: MetricsConfig::default(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.channel.validate(self.system.n_users)?;
        self.mask.resolve_profile()?;
        if self.metrics.psd_points_per_bin == 0 {
            return Err(Error::config("metrics.psd_points_per_bin", "must be positive"));
        }
        Ok(())
    }
}

/// Frozen inputs of one run: channels, symbols, mask and grids.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub channels: ChannelSet,
    pub profile: MaskProfile,
    pub mask: MaskSpec,
    pub idft: IdftGrid,
    pub map: AntennaMap,
    pub constellation: QamConstellation,
    pub symbols: SymbolBatch,
}

impl Scenario {
    /// Channels and symbols both derive from `seed`.
    pub fn new(exp: &ExperimentConfig, seed: u64) -> Result<Self> {
        exp.validate()?;
        let cfg = exp.system.clone();
        let profile = exp.mask.resolve_profile()?;
        let mask = if exp.mask.enforce {
            build_mask(&profile, &cfg, exp.mask.samples_per_side)?
        } else {
            MaskSpec::empty(&cfg)
        };
        let constellation = make_constellation(cfg.qam_order)?;
        Ok(Scenario {
            channels: gen_channels(&cfg, &exp.channel, seed)?,
            idft: build_idft(cfg.n_subcarriers, cfg.oversampling),
            map: AntennaMap::from_config(&cfg)?,
            symbols: draw_symbol_batch(&cfg, &constellation, seed),
            constellation,
            profile,
            mask,
            cfg,
        })
    }

    pub fn problem(&self) -> BcdProblem<'_> {
        BcdProblem {
            cfg: &self.cfg,
            channels: &self.channels,
            mask: &self.mask,
            idft: &self.idft,
            map: &self.map,
            symbols: &self.symbols,
        }
    }

    pub fn run(&self, exp: &ExperimentConfig, bcd: &BcdOptions, init: &BcdInit) -> Result<BcdRun> {
        run_bcd(&self.problem(), bcd, &exp.admm, init)
    }

    /// Average per-subcarrier sum-MSE `J / S`.
    pub fn avg_sum_mse(&self, j: f64) -> f64 {
        j / self.cfg.n_subcarriers as f64
    }

    pub fn emissions(&self, signals: &[CMat], points_per_bin: usize) -> EmissionReport {
        emission_report(&self.cfg, signals, &self.mask, Some(&self.profile), points_per_bin)
    }
}

/// Everything one full run reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub seed: u64,
    pub avg_sum_mse: f64,
    pub mse_per_subcarrier: Vec<f64>,
    /// `ser[s]` at the configured QAM order.
    pub ser: Vec<f64>,
    /// `evm[k][s]`.
    pub evm: Vec<Vec<f64>>,
    pub emissions: EmissionReport,
    pub run: BcdRun,
}

pub fn run_experiment(exp: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let sc = Scenario::new(exp, seed)?;
    let run = sc.run(exp, &exp.bcd, &BcdInit::default())?;
    let signals = run.signals(&sc.map);
    let mse = per_subcarrier_mse(&sc.channels, &signals, &run.rx, &sc.symbols)?;
    let ser = symbol_error_rate(
        &sc.channels,
        &signals,
        &run.rx,
        &sc.symbols,
        &sc.constellation,
        exp.metrics.ser_noise_draws,
        seed,
    );
    let evm = evm(&sc.channels, &signals, &run.rx, &sc.symbols)?;
    let emissions = sc.emissions(&signals, exp.metrics.psd_points_per_bin);
    Ok(RunOutput {
        seed,
        avg_sum_mse: sc.avg_sum_mse(run.final_objective()),
        mse_per_subcarrier: mse,
        ser,
        evm,
        emissions,
        run,
    })
}

fn maybe_par<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub power_dbm: f64,
    pub avg_sum_mse: f64,
    pub oob_dbm: f64,
    pub inband_dbm: f64,
}

/// One run per per-subcarrier power (dBm); channels and symbols are shared.
pub fn sweep_power(exp: &ExperimentConfig, powers_dbm: &[f64], seed: u64, parallel: bool) -> Result<Vec<SweepPoint>> {
    if powers_dbm.is_empty() {
        return Err(Error::config("powers_dbm", "must not be empty"));
    }
    let base = Scenario::new(exp, seed)?;
    maybe_par(powers_dbm, parallel, |p| {
        let mut sc = base.clone();
        sc.cfg.power_budget_per_subcarrier = PowerBudget::Uniform(dbm_to_watts(*p));
        sc.cfg.validate()?;
        let run = sc.run(exp, &exp.bcd, &BcdInit::default())?;
        let e = sc.emissions(&run.signals(&sc.map), exp.metrics.psd_points_per_bin);
        Ok(SweepPoint {
            power_dbm: *p,
            avg_sum_mse: sc.avg_sum_mse(run.final_objective()),
            oob_dbm: e.oob_dbm,
            inband_dbm: e.inband_dbm,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskPoint {
    pub mask_id: usize,
    pub oob_dbm: f64,
    pub inband_dbm: f64,
    pub avg_sum_mse: f64,
    pub worst_mask_margin_db: f64,
}

/// One run per standard mask profile at fixed power.
pub fn sweep_mask(exp: &ExperimentConfig, ids: &[usize], seed: u64, parallel: bool) -> Result<Vec<MaskPoint>> {
    if ids.is_empty() {
        return Err(Error::config("mask ids", "must not be empty"));
    }
    maybe_par(ids, parallel, |id| {
        let mut e = exp.clone();
        e.mask.id = *id;
        e.mask.profile = None;
        e.mask.enforce = true;
        let sc = Scenario::new(&e, seed)?;
        let run = sc.run(&e, &e.bcd, &BcdInit::default())?;
        let em = sc.emissions(&run.signals(&sc.map), e.metrics.psd_points_per_bin);
        Ok(MaskPoint {
            mask_id: *id,
            oob_dbm: em.oob_dbm,
            inband_dbm: em.inband_dbm,
            avg_sum_mse: sc.avg_sum_mse(run.final_objective()),
            worst_mask_margin_db: em.worst_mask_margin_db,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub method: String,
    pub avg_sum_mse: f64,
    pub oob_dbm: f64,
    pub inband_dbm: f64,
    pub worst_mask_margin_db: f64,
}

/// Relative ridge of the least-squares notch when `A_n A_n^H` is singular.
pub const NOTCH_RIDGE: f64 = 1e-3;

/// Proposed method, ZF, MRT, notched ZF and MRT, and random phase shifters
/// with the transmit/receive RF stages frozen.
pub fn compare_baselines(exp: &ExperimentConfig, seed: u64) -> Result<Vec<BaselineRow>> {
    let sc = Scenario::new(exp, seed)?;
    let mut rows = Vec::new();
    let ppb = exp.metrics.psd_points_per_bin;
    let mut push = |method: &str, j: f64, signals: &[CMat]| {
        let e = sc.emissions(signals, ppb);
        rows.push(BaselineRow {
            method: method.into(),
            avg_sum_mse: sc.avg_sum_mse(j),
            oob_dbm: e.oob_dbm,
            inband_dbm: e.inband_dbm,
            worst_mask_margin_db: e.worst_mask_margin_db,
        });
    };

    let run = sc.run(exp, &exp.bcd, &BcdInit::default())?;
    push("proposed", run.final_objective(), &run.signals(&sc.map));

    let notch = (!sc.mask.is_empty()).then_some((&sc.mask.a_n, NOTCH_RIDGE));
    for (name, kind, n) in [
        ("zf", LinearPrecoder::Zf, None),
        ("mrt", LinearPrecoder::Mrt, None),
        ("zf_notch", LinearPrecoder::Zf, notch),
        ("mrt_notch", LinearPrecoder::Mrt, notch),
    ] {
        let signals = baseline_signals(&sc.cfg, &sc.channels, &sc.symbols, &sc.map, kind, n)?;
        let j = mmse_objective(&sc, &signals, exp.bcd.connectivity)?;
        push(name, j, &signals);
    }

    let rx0 = RxState::initial(&sc.cfg, exp.bcd.connectivity);
    let (v, u) = random_phases(&sc.cfg, &rx0, seed);
    let opts = BcdOptions {
        optimize_tx_rf: false,
        optimize_rx_rf: false,
        ..exp.bcd
    };
    let rand_run = sc.run(
        exp,
        &opts,
        &BcdInit {
            v_ps: Some(v),
            u_rf: Some(u),
        },
    )?;
    push("random_ps", rand_run.final_objective(), &rand_run.signals(&sc.map));
    Ok(rows)
}

/// Batch objective with the initial analog combiners and MMSE digital
/// combiners fitted to the given signals.
pub fn mmse_objective(sc: &Scenario, signals: &[CMat], conn: crate::combiner::Connectivity) -> Result<f64> {
    let mut rx = RxState::initial(&sc.cfg, conn);
    let stats = rx_stats(&sc.channels, signals, &sc.symbols.symbols)?;
    rx.u_dig = mmse_digital_combiner(&stats, &rx.u_rf)?;
    evaluate_objective(&sc.channels, signals, &rx, &sc.symbols)
}

/// Average of `J` over `n_draws` Gaussian phase-error draws (std `sigma`
/// radians) on every transmit phase shifter and every analog-combiner
/// entry; digital stages stay fixed. Draw `d` uses the same random numbers
/// for every run it is applied to.
pub fn phase_error_objective(sc: &Scenario, run: &BcdRun, sigma: f64, n_draws: usize, seed: u64) -> Result<f64> {
    if sigma == 0.0 || n_draws == 0 {
        return evaluate_objective(&sc.channels, &run.signals(&sc.map), &run.rx, &sc.symbols);
    }
    let mut acc = 0.0;
    for d in 0..n_draws {
        let mut rng = substream(seed, stream::PHASE_ERRORS + d as u64);
        let signals: Vec<CMat> = run
            .realizations
            .iter()
            .map(|r| {
                let v = r.v_ps.map(|z| z * cis(normal(&mut rng, sigma)));
                crate::rf::antenna_signal(&v, &r.tx.t, &sc.map)
            })
            .collect();
        let mut rx = run.rx.clone();
        for (u, sup) in rx.u_rf.iter_mut().zip(&run.rx.support) {
            for &(a, m) in sup {
                u[(a, m)] *= cis(normal(&mut rng, sigma));
            }
        }
        acc += evaluate_objective(&sc.channels, &signals, &rx, &sc.symbols)?;
    }
    Ok(acc / n_draws as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustRow {
    pub sigma_e_deg: f64,
    pub mse_nominal: f64,
    pub mse_robust: f64,
}

/// Nominal-rule and robust-rule designs evaluated under the same random
/// phase errors, as average per-subcarrier sum-MSE.
pub fn robust_eval(exp: &ExperimentConfig, sigmas_deg: &[f64], seed: u64, parallel: bool) -> Result<Vec<RobustRow>> {
    if sigmas_deg.is_empty() {
        return Err(Error::config("sigma_e_deg", "must not be empty"));
    }
    let sc = Scenario::new(exp, seed)?;
    let nominal_opts = BcdOptions {
        robust_sigma_e_rad: 0.0,
        ..exp.bcd
    };
    let nominal = sc.run(exp, &nominal_opts, &BcdInit::default())?;
    let draws = exp.metrics.phase_error_draws;
    maybe_par(sigmas_deg, parallel, |deg| {
        let sigma = deg.to_radians();
        let robust_opts = BcdOptions {
            robust_sigma_e_rad: sigma,
            ..exp.bcd
        };
        let robust = if sigma == 0.0 {
            nominal.clone()
        } else {
            sc.run(exp, &robust_opts, &BcdInit::default())?
        };
        Ok(RobustRow {
            sigma_e_deg: *deg,
            mse_nominal: sc.avg_sum_mse(phase_error_objective(&sc, &nominal, sigma, draws, seed)?),
            mse_robust: sc.avg_sum_mse(phase_error_objective(&sc, &robust, sigma, draws, seed)?),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SerCurve {
    pub qam_order: u32,
    pub ser: Vec<f64>,
}

/// Per-subcarrier SER for each QAM order on the same channels; the design
/// is rerun per order because the symbols differ.
pub fn ser_by_order(exp: &ExperimentConfig, orders: &[u32], seed: u64) -> Result<Vec<SerCurve>> {
    orders
        .iter()
        .map(|q| {
            let mut e = exp.clone();
            e.system.qam_order = *q;
            let sc = Scenario::new(&e, seed)?;
            let run = sc.run(&e, &e.bcd, &BcdInit::default())?;
            let ser = symbol_error_rate(
                &sc.channels,
                &run.signals(&sc.map),
                &run.rx,
                &sc.symbols,
                &sc.constellation,
                e.metrics.ser_noise_draws,
                seed,
            );
            Ok(SerCurve { qam_order: *q, ser })
        })
        .collect()
}

/// Median of a non-empty slice.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Deterministic seed list `base, base+1, ...`.
pub fn seed_list(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}
