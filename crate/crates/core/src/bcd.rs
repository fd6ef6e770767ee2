//! Outer block-coordinate descent: digital combiners, per-realization
//! transmit ADMM, per-realization phase shifters, analog combiners.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{
    admm_solve, build_effective_channels, constraint_ratios, feasibility_scale, matched_filter_init,
    recover_digital_precoders, AdmmOptions, AdmmProblem, AdmmReport, TxState,
};
use crate::channel::ChannelSet;
use crate::combiner::{
    analog_combiner_sweep, mmse_digital_combiner, rx_stats, stats_objective, Connectivity, RxState,
};
use crate::linalg::{CMat, CVec, C64};
use crate::model::{AntennaMap, SymbolBatch, SystemConfig};
use crate::rf::{antenna_signal, build_ps_problem, ps_coordinate_sweep};
use crate::spectral::{IdftGrid, MaskSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdOptions {
    pub max_outer: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    /// Phase-error standard deviation the robust rules design for (radians);
    /// zero selects the nominal rules.
    pub robust_sigma_e_rad: f64,
    pub ps_sweeps: usize,
    pub combiner_sweeps: usize,
    pub optimize_tx_rf: bool,
    pub optimize_rx_rf: bool,
    pub connectivity: Connectivity,
    /// Keep the previous feasible `T` when the new one raises the
    /// realization's objective.
    pub safeguard: bool,
    pub parallel: bool,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            max_outer: 50,
            tol: 1e-5,
            robust_sigma_e_rad: 0.0,
            ps_sweeps: 5,
            combiner_sweeps: 5,
            optimize_tx_rf: true,
            optimize_rx_rf: true,
            connectivity: Connectivity::Full,
            safeguard: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tol,
    MaxIters,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationState {
    pub tx: TxState,
    pub v_ps: CVec,
    /// `precoders[s][k]`: `N_RF x n_k` digital precoders.
    pub precoders: Vec<Vec<CMat>>,
    pub admm: AdmmReport,
}

impl RealizationState {
    /// `V_RF T`, the antenna-domain frequency symbols (`N_t x S`).
    pub fn signal(&self, map: &AntennaMap) -> CMat {
        antenna_signal(&self.v_ps, &self.tx.t, map)
    }
}

/// Change norms of each block within one cycle.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BlockDeltas {
    pub digital_combiner: f64,
    pub transmit: f64,
    pub phase_shifters: f64,
    pub analog_combiner: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CycleDiagnostics {
    pub admm_iterations_max: usize,
    pub admm_all_converged: bool,
    pub admm_worst_rel_residual: f64,
    pub min_feasibility_scale: f64,
    /// Realizations whose new `T` was rejected by the safeguard.
    pub t_rejections: usize,
    pub max_ps_increase: f64,
    pub max_combiner_increase: f64,
    /// Worst `(mask, clip, power)` ratio of measured value to limit.
    pub worst_constraint_ratio: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct BcdRun {
    /// Batch sum-MSE `J` after each completed cycle.
    pub objective_trace: Vec<f64>,
    /// `J` at the feasibility-scaled matched-filter start.
    pub initial_objective: f64,
    pub realizations: Vec<RealizationState>,
    pub rx: RxState,
    pub stop_reason: StopReason,
    pub per_block_deltas: Vec<BlockDeltas>,
    pub diagnostics: Vec<CycleDiagnostics>,
}

impl BcdRun {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(self.initial_objective)
    }

    pub fn signals(&self, map: &AntennaMap) -> Vec<CMat> {
        self.realizations.iter().map(|r| r.signal(map)).collect()
    }
}

/// Everything one BCD run reads but never modifies.
#[derive(Debug, Clone, Copy)]
pub struct BcdProblem<'a> {
    pub cfg: &'a SystemConfig,
    pub channels: &'a ChannelSet,
    pub mask: &'a MaskSpec,
    pub idft: &'a IdftGrid,
    pub map: &'a AntennaMap,
    pub symbols: &'a SymbolBatch,
}

/// Optional non-default starting point for the RF stages.
#[derive(Debug, Clone, Default)]
pub struct BcdInit {
    pub v_ps: Option<Vec<CVec>>,
    pub u_rf: Option<Vec<CMat>>,
}

/// Batch objective `J = (1/B) Σ_b Σ_{k,s} tr(E_k^s)`.
pub fn evaluate_objective(
    channels: &ChannelSet,
    signals: &[CMat],
    rx: &RxState,
    symbols: &SymbolBatch,
) -> Result<f64> {
    let stats = rx_stats(channels, signals, &symbols.symbols)?;
    Ok(stats_objective(&stats, rx))
}

fn realization_objective(
    channels: &ChannelSet,
    signal: &CMat,
    rx: &RxState,
    omega: &[Vec<CVec>],
) -> Result<f64> {
    let stats = rx_stats(channels, std::slice::from_ref(signal), &[omega.to_vec()])?;
    Ok(stats_objective(&stats, rx))
}

fn diff_norm(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn maybe_par<T, R, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

struct TStep {
    state: RealizationState,
    rejected: bool,
    ratios: (f64, f64, f64),
}

#[allow(clippy::too_many_arguments)]
fn transmit_step(
    pb: &BcdProblem,
    admm_opts: &AdmmOptions,
    rx: &RxState,
    real: &RealizationState,
    omega: &[Vec<CVec>],
    previous_feasible: bool,
    safeguard: bool,
) -> Result<TStep> {
    let b_eff = build_effective_channels(pb.channels, &real.v_ps, rx, pb.map);
    let prob = AdmmProblem::new(pb.cfg, &b_eff, omega, pb.mask, pb.idft, pb.map);
    let (tx, report) = admm_solve(&prob, Some(&real.tx), admm_opts)?;
    if !report.converged {
        debug!(
            "ADMM stopped after {} iterations (relative residual {:.2e})",
            report.iterations, report.final_rel_residual
        );
    }
    let mut next = RealizationState {
        tx,
        v_ps: real.v_ps.clone(),
        precoders: vec![],
        admm: report,
    };
    let mut rejected = false;
    if safeguard && previous_feasible {
        let old = realization_objective(pb.channels, &real.signal(pb.map), rx, omega)?;
        let new = realization_objective(pb.channels, &next.signal(pb.map), rx, omega)?;
        if new > old {
            next.tx.t = real.tx.t.clone();
            rejected = true;
        }
    }
    let ratios = constraint_ratios(&next.tx.t, &prob);
    Ok(TStep {
        state: next,
        rejected,
        ratios,
    })
}

fn recover_all(t: &CMat, omega: &[Vec<CVec>]) -> Result<Vec<Vec<CMat>>> {
    (0..t.ncols())
        .map(|s| {
            let om: Vec<CVec> = omega.iter().map(|wk| wk[s].clone()).collect();
            recover_digital_precoders(&t.column(s).into_owned(), &om)
        })
        .collect()
}

/// Runs the cyclic block updates until the relative decrease of `J` drops
/// below `opts.tol` or `opts.max_outer` cycles have run.
pub fn run_bcd(
    pb: &BcdProblem,
    opts: &BcdOptions,
    admm_opts: &AdmmOptions,
    init: &BcdInit,
) -> Result<BcdRun> {
    let cfg = pb.cfg;
    let n_b = pb.symbols.batch_size();
    if n_b == 0 {
        return Err(Error::config("batch_size", "empty symbol batch"));
    }
    let sigma = opts.robust_sigma_e_rad;

    // Starting point: unit phases, selector digital combiners, matched filter.
    let mut rx = RxState::initial(cfg, opts.connectivity);
    if let Some(u) = &init.u_rf {
        rx.u_rf = u.clone();
    }
    let ones = CVec::from_element(cfg.n_tx_antennas, C64::from(1.0));
    let mut reals: Vec<RealizationState> = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let v_ps = init
            .v_ps
            .as_ref()
            .map(|v| v[b].clone())
            .unwrap_or_else(|| ones.clone());
        let omega = pb.symbols.realization(b);
        let b_eff = build_effective_channels(pb.channels, &v_ps, &rx, pb.map);
        let prob = AdmmProblem::new(cfg, &b_eff, omega, pb.mask, pb.idft, pb.map);
        let mut tx = TxState::zeros(
            cfg.n_tx_antennas,
            cfg.n_rf_chains_tx,
            cfg.n_subcarriers,
            pb.idft.len(),
            pb.mask.len(),
        );
        let mf = matched_filter_init(&prob);
        let c = feasibility_scale(&mf, &prob);
        tx.t = mf * C64::from(c);
        reals.push(RealizationState {
            tx,
            v_ps,
            precoders: vec![],
            admm: AdmmReport::default(),
        });
    }
    let signals: Vec<CMat> = reals.iter().map(|r| r.signal(pb.map)).collect();
    let stats = rx_stats(pb.channels, &signals, &pb.symbols.symbols)?;
    rx.u_dig = mmse_digital_combiner(&stats, &rx.u_rf)?;
    let initial_objective = stats_objective(&stats, &rx);

    let mut trace = Vec::new();
    let mut deltas = Vec::new();
    let mut diags = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut feasible = false;

    for cycle in 0..opts.max_outer {
        let mut delta = BlockDeltas::default();
        let mut diag = CycleDiagnostics {
            admm_all_converged: true,
            min_feasibility_scale: 1.0,
            ..Default::default()
        };

        // (1) digital combiners
        let signals: Vec<CMat> = reals.iter().map(|r| r.signal(pb.map)).collect();
        let stats = rx_stats(pb.channels, &signals, &pb.symbols.symbols)?;
        let new_dig = mmse_digital_combiner(&stats, &rx.u_rf)?;
        delta.digital_combiner = rx
            .u_dig
            .iter()
            .zip(&new_dig)
            .map(|(a, b)| diff_norm(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        rx.u_dig = new_dig;

        // (2) transmit ADMM per realization
        let prev_t: Vec<CMat> = reals.iter().map(|r| r.tx.t.clone()).collect();
        let items: Vec<(usize, RealizationState)> = reals.into_iter().enumerate().collect();
        let steps: Vec<Result<TStep>> = maybe_par(items, opts.parallel, |(b, real)| {
            transmit_step(
                pb,
                admm_opts,
                &rx,
                &real,
                pb.symbols.realization(b),
                feasible,
                opts.safeguard,
            )
        });
        reals = Vec::with_capacity(n_b);
        for step in steps {
            let step = step?;
            let rep = &step.state.admm;
            diag.admm_iterations_max = diag.admm_iterations_max.max(rep.iterations);
            diag.admm_all_converged &= rep.converged;
            diag.admm_worst_rel_residual = diag.admm_worst_rel_residual.max(rep.final_rel_residual);
            diag.min_feasibility_scale = diag.min_feasibility_scale.min(rep.feasibility_scale);
            diag.t_rejections += step.rejected as usize;
            let (m, c, p) = step.ratios;
            diag.worst_constraint_ratio[0] = diag.worst_constraint_ratio[0].max(m);
            diag.worst_constraint_ratio[1] = diag.worst_constraint_ratio[1].max(c);
            diag.worst_constraint_ratio[2] = diag.worst_constraint_ratio[2].max(p);
            reals.push(step.state);
        }
        feasible = true;
        let new_t: Vec<CMat> = reals.iter().map(|r| r.tx.t.clone()).collect();
        delta.transmit = diff_norm(&prev_t, &new_t);
        if !diag.admm_all_converged {
            warn!(
                "cycle {cycle}: ADMM hit the iteration cap (worst relative residual {:.2e})",
                diag.admm_worst_rel_residual
            );
        }

        // (3) phase shifters per realization
        if opts.optimize_tx_rf {
            let rx_ref = &rx;
            let items: Vec<(usize, RealizationState)> = reals.into_iter().enumerate().collect();
            let out: Vec<Result<(RealizationState, f64, f64)>> = maybe_par(items, opts.parallel, |(b, mut real)| {
                let problem = build_ps_problem(
                    pb.channels,
                    &real.tx.t,
                    rx_ref,
                    pb.symbols.realization(b),
                    pb.map,
                    sigma,
                )?;
                let sweep = ps_coordinate_sweep(&problem, &real.v_ps, opts.ps_sweeps);
                let change = (&sweep.v - &real.v_ps).norm();
                real.v_ps = sweep.v;
                Ok((real, change, sweep.max_increase))
            });
            reals = Vec::with_capacity(n_b);
            let mut sq = 0.0;
            for r in out {
                let (real, change, inc) = r?;
                sq += change * change;
                diag.max_ps_increase = diag.max_ps_increase.max(inc);
                reals.push(real);
            }
            delta.phase_shifters = sq.sqrt();
        }

        // (4) analog combiners per user
        if opts.optimize_rx_rf {
            let signals: Vec<CMat> = reals.iter().map(|r| r.signal(pb.map)).collect();
            let stats = rx_stats(pb.channels, &signals, &pb.symbols.symbols)?;
            let mut sq = 0.0;
            for k in 0..cfg.n_users {
                let sweep = analog_combiner_sweep(&stats, k, &rx, sigma, opts.combiner_sweeps);
                sq += (&sweep.u_rf - &rx.u_rf[k]).norm_squared();
                diag.max_combiner_increase = diag.max_combiner_increase.max(sweep.max_increase);
                rx.u_rf[k] = sweep.u_rf;
            }
            delta.analog_combiner = sq.sqrt();
        }

        let signals: Vec<CMat> = reals.iter().map(|r| r.signal(pb.map)).collect();
        let j = evaluate_objective(pb.channels, &signals, &rx, pb.symbols)?;
        debug!("cycle {cycle}: J = {j:.6e}");
        let prev = trace.last().copied();
        trace.push(j);
        deltas.push(delta);
        diags.push(diag);
        if let Some(prev) = prev {
            if (prev - j) / prev.abs().max(f64::MIN_POSITIVE) < opts.tol {
                stop = StopReason::Tol;
                break;
            }
        }
    }

    for (b, real) in reals.iter_mut().enumerate() {
        real.precoders = recover_all(&real.tx.t, pb.symbols.realization(b))?;
    }
    Ok(BcdRun {
        objective_trace: trace,
        initial_objective,
        realizations: reals,
        rx,
        stop_reason: stop,
        per_block_deltas: deltas,
        diagnostics: diags,
    })
}
