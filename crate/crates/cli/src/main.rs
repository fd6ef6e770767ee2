mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use hybridprec::experiments::{
    compare_baselines, robust_eval, run_experiment, sweep_mask, sweep_power, ExperimentConfig, RunOutput, Scenario,
};
use hybridprec::bcd::BcdInit;
use rayon::prelude::*;

use config::{config_hash, parse_list, UsageError};
use output::{num, Meta, Writer};

/// Worst tolerated mask margin (dB) and constraint ratio before a run counts
/// as violating its constraints.
const MARGIN_TOL_DB: f64 = -0.01;
const RATIO_TOL: f64 = 1.0 + 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Run,
    SweepPower,
    SweepMask,
    CompareBaselines,
    RobustEval,
    PsdExport,
    Convergence,
}

/// Spectrally constrained hybrid precoding experiments.
#[derive(Debug, Parser)]
#[command(name = "hybridprec", version)]
struct Args {
    command: Command,
    /// JSON experiment config; the desk configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed list, comma separated.
    #[arg(long, default_value = "1")]
    seed: String,
    /// Config override `section.field=value`; repeatable, applied in order.
    #[arg(long = "set", value_name = "K=V")]
    overrides: Vec<String>,
    /// Fan out across seeds and sweep points.
    #[arg(long)]
    parallel: bool,
    /// Per-subcarrier powers for sweep-power, dBm.
    #[arg(long, default_value = "10,15,20,25,30")]
    powers: String,
    /// Mask profiles for sweep-mask.
    #[arg(long, default_value = "1,2,3,4,5")]
    masks: String,
    /// Phase-error levels for robust-eval, degrees.
    #[arg(long, default_value = "3,6,9")]
    sigmas: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: constraints violated at output");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<hybridprec::Error>(), Some(hybridprec::Error::Config { .. }));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn seeds_map<T: Send>(seeds: &[u64], parallel: bool, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if parallel {
        seeds.par_iter().map(|s| f(*s)).collect()
    } else {
        seeds.iter().map(|s| f(*s)).collect()
    }
}

/// Returns whether every reported design met its constraints.
fn execute(args: &Args) -> Result<bool> {
    let cfg = config::load(args.config.as_deref(), &args.overrides)?;
    let seeds: Vec<u64> = parse_list("seed", &args.seed)?;
    let name = args.command.to_possible_value().expect("named").get_name().to_string();
    let meta = Meta {
        command: name.clone(),
        config_sha256: config_hash(&cfg)?,
        seeds: seeds.clone(),
        version: env!("CARGO_PKG_VERSION"),
        config: serde_json::to_value(&cfg)?,
    };
    let w = Writer::new(&args.out, meta.clone())?;
    w.json("config.json", &cfg)?;
    log::info!("{name}: seeds {seeds:?}, config {}", meta.config_sha256);
    let par = args.parallel;

    match args.command {
        Command::Run | Command::PsdExport => {
            let outs = seeds_map(&seeds, par, |s| Ok(run_experiment(&cfg, s)?))?;
            let mut ok = true;
            for out in &outs {
                let dir = seed_dir(&args.out, &seeds, out.seed);
                let sw = Writer::new(&dir, Meta { seeds: vec![out.seed], ..meta.clone() })?;
                if args.command == Command::Run {
                    write_run(&sw, &cfg, out)?;
                } else {
                    write_psd(&sw, out)?;
                    sw.json("emissions.json", &out.emissions)?;
                }
                ok &= compliant(out);
            }
            Ok(ok)
        }
        Command::Convergence => {
            let runs = seeds_map(&seeds, par, |s| {
                let sc = Scenario::new(&cfg, s)?;
                Ok((s, sc.run(&cfg, &cfg.bcd, &BcdInit::default())?))
            })?;
            let rows = runs.iter().flat_map(|(s, r)| {
                std::iter::once(r.initial_objective)
                    .chain(r.objective_trace.iter().copied())
                    .enumerate()
                    .map(move |(i, j)| vec![s.to_string(), i.to_string(), num(j)])
            });
            w.csv("convergence.csv", &["seed", "cycle", "objective"], rows)?;
            Ok(true)
        }
        Command::SweepPower => {
            let powers: Vec<f64> = parse_list("powers", &args.powers)?;
            let pts = seeds_map(&seeds, par, |s| Ok((s, sweep_power(&cfg, &powers, s, par)?)))?;
            let rows = pts.iter().flat_map(|(s, v)| {
                v.iter()
                    .map(move |p| vec![s.to_string(), num(p.power_dbm), num(p.avg_sum_mse), num(p.oob_dbm), num(p.inband_dbm)])
            });
            w.csv("sweep.csv", &["seed", "power_dbm", "avg_sum_mse", "oob_dbm", "inband_dbm"], rows)?;
            Ok(true)
        }
        Command::SweepMask => {
            let ids: Vec<usize> = parse_list("masks", &args.masks)?;
            let pts = seeds_map(&seeds, par, |s| Ok((s, sweep_mask(&cfg, &ids, s, par)?)))?;
            let ok = pts.iter().flat_map(|(_, v)| v).all(|p| p.worst_mask_margin_db >= MARGIN_TOL_DB);
            let rows = pts.iter().flat_map(|(s, v)| {
                v.iter().map(move |p| {
                    vec![
                        s.to_string(),
                        p.mask_id.to_string(),
                        num(p.oob_dbm),
                        num(p.inband_dbm),
                        num(p.avg_sum_mse),
                        num(p.worst_mask_margin_db),
                    ]
                })
            });
            w.csv(
                "mask_sweep.csv",
                &["seed", "mask_id", "oob_dbm", "inband_dbm", "avg_sum_mse", "worst_mask_margin_db"],
                rows,
            )?;
            Ok(ok)
        }
        Command::CompareBaselines => {
            let all = seeds_map(&seeds, par, |s| Ok((s, compare_baselines(&cfg, s)?)))?;
            let ok = all
                .iter()
                .flat_map(|(_, v)| v)
                .filter(|r| r.method == "proposed")
                .all(|r| r.worst_mask_margin_db >= MARGIN_TOL_DB);
            let rows = all.iter().flat_map(|(s, v)| {
                v.iter().map(move |r| {
                    vec![
                        s.to_string(),
                        r.method.clone(),
                        num(r.avg_sum_mse),
                        num(r.oob_dbm),
                        num(r.inband_dbm),
                        num(r.worst_mask_margin_db),
                    ]
                })
            });
            w.csv(
                "baselines.csv",
                &["seed", "method", "avg_sum_mse", "oob_dbm", "inband_dbm", "worst_mask_margin_db"],
                rows,
            )?;
            Ok(ok)
        }
        Command::RobustEval => {
            let sigmas: Vec<f64> = parse_list("sigmas", &args.sigmas)?;
            let all = seeds_map(&seeds, par, |s| Ok((s, robust_eval(&cfg, &sigmas, s, par)?)))?;
            let rows = all.iter().flat_map(|(s, v)| {
                v.iter()
                    .map(move |r| vec![s.to_string(), num(r.sigma_e_deg), num(r.mse_nominal), num(r.mse_robust)])
            });
            w.csv("robust.csv", &["seed", "sigma_e_deg", "mse_nominal", "mse_robust"], rows)?;
            Ok(true)
        }
    }
}

/// The output directory itself for a single seed, `seed-N` below it otherwise.
fn seed_dir(out: &Path, seeds: &[u64], seed: u64) -> PathBuf {
    if seeds.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed-{seed}"))
    }
}

fn compliant(out: &RunOutput) -> bool {
    let ratios_ok = out
        .run
        .diagnostics
        .last()
        .is_none_or(|d| d.worst_constraint_ratio.iter().all(|r| *r <= RATIO_TOL));
    ratios_ok && out.emissions.worst_mask_margin_db >= MARGIN_TOL_DB
}

fn write_run(w: &Writer, cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    w.json(
        "run.json",
        &serde_json::json!({
            "seed": out.seed,
            "avg_sum_mse": out.avg_sum_mse,
            "config_sha256": w.meta.config_sha256,
            "run": out.run,
        }),
    )?;
    w.csv(
        "mse.csv",
        &["subcarrier", "mse"],
        out.mse_per_subcarrier.iter().enumerate().map(|(s, m)| vec![s.to_string(), num(*m)]),
    )?;
    let q = cfg.system.qam_order.to_string();
    w.csv(
        "ser.csv",
        &["subcarrier", "ser", "qam_order"],
        out.ser.iter().enumerate().map(|(s, v)| vec![s.to_string(), num(*v), q.clone()]),
    )?;
    w.csv(
        "evm.csv",
        &["subcarrier", "user", "evm"],
        out.evm
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(s, v)| vec![s.to_string(), k.to_string(), num(*v)])),
    )?;
    write_psd(w, out)?;
    w.json("emissions.json", &out.emissions)?;
    Ok(())
}

fn write_psd(w: &Writer, out: &RunOutput) -> Result<()> {
    let e = &out.emissions;
    let rows = e.per_antenna_psd.iter().enumerate().flat_map(|(a, psd)| {
        psd.iter().enumerate().map(move |(i, p)| {
            vec![
                num(e.freqs_hz[i]),
                num(*p),
                e.mask_dbm[i].map(num).unwrap_or_default(),
                a.to_string(),
            ]
        })
    });
    w.csv("psd.csv", &["freq_hz", "psd_dbm_100khz", "mask_dbm_100khz", "antenna"], rows)?;
    Ok(())
}
