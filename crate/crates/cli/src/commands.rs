//! The `run`, `sweep`, `replay` and `validate-config` verbs.

use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use obstacle_core::diagnostics::{entropy_residual, DiagnosticsReport, Entropy, EntropyTestPack};
use obstacle_core::solver::{compensation_measure, Trajectory};
use rayon::prelude::*;

use crate::artifact::{output_dir, stored_trajectories, write_atomic, write_with_header, Provenance, Table};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::experiments::{execute, trajectory_scalars, Context};

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub strict: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub out: PathBuf,
    pub report: DiagnosticsReport,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.report.all_passed()
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

pub fn load_config(path: &Path, opts: &Options) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

/// Executes `cfg` into `out` and writes the artifact.
pub fn run_config(cfg: &ExperimentConfig, out: &Path, workers: Option<usize>) -> Result<RunResult> {
    let start = Instant::now();
    let hash = cfg.hash();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_with_header(&out.join("config.toml"), &hash, &cfg.to_toml()?)?;
    let ctx = Context::new(out, &hash);
    let pool = pool(workers)?;
    let outcome = pool.install(|| execute(cfg, &ctx))?;
    let mut summary = Vec::new();
    outcome.report.write_csv(&mut summary)?;
    write_atomic(&out.join("summary.csv"), &summary)?;
    write_atomic(&out.join("diagnostics.json"), outcome.report.to_json()?.as_bytes())?;
    for table in &outcome.tables {
        write_atomic(&out.join(format!("{}.csv", table.name)), table.to_csv(&hash).as_bytes())?;
    }
    let provenance = Provenance {
        config_hash: hash,
        seed: cfg.experiment.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        workers: pool.current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        members_resumed: ctx.resumed.load(Ordering::Relaxed),
    };
    write_atomic(&out.join("provenance.json"), serde_json::to_string_pretty(&provenance)?.as_bytes())?;
    Ok(RunResult { out: out.to_path_buf(), report: outcome.report })
}

pub fn run(config: &Path, opts: &Options) -> Result<RunResult> {
    let cfg = load_config(config, opts)?;
    let out = output_dir(opts.out.as_deref(), cfg.experiment.output_dir.as_deref(), &cfg.hash());
    run_config(&cfg, &out, opts.workers)
}

/// One run per value of `axis` under `out/sweep_NNN`, plus `aggregate.csv`.
pub fn sweep(config: &Path, axis: &str, values: &[f64], opts: &Options) -> Result<Vec<RunResult>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let base = load_config(config, opts)?;
    let hash = base.hash();
    let out = output_dir(opts.out.as_deref(), base.experiment.output_dir.as_deref(), &hash);
    let configs = values.iter().map(|&v| base.with_value(axis, v)).collect::<Result<Vec<_>>>()?;
    let pool = pool(opts.workers)?;
    let results = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| run_config(cfg, &out.join(format!("sweep_{i:03}")), opts.workers))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut names: Vec<String> = Vec::new();
    for r in &results {
        for e in &r.report.entries {
            if !names.contains(&e.name) {
                names.push(e.name.clone());
            }
        }
    }
    let with_slope = names.iter().any(|n| n == "violation_l2");
    let mut header = vec!["value".to_string()];
    header.extend(names.iter().cloned());
    if with_slope {
        header.push("violation_l2_slope".into());
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new("aggregate", &header_refs);
    let mut prev: Option<(f64, f64)> = None;
    for (v, r) in values.iter().zip(&results) {
        let mut row = vec![*v];
        row.extend(names.iter().map(|n| r.report.value(n).unwrap_or(f64::NAN)));
        if with_slope {
            let viol = r.report.value("violation_l2").unwrap_or(f64::NAN);
            row.push(match prev {
                Some((pv, pviol)) => (viol / pviol).ln() / (v / pv).ln(),
                None => f64::NAN,
            });
            prev = Some((*v, viol));
        }
        table.push(row);
    }
    write_atomic(&out.join("aggregate.csv"), table.to_csv(&hash).as_bytes())?;
    Ok(results)
}

/// Recomputes trajectory diagnostics from a finished artifact directory.
pub fn replay(dir: &Path, opts: &Options) -> Result<RunResult> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let hash = cfg.hash();
    let stored = stored_trajectories(dir)?;
    if stored.is_empty() {
        bail!("{} holds no stored trajectories (set experiment.save_trajectories)", dir.display());
    }
    let mass_tol = cfg.diagnostics.tolerances.mass_defect.resolve(|| 1e-12);
    let pool = pool(opts.workers)?;
    let reports = pool.install(|| {
        stored
            .par_iter()
            .map(|path| -> Result<DiagnosticsReport> {
                let (traj, tag) = Trajectory::load(path)?;
                if tag != hash {
                    bail!("{} was written by configuration {tag}, not {hash}", path.display());
                }
                replay_one(&traj, &cfg, mass_tol)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = DiagnosticsReport { config_hash: hash, entries: Vec::new() };
    for (path, r) in stored.iter().zip(&reports) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        report.extend(&format!("{name}."), r);
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let out = opts.out.clone().unwrap_or_else(|| dir.to_path_buf());
    write_atomic(&out.join("replay_summary.csv"), &csv)?;
    Ok(RunResult { out, report })
}

fn replay_one(traj: &Trajectory, cfg: &ExperimentConfig, mass_tol: f64) -> Result<DiagnosticsReport> {
    let mut r = DiagnosticsReport::default();
    for (name, value) in trajectory_scalars(traj)? {
        if name == "relative_mass_defect" {
            r.push_upper(&name, value, mass_tol);
        } else {
            r.push(&name, value);
        }
    }
    if cfg.experiment.kind == ExperimentKind::EntropySuite {
        let d = &cfg.diagnostics;
        let nu = compensation_measure(traj);
        let cut = d.cutoff(traj.config.final_time);
        let total = |eta| -> Result<f64> {
            Ok(entropy_residual(traj, &nu, &EntropyTestPack::new(eta, cut, d.test_function()))?.total)
        };
        let (plus, minus) = (total(Entropy::plus())?, total(Entropy::minus())?);
        r.push("entropy.plus", plus);
        r.push("entropy.minus", minus);
        let tol = d.tolerances.entropy.resolve(|| 3.0 * plus.abs().max(minus.abs()));
        for &delta in &d.deltas {
            for &shift in &d.shifts {
                r.push_upper(&format!("entropy.delta={delta}.shift={shift}"), total(Entropy::smoothed(delta, shift))?, tol);
            }
        }
    }
    Ok(r)
}

/// Parses and validates; returns the configuration hash.
pub fn validate_config(config: &Path) -> Result<String> {
    Ok(ExperimentConfig::load(config)?.hash())
}
