//! One function per experiment kind. Each returns a diagnostics report and
//! plot-ready tables; ensemble members go through the resumable store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context as _, Result};
use obstacle_core::diagnostics::{
    apriori_monitor, entropy_residual, initial_attainment, l1_stability, mean_stderr, skorohod_defect,
    DiagnosticsReport, Entropy, EntropyTestPack,
};
use obstacle_core::grid::Field;
use obstacle_core::model::ModelSpec;
use obstacle_core::sde_driver::NoisePathSpec;
use obstacle_core::solver::{
    compensation_measure, max_order_violation, refine_joint, solve, RefinementOrder, SolverConfig, Trajectory,
};
use obstacle_core::validation::{
    convergence_study, registered_comparisons, variational_inequality_check, variational_self_test,
};
use rayon::prelude::*;

use crate::artifact::{save_trajectory, MemberRecord, MemberStore, Table};
use crate::config::{ExperimentConfig, ExperimentKind};

/// Where and under which hash a run writes.
pub struct Context {
    pub out: PathBuf,
    pub hash: String,
    pub resumed: AtomicUsize,
}

impl Context {
    pub fn new(out: &Path, hash: &str) -> Self {
        Self { out: out.to_path_buf(), hash: hash.into(), resumed: AtomicUsize::new(0) }
    }

    fn members(&self, count: usize, compute: impl Fn(usize) -> Result<MemberRecord> + Sync) -> Result<Vec<MemberRecord>> {
        let store = MemberStore::new(&self.out, &self.hash);
        (0..count)
            .into_par_iter()
            .map(|i| {
                if let Some(rec) = store.load(i) {
                    self.resumed.fetch_add(1, Ordering::Relaxed);
                    return Ok(rec);
                }
                store.get_or_compute(i, || compute(i))
            })
            .collect()
    }
}

pub struct Outcome {
    pub report: DiagnosticsReport,
    pub tables: Vec<Table>,
}

struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    ctx: &'a Context,
    model: ModelSpec,
    ic: Field,
}

impl Setup<'_> {
    fn noise(&self, solver: &SolverConfig, member: usize) -> Result<NoisePathSpec> {
        let steps = solver.step_count()?;
        Ok(NoisePathSpec::new(self.cfg.experiment.seed, self.model.noise.mode_count(), steps, solver.dt)
            .with_trajectory(member as u64))
    }

    fn run(&self, solver: &SolverConfig, model: &ModelSpec, ic: &Field, member: usize) -> Result<Trajectory> {
        solve(solver, model, ic, &self.noise(solver, member)?).with_context(|| format!("member {member}"))
    }

    fn save(&self, name: &str, traj: &Trajectory) -> Result<()> {
        if self.cfg.experiment.save_trajectories {
            save_trajectory(&self.ctx.out, name, traj, &self.ctx.hash)?;
        }
        Ok(())
    }

    fn mass_scale(&self) -> f64 {
        self.ic.max_abs().max(1.0)
    }
}

/// Scalars shared by every trajectory-producing kind.
pub fn trajectory_scalars(traj: &Trajectory) -> Result<BTreeMap<String, f64>> {
    let nu = compensation_measure(traj);
    let scale = traj.states[0].max_abs().max(1.0);
    let mut s = BTreeMap::new();
    s.insert("steps".into(), *traj.steps.last().unwrap_or(&0) as f64);
    s.insert("final_mean".into(), traj.final_state().mean());
    s.insert("violation_l2".into(), traj.violation_l2());
    s.insert("penalty_mass".into(), nu.total_mass);
    s.insert("skorohod_defect".into(), skorohod_defect(traj, &nu)?);
    s.insert("relative_mass_defect".into(), traj.max_mass_defect() / scale);
    s.insert("min_monotonicity_margin".into(), traj.min_monotonicity_margin());
    for e in apriori_monitor(traj)?.entries {
        s.insert(format!("apriori.{}", e.name), e.value);
    }
    Ok(s)
}

fn push_scalars(report: &mut DiagnosticsReport, scalars: &BTreeMap<String, f64>, mass_tol: f64) {
    for (name, &value) in scalars {
        if name == "relative_mass_defect" {
            report.push_upper(name, value, mass_tol);
        } else {
            report.push(name, value);
        }
    }
}

pub fn execute(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome> {
    let model = cfg.model.spec();
    let solver = cfg.solver.first(model.dim)?;
    let ic = cfg.model.initial.sample(&solver.grid, model.nonlinearity.m)?;
    let setup = Setup { cfg, ctx, model, ic };
    let mut outcome = match cfg.experiment.kind {
        ExperimentKind::Single => single(&setup, &solver),
        ExperimentKind::Ensemble => ensemble(&setup, &solver),
        ExperimentKind::RefineEps => refine(&setup),
        ExperimentKind::StabilityPair => stability(&setup, &solver),
        ExperimentKind::ComparisonPair => comparison(&setup, &solver),
        ExperimentKind::ConvergenceStudy => convergence(&setup, &solver),
        ExperimentKind::EntropySuite => entropy_suite(&setup, &solver),
    }?;
    outcome.report.config_hash = ctx.hash.clone();
    Ok(outcome)
}

fn single(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let traj = s.run(solver, &s.model, &s.ic, 0)?;
    s.save("run", &traj)?;
    let mut report = DiagnosticsReport::default();
    let tol = s.cfg.diagnostics.tolerances.mass_defect.resolve(|| 1e-12);
    push_scalars(&mut report, &trajectory_scalars(&traj)?, tol);
    let mut table = Table::new("records", &["time", "mean", "min", "violation_l2", "penalty_mass"]);
    let hd = traj.grid().cell_volume();
    for j in 0..traj.len() {
        let psi = traj.obstacle_at(j);
        let gap = traj.states[j].zip_map(&psi, |u, p| (p - u).max(0.0))?;
        table.push(vec![
            traj.times[j],
            traj.states[j].mean(),
            traj.states[j].min(),
            gap.norm_l2(),
            hd * traj.penalty_fields[j].values().iter().sum::<f64>(),
        ]);
    }
    Ok(Outcome { report, tables: vec![table] })
}

fn ensemble(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let members = s.ctx.members(s.cfg.experiment.ensemble_size, |i| {
        let traj = s.run(solver, &s.model, &s.ic, i)?;
        s.save(&format!("member_{i:05}"), &traj)?;
        Ok(MemberRecord { scalars: trajectory_scalars(&traj)?, ..Default::default() })
    })?;
    let names: Vec<String> = members[0].scalars.keys().cloned().collect();
    let mut header = vec!["member"];
    header.extend(names.iter().map(String::as_str));
    let mut table = Table::new("members", &header);
    for m in &members {
        let mut row = vec![m.member as f64];
        row.extend(names.iter().map(|n| m.scalars[n]));
        table.push(row);
    }
    let mut report = DiagnosticsReport::default();
    let tol = s.cfg.diagnostics.tolerances.mass_defect.resolve(|| 1e-12);
    report.push("members", members.len() as f64);
    for name in &names {
        let values: Vec<f64> = members.iter().map(|m| m.scalars[name]).collect();
        if name == "relative_mass_defect" {
            report.push_upper("max_relative_mass_defect", values.iter().copied().fold(0.0, f64::max), tol);
        } else {
            let (mean, se) = mean_stderr(&values);
            report.push(&format!("mean.{name}"), mean);
            report.entries.last_mut().unwrap().stderr = Some(se);
        }
    }
    Ok(Outcome { report, tables: vec![table] })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

fn refine(s: &Setup) -> Result<Outcome> {
    let cfg = s.cfg;
    let sched = &cfg.solver.eps;
    if sched.windows(2).any(|w| w[1] >= w[0]) {
        bail!("solver.eps: refine-eps needs a strictly decreasing schedule");
    }
    if cfg.solver.levels.len() > 1 {
        return refine_joint_table(s);
    }
    let dim = s.model.dim;
    let level = cfg.solver.levels[0];
    let tol = &cfg.diagnostics.tolerances;
    let variational = cfg.diagnostics.variational;
    let members = s.ctx.members(cfg.experiment.ensemble_size, |i| {
        let mut rec = MemberRecord::default();
        let mut prev: Option<Trajectory> = None;
        for (k, &eps) in sched.iter().enumerate() {
            let solver = cfg.solver.config(dim, eps, level)?;
            let traj = s.run(&solver, &s.model, &s.ic, i)?;
            let sc = trajectory_scalars(&traj)?;
            for (name, key) in [
                ("violation_l2", "violation_l2"),
                ("skorohod_defect", "skorohod_defect"),
                ("penalty_mass", "penalty_mass"),
                ("relative_mass_defect", "relative_mass_defect"),
            ] {
                rec.series.entry(name.into()).or_default().push(sc[key]);
            }
            let order = match &prev {
                Some(p) => max_order_violation(p, &traj)?,
                None => f64::NAN,
            };
            rec.series.entry("max_order_violation".into()).or_default().push(order);
            if i == 0 {
                s.save(&format!("eps_{k:02}"), &traj)?;
                if variational && k + 1 == sched.len() {
                    variational_scalars(&traj, cfg, &mut rec)?;
                }
            }
            prev = Some(traj);
        }
        Ok(rec)
    })?;

    let count = members.len();
    let mut table = Table::new(
        "refine",
        &["eps", "violation_l2", "violation_l2_stderr", "scaled_violation", "skorohod_defect", "penalty_mass", "max_order_violation"],
    );
    let mean_of = |name: &str, k: usize| -> (f64, f64) {
        let v: Vec<f64> = members.iter().map(|m| m.series[name][k]).collect();
        mean_stderr(&v)
    };
    let mut viol = Vec::new();
    let mut scaled = Vec::new();
    let mut defects = Vec::new();
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_mass = 0.0_f64;
    for (k, &eps) in sched.iter().enumerate() {
        let (v, se) = mean_of("violation_l2", k);
        let (d, _) = mean_of("skorohod_defect", k);
        let (pm, _) = mean_of("penalty_mass", k);
        let order = members.iter().map(|m| m.series["max_order_violation"][k]).fold(f64::NEG_INFINITY, f64::max);
        if k > 0 {
            worst_order = worst_order.max(order);
        }
        worst_mass = members.iter().map(|m| m.series["relative_mass_defect"][k]).fold(worst_mass, f64::max);
        table.push(vec![eps, v, se, v / eps.sqrt(), d, pm, if k == 0 { f64::NAN } else { order }]);
        viol.push(v);
        scaled.push(v / eps.sqrt());
        defects.push(d);
    }
    let mut report = DiagnosticsReport::default();
    report.push("members", count as f64);
    report.push_upper("max_relative_mass_defect", worst_mass, tol.mass_defect.resolve(|| 1e-12));
    if sched.len() > 1 {
        // the scaling is only defined once every run leaves the constraint set
        report.push("runs_with_violation", viol.iter().filter(|&&v| v > 0.0).count() as f64);
        if viol.iter().all(|&v| v > 0.0) {
            let xs: Vec<f64> = sched.iter().map(|e| e.ln()).collect();
            let ys: Vec<f64> = viol.iter().map(|v| v.ln()).collect();
            report.push_lower("penalty_slope", slope(&xs, &ys), tol.penalty_slope.resolve(|| 0.4));
            let spread =
                scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max) / scaled.iter().copied().fold(f64::INFINITY, f64::min);
            report.push_upper("penalty_spread", spread, tol.penalty_spread.resolve(|| 2.0));
        }
        let nonincreasing = defects.windows(2).all(|w| w[1] <= w[0]);
        report.push_lower("skorohod_defect_nonincreasing", nonincreasing as u8 as f64, 1.0);
        report.push_upper("max_order_violation", worst_order, tol.order_violation.resolve(|| 1e-8));
    }
    if let Some(first) = members.first() {
        let tol_value = first.scalars.get("variational.tolerance").copied();
        for (name, &value) in &first.scalars {
            if name.starts_with("variational.v") {
                report.push_lower(name, value, -tol_value.unwrap_or(0.0));
            } else if name.starts_with("variational.") {
                report.push(name, value);
            }
        }
    }
    Ok(Outcome { report, tables: vec![table] })
}

fn variational_scalars(traj: &Trajectory, cfg: &ExperimentConfig, rec: &mut MemberRecord) -> Result<()> {
    let cut = cfg.diagnostics.cutoff(cfg.solver.final_time);
    let phi_t = |t: f64| cut.value(t);
    let self_test = variational_self_test(traj, phi_t)?.total;
    let tol = cfg.diagnostics.tolerances.variational.resolve(|| 5.0 * self_test.abs());
    rec.scalars.insert("variational.self_test".into(), self_test);
    rec.scalars.insert("variational.tolerance".into(), tol);
    for (k, v) in registered_comparisons(traj).iter().enumerate() {
        let value = variational_inequality_check(traj, v, phi_t)?.total;
        rec.scalars.insert(format!("variational.v{k}"), value);
    }
    Ok(())
}

fn refine_joint_table(s: &Setup) -> Result<Outcome> {
    let cfg = s.cfg;
    let solver = cfg.solver.first(s.model.dim)?;
    let order = cfg.experiment.order.unwrap_or(RefinementOrder::LevelFirst);
    let runs = refine_joint(&solver, &s.model, &s.ic, &s.noise(&solver, 0)?, &cfg.solver.levels, &cfg.solver.eps, order)?;
    let mut table = Table::new("refine", &["level", "eps", "violation_l2", "skorohod_defect", "penalty_mass"]);
    let mut report = DiagnosticsReport::default();
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_mass = 0.0_f64;
    for (k, run) in runs.iter().enumerate() {
        let sc = trajectory_scalars(&run.trajectory)?;
        worst_mass = worst_mass.max(sc["relative_mass_defect"]);
        table.push(vec![run.level as f64, run.eps, sc["violation_l2"], sc["skorohod_defect"], sc["penalty_mass"]]);
        s.save(&format!("run_{k:02}"), &run.trajectory)?;
        if let Some(prev) = runs[..k].iter().rev().find(|r| r.level == run.level) {
            worst_order = worst_order.max(max_order_violation(&prev.trajectory, &run.trajectory)?);
        }
    }
    report.push("runs", runs.len() as f64);
    report.push_upper("max_relative_mass_defect", worst_mass, cfg.diagnostics.tolerances.mass_defect.resolve(|| 1e-12));
    if cfg.solver.eps.len() > 1 {
        report.push_upper("max_order_violation", worst_order, cfg.diagnostics.tolerances.order_violation.resolve(|| 1e-8));
    }
    Ok(Outcome { report, tables: vec![table] })
}

fn stability(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let pair = s.cfg.experiment.pair.as_ref().context("experiment.pair: missing")?;
    let (Some(other_ic), None, None) = (pair.initial, pair.reaction, pair.eps) else {
        bail!("experiment.pair: stability pairs differ in the initial data only");
    };
    let other = other_ic.sample(&solver.grid, s.model.nonlinearity.m)?;
    let members = s.ctx.members(s.cfg.experiment.ensemble_size, |i| {
        let a = s.run(solver, &s.model, &s.ic, i)?;
        let b = s.run(solver, &s.model, &other, i)?;
        let st = l1_stability(&[(&a, &b)])?;
        let mut rec = MemberRecord::default();
        rec.series.insert("times".into(), st.times);
        rec.series.insert("distance".into(), st.distances);
        Ok(rec)
    })?;
    let times = &members[0].series["times"];
    let count = members.len() as f64;
    let mean: Vec<f64> = (0..times.len())
        .map(|j| members.iter().map(|m| m.series["distance"][j]).sum::<f64>() / count)
        .collect();
    let sup = mean.iter().copied().fold(0.0, f64::max);
    let ratio = if sup == 0.0 { 0.0 } else { sup / mean[0] };
    let reaction = &s.model.reaction;
    let tol = s.cfg.diagnostics.tolerances.contraction.resolve(|| {
        if reaction.is_zero() && s.model.is_deterministic() {
            1.0 + 1e-6
        } else {
            1.1 * (reaction.lipschitz() * solver.final_time).exp()
        }
    });
    let mut report = DiagnosticsReport::default();
    report.push("members", count);
    report.push("initial_distance", mean[0]);
    report.push_upper("contraction_ratio", ratio, tol);
    let mut table = Table::new("stability", &["time", "distance"]);
    for (t, d) in times.iter().zip(&mean) {
        table.push(vec![*t, *d]);
    }
    Ok(Outcome { report, tables: vec![table] })
}

fn comparison(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let pair = s.cfg.experiment.pair.clone().context("experiment.pair: missing")?;
    let mut upper_model = s.model.clone();
    if let Some(r) = pair.reaction {
        upper_model.reaction = r;
    }
    let mut upper_solver = solver.clone();
    if let Some(eps) = pair.eps {
        upper_solver.eps = eps;
    }
    let upper_ic = match pair.initial {
        Some(d) => d.sample(&solver.grid, s.model.nonlinearity.m)?,
        None => s.ic.clone(),
    };
    let members = s.ctx.members(s.cfg.experiment.ensemble_size, |i| {
        let lower = s.run(solver, &s.model, &s.ic, i)?;
        let upper = s.run(&upper_solver, &upper_model, &upper_ic, i)?;
        let mut rec = MemberRecord::default();
        rec.scalars.insert("max_order_violation".into(), max_order_violation(&lower, &upper)?);
        Ok(rec)
    })?;
    let mut table = Table::new("members", &["member", "max_order_violation"]);
    for m in &members {
        table.push(vec![m.member as f64, m.scalars["max_order_violation"]]);
    }
    let worst = members.iter().map(|m| m.scalars["max_order_violation"]).fold(f64::NEG_INFINITY, f64::max);
    let mut report = DiagnosticsReport::default();
    report.push("members", members.len() as f64);
    report.push_upper("max_order_violation", worst, s.cfg.diagnostics.tolerances.order_violation.resolve(|| 1e-8));
    Ok(Outcome { report, tables: vec![table] })
}

fn convergence(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let study = convergence_study(&s.model, solver, &s.cfg.experiment.grids, &s.cfg.oracle()?)?;
    let mut table = Table::new("convergence", &["grid", "error", "rate"]);
    for i in 0..study.grids.len() {
        table.push(vec![study.grids[i] as f64, study.errors[i], study.rates[i]]);
    }
    let mut report = DiagnosticsReport::default();
    for (n, e) in study.grids.iter().zip(&study.errors) {
        report.push(&format!("error.n={n}"), *e);
    }
    report.push_lower("fitted_order", study.fitted_order, s.cfg.diagnostics.tolerances.convergence_order.resolve(|| 0.5));
    report.push_lower("errors_decreasing", study.monotone as u8 as f64, 1.0);
    Ok(Outcome { report, tables: vec![table] })
}

fn entropy_suite(s: &Setup, solver: &SolverConfig) -> Result<Outcome> {
    let d = &s.cfg.diagnostics;
    let traj = s.run(solver, &s.model, &s.ic, 0)?;
    s.save("run", &traj)?;
    let nu = compensation_measure(&traj);
    let cut = d.cutoff(solver.final_time);
    let space = d.test_function();
    let residual = |eta: Entropy| -> Result<f64> {
        Ok(entropy_residual(&traj, &nu, &EntropyTestPack::new(eta, cut, space.clone()))?.total)
    };
    let mut report = DiagnosticsReport::default();
    let plus = residual(Entropy::plus())?;
    let minus = residual(Entropy::minus())?;
    report.push("entropy.plus", plus);
    report.push("entropy.minus", minus);
    let tol = d.tolerances.entropy.resolve(|| 3.0 * plus.abs().max(minus.abs()));
    let mut table = Table::new("entropy", &["delta", "shift", "residual", "tolerance"]);
    for &delta in &d.deltas {
        for &shift in &d.shifts {
            let r = residual(Entropy::smoothed(delta, shift))?;
            report.push_upper(&format!("entropy.delta={delta}.shift={shift}"), r, tol);
            table.push(vec![delta, shift, r, tol]);
        }
    }
    let taus = d.taus(solver.final_time);
    let a = initial_attainment(&traj, &s.ic, &taus)?;
    let mut attain = Table::new("attainment", &["tau", "value"]);
    for (t, v) in taus.iter().zip(&a) {
        report.push(&format!("attainment.tau={t}"), *v);
        attain.push(vec![*t, *v]);
    }
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&i, &j| taus[j].total_cmp(&taus[i]));
    let decreasing = order.windows(2).all(|w| a[w[1]] < a[w[0]]);
    report.push_lower("attainment_decreasing", decreasing as u8 as f64, 1.0);
    if let (Some(&big), Some(&small)) = (order.first(), order.last()) {
        let ratio = if a[big] == 0.0 { 0.0 } else { a[small] / a[big] };
        report.push_upper("attainment_ratio", ratio, d.tolerances.attainment_ratio.resolve(|| 0.25));
    }
    let defect = skorohod_defect(&traj, &nu)?;
    let energy = traj.violation_l2_squared() / solver.eps;
    report.push("skorohod_defect", defect);
    report.push_upper("skorohod_identity", (defect - energy).abs() / energy.max(f64::MIN_POSITIVE), 1e-10);
    report.push_upper(
        "relative_mass_defect",
        traj.max_mass_defect() / s.mass_scale(),
        d.tolerances.mass_defect.resolve(|| 1e-12),
    );
    Ok(Outcome { report, tables: vec![table, attain] })
}
