//! Skorohod defect, a-priori monitors, `L¹` stability and initial attainment.

use serde::{Deserialize, Serialize};

use super::report::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::DiffusionFunction;
use crate::solver::{CompensationMeasure, Trajectory};

/// `|⟨u - ψ, ν⟩|`; equals `ε⁻¹‖(u - ψ)⁻‖²_{L₂(Q_T)}` by construction.
pub fn skorohod_defect(traj: &Trajectory, nu: &CompensationMeasure) -> Result<f64> {
    if nu.grid != traj.grid() || nu.times != traj.times {
        return Err(Error::Config("measure does not belong to this trajectory".into()));
    }
    let mut total = 0.0;
    for (j, row) in nu.atoms.iter().enumerate() {
        if row.iter().all(|a| *a == 0.0) {
            continue;
        }
        let psi = traj.obstacle_at(j);
        for (p, a) in row.iter().enumerate() {
            total += a * (traj.states[j].values()[p] - psi.values()[p]);
        }
    }
    Ok(total.abs())
}

fn forward_gradient_squared(values: &[f64], traj: &Trajectory) -> f64 {
    let grid = traj.grid();
    let inv_h2 = grid.spacing().powi(-2);
    let mut s = 0.0;
    for p in 0..values.len() {
        for axis in 0..grid.dim() {
            let d = values[grid.shift(p, axis, 1)] - values[p];
            s += d * d * inv_h2;
        }
    }
    s
}

/// The quantities bounded uniformly in `n` and `ε` by the a-priori estimate.
/// Space-time integrals use right-point weights on the recorded instants.
pub fn apriori_monitor(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let grid = traj.grid();
    let hd = grid.cell_volume();
    let phi = traj.model.smoothed(traj.config.level)?;
    let m = traj.model.nonlinearity.m;
    let eps = traj.config.eps;
    let mut sup_l2 = 0.0_f64;
    let mut sup_lm = 0.0_f64;
    let (mut grad_sqrt, mut grad_phi, mut energy, mut l1, mut weighted) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..traj.len() {
        let u = traj.states[j].values();
        sup_l2 = sup_l2.max(hd * u.iter().map(|v| v * v).sum::<f64>());
        sup_lm = sup_lm.max(hd * u.iter().map(|v| v.abs().powf(m + 1.0)).sum::<f64>());
        let w = traj.weight(j) * hd;
        if w == 0.0 {
            continue;
        }
        let theta: Vec<f64> = u.iter().map(|v| phi.sqrt_phi_prime_integral(*v)).collect();
        grad_sqrt += w * forward_gradient_squared(&theta, traj);
        let phis: Vec<f64> = u.iter().map(|v| phi.phi(*v)).collect();
        grad_phi += w * forward_gradient_squared(&phis, traj);
        let psi = traj.obstacle_at(j);
        for (p, v) in u.iter().enumerate() {
            let neg = (psi.values()[p] - v).max(0.0);
            energy += w * neg * neg / eps;
            weighted += w * neg * neg * v.abs().powf(m - 1.0) / eps;
        }
        l1 += w * traj.penalty_fields[j].values().iter().sum::<f64>();
    }
    let mut report = DiagnosticsReport::default();
    report.push("sup_l2_squared", sup_l2);
    report.push("grad_sqrt_phi_prime_bracket_l2_squared", grad_sqrt);
    report.push("penalty_energy", energy);
    report.push("penalty_l1", l1);
    report.push("sup_lm1_power", sup_lm);
    report.push("grad_phi_l2_squared", grad_phi);
    report.push("weighted_penalty_energy", weighted);
    report.check_finite()?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Stability {
    pub times: Vec<f64>,
    /// Ensemble mean of `‖u(t) - ũ(t)‖_{L₁}` at each recorded instant.
    pub distances: Vec<f64>,
    pub initial_distance: f64,
    /// `sup_t distance / initial distance`; 0 when both vanish.
    pub ratio: f64,
}

fn l1_distance(a: &Field, b: &Field) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let hd = a.grid().cell_volume();
    Ok(hd * a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `L¹` distance between coupled pairs of runs, averaged over the ensemble.
pub fn l1_stability(pairs: &[(&Trajectory, &Trajectory)]) -> Result<L1Stability> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::Config("no trajectory pairs".into()));
    };
    let times = first.times.clone();
    let mut distances = vec![0.0; times.len()];
    for (a, b) in pairs {
        if !a.noise.is_coupled_with(&b.noise) || a.config != b.config || a.model != b.model {
            return Err(Error::Config("stability pairs must share noise, configuration and model".into()));
        }
        if a.times != times || b.times != times {
            return Err(Error::Config("stability pairs recorded at different instants".into()));
        }
        for (j, d) in distances.iter_mut().enumerate() {
            *d += l1_distance(&a.states[j], &b.states[j])?;
        }
    }
    let count = pairs.len() as f64;
    for d in &mut distances {
        *d /= count;
    }
    let initial_distance = distances[0];
    let sup = distances.iter().copied().fold(0.0, f64::max);
    let ratio = if sup == 0.0 { 0.0 } else { sup / initial_distance };
    Ok(L1Stability { times, distances, initial_distance, ratio })
}

/// `A(τ) = τ⁻¹ Σ_{t_j < τ} (t_{j+1} - t_j) ‖u(t_j) - ξ‖²_{L₂}`.
pub fn initial_attainment(traj: &Trajectory, xi: &Field, taus: &[f64]) -> Result<Vec<f64>> {
    traj.grid().check_same(xi.grid())?;
    let hd = traj.grid().cell_volume();
    let t_end = *traj.times.last().unwrap_or(&0.0);
    let dt = traj.config.dt;
    let dist: Vec<f64> = traj
        .states
        .iter()
        .map(|u| hd * u.values().iter().zip(xi.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .collect();
    taus.iter()
        .map(|&tau| {
            if !(tau >= dt * (1.0 - 1e-9) && tau <= t_end * (1.0 + 1e-9)) {
                return Err(Error::Config(format!("tau = {tau} outside [dt, T]")));
            }
            let mut acc = 0.0;
            for j in 0..traj.len() - 1 {
                if traj.times[j] < tau * (1.0 - 1e-12) {
                    acc += (traj.times[j + 1] - traj.times[j]) * dist[j];
                }
            }
            Ok(acc / tau)
        })
        .collect()
}
