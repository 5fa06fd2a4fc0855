//! Refinement drivers in `ε` and `n` with common noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::ModelSpec;
use crate::sde_driver::NoisePathSpec;

/// Evidence that `u_{ε₁} ≤ u_{ε₂}` whenever `ε₁ > ε₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Per consecutive pair, `max (u_{ε_i} - u_{ε_{i+1}})` over recorded space-time points.
    pub max_order_violation: Vec<f64>,
    /// `‖(u_ε - ψ)⁻‖_{L₂(Q_T)}` per schedule entry.
    pub violation_l2: Vec<f64>,
    pub violation_l2_nonincreasing: bool,
}

#[derive(Clone, Debug)]
pub struct EpsilonRefinement {
    pub schedule: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub report: MonotonicityReport,
}

fn check_decreasing(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) || values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{what} must be a nonempty, positive, strictly decreasing list")));
    }
    Ok(())
}

/// `max (a - b)` over all recorded points of two runs on the same time grid.
pub fn max_order_violation(lower: &Trajectory, upper: &Trajectory) -> Result<f64> {
    if lower.times != upper.times {
        return Err(Error::Config("trajectories recorded at different instants".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for (a, b) in lower.states.iter().zip(&upper.states) {
        a.grid().check_same(b.grid())?;
        for (x, y) in a.values().iter().zip(b.values()) {
            worst = worst.max(x - y);
        }
    }
    Ok(worst)
}

/// One solve per `ε` of the strictly decreasing `schedule`, all on `noise`.
pub fn refine_epsilon(
    cfg: &SolverConfig,
    model: &ModelSpec,
    ic: &Field,
    noise: &NoisePathSpec,
    schedule: &[f64],
) -> Result<EpsilonRefinement> {
    check_decreasing(schedule, "epsilon schedule")?;
    let trajectories = schedule
        .par_iter()
        .map(|&eps| solve(&SolverConfig { eps, ..cfg.clone() }, model, ic, noise))
        .collect::<Result<Vec<_>>>()?;
    let max_order_violation = trajectories
        .windows(2)
        .map(|w| max_order_violation(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let violation_l2: Vec<f64> = trajectories.iter().map(Trajectory::violation_l2).collect();
    let violation_l2_nonincreasing = violation_l2.windows(2).all(|w| w[1] <= w[0]);
    Ok(EpsilonRefinement {
        schedule: schedule.to_vec(),
        trajectories,
        report: MonotonicityReport { max_order_violation, violation_l2, violation_l2_nonincreasing },
    })
}

/// Which parameter runs in the inner loop of [`refine_joint`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementOrder {
    /// For each `ε`, refine `n` first (`n → ∞` at fixed `ε`).
    LevelFirst,
    /// For each `n`, refine `ε` first.
    EpsilonFirst,
}

#[derive(Clone, Debug)]
pub struct RefinedRun {
    pub level: u32,
    pub eps: f64,
    pub trajectory: Trajectory,
}

/// Every `(n, ε)` pair, listed in the requested nesting order.
pub fn refine_joint(
    cfg: &SolverConfig,
    model: &ModelSpec,
    ic: &Field,
    noise: &NoisePathSpec,
    levels: &[u32],
    schedule: &[f64],
    order: RefinementOrder,
) -> Result<Vec<RefinedRun>> {
    check_decreasing(schedule, "epsilon schedule")?;
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("level schedule must be nonempty and strictly increasing".into()));
    }
    let pairs: Vec<(u32, f64)> = match order {
        RefinementOrder::LevelFirst => schedule.iter().flat_map(|&e| levels.iter().map(move |&n| (n, e))).collect(),
        RefinementOrder::EpsilonFirst => levels.iter().flat_map(|&n| schedule.iter().map(move |&e| (n, e))).collect(),
    };
    pairs
        .par_iter()
        .map(|&(level, eps)| {
            let trajectory = solve(&SolverConfig { eps, level, ..cfg.clone() }, model, ic, noise)?;
            Ok(RefinedRun { level, eps, trajectory })
        })
        .collect()
}
