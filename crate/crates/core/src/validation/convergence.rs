//! Grid-refinement studies against the Barenblatt profile or a fine-grid
//! reference solution.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::barenblatt::{barenblatt, barenblatt_time_derivative, BarenblattParams};
use crate::error::{Error, Result};
use crate::grid::{laplacian, Field, TorusGrid};
use crate::model::{InitialData, ModelSpec, Obstacle, DiffusionFunction};
use crate::sde_driver::NoisePathSpec;
use crate::solver::{solve, SolverConfig, Trajectory};

/// What the computed final states are compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Oracle {
    /// Exact profile; initial data is the profile at `t = 0`.
    Barenblatt(BarenblattParams),
    /// Run on `points_per_dim`, which every studied grid must divide.
    SelfReference { points_per_dim: usize, initial: InitialData },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub grids: Vec<usize>,
    /// L¹ error of the final state.
    pub errors: Vec<f64>,
    /// `log(e_{i-1}/e_i) / log(N_i/N_{i-1})`; NaN for the first grid and
    /// for repeated resolutions.
    pub rates: Vec<f64>,
    /// Least-squares slope of `-log e` against `log N`.
    pub fitted_order: f64,
    /// Errors strictly decreasing along the list.
    pub monotone: bool,
}

impl ConvergenceStudy {
    fn from_errors(grids: Vec<usize>, errors: Vec<f64>) -> Self {
        let mut rates = vec![f64::NAN; grids.len()];
        for i in 1..grids.len() {
            let ratio = grids[i] as f64 / grids[i - 1] as f64;
            if ratio != 1.0 {
                rates[i] = (errors[i - 1] / errors[i]).ln() / ratio.ln();
            }
        }
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        Self { fitted_order: fitted_order(&grids, &errors), grids, errors, rates, monotone }
    }

    /// `grid,error,rate` table.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "grid,error,rate")?;
        for i in 0..self.grids.len() {
            writeln!(w, "{},{:e},{:e}", self.grids[i], self.errors[i], self.rates[i])?;
        }
        Ok(())
    }
}

fn fitted_order(grids: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = grids.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| -e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return f64::NAN;
    }
    xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

/// `base` with grid `n` and `dt` scaled by `(N_0/N)²`, then shrunk to land
/// on `T` exactly.
fn refined_config(base: &SolverConfig, n: usize) -> Result<SolverConfig> {
    let grid = TorusGrid::new(base.grid.dim(), n)?;
    let scale = (base.grid.points_per_dim() as f64 / n as f64).powi(2);
    let mut cfg = base.clone();
    cfg.grid = grid;
    if base.final_time > 0.0 {
        let steps = (base.final_time / (base.dt * scale) - 1e-9).ceil().max(1.0);
        cfg.dt = base.final_time / steps;
    }
    Ok(cfg)
}

fn run(model: &ModelSpec, cfg: &SolverConfig, ic: &Field) -> Result<Trajectory> {
    let mut cfg = cfg.clone();
    cfg.record_stride = usize::MAX;
    let noise = NoisePathSpec::new(0, 0, cfg.step_count()?, cfg.dt);
    solve(&cfg, model, ic, &noise)
}

/// L¹ errors at `T` on each grid of `grids` (dt ∝ h² from `base`, whose grid
/// sets the reference resolution).
pub fn convergence_study(model: &ModelSpec, base: &SolverConfig, grids: &[usize], oracle: &Oracle) -> Result<ConvergenceStudy> {
    if !model.is_deterministic() {
        return Err(Error::Config("convergence studies need a deterministic model".into()));
    }
    if grids.is_empty() {
        return Err(Error::Config("convergence study needs at least one grid".into()));
    }
    let dim = model.dim;
    let errors: Vec<f64> = match oracle {
        Oracle::Barenblatt(p) => {
            if model.obstacle != Obstacle::Absent || !model.reaction.is_zero() {
                return Err(Error::Config("the Barenblatt oracle needs f = 0 and no obstacle".into()));
            }
            if p.m != model.nonlinearity.m || p.dim != dim {
                return Err(Error::Config(format!(
                    "oracle (m={}, d={}) does not match the model (m={}, d={dim})",
                    p.m, p.dim, model.nonlinearity.m
                )));
            }
            // fails early if the support leaves the period before T
            barenblatt(p.center, base.final_time, p)?;
            grids
                .par_iter()
                .map(|&n| {
                    let cfg = refined_config(base, n)?;
                    let grid = cfg.grid;
                    let sample = |t: f64| -> Result<Field> {
                        let values = grid.points().map(|x| barenblatt(x, t, p)).collect::<Result<Vec<_>>>()?;
                        Field::from_values(grid, values)
                    };
                    let traj = run(model, &cfg, &sample(0.0)?)?;
                    let exact = sample(base.final_time)?;
                    Ok(traj.final_state().zip_map(&exact, |a, b| a - b)?.norm_l1())
                })
                .collect::<Result<_>>()?
        }
        Oracle::SelfReference { points_per_dim, initial } => {
            let reference_n = *points_per_dim;
            if let Some(n) = grids.iter().find(|&&n| n == 0 || reference_n % n != 0) {
                return Err(Error::Config(format!("reference grid {reference_n} is not a multiple of {n}")));
            }
            let m = model.nonlinearity.m;
            let ref_cfg = refined_config(base, reference_n)?;
            let reference = run(model, &ref_cfg, &initial.sample(&ref_cfg.grid, m)?)?.final_state().clone();
            grids
                .par_iter()
                .map(|&n| {
                    let cfg = refined_config(base, n)?;
                    let traj = run(model, &cfg, &initial.sample(&cfg.grid, m)?)?;
                    let grid = cfg.grid;
                    let ratio = reference_n / n;
                    let mut sum = 0.0;
                    for (p, &u) in traj.final_state().values().iter().enumerate() {
                        let mut multi = grid.multi_index(p);
                        for a in multi.iter_mut().take(dim) {
                            *a *= ratio;
                        }
                        sum += (u - reference.values()[reference.grid().flat_index(multi)]).abs();
                    }
                    Ok(sum * grid.cell_volume())
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(ConvergenceStudy::from_errors(grids.to_vec(), errors))
}

/// `max |Δ_h Φ(B) - ∂_t B|` over cells whose distance to the centre is at
/// most `interior` times the support radius.
pub fn barenblatt_drift_residual(
    p: &BarenblattParams,
    phi: &dyn DiffusionFunction,
    grid: &TorusGrid,
    t: f64,
    interior: f64,
) -> Result<f64> {
    let values = grid.points().map(|x| barenblatt(x, t, p)).collect::<Result<Vec<_>>>()?;
    let state = Field::from_values(*grid, values)?;
    let drift = laplacian(&state.map(|u| phi.phi(u)));
    let radius = interior * p.support_radius(t);
    let mut worst = 0.0_f64;
    for (i, x) in grid.points().enumerate() {
        let r2: f64 = (0..p.dim).map(|j| crate::grid::periodic_offset(x[j], p.center[j]).powi(2)).sum();
        if r2.sqrt() <= radius {
            worst = worst.max((drift.values()[i] - barenblatt_time_derivative(x, t, p)?).abs());
        }
    }
    Ok(worst)
}
