//! Variational-inequality cross-check for deterministic obstacle runs:
//! with `U = Φ_n(u)`, `V = Φ_n(v)` and `Ψ = ∫Φ_n`,
//!
//! `⟨⟨∂_t u, (V - U)φ̃⟩⟩ + ∫∫ ∇U·∇[(V - U)φ̃] ≥ 0` for every admissible
//! `v ≥ ψ`, where `⟨⟨∂_t u, (V - U)φ̃⟩⟩ = ∫∫ ∂_tφ̃ [Ψ(u) - uV] - φ̃ u ∂_tV
//! + φ̃(0) ∫ [Ψ(ξ) - ξ V(0)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_difference, periodic_offset, Field};
use crate::model::{DiffusionFunction, SmoothedNonlinearity};
use crate::solver::Trajectory;

/// Registered admissible comparison functions, all with analytic `∂_t v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComparisonFunction {
    /// `ψ + lift`.
    ObstacleLift { lift: f64 },
    /// `ψ + lift + height (1 - |x-c|²/w²)₊³`.
    ObstacleBump { lift: f64, height: f64, width: f64, center: [f64; 2] },
    Constant { value: f64 },
    /// `max(u(t_record), max_t ψ) + lift`, frozen in time; the last record by
    /// default.
    FrozenState {
        #[serde(default)]
        record: Option<usize>,
        lift: f64,
    },
}

impl ComparisonFunction {
    /// The time-independent profile of a `FrozenState`.
    fn frozen(&self, traj: &Trajectory) -> Result<Option<Field>> {
        let ComparisonFunction::FrozenState { record, lift } = *self else {
            return Ok(None);
        };
        let grid = traj.grid();
        let r = record.unwrap_or(traj.len() - 1);
        let state = traj
            .states
            .get(r)
            .ok_or_else(|| Error::Config(format!("record {r} out of range ({} records)", traj.len())))?;
        let mut top = state.values().to_vec();
        for k in 0..traj.len() {
            for (c, &p) in top.iter_mut().zip(traj.obstacle_at(k).values()) {
                *c = c.max(p);
            }
        }
        Ok(Some(Field::from_values(grid, top.into_iter().map(|c| c + lift).collect())?))
    }

    /// `v` and `∂_t v` at record `j` of `traj`.
    fn sample(&self, traj: &Trajectory, j: usize, frozen: Option<&Field>) -> Result<(Field, Field)> {
        let grid = traj.grid();
        let dim = grid.dim();
        let t = traj.times[j];
        let ob = &traj.model.obstacle;
        let n = grid.total_points();
        let mut v = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        match *self {
            ComparisonFunction::ObstacleLift { lift } => {
                for x in grid.points() {
                    v.push(ob.value(t, x, dim) + lift);
                    dv.push(ob.time_derivative(t, x, dim));
                }
            }
            ComparisonFunction::ObstacleBump { lift, height, width, center } => {
                for x in grid.points() {
                    let r2: f64 = (0..dim).map(|a| periodic_offset(x[a], center[a]).powi(2)).sum();
                    let bump = (1.0 - r2 / (width * width)).max(0.0).powi(3);
                    v.push(ob.value(t, x, dim) + lift + height * bump);
                    dv.push(ob.time_derivative(t, x, dim));
                }
            }
            ComparisonFunction::Constant { value } => {
                v.resize(n, value);
                dv.resize(n, 0.0);
            }
            ComparisonFunction::FrozenState { .. } => {
                let frozen = frozen.ok_or_else(|| Error::Config("frozen comparison state not prepared".into()))?;
                v = frozen.values().to_vec();
                dv.resize(n, 0.0);
            }
        }
        Ok((Field::from_values(grid, v)?, Field::from_values(grid, dv)?))
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            ComparisonFunction::ObstacleLift { lift } | ComparisonFunction::FrozenState { lift, .. } => lift >= 0.0,
            ComparisonFunction::ObstacleBump { lift, height, width, .. } => lift >= 0.0 && height >= 0.0 && width > 0.0,
            ComparisonFunction::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inadmissible comparison function {self:?}")))
        }
    }
}

/// The five standard comparison functions for `traj`.
pub fn registered_comparisons(traj: &Trajectory) -> Vec<ComparisonFunction> {
    let top = (0..traj.len()).map(|j| traj.obstacle_at(j).max()).fold(f64::NEG_INFINITY, f64::max);
    vec![
        ComparisonFunction::ObstacleLift { lift: 0.05 },
        ComparisonFunction::ObstacleLift { lift: 0.25 },
        ComparisonFunction::ObstacleBump { lift: 0.02, height: 0.3, width: 0.2, center: [0.25, 0.5] },
        ComparisonFunction::Constant { value: top + 0.1 },
        ComparisonFunction::FrozenState { record: None, lift: 0.02 },
    ]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VariationalPairing {
    pub total: f64,
    /// `∫∫ ∂_tφ̃ [Ψ(u) - uV]`.
    pub cutoff: f64,
    /// `-∫∫ φ̃ u ∂_tV`.
    pub source: f64,
    /// `φ̃(0) ∫ [Ψ(ξ) - ξV(0)]`.
    pub initial: f64,
    /// `∫∫ ∇U·∇[(V - U)φ̃]`.
    pub gradient: f64,
}

fn check_inputs(traj: &Trajectory, phi_t: &impl Fn(f64) -> f64) -> Result<SmoothedNonlinearity> {
    if !traj.model.is_deterministic() {
        return Err(Error::Config("the variational inequality applies to deterministic runs only".into()));
    }
    if !traj.model.reaction.is_zero() {
        return Err(Error::Config("the variational inequality is stated for f = 0".into()));
    }
    if traj.len() < 2 {
        return Err(Error::Config("the variational pairing needs at least two records".into()));
    }
    let last = *traj.times.last().unwrap();
    if phi_t(last).abs() > 1e-12 {
        return Err(Error::Config(format!("time cutoff must vanish at T, got {}", phi_t(last))));
    }
    if traj.times.iter().any(|&t| !(phi_t(t) >= 0.0)) {
        return Err(Error::Config("time cutoff must be nonnegative".into()));
    }
    traj.model.smoothed(traj.config.level)
}

/// Discrete pairing for `V_j = Φ_n(v(t_j))`, `∂_tV_j` from `sample`.
fn pairing(
    traj: &Trajectory,
    phi: &SmoothedNonlinearity,
    phi_t: &impl Fn(f64) -> f64,
    mut sample: impl FnMut(usize) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<VariationalPairing> {
    let grid = traj.grid();
    let vol = grid.cell_volume();
    let dim = grid.dim();
    let mut out = VariationalPairing::default();
    let (mut v_now, mut dv_now) = sample(0)?;
    let u0 = traj.states[0].values();
    out.initial = phi_t(traj.times[0]) * vol * u0.iter().zip(&v_now).map(|(&u, &v)| phi.phi_primitive(u) - u * v).sum::<f64>();
    for j in 0..traj.len() - 1 {
        let w = traj.times[j + 1] - traj.times[j];
        let cut = phi_t(traj.times[j]);
        let u = traj.states[j].values();
        out.source -= w * cut * vol * u.iter().zip(&dv_now).map(|(u, dv)| u * dv).sum::<f64>();
        if cut != 0.0 {
            let big_u = traj.states[j].map(|r| phi.phi(r));
            let gap = Field::from_values(grid, v_now.iter().zip(big_u.values()).map(|(v, bu)| (v - bu) * cut).collect())?;
            for axis in 0..dim {
                let (a, b) = (forward_difference(&big_u, axis), forward_difference(&gap, axis));
                out.gradient += w * vol * a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        let (v_next, dv_next) = sample(j + 1)?;
        let d_cut = phi_t(traj.times[j + 1]) - cut;
        let u_next = traj.states[j + 1].values();
        out.cutoff +=
            d_cut * vol * u_next.iter().zip(&v_next).map(|(&u, &v)| phi.phi_primitive(u) - u * v).sum::<f64>();
        v_now = v_next;
        dv_now = dv_next;
    }
    out.total = out.cutoff + out.source + out.initial + out.gradient;
    Ok(out)
}

/// The pairing for an admissible `v`; it should be `≥ -tol`.
pub fn variational_inequality_check(
    traj: &Trajectory,
    v: &ComparisonFunction,
    phi_t: impl Fn(f64) -> f64,
) -> Result<VariationalPairing> {
    let phi = check_inputs(traj, &phi_t)?;
    v.check()?;
    let frozen = v.frozen(traj)?;
    pairing(traj, &phi, &phi_t, |j| {
        let (vf, dvf) = v.sample(traj, j, frozen.as_ref())?;
        let psi = traj.obstacle_at(j);
        if let Some(p) = vf.values().iter().zip(psi.values()).position(|(a, b)| a < b) {
            return Err(Error::Config(format!(
                "comparison function {v:?} lies below the obstacle at record {j}, cell {p}"
            )));
        }
        let big_v = vf.values().iter().map(|&r| phi.phi(r)).collect();
        let d_big_v = vf.values().iter().zip(dvf.values()).map(|(&r, &d)| phi.phi_prime(r) * d).collect();
        Ok((big_v, d_big_v))
    })
}

/// The pairing with `v = u` itself (discrete `∂_tΦ_n(u)` by forward
/// differences); its magnitude measures the discretization error and sets
/// the tolerance of [`variational_inequality_check`].
pub fn variational_self_test(traj: &Trajectory, phi_t: impl Fn(f64) -> f64) -> Result<VariationalPairing> {
    let phi = check_inputs(traj, &phi_t)?;
    let big = |j: usize| traj.states[j].values().iter().map(|&r| phi.phi(r)).collect::<Vec<f64>>();
    let last = traj.len() - 1;
    pairing(traj, &phi, &phi_t, |j| {
        let now = big(j);
        let rate = if j < last {
            let w = traj.times[j + 1] - traj.times[j];
            big(j + 1).iter().zip(&now).map(|(b, a)| (b - a) / w).collect()
        } else {
            vec![0.0; now.len()]
        };
        Ok((now, rate))
    })
}
