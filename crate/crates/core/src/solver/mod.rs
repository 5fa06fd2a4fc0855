//! Euler–Maruyama integration of the penalized Itô equation
//! `du = [ΔΦ_n(u) + ∂_i(a^{ij}∂_j u + b^i) + f + P_ε(u, ψ)] dt + ∇·σ^k(x,u) dW^k`.
//!
//! The drift and noise are explicit; the penalty is solved exactly and
//! pointwise, `u = (u* + λψ)/(1 + λ)` with `λ = dt/ε` wherever `u* < ψ`. All
//! spatial terms are in divergence form on the torus, so mass changes only
//! through `f` and the penalty.

mod measure;
mod persist;
mod refine;
mod semi_implicit;

use serde::{Deserialize, Serialize};

pub use measure::{compensation_measure, CompensationMeasure};
pub use refine::{
    max_order_violation, refine_epsilon, refine_joint, EpsilonRefinement, MonotonicityReport, RefinedRun, RefinementOrder,
};

use crate::error::{Error, Result};
use crate::grid::{Field, Point, TorusGrid};
use crate::model::{DiffusionFunction, ModelSpec, NoiseSamples, Response, SmoothedNonlinearity};
use crate::sde_driver::NoisePathSpec;
use semi_implicit::LinearizedDiffusion;

/// Relative slack allowed when checking that the steps land on `T`.
const STEP_ROUNDING: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fully explicit drift; the reference scheme, monotone under its CFL limit.
    #[default]
    ExplicitEm,
    /// `ΔΦ_n(u)` linearized about the current state and solved implicitly.
    SemiImplicitDiffusion,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    #[serde(rename = "T")]
    pub final_time: f64,
    pub dt: f64,
    pub eps: f64,
    pub level: u32,
    pub cfl_safety: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub record_stride: usize,
    /// `|u|` range over which `Φ_n'` is bounded for the CFL check; when
    /// absent it is taken from the initial data and obstacle.
    #[serde(default)]
    pub state_bound: Option<f64>,
}

impl SolverConfig {
    pub fn new(grid: TorusGrid, final_time: f64, dt: f64, eps: f64, level: u32) -> Self {
        Self {
            grid,
            final_time,
            dt,
            eps,
            level,
            cfl_safety: 0.9,
            scheme: Scheme::ExplicitEm,
            record_stride: 1,
            state_bound: None,
        }
    }

    /// Number of steps; errors unless they land on `T`.
    pub fn step_count(&self) -> Result<usize> {
        if self.final_time == 0.0 {
            return Ok(0);
        }
        let ratio = self.final_time / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > STEP_ROUNDING * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "T = {} is not an integer multiple of dt = {}",
                self.final_time, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return bad(format!("final time must be >= 0, got {}", self.final_time));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.level == 0 {
            return bad("level n must be >= 1".into());
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1), got {}", self.cfl_safety));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        if let Some(b) = self.state_bound {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("state_bound must be positive, got {b}"));
            }
        }
        self.step_count().map(|_| ())
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Per-step bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `mean(u_new) - mean(u_old) - dt·mean(f + ν)`.
    pub mass_defect: f64,
    /// `max (u* - ψ)⁻` before the penalty solve.
    pub violation_before: f64,
    /// `max (u_new - ψ)⁻` after it.
    pub violation_after: f64,
    /// Smallest coefficient of the explicit update viewed as a function of
    /// the old state; nonnegative means the step was monotone.
    pub monotonicity_margin: f64,
    pub max_phi_prime: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: Field,
    /// `ν = ε⁻¹(u_new - ψ)⁻`, equal to the applied penalty increment over dt.
    pub penalty: Field,
    pub record: StepRecord,
}

/// Exact pointwise solution of `u = u* + (dt/ε)(ψ - u)⁺`.
#[inline]
pub fn implicit_penalty(u_star: f64, psi: f64, dt: f64, eps: f64) -> f64 {
    if u_star < psi {
        let lam = dt / eps;
        (u_star + lam * psi) / (1.0 + lam)
    } else {
        u_star
    }
}

/// A configured discretization of one model.
#[derive(Clone, Debug)]
pub struct Solver {
    cfg: SolverConfig,
    model: ModelSpec,
    phi: SmoothedNonlinearity,
    samples: NoiseSamples,
    responses: Vec<Response>,
    points: Vec<Point>,
    /// `[+e0, -e0, +e1, -e1]` neighbours of each cell.
    nbr: Vec<[usize; 4]>,
    static_obstacle: Option<Vec<f64>>,
    implicit: Option<LinearizedDiffusion>,
}

#[derive(Default)]
struct Work {
    phi: Vec<f64>,
    dphi: Vec<f64>,
    flux: Vec<[f64; 2]>,
    flux_slope: Vec<[f64; 2]>,
    a_diag: Vec<[f64; 2]>,
    incr: Vec<f64>,
    reaction: Vec<f64>,
}

impl Solver {
    pub fn new(cfg: SolverConfig, model: ModelSpec) -> Result<Self> {
        cfg.check()?;
        model.check()?;
        if cfg.grid.dim() != model.dim {
            return Err(Error::Config(format!(
                "grid dimension {} differs from model dimension {}",
                cfg.grid.dim(),
                model.dim
            )));
        }
        let grid = cfg.grid;
        let phi = model.smoothed(cfg.level)?;
        let samples = model.noise.sample(&grid);
        let responses = model.noise.modes.iter().map(|m| m.response).collect();
        let points: Vec<Point> = grid.points().collect();
        let nbr = (0..grid.total_points())
            .map(|p| {
                let mut n = [p; 4];
                for axis in 0..grid.dim() {
                    n[2 * axis] = grid.shift(p, axis, 1);
                    n[2 * axis + 1] = grid.shift(p, axis, -1);
                }
                n
            })
            .collect();
        let static_obstacle = model
            .obstacle
            .is_time_independent()
            .then(|| model.obstacle.sample(&grid, 0.0).into_values());
        let implicit = match cfg.scheme {
            Scheme::ExplicitEm => None,
            Scheme::SemiImplicitDiffusion => Some(LinearizedDiffusion::new(grid)),
        };
        let solver = Self { cfg, model, phi, samples, responses, points, nbr, static_obstacle, implicit };
        if let Some(bound) = solver.cfg.state_bound {
            solver.check_cfl(bound)?;
        }
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn nonlinearity(&self) -> &SmoothedNonlinearity {
        &self.phi
    }

    /// `cfl_safety · h² / (2d max Φ_n' + d max a)` over `|r| ≤ radius`.
    pub fn cfl_limit(&self, radius: f64) -> f64 {
        let h = self.cfg.grid.spacing();
        let d = self.cfg.grid.dim() as f64;
        let a = self.model.noise.diffusion_bound(radius);
        let diffusion = match self.cfg.scheme {
            Scheme::ExplicitEm => 2.0 * d * self.phi.phi_prime_bound(radius),
            Scheme::SemiImplicitDiffusion => 0.0,
        };
        let rate = diffusion + d * a;
        if rate > 0.0 {
            self.cfg.cfl_safety * h * h / rate
        } else {
            f64::INFINITY
        }
    }

    pub fn check_cfl(&self, radius: f64) -> Result<()> {
        let limit = self.cfl_limit(radius);
        if self.cfg.dt > limit {
            return Err(Error::Cfl { step: 0, dt: self.cfg.dt, limit });
        }
        Ok(())
    }

    pub fn obstacle(&self, t: f64) -> Field {
        match &self.static_obstacle {
            Some(v) => Field::from_values(self.cfg.grid, v.clone()).expect("grid-sized"),
            None => self.model.obstacle.sample(&self.cfg.grid, t),
        }
    }

    /// `ξ_n = (-n) ∨ (ξ ∧ n)`.
    pub fn truncate(&self, ic: &Field) -> Field {
        ic.map(|v| self.phi.truncate(v))
    }

    fn work(&self) -> Work {
        let n = self.cfg.grid.total_points();
        Work {
            phi: vec![0.0; n],
            dphi: vec![0.0; n],
            flux: vec![[0.0; 2]; n],
            flux_slope: vec![[0.0; 2]; n],
            a_diag: vec![[0.0; 2]; n],
            incr: vec![0.0; n],
            reaction: vec![0.0; n],
        }
    }

    /// One step from `u` at `t = step·dt` with increments `dw`.
    pub fn step(&self, u: &Field, step: usize, dw: &[f64]) -> Result<StepOutput> {
        self.cfg.grid.check_same(u.grid())?;
        if dw.len() != self.samples.mode_count {
            return Err(Error::Config(format!(
                "{} increments supplied for {} noise modes",
                dw.len(),
                self.samples.mode_count
            )));
        }
        let mut work = self.work();
        let psi = self.obstacle(self.cfg.time(step + 1));
        self.advance(u.values(), step, dw, psi.values(), &mut work)
    }

    /// Explicit drift plus noise increment into `work.incr`; returns
    /// `(max Φ_n', monotonicity margin, max trace a)`.
    fn explicit_increment(&self, u: &[f64], t: f64, dw: &[f64], work: &mut Work) -> (f64, f64, f64) {
        let grid = &self.cfg.grid;
        let dim = grid.dim();
        let dt = self.cfg.dt;
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let mut max_dphi = 0.0_f64;
        for (p, &v) in u.iter().enumerate() {
            work.phi[p] = self.phi.phi(v);
            work.dphi[p] = self.phi.phi_prime(v);
            max_dphi = max_dphi.max(work.dphi[p]);
            work.reaction[p] = self.model.reaction.value(t, self.points[p], v, dim);
        }
        let mut max_a = 0.0_f64;
        let noisy = self.samples.mode_count > 0;
        if noisy {
            for p in 0..u.len() {
                let n = &self.nbr[p];
                let mut grad = [0.0; 2];
                for i in 0..dim {
                    grad[i] = (u[n[2 * i]] - u[n[2 * i + 1]]) * inv_2h;
                }
                let mut f = [0.0; 2];
                let mut slope = [0.0; 2];
                let mut a_diag = [0.0; 2];
                for (k, ms) in self.samples.cell(p).iter().enumerate() {
                    let [s, ds, dds, _] = self.responses[k].derivatives(u[p]);
                    let tg: f64 = (0..dim).map(|j| ms.t[j] * grad[j]).sum();
                    for i in 0..dim {
                        // a^{ij}∂_j u + b^i, then the noise flux
                        f[i] += dt * (0.5 * ds * ds * ms.t[i] * tg + 0.5 * ds * s * ms.t[i] * ms.div)
                            + s * ms.t[i] * dw[k];
                        slope[i] += ds * ms.t[i] * dw[k] + dt * 0.5 * (ds * ds + s * dds) * ms.t[i] * ms.div;
                        a_diag[i] += 0.5 * ds * ds * ms.t[i] * ms.t[i];
                    }
                }
                work.flux[p] = f;
                work.flux_slope[p] = slope;
                work.a_diag[p] = a_diag;
                max_a = max_a.max(a_diag[0] + a_diag[1]);
            }
        }
        let lip = self.model.reaction.lipschitz();
        let mut margin = f64::INFINITY;
        for p in 0..u.len() {
            let n = &self.nbr[p];
            let mut lap = 0.0;
            let mut div = 0.0;
            let mut center = 1.0 - dt * lip;
            for i in 0..dim {
                let (fwd, bwd) = (n[2 * i], n[2 * i + 1]);
                lap += (work.phi[fwd] - 2.0 * work.phi[p] + work.phi[bwd]) * inv_h2;
                center -= dt * 2.0 * work.dphi[p] * inv_h2;
                if noisy {
                    div += (work.flux[fwd][i] - work.flux[bwd][i]) * inv_2h;
                    center -= dt * 0.25 * (work.a_diag[fwd][i] + work.a_diag[bwd][i]) * inv_h2;
                    let off = dt * work.dphi[p] * inv_h2 - work.flux_slope[p][i].abs() * inv_2h;
                    margin = margin.min(off);
                }
            }
            margin = margin.min(center);
            work.incr[p] = dt * (lap + work.reaction[p]) + div;
        }
        (max_dphi, margin, max_a)
    }

    fn advance(&self, u: &[f64], step: usize, dw: &[f64], psi: &[f64], work: &mut Work) -> Result<StepOutput> {
        let grid = self.cfg.grid;
        let dt = self.cfg.dt;
        let eps = self.cfg.eps;
        let t = self.cfg.time(step);
        let (max_dphi, mut margin, max_a) = self.explicit_increment(u, t, dw, work);
        let h2 = grid.spacing().powi(2);
        let d = grid.dim() as f64;
        match &self.implicit {
            None => {
                let limit = h2 / (2.0 * d * max_dphi + d * max_a);
                if dt > limit * (1.0 + 1e-12) {
                    return Err(Error::Cfl { step, dt, limit });
                }
            }
            Some(lin) => {
                if max_a > 0.0 && dt > h2 / (d * max_a) {
                    return Err(Error::Cfl { step, dt, limit: h2 / (d * max_a) });
                }
                lin.solve(&work.dphi, dt, &mut work.incr)?;
                // the implicit part is monotone; only the explicit remainder counts
                margin = margin.max(0.0);
            }
        }
        let n = u.len();
        let mut next = Vec::with_capacity(n);
        let mut nu = Vec::with_capacity(n);
        let (mut before, mut after) = (0.0_f64, 0.0_f64);
        let (mut sum_old, mut sum_new, mut sum_force) = (0.0, 0.0, 0.0);
        for p in 0..n {
            let u_star = u[p] + work.incr[p];
            let un = implicit_penalty(u_star, psi[p], dt, eps);
            if !un.is_finite() {
                return Err(Error::NonFinite { step, cell: p, value: un });
            }
            let v = (psi[p] - un).max(0.0) / eps;
            before = before.max(psi[p] - u_star);
            after = after.max(psi[p] - un);
            sum_old += u[p];
            sum_new += un;
            sum_force += work.reaction[p] + v;
            next.push(un);
            nu.push(v);
        }
        let inv_n = 1.0 / n as f64;
        let record = StepRecord {
            step,
            mass_defect: (sum_new - sum_old) * inv_n - dt * sum_force * inv_n,
            violation_before: before.max(0.0),
            violation_after: after.max(0.0),
            monotonicity_margin: margin,
            max_phi_prime: max_dphi,
        };
        Ok(StepOutput {
            state: Field::from_values(grid, next)?,
            penalty: Field::from_values(grid, nu)?,
            record,
        })
    }

    /// Integrates from `ic` (the untruncated `ξ`) to `T`.
    pub fn solve(&self, ic: &Field, noise: &NoisePathSpec) -> Result<Trajectory> {
        let grid = self.cfg.grid;
        grid.check_same(ic.grid())?;
        let steps = self.cfg.step_count()?;
        let modes = self.samples.mode_count;
        if noise.mode_count != modes {
            return Err(Error::Config(format!(
                "noise path has {} modes, model has {modes}",
                noise.mode_count
            )));
        }
        if modes > 0 {
            noise.check()?;
            if noise.step_count < steps || (noise.dt - self.cfg.dt).abs() > 1e-12 * self.cfg.dt {
                return Err(Error::Config(format!(
                    "noise path ({} steps of {}) does not cover {steps} steps of {}",
                    noise.step_count, noise.dt, self.cfg.dt
                )));
            }
        }
        let psi0 = self.obstacle(0.0);
        for (p, (&x, &o)) in ic.values().iter().zip(psi0.values()).enumerate() {
            if !x.is_finite() {
                return Err(Error::Config(format!("initial data not finite at cell {p}")));
            }
            if x < o {
                return Err(Error::InitialBelowObstacle { cell: p, value: x, obstacle: o });
            }
        }
        let xi_n = self.truncate(ic);
        if self.cfg.state_bound.is_none() && steps > 0 {
            let mut radius = xi_n.max_abs();
            if !matches!(self.model.obstacle, crate::model::Obstacle::Absent) {
                for j in [0, steps / 2, steps] {
                    radius = radius.max(self.obstacle(self.cfg.time(j)).max_abs());
                }
            }
            self.check_cfl(radius.min(self.cfg.level as f64).max(1e-3))?;
        }

        let mut traj = Trajectory {
            config: self.cfg.clone(),
            model: self.model.clone(),
            noise: *noise,
            times: vec![0.0],
            steps: vec![0],
            states: vec![xi_n.clone()],
            penalty_fields: vec![Field::zeros(grid)],
            records: Vec::with_capacity(steps),
        };
        let mut work = self.work();
        let mut dw = vec![0.0; modes];
        let mut u = xi_n;
        for j in 0..steps {
            if modes > 0 {
                noise.step_increments(j, &mut dw);
            }
            let psi_next;
            let psi = match &self.static_obstacle {
                Some(v) => v.as_slice(),
                None => {
                    psi_next = self.model.obstacle.sample(&grid, self.cfg.time(j + 1));
                    psi_next.values()
                }
            };
            let out = self.advance(u.values(), j, &dw, psi, &mut work)?;
            traj.records.push(out.record);
            if (j + 1) % self.cfg.record_stride == 0 || j + 1 == steps {
                traj.times.push(self.cfg.time(j + 1));
                traj.steps.push(j + 1);
                traj.states.push(out.state.clone());
                traj.penalty_fields.push(out.penalty);
            }
            u = out.state;
        }
        Ok(traj)
    }
}

/// Convenience wrapper around [`Solver::new`] and [`Solver::solve`].
pub fn solve(cfg: &SolverConfig, model: &ModelSpec, ic: &Field, noise: &NoisePathSpec) -> Result<Trajectory> {
    Solver::new(cfg.clone(), model.clone())?.solve(ic, noise)
}

/// Recorded output of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub model: ModelSpec,
    pub noise: NoisePathSpec,
    pub times: Vec<f64>,
    /// Step index of each recorded instant.
    pub steps: Vec<usize>,
    pub states: Vec<Field>,
    pub penalty_fields: Vec<Field>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn grid(&self) -> TorusGrid {
        self.config.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn obstacle_at(&self, record: usize) -> Field {
        self.model.obstacle.sample(&self.config.grid, self.times[record])
    }

    /// Time weight of recorded instant `j`: `t_j - t_{j-1}`, zero for `j = 0`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.times[j] - self.times[j - 1]
        }
    }

    /// `‖(u - ψ)⁻‖²_{L₂(Q_T)}` on the recorded instants.
    pub fn violation_l2_squared(&self) -> f64 {
        let hd = self.config.grid.cell_volume();
        let mut total = 0.0;
        for j in 1..self.len() {
            let psi = self.obstacle_at(j);
            let s: f64 = self.states[j]
                .values()
                .iter()
                .zip(psi.values())
                .map(|(u, o)| (o - u).max(0.0).powi(2))
                .sum();
            total += self.weight(j) * hd * s;
        }
        total
    }

    pub fn violation_l2(&self) -> f64 {
        self.violation_l2_squared().sqrt()
    }

    pub fn max_mass_defect(&self) -> f64 {
        self.records.iter().map(|r| r.mass_defect.abs()).fold(0.0, f64::max)
    }

    pub fn min_monotonicity_margin(&self) -> f64 {
        self.records.iter().map(|r| r.monotonicity_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(Field::is_finite)
    }
}
