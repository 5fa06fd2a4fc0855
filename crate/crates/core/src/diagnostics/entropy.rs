//! Discrete entropy inequality for a recorded run.
//!
//! For a test function `φ = φ_t(t) ϱ(x) ≥ 0` vanishing at `T` and an entropy
//! `η`, the residual is `LHS - RHS` of
//!
//! ```text
//! -∫η(u)∂_tφ - ∫η'(ψ)φ dν  ≤  ∫η(ξ)φ(0) + ∫⟦Φ'η'⟧Δφ + ∫⟦a^{ij}η'⟧φ_{ij}
//!     + ∫(⟦a^{ij}_{x_j}η' + b^i_r η'⟧ - 2η'b^i)φ_{x_i}
//!     + ∫(-η'b^i_{x_i} + ⟦b^i_{rx_i}η'⟧ + η'f)φ
//!     + ∫(½η''Σ_k|σ^{ik}_{x_i}|² - η''|∇⟦√Φ'⟧|²)φ
//!     + ∫(η'φσ^{ik}_{x_i} - ⟦σ^{ik}_{rx_i}η'⟧φ - ⟦σ^{ik}_r η'⟧φ_{x_i}) dW^k
//! ```
//!
//! with `⟦g⟧(r) = ∫_0^r g`. Time integrals use the recorded instants: the
//! `∂_tφ` term by summation by parts, drift and noise at the left point, the
//! measure at the atom's own instant. Spatial derivatives fall on `φ` and are
//! exact. The dissipation term is taken edgewise as
//! `(Θ(u_{p+e}) - Θ(u_p))²/h²` with `Θ = ⟦√(η''Φ_n')⟧`, which equals
//! `η''|∇⟦√Φ_n'⟧|²` in the continuum and is what the scheme dissipates.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{periodic_offset, Point, MAX_DIM};
use crate::model::{DiffusionFunction, Response};
use crate::mollifier::SmoothedAbs;
use crate::quadrature::{hermite, integrate_adaptive, rule32, rule5};
use crate::solver::{CompensationMeasure, Trajectory};

/// Convex entropy, or one of the two linear limits `±r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Entropy {
    Linear { sign: f64 },
    /// `η_δ(r - shift)`, with `η_δ'' = ρ_δ(|·|)`.
    Smoothed { delta: f64, #[serde(default)] shift: f64 },
}

impl Entropy {
    pub fn plus() -> Self {
        Entropy::Linear { sign: 1.0 }
    }

    pub fn minus() -> Self {
        Entropy::Linear { sign: -1.0 }
    }

    pub fn smoothed(delta: f64, shift: f64) -> Self {
        Entropy::Smoothed { delta, shift }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Entropy::Linear { sign } => sign == 1.0 || sign == -1.0,
            Entropy::Smoothed { delta, shift } => delta > 0.0 && delta.is_finite() && shift.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid entropy {self:?}")))
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Entropy::Linear { sign } => sign * r,
            Entropy::Smoothed { delta, shift } => SmoothedAbs::new(delta).value(r - shift),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Entropy::Linear { sign } => sign,
            Entropy::Smoothed { delta, shift } => SmoothedAbs::new(delta).derivative(r - shift),
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match *self {
            Entropy::Linear { .. } => 0.0,
            Entropy::Smoothed { delta, shift } => SmoothedAbs::new(delta).second_derivative(r - shift),
        }
    }

    /// `∫_0^u g η'`, given the primitive `prim` of `g` with `prim(0) = 0`.
    /// Outside the curvature window `η' = ±1` and the primitive is exact;
    /// inside it Gauss–Legendre is used on each half-window piece.
    pub fn bracket(&self, u: f64, prim: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
        let (delta, shift) = match *self {
            Entropy::Linear { sign } => return sign * prim(u),
            Entropy::Smoothed { delta, shift } => (delta, shift),
        };
        let (lo, hi) = if u >= 0.0 { (0.0, u) } else { (u, 0.0) };
        let mut cuts = [lo, hi, hi, hi, hi];
        let mut n = 1;
        for c in [shift - delta, shift, shift + delta] {
            if c > lo && c < hi {
                cuts[n] = c;
                n += 1;
            }
        }
        cuts[n] = hi;
        let eta = SmoothedAbs::new(delta);
        let mut total = 0.0;
        for w in cuts[..=n].windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            total += if mid <= shift - delta {
                prim(a) - prim(b)
            } else if mid >= shift + delta {
                prim(b) - prim(a)
            } else {
                let f = |s: f64| g(s) * eta.derivative(s - shift);
                integrate_adaptive(a, b, 1e-13, f).unwrap_or_else(|_| rule32().integrate(a, b, f))
            };
        }
        if u >= 0.0 {
            total
        } else {
            -total
        }
    }

    /// `Θ(u) = ∫_0^u √(η'' Φ')`; zero for the linear entropies.
    pub fn dissipation_potential(&self, u: f64, phi: &dyn DiffusionFunction) -> f64 {
        let (delta, shift) = match *self {
            Entropy::Linear { .. } => return 0.0,
            Entropy::Smoothed { delta, shift } => (delta, shift),
        };
        let eta = SmoothedAbs::new(delta);
        let integrand = |s: f64| (eta.second_derivative(s - shift) * phi.phi_prime(s)).sqrt();
        let clamp = |r: f64| r.clamp(shift - delta, shift + delta);
        let (a, b) = (clamp(0.0), clamp(u));
        let half = |x: f64, y: f64| {
            integrate_adaptive(x, y, 1e-13, integrand).unwrap_or_else(|_| rule32().integrate(x, y, integrand))
        };
        // split at the shift where η'' has its (smooth) zero
        if (a - shift) * (b - shift) < 0.0 {
            half(a, shift) + half(shift, b)
        } else {
            half(a, b)
        }
    }
}

/// Cells per curvature window in [`WindowTable`].
const WINDOW_CELLS: usize = 4096;

/// `s ↦ ∫_lo^s f` on `[lo, hi]`, from cumulative adaptive sums and cubic
/// Hermite interpolation with the exact derivative `f`.
struct WindowTable {
    lo: f64,
    hi: f64,
    step: f64,
    cum: Vec<f64>,
    deriv: Vec<f64>,
}

impl WindowTable {
    fn new(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Self {
        let step = (hi - lo) / WINDOW_CELLS as f64;
        let mut cum = vec![0.0; WINDOW_CELLS + 1];
        let deriv = (0..=WINDOW_CELLS).map(|i| f(lo + i as f64 * step)).collect();
        for i in 0..WINDOW_CELLS {
            let a = lo + i as f64 * step;
            let cell = integrate_adaptive(a, a + step, 1e-14, &f)
                .unwrap_or_else(|_| rule5().integrate(a, a + step, &f));
            cum[i + 1] = cum[i] + cell;
        }
        Self { lo, hi, step, cum, deriv }
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= self.lo {
            return 0.0;
        }
        if s >= self.hi {
            return self.cum[WINDOW_CELLS];
        }
        let i = (((s - self.lo) / self.step) as usize).min(WINDOW_CELLS - 1);
        let a = self.lo + i as f64 * self.step;
        hermite(a, a + self.step, self.cum[i], self.cum[i + 1], self.deriv[i], self.deriv[i + 1], s).0
    }
}

/// `u ↦ ∫_0^u g η'` prepared once per entropy and integrand.
enum Bracket<P> {
    Linear { sign: f64, prim: P },
    Window { prim: P, table: WindowTable, origin: f64 },
}

impl<P: Fn(f64) -> f64> Bracket<P> {
    fn new(eta: Entropy, prim: P, g: impl Fn(f64) -> f64) -> Self {
        match eta {
            Entropy::Linear { sign } => Bracket::Linear { sign, prim },
            Entropy::Smoothed { delta, shift } => {
                let abs = SmoothedAbs::new(delta);
                let table = WindowTable::new(shift - delta, shift + delta, |s| g(s) * abs.derivative(s - shift));
                let mut b = Bracket::Window { prim, table, origin: 0.0 };
                let origin = b.antiderivative(0.0);
                if let Bracket::Window { origin: o, .. } = &mut b {
                    *o = origin;
                }
                b
            }
        }
    }

    /// An antiderivative of `g η'` on the whole line.
    fn antiderivative(&self, s: f64) -> f64 {
        match self {
            Bracket::Linear { sign, prim } => sign * prim(s),
            Bracket::Window { prim, table, .. } => {
                if s <= table.lo {
                    prim(table.lo) - prim(s)
                } else if s >= table.hi {
                    table.eval(table.hi) + prim(s) - prim(table.hi)
                } else {
                    table.eval(s)
                }
            }
        }
    }

    fn eval(&self, u: f64) -> f64 {
        match self {
            Bracket::Linear { sign, prim } => sign * prim(u),
            Bracket::Window { origin, .. } => self.antiderivative(u) - origin,
        }
    }
}

/// Tabulated `Θ = ⟦√(η''Φ')⟧`.
struct Potential {
    table: Option<WindowTable>,
    origin: f64,
}

impl Potential {
    fn new(eta: Entropy, phi: &dyn DiffusionFunction) -> Self {
        match eta {
            Entropy::Linear { .. } => Self { table: None, origin: 0.0 },
            Entropy::Smoothed { delta, shift } => {
                let abs = SmoothedAbs::new(delta);
                let table = WindowTable::new(shift - delta, shift + delta, |s| {
                    (abs.second_derivative(s - shift) * phi.phi_prime(s)).sqrt()
                });
                let origin = table.eval(0.0);
                Self { table: Some(table), origin }
            }
        }
    }

    fn eval(&self, u: f64) -> f64 {
        self.table.as_ref().map_or(0.0, |t| t.eval(u) - self.origin)
    }
}

/// Time factor: 1 until `fade_start`, quintic ramp to 0 at `fade_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeCutoff {
    pub fade_start: f64,
    pub fade_end: f64,
}

impl TimeCutoff {
    pub fn new(fade_start: f64, fade_end: f64) -> Self {
        Self { fade_start, fade_end }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.fade_start {
            return 1.0;
        }
        if t >= self.fade_end {
            return 0.0;
        }
        let s = (t - self.fade_start) / (self.fade_end - self.fade_start);
        1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    }
}

/// Value, gradient and Hessian of a spatial profile.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: [f64; MAX_DIM],
    pub hessian: [[f64; MAX_DIM]; MAX_DIM],
}

impl Jet {
    fn add(mut self, o: Jet) -> Jet {
        self.value += o.value;
        for a in 0..MAX_DIM {
            self.gradient[a] += o.gradient[a];
            for b in 0..MAX_DIM {
                self.hessian[a][b] += o.hessian[a][b];
            }
        }
        self
    }

    pub fn laplacian(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.hessian[a][a]).sum()
    }
}

/// Nonnegative smooth spatial weight `ϱ` on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceProfile {
    Constant { value: f64 },
    /// `mean + A cos(2π k·x + phase)`, nonnegative when `mean ≥ |A|`.
    Cosine { mean: f64, amplitude: f64, wave: [i32; 2], #[serde(default)] phase: f64 },
    /// `A exp(κ Σ_j (cos 2π(x_j - c_j) - 1))`.
    VonMises { amplitude: f64, kappa: f64, center: [f64; 2] },
    /// `A (1 - |x - c|²/w²)₊⁴`, compactly supported, `C³`.
    Bump { amplitude: f64, width: f64, center: [f64; 2] },
    Sum { parts: Vec<SpaceProfile> },
}

impl SpaceProfile {
    pub fn jet(&self, x: Point, dim: usize) -> Jet {
        let mut jet = Jet::default();
        match self {
            SpaceProfile::Constant { value } => jet.value = *value,
            SpaceProfile::Cosine { mean, amplitude, wave, phase } => {
                let k: Vec<f64> = (0..dim).map(|j| TAU * wave[j] as f64).collect();
                let arg = phase + (0..dim).map(|j| k[j] * x[j]).sum::<f64>();
                let (s, c) = arg.sin_cos();
                jet.value = mean + amplitude * c;
                for a in 0..dim {
                    jet.gradient[a] = -amplitude * k[a] * s;
                    for b in 0..dim {
                        jet.hessian[a][b] = -amplitude * k[a] * k[b] * c;
                    }
                }
            }
            SpaceProfile::VonMises { amplitude, kappa, center } => {
                let mut e = 0.0;
                let mut d1 = [0.0; MAX_DIM];
                let mut d2 = [0.0; MAX_DIM];
                for j in 0..dim {
                    let (s, c) = (TAU * (x[j] - center[j])).sin_cos();
                    e += c - 1.0;
                    d1[j] = -kappa * TAU * s;
                    d2[j] = -kappa * TAU * TAU * c;
                }
                let v = amplitude * (kappa * e).exp();
                jet.value = v;
                for a in 0..dim {
                    jet.gradient[a] = v * d1[a];
                    for b in 0..dim {
                        jet.hessian[a][b] = v * d1[a] * d1[b] + if a == b { v * d2[a] } else { 0.0 };
                    }
                }
            }
            SpaceProfile::Bump { amplitude, width, center } => {
                let y: Vec<f64> = (0..dim).map(|j| periodic_offset(x[j], center[j])).collect();
                let w2 = width * width;
                let q = 1.0 - y.iter().map(|v| v * v).sum::<f64>() / w2;
                if q > 0.0 {
                    jet.value = amplitude * q.powi(4);
                    for a in 0..dim {
                        // ∂_a q = -2 y_a / w²
                        let qa = -2.0 * y[a] / w2;
                        jet.gradient[a] = amplitude * 4.0 * q.powi(3) * qa;
                        for b in 0..dim {
                            let qb = -2.0 * y[b] / w2;
                            let qab = if a == b { -2.0 / w2 } else { 0.0 };
                            jet.hessian[a][b] = amplitude * (12.0 * q * q * qa * qb + 4.0 * q.powi(3) * qab);
                        }
                    }
                }
            }
            SpaceProfile::Sum { parts } => {
                for p in parts {
                    jet = jet.add(p.jet(x, dim));
                }
            }
        }
        jet
    }
}

/// An entropy and a nonnegative test function `φ = scale · φ_t(t) ϱ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTestPack {
    pub entropy: Entropy,
    pub time_cutoff: TimeCutoff,
    pub space_profile: SpaceProfile,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl EntropyTestPack {
    pub fn new(entropy: Entropy, time_cutoff: TimeCutoff, space_profile: SpaceProfile) -> Self {
        Self { entropy, time_cutoff, space_profile, scale: 1.0 }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self { scale: self.scale * scale, ..self.clone() }
    }

    /// Checks `η` and that `φ ≥ 0` on the run's grid with `φ(T) = 0`.
    pub fn check(&self, traj: &Trajectory) -> Result<()> {
        self.entropy.check()?;
        let grid = traj.grid();
        let t_end = *traj.times.last().unwrap_or(&0.0);
        if !(self.scale > 0.0) || self.time_cutoff.fade_start > self.time_cutoff.fade_end {
            return Err(Error::Config("test function scale must be positive and the cutoff ordered".into()));
        }
        if self.time_cutoff.value(t_end) != 0.0 {
            return Err(Error::Config(format!("time cutoff does not vanish at T = {t_end}")));
        }
        for x in grid.points() {
            if self.space_profile.jet(x, grid.dim()).value < 0.0 {
                return Err(Error::Config(format!("spatial profile negative at {x:?}")));
            }
        }
        Ok(())
    }
}

/// The residual and its pieces (all signed as they enter `LHS - RHS`'s
/// respective side).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyResidual {
    /// `LHS - RHS`; nonpositive when the inequality holds.
    pub total: f64,
    /// `-∫η(u)∂_tφ`.
    pub time: f64,
    /// `∫η'(ψ)φ dν`.
    pub measure: f64,
    /// `∫η(ξ)φ(0)`.
    pub initial: f64,
    /// `∫⟦Φ'η'⟧Δφ`.
    pub diffusion: f64,
    /// All `a`, `b` terms.
    pub ito: f64,
    /// `∫η'fφ`.
    pub reaction: f64,
    /// `½∫η''Σ_k|σ^{ik}_{x_i}|²φ`.
    pub noise_correction: f64,
    /// `-∫η''|∇⟦√Φ'⟧|²φ`.
    pub dissipation: f64,
    /// The `dW` integral.
    pub stochastic: f64,
}

impl EntropyResidual {
    fn add(mut self, o: &EntropyResidual) -> Self {
        self.time += o.time;
        self.measure += o.measure;
        self.initial += o.initial;
        self.diffusion += o.diffusion;
        self.ito += o.ito;
        self.reaction += o.reaction;
        self.noise_correction += o.noise_correction;
        self.dissipation += o.dissipation;
        self.stochastic += o.stochastic;
        self
    }

    fn finish(mut self) -> Self {
        self.total = self.time
            - self.measure
            - (self.initial
                + self.diffusion
                + self.ito
                + self.reaction
                + self.noise_correction
                + self.dissipation
                + self.stochastic);
        self
    }
}

/// Evaluates the entropy residual on a run and its compensation measure.
pub fn entropy_residual(traj: &Trajectory, nu: &CompensationMeasure, pack: &EntropyTestPack) -> Result<EntropyResidual> {
    let grid = traj.grid();
    if nu.grid != grid || nu.times != traj.times {
        return Err(Error::Config("measure does not belong to this trajectory".into()));
    }
    pack.check(traj)?;
    let dim = grid.dim();
    let hd = grid.cell_volume();
    let h = grid.spacing();
    let model = &traj.model;
    let phi_n = model.smoothed(traj.config.level)?;
    let eta = pack.entropy;
    let samples = model.noise.sample(&grid);
    let responses: Vec<Response> = model.noise.modes.iter().map(|m| m.response).collect();
    let kc = responses.len();
    let jets: Vec<Jet> = grid.points().map(|x| pack.space_profile.jet(x, dim)).collect();
    let phi_t = |t: f64| pack.scale * pack.time_cutoff.value(t);

    // Brownian increments between consecutive recorded instants.
    let intervals = traj.len().saturating_sub(1);
    let mut dw = vec![vec![0.0; kc]; intervals];
    if kc > 0 {
        let mut buf = vec![0.0; kc];
        for (j, row) in dw.iter_mut().enumerate() {
            for step in traj.steps[j]..traj.steps[j + 1] {
                traj.noise.step_increments(step, &mut buf);
                for k in 0..kc {
                    row[k] += buf[k];
                }
            }
        }
    }

    let q_phi = Bracket::new(eta, |s| phi_n.phi(s), |s| phi_n.phi_prime(s));
    let potential = Potential::new(eta, &phi_n);
    type Prim = Box<dyn Fn(f64) -> f64 + Send + Sync>;
    let mode_brackets: Vec<[Bracket<Prim>; 3]> = responses
        .iter()
        .map(|&resp| {
            [
                Bracket::new(eta, Box::new(move |z| resp.slope_squared_primitive(z)) as Prim, |z| resp.slope(z).powi(2)),
                Bracket::new(eta, Box::new(move |z| resp.product_primitive(z)) as Prim, |z| {
                    let [s, ds, dds, _] = resp.derivatives(z);
                    ds * ds + s * dds
                }),
                Bracket::new(eta, Box::new(move |z| resp.slope_primitive(z)) as Prim, |z| resp.slope(z)),
            ]
        })
        .collect();

    let per_interval: Vec<EntropyResidual> = (0..intervals)
        .into_par_iter()
        .map(|j| {
            let mut r = EntropyResidual::default();
            let (t0, t1) = (traj.times[j], traj.times[j + 1]);
            let w = t1 - t0;
            let (f0, f1) = (phi_t(t0), phi_t(t1));
            let u = traj.states[j].values();
            let u1 = traj.states[j + 1].values();
            let mut theta = vec![0.0; u.len()];
            let curved = matches!(eta, Entropy::Smoothed { .. });
            for p in 0..u.len() {
                let jet = &jets[p];
                let rho = jet.value;
                r.time -= hd * eta.value(u1[p]) * (f1 - f0) * rho;
                if f0 == 0.0 {
                    continue;
                }
                let x = grid.point(p);
                let v = u[p];
                let d1 = eta.derivative(v);
                let d2 = eta.second_derivative(v);
                let scale = w * hd * f0;
                r.diffusion += scale * q_phi.eval(v) * jet.laplacian(dim);
                r.reaction += scale * d1 * model.reaction.value(t0, x, v, dim) * rho;
                if curved {
                    theta[p] = potential.eval(v);
                }
                let mut ito = 0.0;
                let mut correction = 0.0;
                let mut sto = 0.0;
                for (k, resp) in responses.iter().enumerate() {
                    let ms = samples.get(p, k);
                    let [s, ds, ..] = resp.derivatives(v);
                    let [a_k, b_k, c_k] = [0, 1, 2].map(|i| mode_brackets[k][i].eval(v));
                    let mut tt_hess = 0.0;
                    let mut p_grad = 0.0;
                    let mut t_grad = 0.0;
                    for i in 0..dim {
                        p_grad += ms.p[i] * jet.gradient[i];
                        t_grad += ms.t[i] * jet.gradient[i];
                        for l in 0..dim {
                            tt_hess += ms.t[i] * ms.t[l] * jet.hessian[i][l];
                        }
                    }
                    let ssp = s * ds;
                    ito += 0.5 * a_k * tt_hess + 0.5 * (a_k * p_grad + b_k * ms.div * t_grad)
                        - d1 * ssp * ms.div * t_grad
                        - d1 * 0.5 * ssp * ms.q * rho
                        + 0.5 * b_k * ms.q * rho;
                    correction += 0.5 * d2 * (s * ms.div).powi(2) * rho;
                    sto += dw[j][k] * (d1 * rho * s * ms.div - c_k * ms.div * rho - c_k * t_grad);
                }
                r.ito += scale * ito;
                r.noise_correction += scale * correction;
                r.stochastic += hd * f0 * sto;
            }
            if curved && f0 != 0.0 {
                let inv_h2 = 1.0 / (h * h);
                for p in 0..u.len() {
                    for axis in 0..dim {
                        let q = grid.shift(p, axis, 1);
                        let d = theta[q] - theta[p];
                        let weight = 0.5 * (jets[p].value + jets[q].value);
                        r.dissipation -= w * hd * f0 * d * d * inv_h2 * weight;
                    }
                }
            }
            r
        })
        .collect();

    let mut total = EntropyResidual::default();
    if let Some(u0) = traj.states.first() {
        let f0 = phi_t(traj.times[0]);
        total.initial = hd * u0.values().iter().zip(&jets).map(|(v, jet)| eta.value(*v) * f0 * jet.value).sum::<f64>();
    }
    for r in &per_interval {
        total = total.add(r);
    }
    total.measure = nu.pair_cells(|j, p| {
        let t = traj.times[j];
        eta.derivative(model.obstacle.value(t, grid.point(p), dim)) * phi_t(t) * jets[p].value
    });
    Ok(total.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, TorusGrid};
    use crate::model::{ModelSpec, NoiseMode, NoiseModel, Nonlinearity, Obstacle, Reaction, SpatialProfile};
    use crate::quadrature::integrate_adaptive;
    use crate::sde_driver::NoisePathSpec;
    use crate::solver::{compensation_measure, solve, SolverConfig};

    #[test]
    fn smoothed_entropy_invariants() {
        for delta in [1.0, 0.1, 0.01] {
            let eta = Entropy::smoothed(delta, 0.0);
            assert_eq!(eta.value(0.0), 0.0);
            assert_eq!(eta.derivative(0.0), 0.0);
            let mut max_d2 = 0.0_f64;
            for i in 0..=4000 {
                let r = -2.0 * delta + 4.0 * delta * i as f64 / 4000.0;
                let d2 = eta.second_derivative(r);
                assert!(d2 >= 0.0);
                if r.abs() >= delta {
                    assert_eq!(d2, 0.0);
                }
                max_d2 = max_d2.max(d2);
                assert!((eta.value(r) - r.abs()).abs() <= delta);
            }
            assert!(max_d2 <= 2.0 / delta);
            let mass = integrate_adaptive(-delta, delta, 1e-10, |r| eta.second_derivative(r)).unwrap();
            assert!(mass <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn tabulated_brackets_match_quadrature() {
        let nl = Nonlinearity::new(2.0, 1.0, 1.0).unwrap();
        let phi = crate::model::SmoothedNonlinearity::new(nl, 8).unwrap();
        for eta in [Entropy::smoothed(0.1, 0.7), Entropy::smoothed(1.0, 0.2), Entropy::smoothed(0.3, -0.1)] {
            let b = Bracket::new(eta, |s| phi.phi(s), |s| phi.phi_prime(s));
            let pot = Potential::new(eta, &phi);
            for u in [-1.3_f64, -0.2, 0.0, 0.35, 0.65, 0.7, 0.76, 1.2, 2.5] {
                // split at the window so the reference rule cannot straddle it
                let Entropy::Smoothed { delta, shift } = eta else { unreachable!() };
                let mut cuts = vec![0.0, u];
                cuts.extend([shift - delta, shift, shift + delta].into_iter().filter(|c| *c > u.min(0.0) && *c < u.max(0.0)));
                cuts.sort_by(f64::total_cmp);
                let sign = if u < 0.0 { -1.0 } else { 1.0 };
                let exact = sign
                    * cuts
                        .windows(2)
                        .map(|w| integrate_adaptive(w[0], w[1], 1e-13, |s| phi.phi_prime(s) * eta.derivative(s)).unwrap())
                        .sum::<f64>();
                assert!((b.eval(u) - exact).abs() < 1e-9, "{eta:?} u={u}: {} vs {exact}", b.eval(u));
                assert!((eta.bracket(u, |s| phi.phi(s), |s| phi.phi_prime(s)) - exact).abs() < 1e-9);
                let theta = pot.eval(u);
                let direct = eta.dissipation_potential(u, &phi);
                assert!((theta - direct).abs() < 1e-8, "{eta:?} u={u}: {theta} vs {direct}");
            }
        }
        let lin = Bracket::new(Entropy::minus(), |s| s * s, |s| 2.0 * s);
        assert_eq!(lin.eval(3.0), -9.0);
    }

    #[test]
    fn cutoff_and_profiles() {
        let c = TimeCutoff::new(0.2, 0.5);
        assert_eq!(c.value(0.1), 1.0);
        assert_eq!(c.value(0.5), 0.0);
        assert!((c.value(0.35) - 0.5).abs() < 1e-12);
        let profiles = [
            SpaceProfile::Cosine { mean: 1.0, amplitude: 0.5, wave: [1, 2], phase: 0.2 },
            SpaceProfile::VonMises { amplitude: 2.0, kappa: 1.5, center: [0.3, 0.6] },
            SpaceProfile::Bump { amplitude: 1.0, width: 0.3, center: [0.4, 0.5] },
        ];
        let x = [0.37, 0.58];
        let h = 1e-5;
        for p in &profiles {
            let j = p.jet(x, 2);
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let (jp, jm) = (p.jet(xp, 2), p.jet(xm, 2));
                assert!(((jp.value - jm.value) / (2.0 * h) - j.gradient[a]).abs() < 1e-6, "{p:?}");
                for b in 0..2 {
                    let fd = (jp.gradient[b] - jm.gradient[b]) / (2.0 * h);
                    assert!((fd - j.hessian[a][b]).abs() < 1e-4 * (1.0 + fd.abs()), "{p:?}");
                }
            }
        }
    }

    fn noisy_run() -> Trajectory {
        let grid = TorusGrid::new(1, 32).unwrap();
        let model = ModelSpec {
            dim: 1,
            nonlinearity: Nonlinearity::new(2.0, 1.0, 1.0).unwrap(),
            reaction: Reaction::Sine { amplitude: 0.3, offset: 0.1 },
            obstacle: Obstacle::Cosine { mean: 0.9, amplitude: 0.3, wave: [1, 0], speed: 1.0 },
            noise: NoiseModel {
                modes: vec![NoiseMode {
                    response: Response::Tanh,
                    profile: vec![SpatialProfile::Cosine { amplitude: 0.05, wave: [1, 0], phase: 0.1 }],
                }],
            },
        };
        let cfg = SolverConfig::new(grid, 0.04, 1e-4, 1e-3, 8);
        let ic = Field::from_fn(grid, |x| 1.15 + 0.05 * (TAU * x[0]).cos());
        solve(&cfg, &model, &ic, &NoisePathSpec::new(9, 1, 400, 1e-4)).unwrap()
    }

    #[test]
    fn residual_is_linear_in_the_test_function() {
        let traj = noisy_run();
        let nu = compensation_measure(&traj);
        assert!(nu.total_mass > 0.0);
        let cut = TimeCutoff::new(0.01, 0.04);
        let a = SpaceProfile::Bump { amplitude: 1.0, width: 0.2, center: [0.25, 0.0] };
        let b = SpaceProfile::Bump { amplitude: 2.0, width: 0.2, center: [0.75, 0.0] };
        let sum = SpaceProfile::Sum { parts: vec![a.clone(), b.clone()] };
        for eta in [Entropy::plus(), Entropy::smoothed(0.1, 1.1), Entropy::smoothed(1.0, 0.9)] {
            let base = EntropyTestPack::new(eta, cut, sum.clone());
            let r = entropy_residual(&traj, &nu, &base).unwrap().total;
            let r3 = entropy_residual(&traj, &nu, &base.scaled(3.0)).unwrap().total;
            assert!((r3 - 3.0 * r).abs() <= 1e-12 * r3.abs().max(1e-3), "{eta:?}: {r3} vs {r}");
            let ra = entropy_residual(&traj, &nu, &EntropyTestPack::new(eta, cut, a.clone())).unwrap().total;
            let rb = entropy_residual(&traj, &nu, &EntropyTestPack::new(eta, cut, b.clone())).unwrap().total;
            assert!((ra + rb - r).abs() <= 1e-12 * r.abs().max(1e-3));
        }
    }

    #[test]
    fn linear_entropies_are_opposite() {
        let traj = noisy_run();
        let nu = compensation_measure(&traj);
        let pack = |eta| EntropyTestPack::new(eta, TimeCutoff::new(0.0, 0.04), SpaceProfile::Constant { value: 1.0 });
        let plus = entropy_residual(&traj, &nu, &pack(Entropy::plus())).unwrap();
        let minus = entropy_residual(&traj, &nu, &pack(Entropy::minus())).unwrap();
        assert!((plus.total + minus.total).abs() < 1e-12);
        // with φ ≡ φ_t the weak form of the scheme is exact up to the
        // one-step lag of the measure pairing
        assert!(plus.total.abs() < 1e-2 * plus.measure.abs().max(1e-6), "{plus:?}");
    }

    #[test]
    fn rejects_bad_packs_and_foreign_measures() {
        let traj = noisy_run();
        let nu = compensation_measure(&traj);
        let space = SpaceProfile::Constant { value: 1.0 };
        let open_end = EntropyTestPack::new(Entropy::plus(), TimeCutoff::new(0.0, 1.0), space.clone());
        assert!(entropy_residual(&traj, &nu, &open_end).is_err());
        let negative = EntropyTestPack::new(
            Entropy::plus(),
            TimeCutoff::new(0.0, 0.04),
            SpaceProfile::Cosine { mean: 0.0, amplitude: 1.0, wave: [1, 0], phase: 0.0 },
        );
        assert!(entropy_residual(&traj, &nu, &negative).is_err());
        let mut other = nu.clone();
        other.times.pop();
        let ok = EntropyTestPack::new(Entropy::plus(), TimeCutoff::new(0.0, 0.04), space);
        assert!(entropy_residual(&traj, &other, &ok).is_err());
    }
}
