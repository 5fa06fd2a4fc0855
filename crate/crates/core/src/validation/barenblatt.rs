//! Self-similar source solution of `∂_t u = Δ(|u|^{m-1}u)` in free space.
//!
//! `u(t, x) = τ^{-α} (C - k|x - c|² τ^{-2β})₊^{1/(m-1)}` with `τ = t + t0`,
//! `α = d/(d(m-1)+2)`, `β = α/d`, `k = α(m-1)/(2md)`; `C` is fixed by the mass.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{periodic_offset, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarenblattParams {
    pub m: f64,
    pub dim: usize,
    pub mass: f64,
    pub t0: f64,
    pub center: Point,
    alpha: f64,
    beta: f64,
    k: f64,
    c: f64,
}

impl BarenblattParams {
    pub fn new(m: f64, dim: usize, mass: f64, t0: f64, center: Point) -> Result<Self> {
        if !(m > 1.0) || !(1..=2).contains(&dim) || !(mass > 0.0) || !(t0 > 0.0) {
            return Err(Error::Config(format!(
                "Barenblatt profile needs m > 1, d in {{1,2}}, mass > 0, t0 > 0; got m={m}, d={dim}, mass={mass}, t0={t0}"
            )));
        }
        let d = dim as f64;
        let alpha = d / (d * (m - 1.0) + 2.0);
        let beta = alpha / d;
        let k = alpha * (m - 1.0) / (2.0 * m * d);
        let g = 1.0 / (m - 1.0);
        // mass = C^{g+d/2} k^{-d/2} π^{d/2} Γ(g+1) / Γ(g+1+d/2)
        let unit = std::f64::consts::PI.powf(d / 2.0) * gamma(g + 1.0) / gamma(g + 1.0 + d / 2.0);
        let c = (mass * k.powf(d / 2.0) / unit).powf(1.0 / (g + d / 2.0));
        Ok(Self { m, dim, mass, t0, center, alpha, beta, k, c })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Radius of the support at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.k).sqrt() * (t + self.t0).powf(self.beta)
    }

    /// Largest `t` whose support radius stays below `radius`.
    pub fn time_to_radius(&self, radius: f64) -> f64 {
        (radius / (self.c / self.k).sqrt()).powf(1.0 / self.beta) - self.t0
    }
}

/// Profile value at `x` (torus distance to the centre) and time `t`.
pub fn barenblatt(x: Point, t: f64, p: &BarenblattParams) -> Result<f64> {
    let tau = t + p.t0;
    if !(tau > 0.0) {
        return Err(Error::Oracle(format!("Barenblatt profile undefined at t + t0 = {tau}")));
    }
    let radius = p.support_radius(t);
    if radius >= 0.5 {
        return Err(Error::Oracle(format!("Barenblatt support radius {radius} exceeds half the period")));
    }
    let r2: f64 = (0..p.dim).map(|j| periodic_offset(x[j], p.center[j]).powi(2)).sum();
    let inner = p.c - p.k * r2 * tau.powf(-2.0 * p.beta);
    Ok(if inner <= 0.0 { 0.0 } else { tau.powf(-p.alpha) * inner.powf(1.0 / (p.m - 1.0)) })
}

/// `∂_t` of [`barenblatt`].
pub fn barenblatt_time_derivative(x: Point, t: f64, p: &BarenblattParams) -> Result<f64> {
    barenblatt(x, t, p)?;
    let tau = t + p.t0;
    let r2: f64 = (0..p.dim).map(|j| periodic_offset(x[j], p.center[j]).powi(2)).sum();
    let inner = p.c - p.k * r2 * tau.powf(-2.0 * p.beta);
    if inner <= 0.0 {
        return Ok(0.0);
    }
    let g = 1.0 / (p.m - 1.0);
    let d_inner = 2.0 * p.beta * p.k * r2 * tau.powf(-2.0 * p.beta - 1.0);
    Ok(-p.alpha * tau.powf(-p.alpha - 1.0) * inner.powf(g) + tau.powf(-p.alpha) * g * inner.powf(g - 1.0) * d_inner)
}
