//! Coefficients of the equation
//! `du = [ΔΦ(u) + ∂_i(a^{ij} ∂_j u + b^i) + f] dt + ∇·σ^k dW^k`
//! and the penalty that replaces the obstacle.

mod assumptions;
mod coefficients;
mod noise;
mod nonlinearity;

use serde::{Deserialize, Serialize};

pub use assumptions::{
    validate_assumptions, validate_diffusion, validate_noise, validate_reaction, AssumptionCheck, AssumptionReport,
};
pub use coefficients::{InitialData, Obstacle, Reaction, Smoothness, ABSENT_LEVEL};
pub use noise::{ItoCoefficients, ModeSample, NoiseMode, NoiseModel, NoiseSamples, ProfileJet, Response, SpatialProfile};
pub use nonlinearity::{DiffusionFunction, Nonlinearity, SmoothedNonlinearity};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// Default absolute tolerance of [`bracket`].
pub const BRACKET_TOL: f64 = 1e-10;

/// Everything that defines the equation, independent of discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub nonlinearity: Nonlinearity,
    pub reaction: Reaction,
    pub obstacle: Obstacle,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl ModelSpec {
    pub fn check(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        self.nonlinearity.check()?;
        self.obstacle.check()?;
        self.noise.check(self.dim)
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise.mode_count() == 0
    }

    pub fn smoothed(&self, level: u32) -> Result<SmoothedNonlinearity> {
        SmoothedNonlinearity::new(self.nonlinearity, level)
    }
}

/// `P_ε(r, b) = (r - b)⁻ / ε` with `(x)⁻ = max(-x, 0)`.
pub fn penalty(r: f64, b: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("penalty parameter must be positive, got {eps}")));
    }
    Ok((b - r).max(0.0) / eps)
}

/// `⟦g⟧(r) = ∫_0^r g`, by adaptive quadrature to absolute accuracy `tol`.
pub fn bracket(g: impl FnMut(f64) -> f64, r: f64, tol: f64) -> Result<f64> {
    integrate_adaptive(0.0, r, tol, g)
}
