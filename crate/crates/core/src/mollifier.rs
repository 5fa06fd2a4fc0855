//! The canonical mollifier `ρ` (smooth, supported in `(0,1)`, unit mass,
//! values in `[0,2]`) and the convex test entropies `η_δ` built from it.

use std::sync::OnceLock;

use crate::quadrature::{hermite, rule32};

fn raw_bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let y = 2.0 * s - 1.0;
    (-1.0 / (1.0 - y * y)).exp()
}

fn raw_bump_derivative(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let y = 2.0 * s - 1.0;
    let q = 1.0 - y * y;
    // d/ds exp(-1/q) = exp(-1/q) * q'/q^2, q' = -4y
    (-1.0 / q).exp() * (-4.0 * y) / (q * q)
}

const TABLE_CELLS: usize = 4096;

struct Tables {
    norm: f64,
    /// C(t) = ∫_0^t ρ at the nodes t_i = i / TABLE_CELLS.
    cdf: Vec<f64>,
    /// D(t) = ∫_0^t C.
    cdf_integral: Vec<f64>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let rule = rule32();
        let h = 1.0 / TABLE_CELLS as f64;
        let mut raw_cdf = vec![0.0; TABLE_CELLS + 1];
        for i in 0..TABLE_CELLS {
            let a = i as f64 * h;
            raw_cdf[i + 1] = raw_cdf[i] + rule.integrate(a, a + h, raw_bump);
        }
        let norm = raw_cdf[TABLE_CELLS];
        let cdf: Vec<f64> = raw_cdf.iter().map(|c| c / norm).collect();
        let rho = |s: f64| raw_bump(s) / norm;
        let mut cdf_integral = vec![0.0; TABLE_CELLS + 1];
        for i in 0..TABLE_CELLS {
            let a = i as f64 * h;
            let b = a + h;
            let piece = rule.integrate(a, b, |t| hermite(a, b, cdf[i], cdf[i + 1], rho(a), rho(b), t).0);
            cdf_integral[i + 1] = cdf_integral[i] + piece;
        }
        Tables { norm, cdf, cdf_integral }
    })
}

/// `ρ(s)`: normalized smooth bump on `(0, 1)`.
pub fn rho(s: f64) -> f64 {
    raw_bump(s) / tables().norm
}

pub fn rho_derivative(s: f64) -> f64 {
    raw_bump_derivative(s) / tables().norm
}

/// `ρ_θ(r) = θ⁻¹ ρ(r/θ)`.
pub fn rho_scaled(theta: f64, r: f64) -> f64 {
    rho(r / theta) / theta
}

/// `ρ` recentred on `(-1/2, 1/2)`, scaled to width `theta`.
pub fn rho_centered(theta: f64, r: f64) -> f64 {
    rho(r / theta + 0.5) / theta
}

fn locate(t: f64) -> (usize, f64, f64) {
    let h = 1.0 / TABLE_CELLS as f64;
    let i = ((t / h) as usize).min(TABLE_CELLS - 1);
    (i, i as f64 * h, (i + 1) as f64 * h)
}

/// `C(t) = ∫_0^t ρ`, saturating at 1.
pub fn cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let tab = tables();
    let (i, a, b) = locate(t);
    hermite(a, b, tab.cdf[i], tab.cdf[i + 1], rho(a), rho(b), t).0
}

/// `D(t) = ∫_0^t C`, continued linearly past `t = 1`.
pub fn cdf_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let tab = tables();
    if t >= 1.0 {
        return tab.cdf_integral[TABLE_CELLS] + (t - 1.0);
    }
    let (i, a, b) = locate(t);
    hermite(a, b, tab.cdf_integral[i], tab.cdf_integral[i + 1], tab.cdf[i], tab.cdf[i + 1], t).0
}

/// Convex entropy `η_δ` with `η_δ(0) = η_δ'(0) = 0`, `η_δ'' = ρ_δ(|·|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedAbs {
    pub delta: f64,
}

impl SmoothedAbs {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0 && delta.is_finite(), "delta must be positive, got {delta}");
        Self { delta }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.delta * cdf_integral(r.abs() / self.delta)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        cdf(r.abs() / self.delta).copysign(r)
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        rho_scaled(self.delta, r.abs())
    }
}
