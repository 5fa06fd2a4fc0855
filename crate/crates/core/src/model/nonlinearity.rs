//! Porous-medium nonlinearity `Φ(r) = |r|^{m-1} r` and its smooth,
//! non-degenerate approximations `Φ_n`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::rho_centered;
use crate::quadrature::{hermite, rule32, rule5};

/// Common interface of `Φ` and `Φ_n` as seen by the scheme and diagnostics.
pub trait DiffusionFunction: Send + Sync + fmt::Debug {
    fn phi(&self, r: f64) -> f64;
    fn phi_prime(&self, r: f64) -> f64;

    fn sqrt_phi_prime(&self, r: f64) -> f64 {
        self.phi_prime(r).max(0.0).sqrt()
    }

    /// `(√Φ')'`, by central differences unless overridden.
    fn sqrt_phi_prime_derivative(&self, r: f64) -> f64 {
        let h = 1e-6 * r.abs().max(1e-3);
        (self.sqrt_phi_prime(r + h) - self.sqrt_phi_prime(r - h)) / (2.0 * h)
    }

    /// `⟦√Φ'⟧(r) = ∫_0^r √Φ'`.
    fn sqrt_phi_prime_integral(&self, r: f64) -> f64;

    /// `∫_0^r Φ`.
    fn phi_primitive(&self, r: f64) -> f64;

    /// `max_{|r| ≤ radius} Φ'(r)`.
    fn phi_prime_bound(&self, radius: f64) -> f64;
}

/// `Φ(r) = |r|^{m-1} r` together with the structural constants `K` and `κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub m: f64,
    #[serde(rename = "K")]
    pub structure_constant: f64,
    #[serde(rename = "kappa", default = "default_kappa")]
    pub holder_exponent: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl Nonlinearity {
    pub fn new(m: f64, structure_constant: f64, holder_exponent: f64) -> Result<Self> {
        let nl = Self { m, structure_constant, holder_exponent };
        nl.check()?;
        Ok(nl)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(Error::Config(format!("exponent m must be > 1, got {}", self.m)));
        }
        if !(self.structure_constant >= 1.0) {
            return Err(Error::Config(format!("K must be >= 1, got {}", self.structure_constant)));
        }
        if !(self.holder_exponent > 0.0 && self.holder_exponent <= 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0,1], got {}", self.holder_exponent)));
        }
        Ok(())
    }
}

impl DiffusionFunction for Nonlinearity {
    fn phi(&self, r: f64) -> f64 {
        r.abs().powf(self.m).copysign(r)
    }

    fn phi_prime(&self, r: f64) -> f64 {
        self.m * r.abs().powf(self.m - 1.0)
    }

    fn sqrt_phi_prime(&self, r: f64) -> f64 {
        self.m.sqrt() * r.abs().powf(0.5 * (self.m - 1.0))
    }

    fn sqrt_phi_prime_derivative(&self, r: f64) -> f64 {
        if r == 0.0 {
            return if self.m >= 3.0 { 0.0 } else { f64::INFINITY };
        }
        let e = 0.5 * (self.m - 1.0);
        (self.m.sqrt() * e * r.abs().powf(e - 1.0)).copysign(r)
    }

    fn sqrt_phi_prime_integral(&self, r: f64) -> f64 {
        let p = 0.5 * (self.m + 1.0);
        (self.m.sqrt() / p * r.abs().powf(p)).copysign(r)
    }

    fn phi_primitive(&self, r: f64) -> f64 {
        r.abs().powf(self.m + 1.0) / (self.m + 1.0)
    }

    fn phi_prime_bound(&self, radius: f64) -> f64 {
        self.phi_prime(radius)
    }
}

/// Smooth strictly increasing `Φ_n` with `√Φ_n' ≥ 2/n` and
/// `|√Φ' - √Φ_n'| ≤ 4/n` on `[-n, n]`.
///
/// `√Φ_n' = 2/n + ρ̃_θ * √Φ'(clamp(·, -n, n))` where `ρ̃_θ` is the canonical
/// mollifier recentred to `(-θ/2, θ/2)`. Centring keeps `√Φ_n'` even, so
/// `Φ_n` is odd. `Φ_n` and `⟦√Φ_n'⟧` are tabulated once per `(m, n)` and
/// evaluated by cubic Hermite interpolation.
#[derive(Clone)]
pub struct SmoothedNonlinearity {
    base: Nonlinearity,
    level: u32,
    width: f64,
    table: Arc<PhiTable>,
}

impl fmt::Debug for SmoothedNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothedNonlinearity")
            .field("base", &self.base)
            .field("level", &self.level)
            .field("width", &self.width)
            .field("table_nodes", &self.table.nodes.len())
            .finish()
    }
}

struct PhiTable {
    nodes: Vec<f64>,
    sqrt_dphi: Vec<f64>,
    phi: Vec<f64>,
    sqrt_integral: Vec<f64>,
    /// `∫_0^r Φ_n`, integrating the Hermite interpolant of `Φ_n` exactly.
    phi_primitive: Vec<f64>,
}

/// Mollification width for level `n`: small enough that the cusp of `√Φ'`
/// at the origin costs at most `1/n`.
fn mollifier_width(m: f64, n: f64) -> f64 {
    let by_level = 0.25 / (n * n);
    if m >= 3.0 {
        return by_level;
    }
    // √m (θ/2)^{(m-1)/2} ≤ 1/n
    let by_cusp = 2.0 * (1.0 / (n * m.sqrt())).powf(2.0 / (m - 1.0));
    by_level.min(by_cusp).max(1e-300)
}

impl SmoothedNonlinearity {
    pub fn new(base: Nonlinearity, level: u32) -> Result<Self> {
        base.check()?;
        if level == 0 {
            return Err(Error::Config("smoothing level n must be >= 1".into()));
        }
        let width = mollifier_width(base.m, level as f64);
        let table = cached_table(base.m, level, width);
        Ok(Self { base, level, width, table })
    }

    pub fn base(&self) -> &Nonlinearity {
        &self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn floor(&self) -> f64 {
        2.0 / self.level as f64
    }

    /// Truncation `ξ_n = (-n) ∨ (ξ ∧ n)`.
    pub fn truncate(&self, r: f64) -> f64 {
        let n = self.level as f64;
        r.clamp(-n, n)
    }

    /// `√Φ_n'(r)` by direct quadrature of the mollification.
    pub fn sqrt_phi_prime_exact(&self, r: f64) -> f64 {
        sqrt_dphi_exact(self.base.m, self.level as f64, self.width, r)
    }

    fn lookup(&self, r: f64, values: &[f64], slope: impl Fn(usize) -> f64, tail_slope: f64) -> (f64, f64) {
        let t = &self.table;
        let a = r.abs();
        let last = t.nodes.len() - 1;
        if a >= t.nodes[last] {
            return (values[last] + tail_slope * (a - t.nodes[last]), tail_slope);
        }
        let k = t.nodes.partition_point(|&x| x <= a).saturating_sub(1).min(last - 1);
        hermite(t.nodes[k], t.nodes[k + 1], values[k], values[k + 1], slope(k), slope(k + 1), a)
    }
}

impl DiffusionFunction for SmoothedNonlinearity {
    fn phi(&self, r: f64) -> f64 {
        let t = &self.table;
        let tail = t.sqrt_dphi[t.nodes.len() - 1].powi(2);
        let (v, _) = self.lookup(r, &t.phi, |k| t.sqrt_dphi[k] * t.sqrt_dphi[k], tail);
        v.copysign(r)
    }

    fn phi_prime(&self, r: f64) -> f64 {
        let t = &self.table;
        let tail = t.sqrt_dphi[t.nodes.len() - 1].powi(2);
        let (_, d) = self.lookup(r, &t.phi, |k| t.sqrt_dphi[k] * t.sqrt_dphi[k], tail);
        d
    }

    fn sqrt_phi_prime(&self, r: f64) -> f64 {
        self.sqrt_phi_prime_exact(r)
    }

    fn sqrt_phi_prime_integral(&self, r: f64) -> f64 {
        let t = &self.table;
        let tail = t.sqrt_dphi[t.nodes.len() - 1];
        let (v, _) = self.lookup(r, &t.sqrt_integral, |k| t.sqrt_dphi[k], tail);
        v.copysign(r)
    }

    fn phi_primitive(&self, r: f64) -> f64 {
        let t = &self.table;
        let last = t.nodes.len() - 1;
        let a = r.abs();
        if a >= t.nodes[last] {
            // Φ_n is affine past the last node
            let d = a - t.nodes[last];
            let slope = t.sqrt_dphi[last].powi(2);
            return t.phi_primitive[last] + t.phi[last] * d + 0.5 * slope * d * d;
        }
        let k = t.nodes.partition_point(|&x| x <= a).saturating_sub(1).min(last - 1);
        hermite(t.nodes[k], t.nodes[k + 1], t.phi_primitive[k], t.phi_primitive[k + 1], t.phi[k], t.phi[k + 1], a).0
    }

    fn phi_prime_bound(&self, radius: f64) -> f64 {
        // √Φ_n' is even and nondecreasing in |r|.
        let t = &self.table;
        let r = radius.abs().min(*t.nodes.last().unwrap());
        let s = self.sqrt_phi_prime_exact(r);
        (s * s).max(self.phi_prime(r))
    }
}

fn sqrt_dphi_exact(m: f64, n: f64, width: f64, r: f64) -> f64 {
    let a = r.abs();
    let g = |s: f64| {
        let c = s.abs().min(n);
        m.sqrt() * c.powf(0.5 * (m - 1.0))
    };
    let half = 0.5 * width;
    let rule = rule32();
    let conv = |lo: f64, hi: f64| rule.integrate(lo, hi, |s| rho_centered(width, s) * g(a - s));
    // Split where the integrand has a kink: the cusp at 0 and the clamp at n.
    let mut cuts = vec![-half, half];
    for k in [a, a - n, a + n] {
        if k > -half && k < half {
            cuts.push(k);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut sum = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            sum += conv(w[0], w[1]);
        }
    }
    2.0 / n + sum.max(0.0)
}

fn cached_table(m: f64, level: u32, width: f64) -> Arc<PhiTable> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u32), Arc<PhiTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (m.to_bits(), level);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let table = Arc::new(build_table(m, level as f64, width));
    cache.lock().unwrap().entry(key).or_insert(table).clone()
}

fn table_nodes(n: f64, width: f64) -> Vec<f64> {
    let mut nodes = Vec::new();
    // fine uniform patch around the origin cusp
    let patch = 2.0 * width;
    for i in 0..64 {
        nodes.push(patch * i as f64 / 64.0);
    }
    // geometric grading up to the clamp
    let stop = n - 2.0 * width;
    let mut x = patch;
    while x < stop {
        nodes.push(x);
        x *= 1.005;
    }
    // fine uniform patch around the clamp kink
    let lo = stop.max(patch);
    let hi = n + 2.0 * width;
    for i in 0..=128 {
        let v = lo + (hi - lo) * i as f64 / 128.0;
        if v > *nodes.last().unwrap() {
            nodes.push(v);
        }
    }
    nodes
}

fn build_table(m: f64, n: f64, width: f64) -> PhiTable {
    let nodes = table_nodes(n, width);
    let s = |r: f64| sqrt_dphi_exact(m, n, width, r);
    let sqrt_dphi: Vec<f64> = nodes.iter().map(|&r| s(r)).collect();
    let mut phi = vec![0.0; nodes.len()];
    let mut sqrt_integral = vec![0.0; nodes.len()];
    let rule = rule5();
    for k in 0..nodes.len() - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let dphi = rule.integrate(a, b, |r| s(r).powi(2));
        let dint = rule.integrate(a, b, s);
        phi[k + 1] = phi[k] + dphi;
        sqrt_integral[k + 1] = sqrt_integral[k] + dint;
    }
    let mut phi_primitive = vec![0.0; nodes.len()];
    for k in 0..nodes.len() - 1 {
        let h = nodes[k + 1] - nodes[k];
        let (d0, d1) = (sqrt_dphi[k].powi(2), sqrt_dphi[k + 1].powi(2));
        phi_primitive[k + 1] = phi_primitive[k] + 0.5 * h * (phi[k] + phi[k + 1]) + h * h * (d0 - d1) / 12.0;
    }
    PhiTable { nodes, sqrt_dphi, phi, sqrt_integral, phi_primitive }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(m: f64) -> Nonlinearity {
        Nonlinearity::new(m, 3.0, 1.0).unwrap()
    }

    #[test]
    fn power_law_values() {
        let p2 = pm(2.0);
        assert_eq!(p2.phi(0.0), 0.0);
        assert_eq!(p2.phi(2.0), 4.0);
        assert_eq!(p2.phi(-2.0), -4.0);
        assert_eq!(pm(3.0).phi_prime(2.0), 12.0);
        assert!((p2.sqrt_phi_prime_integral(2.0) - 2.0 * 2f64.sqrt() / 3.0 * 2f64.powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn oddness_is_exact() {
        let s = SmoothedNonlinearity::new(pm(2.5), 8).unwrap();
        for r in [0.0, 1e-9, 0.37, 2.0, 7.9, 8.0, 20.0] {
            assert_eq!(pm(2.5).phi(-r), -pm(2.5).phi(r));
            assert_eq!(s.phi(-r), -s.phi(r));
            assert_eq!(s.sqrt_phi_prime_integral(-r), -s.sqrt_phi_prime_integral(r));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Nonlinearity::new(1.0, 3.0, 1.0).is_err());
        assert!(Nonlinearity::new(2.0, 0.5, 1.0).is_err());
        assert!(Nonlinearity::new(2.0, 3.0, 0.0).is_err());
        assert!(SmoothedNonlinearity::new(pm(2.0), 0).is_err());
    }

    #[test]
    fn smoothed_floor_and_proximity() {
        let s = SmoothedNonlinearity::new(pm(2.0), 16).unwrap();
        let v0 = s.sqrt_phi_prime(0.0);
        assert!(v0 >= 2.0 / 16.0 && v0 <= 4.0 / 16.0);
        assert!((s.sqrt_phi_prime(8.0) - 4.0).abs() <= 4.0 / 16.0);
    }

    #[test]
    fn table_matches_exact_derivative() {
        let s = SmoothedNonlinearity::new(pm(2.0), 16).unwrap();
        for r in [1e-5, 0.01, 0.3, 1.0, 5.5, 15.99, 16.0, 17.0] {
            let exact = s.sqrt_phi_prime_exact(r).powi(2);
            assert!((s.phi_prime(r) - exact).abs() <= 1e-7 * exact.max(1.0), "r={r}");
        }
        let prim = crate::quadrature::integrate_adaptive(0.0, 2.5, 1e-11, |r| s.phi(r)).unwrap();
        assert!((s.phi_primitive(-2.5) - prim).abs() < 1e-8);
        let direct = crate::quadrature::integrate_adaptive(0.0, 3.0, 1e-11, |r| s.sqrt_phi_prime_exact(r).powi(2)).unwrap();
        assert!((s.phi(3.0) - direct).abs() < 1e-8);
    }
}
