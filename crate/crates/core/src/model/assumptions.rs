//! Sampled checks of the structural assumptions on `Φ`, `f` and `σ`.

use serde::{Deserialize, Serialize};

use super::{DiffusionFunction, ModelSpec, NoiseModel, Reaction};
use crate::grid::TorusGrid;

/// Outcome of one sampled inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Largest value of `lhs - rhs` found (≤ 0 when the inequality holds).
    pub worst_excess: f64,
    /// Arguments at which `worst_excess` was attained.
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn extend(&mut self, other: AssumptionReport) {
        self.checks.extend(other.checks);
    }
}

/// Tracks the worst violation of `lhs ≤ rhs` over samples.
struct Worst {
    name: &'static str,
    excess: f64,
    witness: Vec<f64>,
    slack: f64,
}

impl Worst {
    fn new(name: &'static str, slack: f64) -> Self {
        Self { name, excess: f64::NEG_INFINITY, witness: Vec::new(), slack }
    }

    fn observe(&mut self, lhs: f64, rhs: f64, witness: &[f64]) {
        let e = if lhs.is_nan() || rhs.is_nan() { f64::INFINITY } else { lhs - rhs };
        if e > self.excess {
            self.excess = e;
            self.witness = witness.to_vec();
        }
    }

    fn finish(self) -> AssumptionCheck {
        let excess = if self.excess == f64::NEG_INFINITY { 0.0 } else { self.excess };
        AssumptionCheck { name: self.name.into(), passed: excess <= self.slack, worst_excess: excess, witness: self.witness }
    }
}

/// Deterministic sample points in `[-radius, radius]`, dense near 0 and ±1.
fn state_samples(radius: f64, budget: usize) -> Vec<f64> {
    let n = budget.max(8);
    let mut out = Vec::with_capacity(2 * n + 8);
    for i in 0..n {
        // uniform in [-radius, radius]
        out.push(-radius + 2.0 * radius * (i as f64 + 0.5) / n as f64);
    }
    for i in 1..=n / 4 {
        let s = (i as f64 / (n / 4) as f64).powi(3);
        out.push(s);
        out.push(-s);
        out.push(1.0 + 0.5 * s);
        out.push(-(1.0 - 0.5 * s));
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// The inequalities on `Φ`: odd, strictly increasing, `|√Φ'(0)| ≤ K`,
/// `|(√Φ')'(r)| ≤ K|r|^{(m-3)/2}`, `√Φ' ≥ K⁻¹` for `|r| ≥ 1`, and the
/// two-regime lower bound on `mK|⟦√Φ'⟧(r) - ⟦√Φ'⟧(s)|`.
pub fn validate_diffusion(phi: &dyn DiffusionFunction, m: f64, k: f64, budget: usize) -> AssumptionReport {
    let radius = 4.0;
    let rs = state_samples(radius, budget);
    let mut odd = Worst::new("phi_odd", 0.0);
    let mut inc = Worst::new("phi_strictly_increasing", 0.0);
    let mut origin = Worst::new("sqrt_phi_prime_at_origin", 0.0);
    let mut deriv = Worst::new("sqrt_phi_prime_derivative_bound", 1e-9);
    let mut lower = Worst::new("sqrt_phi_prime_lower_bound", 1e-12);
    let mut two = Worst::new("bracket_two_regime_lower_bound", 1e-12);

    origin.observe(phi.sqrt_phi_prime(0.0).abs(), k, &[0.0]);
    for (idx, &r) in rs.iter().enumerate() {
        let p = phi.phi(r);
        odd.observe((phi.phi(-r) + p).abs(), 0.0, &[r]);
        if idx + 1 < rs.len() {
            let q = rs[idx + 1];
            // Φ(r) < Φ(q)  ⇔  Φ(r) - Φ(q) < 0; strictness via a vanishing gap
            let gap = phi.phi(q) - p;
            inc.observe(if gap > 0.0 { 0.0 } else { 1.0 + gap.abs() }, 0.0, &[r, q]);
        }
        if r != 0.0 {
            deriv.observe(phi.sqrt_phi_prime_derivative(r).abs(), k * r.abs().powf(0.5 * (m - 3.0)), &[r]);
        }
        if r.abs() >= 1.0 {
            lower.observe(1.0 / k, phi.sqrt_phi_prime(r), &[r]);
        }
    }
    let stride = (rs.len() / 64).max(1);
    for &r in rs.iter().step_by(stride) {
        for &s in rs.iter().step_by(stride) {
            if r == s {
                continue;
            }
            let gap = m * k * (phi.sqrt_phi_prime_integral(r) - phi.sqrt_phi_prime_integral(s)).abs();
            let need = if r.abs().max(s.abs()) >= 1.0 { (r - s).abs() } else { (r - s).abs().powf(0.5 * (m + 1.0)) };
            two.observe(need, gap, &[r, s]);
        }
    }
    AssumptionReport { checks: vec![odd.finish(), inc.finish(), origin.finish(), deriv.finish(), lower.finish(), two.finish()] }
}

/// `‖f_r‖_∞ ≤ K` and `sup_{t,r} ‖f(t,·,r)‖_{C^κ} ≤ K`, sampled over the
/// grid and `|r| ≤ radius`, reported separately and as their sum.
pub fn validate_reaction(
    reaction: &Reaction,
    grid: &TorusGrid,
    k: f64,
    kappa: f64,
    radius: f64,
    budget: usize,
) -> AssumptionReport {
    let dim = grid.dim();
    let rs = state_samples(radius, budget / 4);
    let pts: Vec<_> = grid.points().collect();
    let t = 0.0;
    let mut lip = Worst::new("reaction_lipschitz", 1e-12);
    let mut holder = Worst::new("reaction_holder_norm", 1e-12);
    let mut total = Worst::new("reaction_combined_bound", 1e-12);
    let mut lip_max = 0.0_f64;
    for w in rs.windows(2) {
        for x in pts.iter().step_by((pts.len() / 16).max(1)) {
            let q = (reaction.value(t, *x, w[1], dim) - reaction.value(t, *x, w[0], dim)).abs() / (w[1] - w[0]);
            lip.observe(q, k, &[w[0], w[1]]);
            lip_max = lip_max.max(q);
        }
    }
    let mut holder_max = 0.0_f64;
    for &r in rs.iter().step_by((rs.len() / 16).max(1)) {
        let vals: Vec<f64> = pts.iter().map(|x| reaction.value(t, *x, r, dim)).collect();
        let sup = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut semi = 0.0_f64;
        for (i, xi) in pts.iter().enumerate().step_by((pts.len() / 32).max(1)) {
            for (j, xj) in pts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (0..dim).map(|a| crate::grid::periodic_offset(xi[a], xj[a]).powi(2)).sum::<f64>().sqrt();
                semi = semi.max((vals[i] - vals[j]).abs() / d.powf(kappa));
            }
        }
        let norm = sup + semi;
        holder.observe(norm, k, &[r]);
        holder_max = holder_max.max(norm);
    }
    total.observe(holder_max + lip_max, k, &[]);
    AssumptionReport { checks: vec![lip.finish(), holder.finish(), total.finish()] }
}

/// `Σ_k ‖σ^k‖²_{C³} ≤ K`, `a^{ij} = a^{ji}`, and consistency of the analytic
/// partials with central differences (relative error ≤ 1e-6).
pub fn validate_noise(noise: &NoiseModel, grid: &TorusGrid, k: f64, radius: f64, budget: usize) -> AssumptionReport {
    let dim = grid.dim();
    let mut c3 = Worst::new("noise_c3_budget", 0.0);
    let mut sym = Worst::new("ito_a_symmetric", 0.0);
    let mut fd = Worst::new("noise_partials_match_differences", 1e-6);
    c3.observe(noise.c3_budget(grid, radius, 64), k, &[]);
    let rs = state_samples(radius, (budget / 16).max(8));
    let pts: Vec<_> = grid.points().collect();
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(a.abs()).max(1.0);
    for (n, x) in pts.iter().enumerate().step_by((pts.len() / 8).max(1)) {
        for &r in rs.iter().skip(n % 3).step_by(3) {
            let ito = noise.ito_coefficients(*x, r, dim);
            for i in 0..dim {
                for j in 0..dim {
                    sym.observe((ito.a[i][j] - ito.a[j][i]).abs(), 0.0, &[x[0], x[1], r]);
                }
            }
            for kk in 0..noise.mode_count() {
                for i in 0..dim {
                    let dr = (noise.sigma(kk, i, *x, r + h) - noise.sigma(kk, i, *x, r - h)) / (2.0 * h);
                    fd.observe(rel(dr, noise.sigma_r(kk, i, *x, r)), 0.0, &[kk as f64, x[0], x[1], r]);
                    for j in 0..dim {
                        let (mut xp, mut xm) = (*x, *x);
                        xp[j] += h;
                        xm[j] -= h;
                        let dx = (noise.sigma(kk, i, xp, r) - noise.sigma(kk, i, xm, r)) / (2.0 * h);
                        fd.observe(rel(dx, noise.sigma_x(kk, i, j, *x, r)), 0.0, &[kk as f64, x[0], x[1], r]);
                        let drx = (noise.sigma_r(kk, i, xp, r) - noise.sigma_r(kk, i, xm, r)) / (2.0 * h);
                        fd.observe(rel(drx, noise.sigma_rx(kk, i, j, *x, r)), 0.0, &[kk as f64, x[0], x[1], r]);
                    }
                }
            }
        }
    }
    AssumptionReport { checks: vec![c3.finish(), sym.finish(), fd.finish()] }
}

/// All structural checks for `model`, sampled with roughly `sample_budget`
/// points per family. Failures are report entries.
pub fn validate_assumptions(model: &ModelSpec, sample_budget: usize) -> AssumptionReport {
    let nl = &model.nonlinearity;
    let (k, kappa) = (nl.structure_constant, nl.holder_exponent);
    let grid = TorusGrid::new(model.dim, if model.dim == 1 { 64 } else { 16 }).expect("valid sampling grid");
    let radius = 4.0;
    let mut report = validate_diffusion(nl, nl.m, k, sample_budget);
    report.extend(validate_reaction(&model.reaction, &grid, k, kappa, radius, sample_budget));
    report.extend(validate_noise(&model.noise, &grid, k, radius, sample_budget));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Nonlinearity, Obstacle};

    #[derive(Debug)]
    struct Square;

    impl DiffusionFunction for Square {
        fn phi(&self, r: f64) -> f64 {
            r * r
        }
        fn phi_prime(&self, r: f64) -> f64 {
            2.0 * r
        }
        fn sqrt_phi_prime_integral(&self, r: f64) -> f64 {
            crate::model::bracket(|s| self.sqrt_phi_prime(s), r, 1e-10).unwrap()
        }
        fn phi_primitive(&self, r: f64) -> f64 {
            r * r * r / 3.0
        }
        fn phi_prime_bound(&self, radius: f64) -> f64 {
            2.0 * radius
        }
    }

    #[test]
    fn porous_medium_m2_passes() {
        let model = ModelSpec {
            dim: 1,
            nonlinearity: Nonlinearity::new(2.0, 3.0, 1.0).unwrap(),
            reaction: Reaction::Zero,
            obstacle: Obstacle::Absent,
            noise: NoiseModel::deterministic(),
        };
        let report = validate_assumptions(&model, 400);
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn even_square_fails_oddness() {
        let report = validate_diffusion(&Square, 2.0, 3.0, 200);
        let odd = report.get("phi_odd").unwrap();
        assert!(!odd.passed);
        assert!(odd.witness[0] != 0.0);
    }

    #[test]
    fn sine_reaction_is_unit_lipschitz() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let report = validate_reaction(&Reaction::Sine { amplitude: 1.0, offset: 0.0 }, &grid, 1.0, 1.0, 4.0, 400);
        assert!(report.get("reaction_lipschitz").unwrap().passed);
    }
}
