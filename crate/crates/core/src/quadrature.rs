//! Gauss–Legendre rules and dyadic adaptive integration.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A cached fixed-order rule.
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    #[inline]
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

pub fn rule10() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::new(10))
}

pub fn rule5() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::new(5))
}

pub fn rule32() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::new(32))
}

const MAX_DEPTH: u32 = 48;

/// Adaptive integral of `f` over `[a, b]` (either orientation) to absolute
/// accuracy `tol`, by dyadic bisection of 10-point Gauss panels.
pub fn integrate_adaptive(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let rule = rule10();
    let total_len = hi - lo;
    let mut stack: Vec<(f64, f64, f64, u32)> = Vec::with_capacity(64);
    let whole = rule.integrate(lo, hi, &mut f);
    stack.push((lo, hi, whole, 0));
    let mut sum = 0.0;
    let mut worst = 0.0_f64;
    let mut failed = false;
    while let Some((x0, x1, coarse, depth)) = stack.pop() {
        let xm = 0.5 * (x0 + x1);
        let left = rule.integrate(x0, xm, &mut f);
        let right = rule.integrate(xm, x1, &mut f);
        let fine = left + right;
        let err = (fine - coarse).abs();
        let budget = tol * (x1 - x0) / total_len;
        // Panels whose disagreement is at rounding level cannot improve.
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if err <= budget.max(floor) {
            sum += fine;
        } else if depth >= MAX_DEPTH {
            sum += fine;
            failed = true;
            worst = worst.max(err);
        } else {
            stack.push((xm, x1, right, depth + 1));
            stack.push((x0, xm, left, depth + 1));
        }
    }
    if failed || !sum.is_finite() {
        return Err(Error::Quadrature { achieved: worst, tol });
    }
    Ok(sign * sum)
}

/// Cubic Hermite interpolation on one interval.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1;
    let slope = (6.0 * t2 - 6.0 * t) * (y0 - y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1;
    (value, slope)
}
