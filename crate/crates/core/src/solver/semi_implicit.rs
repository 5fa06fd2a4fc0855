//! Frozen-coefficient implicit diffusion step.
//!
//! Given the explicit increment `E`, find `w` with `w - dt Δ_h(D w) = E`,
//! `D = Φ_n'(u)`. In `z = D w` the system `(D⁻¹ - dt Δ_h) z = E` is symmetric
//! positive definite; it is solved by conjugate gradients preconditioned with
//! the circulant `mean(D⁻¹) - dt Δ_h`, inverted by FFT. The increment is then
//! recovered as `w = E + dt Δ_h z`, whose mean is exactly that of `E`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;

const CG_TOL: f64 = 1e-12;
const CG_MAX_ITER: usize = 1000;

#[derive(Clone)]
pub(crate) struct LinearizedDiffusion {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Eigenvalues of `-Δ_h` in FFT order.
    symbol: Vec<f64>,
}

impl fmt::Debug for LinearizedDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearizedDiffusion").field("grid", &self.grid).finish()
    }
}

impl LinearizedDiffusion {
    pub(crate) fn new(grid: TorusGrid) -> Self {
        let n = grid.points_per_dim();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let h = grid.spacing();
        let axis: Vec<f64> = (0..n).map(|k| 4.0 / (h * h) * (PI * k as f64 / n as f64).sin().powi(2)).collect();
        let symbol = (0..grid.total_points())
            .map(|p| {
                let m = grid.multi_index(p);
                (0..grid.dim()).map(|a| axis[m[a]]).sum()
            })
            .collect();
        Self { grid, forward, inverse, symbol }
    }

    fn laplacian(&self, src: &[f64], dst: &mut [f64]) {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        for (p, d) in dst.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..g.dim() {
                s += src[g.shift(p, a, 1)] - 2.0 * src[p] + src[g.shift(p, a, -1)];
            }
            *d = s * inv_h2;
        }
    }

    fn transpose(&self, buf: &mut [Complex<f64>]) {
        let n = self.grid.points_per_dim();
        for i in 0..n {
            for j in i + 1..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], plan: &Arc<dyn Fft<f64>>) {
        plan.process(buf);
        if self.grid.dim() == 2 {
            self.transpose(buf);
            plan.process(buf);
            self.transpose(buf);
        }
    }

    /// `y = (c - dt Δ_h)⁻¹ r`.
    fn precondition(&self, c: f64, dt: f64, r: &[f64], y: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        let scale = 1.0 / buf.len() as f64;
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b *= scale / (c + dt * s);
        }
        self.transform(&mut buf, &self.inverse);
        for (o, b) in y.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }

    /// Replaces the explicit increment in `incr` by the implicit one.
    pub(crate) fn solve(&self, dphi: &[f64], dt: f64, incr: &mut [f64]) -> Result<()> {
        let n = incr.len();
        let inv_d: Vec<f64> = dphi.iter().map(|d| 1.0 / d).collect();
        let c = inv_d.iter().sum::<f64>() / n as f64;
        let apply = |z: &[f64], out: &mut [f64], lap: &mut [f64]| {
            self.laplacian(z, lap);
            for p in 0..n {
                out[p] = z[p] * inv_d[p] - dt * lap[p];
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        let rhs = incr.to_vec();
        let rhs_norm = dot(&rhs, &rhs).sqrt();
        let mut z: Vec<f64> = rhs.iter().zip(dphi).map(|(e, d)| e * d).collect();
        let mut lap = vec![0.0; n];
        let mut az = vec![0.0; n];
        apply(&z, &mut az, &mut lap);
        let mut r: Vec<f64> = rhs.iter().zip(&az).map(|(b, a)| b - a).collect();
        let mut y = vec![0.0; n];
        self.precondition(c, dt, &r, &mut y);
        let mut dir = y.clone();
        let mut ry = dot(&r, &y);
        let mut converged = rhs_norm == 0.0 || dot(&r, &r).sqrt() <= CG_TOL * rhs_norm;
        let mut iter = 0;
        while !converged && iter < CG_MAX_ITER {
            apply(&dir, &mut az, &mut lap);
            let alpha = ry / dot(&dir, &az);
            for p in 0..n {
                z[p] += alpha * dir[p];
                r[p] -= alpha * az[p];
            }
            let res = dot(&r, &r).sqrt();
            if !res.is_finite() {
                return Err(Error::LinearSolve(format!("residual became {res}")));
            }
            converged = res <= CG_TOL * rhs_norm;
            self.precondition(c, dt, &r, &mut y);
            let ry_new = dot(&r, &y);
            let beta = ry_new / ry;
            ry = ry_new;
            for p in 0..n {
                dir[p] = y[p] + beta * dir[p];
            }
            iter += 1;
        }
        if !converged {
            return Err(Error::LinearSolve(format!("no convergence after {CG_MAX_ITER} iterations")));
        }
        self.laplacian(&z, &mut lap);
        for p in 0..n {
            incr[p] = rhs[p] + dt * lap[p];
        }
        Ok(())
    }
}
