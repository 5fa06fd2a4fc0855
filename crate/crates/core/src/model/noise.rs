//! Conservative noise `∇·σ^k(x,u) dW^k` with separable coefficients
//! `σ^{ik}(x,r) = s_k(r) T_{ik}(x)`, and the Itô corrections they induce.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, TorusGrid, MAX_DIM};

/// Dependence of a mode on the state variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Response {
    /// `s(r) = 1`: additive in the flux, no Itô correction.
    Unit,
    /// `s(r) = r`.
    Linear,
    /// `s(r) = sin r`.
    Sine,
    /// `s(r) = tanh r`.
    Tanh,
}

impl Response {
    /// `[s, s', s'', s''']` at `r`.
    pub fn derivatives(&self, r: f64) -> [f64; 4] {
        match self {
            Response::Unit => [1.0, 0.0, 0.0, 0.0],
            Response::Linear => [r, 1.0, 0.0, 0.0],
            Response::Sine => {
                let (s, c) = r.sin_cos();
                [s, c, -s, -c]
            }
            Response::Tanh => {
                let t = r.tanh();
                let q = 1.0 - t * t;
                [t, q, -2.0 * t * q, q * (6.0 * t * t - 2.0)]
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    pub fn slope(&self, r: f64) -> f64 {
        self.derivatives(r)[1]
    }

    /// Antiderivative of `s'²` vanishing at 0.
    pub fn slope_squared_primitive(&self, r: f64) -> f64 {
        match self {
            Response::Unit => 0.0,
            Response::Linear => r,
            Response::Sine => 0.5 * r + 0.25 * (2.0 * r).sin(),
            Response::Tanh => {
                let t = r.tanh();
                t - t * t * t / 3.0
            }
        }
    }

    /// Antiderivative of `(s s')'` vanishing at 0, i.e. `s s' - s(0)s'(0)`.
    pub fn product_primitive(&self, r: f64) -> f64 {
        let [s, d, ..] = self.derivatives(r);
        let [s0, d0, ..] = self.derivatives(0.0);
        s * d - s0 * d0
    }

    /// Antiderivative of `s'` vanishing at 0.
    pub fn slope_primitive(&self, r: f64) -> f64 {
        self.value(r) - self.value(0.0)
    }

    pub fn depends_on_state(&self) -> bool {
        !matches!(self, Response::Unit)
    }

    /// Bound on `|s'|` over `|r| ≤ radius`.
    pub fn slope_bound(&self, _radius: f64) -> f64 {
        match self {
            Response::Unit => 0.0,
            _ => 1.0,
        }
    }
}

/// Spatial factor `T(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialProfile {
    Zero,
    Constant { amplitude: f64 },
    /// `A cos(2π k·x + phase)`.
    Cosine { amplitude: f64, wave: [i32; 2], #[serde(default)] phase: f64 },
}

/// Value and spatial derivatives up to third order at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProfileJet {
    pub value: f64,
    pub gradient: [f64; MAX_DIM],
    pub hessian: [[f64; MAX_DIM]; MAX_DIM],
    pub third: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl SpatialProfile {
    pub fn jet(&self, x: Point, dim: usize) -> ProfileJet {
        let mut jet = ProfileJet::default();
        match *self {
            SpatialProfile::Zero => {}
            SpatialProfile::Constant { amplitude } => jet.value = amplitude,
            SpatialProfile::Cosine { amplitude, wave, phase } => {
                let mut k = [0.0; MAX_DIM];
                let mut arg = phase;
                for j in 0..dim {
                    k[j] = TAU * wave[j] as f64;
                    arg += k[j] * x[j];
                }
                let (s, c) = arg.sin_cos();
                jet.value = amplitude * c;
                for a in 0..dim {
                    jet.gradient[a] = -amplitude * k[a] * s;
                    for b in 0..dim {
                        jet.hessian[a][b] = -amplitude * k[a] * k[b] * c;
                        for e in 0..dim {
                            jet.third[a][b][e] = amplitude * k[a] * k[b] * k[e] * s;
                        }
                    }
                }
            }
        }
        jet
    }

    pub fn value(&self, x: Point, dim: usize) -> f64 {
        self.jet(x, dim).value
    }

    pub fn sup(&self) -> f64 {
        match *self {
            SpatialProfile::Zero => 0.0,
            SpatialProfile::Constant { amplitude } | SpatialProfile::Cosine { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// One noise mode: a response and one spatial profile per direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMode {
    pub response: Response,
    pub profile: Vec<SpatialProfile>,
}

/// Finitely many noise modes `σ^k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub modes: Vec<NoiseMode>,
}

/// Per-cell, per-mode spatial data from which every Itô term is assembled.
///
/// With `D = Σ_j ∂_j T_j`:
/// `p_i = Σ_j ∂_j T_i T_j + T_i D` (so that `∂_j(T_i T_j) = p_i`) and
/// `q = D² + T·∇D` (so that `∂_i(T_i D) = q`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModeSample {
    pub t: [f64; MAX_DIM],
    pub div: f64,
    pub p: [f64; MAX_DIM],
    pub q: f64,
}

/// `ModeSample`s for every cell and mode, laid out `[cell][mode]`.
#[derive(Clone, Debug)]
pub struct NoiseSamples {
    pub grid: TorusGrid,
    pub mode_count: usize,
    samples: Vec<ModeSample>,
}

impl NoiseSamples {
    #[inline]
    pub fn get(&self, cell: usize, mode: usize) -> &ModeSample {
        &self.samples[cell * self.mode_count + mode]
    }

    #[inline]
    pub fn cell(&self, cell: usize) -> &[ModeSample] {
        &self.samples[cell * self.mode_count..(cell + 1) * self.mode_count]
    }
}

/// Itô drift coefficients at one `(x, r)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ItoCoefficients {
    pub a: [[f64; MAX_DIM]; MAX_DIM],
    pub b: [f64; MAX_DIM],
}

impl NoiseModel {
    pub fn deterministic() -> Self {
        Self { modes: Vec::new() }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        for (k, mode) in self.modes.iter().enumerate() {
            if mode.profile.len() != dim {
                return Err(Error::Config(format!(
                    "noise mode {k} has {} spatial profiles, expected {dim}",
                    mode.profile.len()
                )));
            }
            for p in &mode.profile {
                let finite = match *p {
                    SpatialProfile::Zero => true,
                    SpatialProfile::Constant { amplitude } => amplitude.is_finite(),
                    SpatialProfile::Cosine { amplitude, phase, .. } => amplitude.is_finite() && phase.is_finite(),
                };
                if !finite {
                    return Err(Error::Config(format!("noise mode {k} has a non-finite parameter")));
                }
            }
        }
        Ok(())
    }

    fn jets(&self, k: usize, x: Point, dim: usize) -> Vec<ProfileJet> {
        self.modes[k].profile.iter().map(|p| p.jet(x, dim)).collect()
    }

    /// `σ^{ik}(x, r)`.
    pub fn sigma(&self, k: usize, i: usize, x: Point, r: f64) -> f64 {
        let dim = self.modes[k].profile.len();
        self.modes[k].response.value(r) * self.modes[k].profile[i].value(x, dim)
    }

    /// `σ^{ik}_r`.
    pub fn sigma_r(&self, k: usize, i: usize, x: Point, r: f64) -> f64 {
        let dim = self.modes[k].profile.len();
        self.modes[k].response.slope(r) * self.modes[k].profile[i].value(x, dim)
    }

    /// `σ^{ik}_{x_j}`.
    pub fn sigma_x(&self, k: usize, i: usize, j: usize, x: Point, r: f64) -> f64 {
        let dim = self.modes[k].profile.len();
        self.modes[k].response.value(r) * self.modes[k].profile[i].jet(x, dim).gradient[j]
    }

    /// `σ^{ik}_{r x_j}`.
    pub fn sigma_rx(&self, k: usize, i: usize, j: usize, x: Point, r: f64) -> f64 {
        let dim = self.modes[k].profile.len();
        self.modes[k].response.slope(r) * self.modes[k].profile[i].jet(x, dim).gradient[j]
    }

    /// `a^{ij} = ½ σ_r^{ik} σ_r^{jk}`, `b^i = ½ σ_r^{ik} σ_{x_j}^{jk}`.
    pub fn ito_coefficients(&self, x: Point, r: f64, dim: usize) -> ItoCoefficients {
        let mut c = ItoCoefficients::default();
        for k in 0..self.mode_count() {
            let jets = self.jets(k, x, dim);
            let [s, ds, ..] = self.modes[k].response.derivatives(r);
            let div: f64 = (0..dim).map(|j| jets[j].gradient[j]).sum();
            for i in 0..dim {
                for j in 0..dim {
                    c.a[i][j] += 0.5 * ds * ds * jets[i].value * jets[j].value;
                }
                c.b[i] += 0.5 * ds * jets[i].value * s * div;
            }
        }
        c
    }

    pub fn sample(&self, grid: &TorusGrid) -> NoiseSamples {
        let dim = grid.dim();
        let kc = self.mode_count();
        let mut samples = Vec::with_capacity(grid.total_points() * kc);
        for x in grid.points() {
            for k in 0..kc {
                samples.push(self.mode_sample(k, x, dim));
            }
        }
        NoiseSamples { grid: *grid, mode_count: kc, samples }
    }

    pub fn mode_sample(&self, k: usize, x: Point, dim: usize) -> ModeSample {
        let jets = self.jets(k, x, dim);
        let mut m = ModeSample::default();
        let mut grad_div = [0.0; MAX_DIM];
        for i in 0..dim {
            m.t[i] = jets[i].value;
            m.div += jets[i].gradient[i];
            for j in 0..dim {
                grad_div[j] += jets[i].hessian[i][j];
            }
        }
        for i in 0..dim {
            m.p[i] = (0..dim).map(|j| jets[i].gradient[j] * jets[j].value).sum::<f64>() + m.t[i] * m.div;
        }
        m.q = m.div * m.div + (0..dim).map(|i| m.t[i] * grad_div[i]).sum::<f64>();
        m
    }

    /// Upper bound of the largest eigenvalue of `a(x, r)` over `|r| ≤ radius`.
    pub fn diffusion_bound(&self, radius: f64) -> f64 {
        self.modes
            .iter()
            .map(|mode| {
                let t2: f64 = mode.profile.iter().map(|p| p.sup().powi(2)).sum();
                0.5 * mode.response.slope_bound(radius).powi(2) * t2
            })
            .sum()
    }

    /// `Σ_k ‖σ^k‖²_{C³}` estimated by sampling `x` on `grid` and `r` on
    /// `|r| ≤ radius`; the norm is the sum of the sups of all partials of
    /// total order ≤ 3.
    pub fn c3_budget(&self, grid: &TorusGrid, radius: f64, r_samples: usize) -> f64 {
        let dim = grid.dim();
        let rs: Vec<f64> = (0..=r_samples.max(1))
            .map(|i| -radius + 2.0 * radius * i as f64 / r_samples.max(1) as f64)
            .collect();
        let mut total = 0.0;
        for mode in &self.modes {
            // sup over r of |s^{(a)}|, a = 0..3
            let mut s_sup = [0.0_f64; 4];
            for &r in &rs {
                let d = mode.response.derivatives(r);
                for a in 0..4 {
                    s_sup[a] = s_sup[a].max(d[a].abs());
                }
            }
            let mut norm = 0.0;
            for profile in &mode.profile {
                // sup over x of the spatial partials of order 0..3, summed per order
                let mut t_sup = [0.0_f64; 4];
                for x in grid.points() {
                    let j = profile.jet(x, dim);
                    t_sup[0] = t_sup[0].max(j.value.abs());
                    for a in 0..dim {
                        t_sup[1] = t_sup[1].max(j.gradient[a].abs());
                        for b in 0..dim {
                            t_sup[2] = t_sup[2].max(j.hessian[a][b].abs());
                            for e in 0..dim {
                                t_sup[3] = t_sup[3].max(j.third[a][b][e].abs());
                            }
                        }
                    }
                }
                let multi = |order: usize| (dim as f64).powi(order as i32);
                for a in 0..4 {
                    for o in 0..=(3 - a) {
                        norm += s_sup[a] * t_sup[o] * multi(o);
                    }
                }
            }
            total += norm * norm;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_mode(c: f64) -> NoiseModel {
        NoiseModel {
            modes: vec![NoiseMode { response: Response::Linear, profile: vec![SpatialProfile::Constant { amplitude: c }] }],
        }
    }

    #[test]
    fn linear_response_hand_values() {
        let c = 0.7;
        let ito = linear_mode(c).ito_coefficients([0.3, 0.0], 1.4, 1);
        assert!((ito.a[0][0] - c * c / 2.0).abs() < 1e-15);
        assert_eq!(ito.b[0], 0.0);
    }

    #[test]
    fn state_independent_noise_has_no_correction() {
        let nm = NoiseModel {
            modes: vec![NoiseMode {
                response: Response::Unit,
                profile: vec![
                    SpatialProfile::Cosine { amplitude: 0.4, wave: [1, 2], phase: 0.3 },
                    SpatialProfile::Cosine { amplitude: 0.2, wave: [2, 0], phase: 0.0 },
                ],
            }],
        };
        let ito = nm.ito_coefficients([0.1, 0.7], 2.0, 2);
        assert_eq!(ito, ItoCoefficients::default());
    }

    #[test]
    fn response_derivatives_match_differences() {
        for resp in [Response::Linear, Response::Sine, Response::Tanh] {
            for r in [-1.3, 0.0, 0.4, 2.2] {
                let h = 1e-5;
                let d = resp.derivatives(r);
                let dp = resp.derivatives(r + h);
                let dm = resp.derivatives(r - h);
                for a in 0..3 {
                    let fd = (dp[a] - dm[a]) / (2.0 * h);
                    assert!((fd - d[a + 1]).abs() < 1e-8, "{resp:?} r={r} a={a}");
                }
            }
        }
    }

    #[test]
    fn primitives_vanish_at_zero_and_differentiate_back() {
        for resp in [Response::Unit, Response::Linear, Response::Sine, Response::Tanh] {
            assert_eq!(resp.slope_squared_primitive(0.0), 0.0);
            assert_eq!(resp.product_primitive(0.0), 0.0);
            let r = 0.83;
            let h = 1e-5;
            let fd = (resp.slope_squared_primitive(r + h) - resp.slope_squared_primitive(r - h)) / (2.0 * h);
            assert!((fd - resp.slope(r).powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn mode_sample_identities() {
        // p_i = Σ_j ∂_j(T_i T_j), q = ∂_i(T_i D), checked by differences.
        let nm = NoiseModel {
            modes: vec![NoiseMode {
                response: Response::Sine,
                profile: vec![
                    SpatialProfile::Cosine { amplitude: 0.4, wave: [1, 2], phase: 0.3 },
                    SpatialProfile::Cosine { amplitude: 0.2, wave: [2, -1], phase: 1.0 },
                ],
            }],
        };
        let x = [0.21, 0.64];
        let h = 1e-5;
        let m = nm.mode_sample(0, x, 2);
        let at = |x: Point| nm.mode_sample(0, x, 2);
        for i in 0..2 {
            let mut fd = 0.0;
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                fd += (at(xp).t[i] * at(xp).t[j] - at(xm).t[i] * at(xm).t[j]) / (2.0 * h);
            }
            assert!((fd - m.p[i]).abs() < 1e-7);
        }
        let mut fd = 0.0;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            fd += (at(xp).t[i] * at(xp).div - at(xm).t[i] * at(xm).div) / (2.0 * h);
        }
        assert!((fd - m.q).abs() < 1e-6);
    }
}
