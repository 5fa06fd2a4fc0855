//! Obstacle, reaction and initial-data families.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{periodic_offset, Field, Point, TorusGrid};

/// Level used for "no obstacle"; far below any state the solver visits.
pub const ABSENT_LEVEL: f64 = -1e9;

fn wave_phase(wave: [i32; 2], x: Point, dim: usize) -> f64 {
    (0..dim).map(|j| TAU * wave[j] as f64 * x[j]).sum()
}

fn torus_distance(x: Point, c: Point, dim: usize) -> f64 {
    (0..dim).map(|j| periodic_offset(x[j], c[j]).powi(2)).sum::<f64>().sqrt()
}

/// `C²` ramp from 0 to 1 on `[0, 1]` with vanishing first and second
/// derivatives at both ends.
fn smoothstep(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let v = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
    let d = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (v, d)
}

/// Regularity class of the obstacle in `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    Holder,
    C2,
}

/// Lower obstacle `ψ(t, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Obstacle {
    Absent,
    Constant { level: f64 },
    /// `mean + A cos(2π(k·x - speed t))`.
    Cosine { mean: f64, amplitude: f64, wave: [i32; 2], #[serde(default)] speed: f64 },
    /// `peak - slope |x - center|` (torus distance): Lipschitz, not `C²`.
    Roof { peak: f64, slope: f64, center: [f64; 2] },
    /// `base + A cos(2π k·x)`, lifted by `jump` over `[raise_time, raise_time + rise_duration]`.
    Raised {
        base: f64,
        #[serde(default)]
        amplitude: f64,
        #[serde(default)]
        wave: [i32; 2],
        jump: f64,
        raise_time: f64,
        rise_duration: f64,
    },
}

impl Obstacle {
    pub fn value(&self, t: f64, x: Point, dim: usize) -> f64 {
        match *self {
            Obstacle::Absent => ABSENT_LEVEL,
            Obstacle::Constant { level } => level,
            Obstacle::Cosine { mean, amplitude, wave, speed } => {
                mean + amplitude * (wave_phase(wave, x, dim) - TAU * speed * t).cos()
            }
            Obstacle::Roof { peak, slope, center } => peak - slope * torus_distance(x, center, dim),
            Obstacle::Raised { base, amplitude, wave, jump, raise_time, rise_duration } => {
                let (ramp, _) = smoothstep((t - raise_time) / rise_duration);
                base + amplitude * wave_phase(wave, x, dim).cos() + jump * ramp
            }
        }
    }

    pub fn time_derivative(&self, t: f64, x: Point, dim: usize) -> f64 {
        match *self {
            Obstacle::Cosine { amplitude, wave, speed, .. } => {
                amplitude * TAU * speed * (wave_phase(wave, x, dim) - TAU * speed * t).sin()
            }
            Obstacle::Raised { jump, raise_time, rise_duration, .. } => {
                let (_, d) = smoothstep((t - raise_time) / rise_duration);
                jump * d / rise_duration
            }
            _ => 0.0,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match *self {
            Obstacle::Cosine { speed, .. } => speed == 0.0,
            Obstacle::Raised { jump, .. } => jump == 0.0,
            _ => true,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            Obstacle::Roof { .. } => Smoothness::Holder,
            _ => Smoothness::C2,
        }
    }

    pub fn sample(&self, grid: &TorusGrid, t: f64) -> Field {
        let dim = grid.dim();
        Field::from_fn(*grid, |x| self.value(t, x, dim))
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Obstacle::Absent => true,
            Obstacle::Constant { level } => level.is_finite(),
            Obstacle::Cosine { mean, amplitude, speed, .. } => mean.is_finite() && amplitude.is_finite() && speed.is_finite(),
            Obstacle::Roof { peak, slope, center } => {
                peak.is_finite() && slope.is_finite() && center.iter().all(|c| c.is_finite())
            }
            Obstacle::Raised { base, amplitude, jump, raise_time, rise_duration, .. } => {
                [base, amplitude, jump, raise_time].iter().all(|v| v.is_finite()) && rise_duration > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid obstacle parameters: {self:?}")))
        }
    }
}

/// Reaction term `f(t, x, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reaction {
    Zero,
    Constant { value: f64 },
    /// `rate r + offset`.
    Linear { rate: f64, #[serde(default)] offset: f64 },
    /// `amplitude sin r + offset`.
    Sine { amplitude: f64, #[serde(default)] offset: f64 },
    /// `amplitude cos(2π k·x)`, independent of `r`.
    Spatial { amplitude: f64, wave: [i32; 2] },
}

impl Reaction {
    pub fn value(&self, _t: f64, x: Point, r: f64, dim: usize) -> f64 {
        match *self {
            Reaction::Zero => 0.0,
            Reaction::Constant { value } => value,
            Reaction::Linear { rate, offset } => rate * r + offset,
            Reaction::Sine { amplitude, offset } => amplitude * r.sin() + offset,
            Reaction::Spatial { amplitude, wave } => amplitude * wave_phase(wave, x, dim).cos(),
        }
    }

    /// Bound on `|f_r|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Reaction::Linear { rate, .. } => rate.abs(),
            Reaction::Sine { amplitude, .. } => amplitude.abs(),
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Reaction::Zero)
    }
}

/// Initial data `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    Constant { value: f64 },
    /// `mean + A cos(2π k·x)`.
    Cosine { mean: f64, amplitude: f64, wave: [i32; 2] },
    /// `base + height (1 - |x-c|²/w²)₊³`.
    Bump { base: f64, height: f64, width: f64, center: [f64; 2] },
    /// Porous-medium self-similar profile at time `t0`.
    Barenblatt { mass: f64, t0: f64, center: [f64; 2] },
}

impl InitialData {
    pub fn sample(&self, grid: &TorusGrid, m: f64) -> Result<Field> {
        let dim = grid.dim();
        Ok(match *self {
            InitialData::Constant { value } => Field::constant(*grid, value),
            InitialData::Cosine { mean, amplitude, wave } => {
                Field::from_fn(*grid, |x| mean + amplitude * wave_phase(wave, x, dim).cos())
            }
            InitialData::Bump { base, height, width, center } => Field::from_fn(*grid, |x| {
                let q = 1.0 - (torus_distance(x, center, dim) / width).powi(2);
                base + height * q.max(0.0).powi(3)
            }),
            InitialData::Barenblatt { mass, t0, center } => {
                let p = crate::validation::BarenblattParams::new(m, dim, mass, t0, center)?;
                let mut values = Vec::with_capacity(grid.total_points());
                for x in grid.points() {
                    values.push(crate::validation::barenblatt(x, 0.0, &p)?);
                }
                Field::from_values(*grid, values)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raised_obstacle_ramps_smoothly() {
        let ob = Obstacle::Raised { base: 0.5, amplitude: 0.0, wave: [0, 0], jump: 1.0, raise_time: 0.1, rise_duration: 0.01 };
        assert_eq!(ob.value(0.0, [0.3, 0.0], 1), 0.5);
        assert_eq!(ob.value(0.2, [0.3, 0.0], 1), 1.5);
        let t = 0.104;
        let h = 1e-7;
        let fd = (ob.value(t + h, [0.0; 2], 1) - ob.value(t - h, [0.0; 2], 1)) / (2.0 * h);
        assert!((fd - ob.time_derivative(t, [0.0; 2], 1)).abs() < 1e-5);
    }

    #[test]
    fn moving_cosine_time_derivative() {
        let ob = Obstacle::Cosine { mean: 0.1, amplitude: 0.3, wave: [1, 2], speed: 0.7 };
        let (t, x) = (0.3, [0.2, 0.9]);
        let h = 1e-6;
        let fd = (ob.value(t + h, x, 2) - ob.value(t - h, x, 2)) / (2.0 * h);
        assert!((fd - ob.time_derivative(t, x, 2)).abs() < 1e-7);
    }

    #[test]
    fn roof_is_periodic_and_tagged_holder() {
        let ob = Obstacle::Roof { peak: 1.0, slope: 2.0, center: [0.1, 0.0] };
        assert!((ob.value(0.0, [0.9, 0.0], 1) - 0.6).abs() < 1e-12);
        assert_eq!(ob.smoothness(), Smoothness::Holder);
    }

    #[test]
    fn reaction_lipschitz_bounds() {
        assert_eq!(Reaction::Sine { amplitude: -0.5, offset: 0.0 }.lipschitz(), 0.5);
        assert_eq!(Reaction::Spatial { amplitude: 3.0, wave: [1, 0] }.lipschitz(), 0.0);
    }
}
