//! Discrete compensation measure: atoms `(t_j - t_{j-1}) h^d ν(t_j, x_p)`.

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::grid::{Point, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationMeasure {
    pub grid: TorusGrid,
    pub times: Vec<f64>,
    /// `atoms[j][p]`, one row per recorded instant.
    pub atoms: Vec<Vec<f64>>,
    pub total_mass: f64,
}

pub fn compensation_measure(traj: &Trajectory) -> CompensationMeasure {
    let hd = traj.grid().cell_volume();
    let atoms: Vec<Vec<f64>> = traj
        .penalty_fields
        .iter()
        .enumerate()
        .map(|(j, nu)| {
            let w = traj.weight(j) * hd;
            nu.values().iter().map(|v| w * v).collect()
        })
        .collect();
    let mut measure = CompensationMeasure { grid: traj.grid(), times: traj.times.clone(), atoms, total_mass: 0.0 };
    measure.total_mass = measure.pair_cells(|_, _| 1.0);
    measure
}

impl CompensationMeasure {
    /// `Σ_{j,p} atoms[j][p] g(j, p)`.
    pub fn pair_cells(&self, mut g: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for (j, row) in self.atoms.iter().enumerate() {
            for (p, a) in row.iter().enumerate() {
                if *a != 0.0 {
                    total += a * g(j, p);
                }
            }
        }
        total
    }

    /// `⟨g, ν⟩` for a function of `(t, x)`.
    pub fn pair(&self, g: impl Fn(f64, Point) -> f64) -> f64 {
        self.pair_cells(|j, p| g(self.times[j], self.grid.point(p)))
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }
}
