//! Randomized invariants of the operators, the nonlinearity, the penalty
//! step, the entropies and the noise pipeline.

use obstacle_core::diagnostics::Entropy;
use obstacle_core::grid::{divergence, gradient, inner, inner_vector, laplacian, Field, TorusGrid, VectorField};
use obstacle_core::model::{
    DiffusionFunction, InitialData, ModelSpec, NoiseMode, NoiseModel, Nonlinearity, Obstacle, Reaction, Response,
    SmoothedNonlinearity, SpatialProfile,
};
use obstacle_core::sde_driver::{couple, wiener_increments, NoisePathSpec};
use obstacle_core::solver::{implicit_penalty, solve, SolverConfig};
use proptest::prelude::*;

fn grid_and_values() -> impl Strategy<Value = (TorusGrid, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=2, 3usize..=12).prop_flat_map(|(dim, n)| {
        let grid = TorusGrid::new(dim, n).unwrap();
        let len = grid.total_points();
        (
            Just(grid),
            prop::collection::vec(-10.0..10.0f64, len),
            prop::collection::vec(-10.0..10.0f64, len),
            prop::collection::vec(-10.0..10.0f64, len * dim),
        )
    })
}

fn field(grid: TorusGrid, v: Vec<f64>) -> Field {
    Field::from_values(grid, v).unwrap()
}

fn vector(grid: TorusGrid, v: &[f64]) -> VectorField {
    let len = grid.total_points();
    VectorField::new(v.chunks(len).map(|c| field(grid, c.to_vec())).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_minus_adjoint_of_divergence((grid, f, _, q) in grid_and_values()) {
        let f = field(grid, f);
        let q = vector(grid, &q);
        let lhs = inner_vector(&gradient(&f), &q).unwrap();
        let rhs = -inner(&f, &divergence(&q)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn laplacian_is_symmetric_and_mean_free((grid, f, g, _) in grid_and_values()) {
        let (f, g) = (field(grid, f), field(grid, g));
        let a = inner(&laplacian(&f), &g).unwrap();
        let b = inner(&f, &laplacian(&g)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        prop_assert!(laplacian(&f).mean().abs() <= 1e-9 / grid.spacing().powi(2));
        prop_assert!(inner(&laplacian(&f), &f).unwrap() <= 1e-9);
    }

    #[test]
    fn operators_commute_with_translations((grid, f, _, q) in grid_and_values(), axis in 0usize..2, offset in -3isize..3) {
        let axis = axis % grid.dim();
        let f = field(grid, f);
        let q = vector(grid, &q);
        let shifted_q = VectorField::new(q.components().iter().map(|c| c.shifted(axis, offset)).collect()).unwrap();
        prop_assert_eq!(laplacian(&f.shifted(axis, offset)), laplacian(&f).shifted(axis, offset));
        prop_assert_eq!(divergence(&shifted_q), divergence(&q).shifted(axis, offset));
    }

    #[test]
    fn smoothed_nonlinearity_bounds(m in 1.2..3.5f64, level in 1u32..200, s in -1.0..1.0f64) {
        let base = Nonlinearity::new(m, 1.0, 1.0).unwrap();
        let phi = SmoothedNonlinearity::new(base, level).unwrap();
        let n = level as f64;
        let r = s * n;
        prop_assert!(phi.sqrt_phi_prime(r) >= 2.0 / n);
        prop_assert!((base.sqrt_phi_prime(r) - phi.sqrt_phi_prime(r)).abs() <= 4.0 / n);
        let h = 1e-3 * n;
        prop_assert!(phi.phi(r + h) > phi.phi(r));
        prop_assert!((phi.phi(-r) + phi.phi(r)).abs() <= 1e-9 * (1.0 + phi.phi(r).abs()));
    }

    #[test]
    fn implicit_penalty_solves_its_equation(u in -5.0..5.0f64, psi in -5.0..5.0f64, dt in 1e-6..1e-1f64, eps in 1e-6..1.0f64) {
        let v = implicit_penalty(u, psi, dt, eps);
        let residual = v - u - dt / eps * (psi - v).max(0.0);
        prop_assert!(residual.abs() <= 1e-12 * (1.0 + u.abs() + psi.abs() * dt / eps));
        prop_assert!(v >= u.min(psi) - 1e-12 && v <= u.max(psi) + 1e-12);
        prop_assert_eq!(v >= psi, u >= psi);
    }

    #[test]
    fn smoothed_entropy_properties(delta in 1e-3..2.0f64, shift in -1.0..1.0f64, a in -3.0..3.0f64, b in -3.0..3.0f64, t in 0.0..1.0f64) {
        let eta = Entropy::smoothed(delta, shift);
        let mid = t * a + (1.0 - t) * b;
        prop_assert!(eta.value(mid) <= t * eta.value(a) + (1.0 - t) * eta.value(b) + 1e-12);
        prop_assert!((eta.value(a) - (a - shift).abs()).abs() <= delta + 1e-12);
        prop_assert!(eta.derivative(a).abs() <= 1.0 + 1e-12);
        prop_assert!(eta.second_derivative(a) >= 0.0);
        if (a - shift).abs() >= delta {
            prop_assert_eq!(eta.second_derivative(a), 0.0);
        }
    }

    #[test]
    fn increments_are_reproducible_and_keyed(seed in any::<u64>(), member in 0u64..1000, variant in 1u64..50) {
        let spec = NoisePathSpec::new(seed, 3, 20, 1e-3).with_trajectory(member);
        let block = wiener_increments(&spec);
        prop_assert_eq!(&block, &wiener_increments(&spec));
        prop_assert_eq!(&block, &wiener_increments(&couple(&spec, variant)));
        prop_assert_eq!(block.get(7, 2), spec.increment(7, 2));
        let other = wiener_increments(&spec.with_trajectory(member + 1));
        prop_assert_ne!(&block, &other);
    }
}

#[test]
fn noisy_runs_are_bitwise_reproducible() {
    let grid = TorusGrid::new(2, 12).unwrap();
    let model = ModelSpec {
        dim: 2,
        nonlinearity: Nonlinearity::new(2.0, 1.0, 1.0).unwrap(),
        reaction: Reaction::Sine { amplitude: 0.2, offset: 0.0 },
        obstacle: Obstacle::Cosine { mean: 0.6, amplitude: 0.2, wave: [1, 1], speed: 1.0 },
        noise: NoiseModel {
            modes: vec![NoiseMode {
                response: Response::Tanh,
                profile: vec![
                    SpatialProfile::Cosine { amplitude: 0.05, wave: [1, 0], phase: 0.0 },
                    SpatialProfile::Constant { amplitude: 0.03 },
                ],
            }],
        },
    };
    let ic = InitialData::Cosine { mean: 1.0, amplitude: 0.1, wave: [0, 1] }.sample(&grid, 2.0).unwrap();
    let cfg = SolverConfig::new(grid, 0.02, 2e-4, 1e-3, 8);
    let noise = NoisePathSpec::new(9, 1, cfg.step_count().unwrap(), cfg.dt);
    let a = solve(&cfg, &model, &ic, &noise).unwrap();
    let b = solve(&cfg, &model, &ic, &noise).unwrap();
    assert_eq!(a, b);
    let c = solve(&cfg, &model, &ic, &noise.with_trajectory(1)).unwrap();
    assert_ne!(a.final_state(), c.final_state());
    let start = a.states[0].mean();
    let drift: f64 = a.records.iter().map(|r| r.mass_defect.abs()).sum();
    assert!(drift <= 1e-12 * a.records.len() as f64 * start.abs().max(1.0));
}
