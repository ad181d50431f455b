use std::sync::Arc;

use nalgebra::DMatrix;
use swarmsphere_core::dynamics::{collision_residual, simulate, step_grid, velocity, DrivingField, Influence};
use swarmsphere_core::geometry::{dot, norm, sample_uniform, sample_vmf, SkewMatrix, UnitVector};
use swarmsphere_core::Ensemble;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn final_state(e0: &Ensemble, field: &DrivingField, t: f64, dt: f64) -> Vec<f64> {
    simulate(e0, field, t, dt, usize::MAX).unwrap().last().coords().to_vec()
}

#[test]
fn velocity_is_tangent() {
    let om = SkewMatrix::random(4, 1.0, 1);
    let x = UnitVector::new(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    let v = velocity(&x, &om, &[0.3, -1.0, 2.0, 0.1]).unwrap();
    assert!(dot(&v, x.as_slice()).abs() < 1e-15);
}

#[test]
fn rk4_is_fourth_order() {
    // error ratio under step halving, measured against a much finer run
    let e0 = sample_uniform(2, 12, 3)
        .unwrap()
        .with_shared_omega(SkewMatrix::random(3, 1.0, 4))
        .unwrap();
    let field = DrivingField::MeanField { kappa: 2.0 };
    let t = 1.0;
    let reference = final_state(&e0, &field, t, 1.0 / 1024.0);
    let e1 = max_diff(&final_state(&e0, &field, t, 1.0 / 16.0), &reference);
    let e2 = max_diff(&final_state(&e0, &field, t, 1.0 / 32.0), &reference);
    let ratio = e1 / e2;
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
}

#[test]
fn zero_coupling_is_a_pure_rotation() {
    // with X = 0 every point follows exp(Ωt)x; here Ω rotates the (0,1)-plane
    let rate = 1.3;
    let om = SkewMatrix::planar(3, 0, 1, rate).unwrap();
    let e0 = sample_uniform(2, 8, 5).unwrap().with_shared_omega(om).unwrap();
    let field = DrivingField::MeanField { kappa: 0.0 };
    let t = 2.0;
    let out = simulate(&e0, &field, t, 1e-3, usize::MAX).unwrap();
    let (s, c) = (rate * t).sin_cos();
    for (x, y) in e0.points().zip(out.last().points()) {
        // planar(0, 1, ·) carries e₀ toward e₁
        let expect = [c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]];
        let m = max_diff(y, &expect);
        assert!(m < 1e-11, "{m:e}");
    }
}

#[test]
fn step_grid_lands_on_end_time() {
    let (n, h) = step_grid(1.0, 0.3).unwrap();
    assert_eq!(n, 4);
    assert!((n as f64 * h - 1.0).abs() < 1e-15);
    let (n, _) = step_grid(5.0, 1e-3).unwrap();
    assert_eq!(n, 5000);
}

#[test]
fn snapshots_include_the_final_step() {
    let e0 = sample_uniform(2, 4, 1).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 1.0, 0.1, 3).unwrap();
    let t: Vec<f64> = traj.times.iter().map(|t| (t * 10.0).round()).collect();
    assert_eq!(t, vec![0.0, 3.0, 6.0, 9.0, 10.0]);
}

#[test]
fn every_field_variant_keeps_points_on_the_sphere() {
    let e0 = sample_vmf(&UnitVector::basis(3, 0), 1.0, 32, 2)
        .unwrap()
        .with_shared_omega(SkewMatrix::random(3, 0.5, 6))
        .unwrap();
    let v = DMatrix::from_row_slice(3, 3, &[0.9, -0.3, 0.0, 0.3, 0.9, 0.0, 0.0, 0.0, 1.0]);
    let fields = vec![
        DrivingField::MeanField { kappa: 1.0 },
        DrivingField::Frustrated { kappa: 1.0, v },
        DrivingField::winfree(1.0, 3),
        DrivingField::Winfree {
            kappa: 1.0,
            influence: Influence::Custom(Arc::new(|x: &[f64]| 1.0 + x[1] * x[1])),
            pole: UnitVector::basis(3, 2),
        },
        DrivingField::time_delay(1.0, 0.25, &e0, 1e-2).unwrap(),
        DrivingField::Prescribed(Arc::new(|t: f64| vec![t.cos(), t.sin(), 0.5])),
    ];
    for f in &fields {
        let traj = simulate(&e0, f, 3.0, 1e-2, 50).unwrap();
        for s in &traj.states {
            for p in s.points() {
                assert!((norm(p) - 1.0).abs() < 1e-12, "{f:?}");
            }
        }
    }
}

#[test]
fn delay_field_is_constant_history_before_tau() {
    let e0 = sample_uniform(2, 16, 7).unwrap();
    let dt = 1e-2;
    let delayed = DrivingField::time_delay(1.0, 0.5, &e0, dt).unwrap();
    let m0 = e0.mean();
    let frozen = DrivingField::Prescribed(Arc::new(move |_| m0.clone()));
    let a = final_state(&e0, &delayed, 0.5, dt);
    let b = final_state(&e0, &frozen, 0.5, dt);
    assert!(max_diff(&a, &b) < 1e-13, "{:e}", max_diff(&a, &b));
    // and it departs from the frozen field afterwards
    let a = final_state(&e0, &delayed, 1.5, dt);
    let b = final_state(&e0, &frozen, 1.5, dt);
    assert!(max_diff(&a, &b) > 1e-6);
}

#[test]
fn identical_rotation_preserves_pair_distances_identity() {
    let e0 = sample_uniform(2, 10, 12)
        .unwrap()
        .with_shared_omega(SkewMatrix::random(3, 1.0, 1))
        .unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 2.0, 1e-3, 10).unwrap();
    // trapezoid on the recorded grid bounds the residual
    assert!(collision_residual(&traj, 0, 1).unwrap() < 1e-4);
    assert!(collision_residual(&traj, 3, 7).unwrap() < 1e-4);
}
