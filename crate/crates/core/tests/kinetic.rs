use swarmsphere_core::dynamics::{simulate, velocity, DrivingField};
use swarmsphere_core::geometry::{dot, sample_uniform, sample_vmf, SkewMatrix, UnitVector};
use swarmsphere_core::kinetic::{
    antipodal_ensemble, ball_mass, bipolar_report, dr2_dt_analytic, instability_experiment, order_parameter,
    per_omega_conservation, sandwich_bounds, simulate_with_order_parameter, InstabilityConfig,
    OrderParameterSeries,
};
use swarmsphere_core::functionals::conservation_drift;
use swarmsphere_core::{Ensemble, Error};

fn blobs(n_plus: usize, n_minus: usize) -> Ensemble {
    let e = [0.0, 0.0, 1.0];
    let mut coords = Vec::new();
    for i in 0..n_plus + n_minus {
        let s = if i < n_plus { 1.0 } else { -1.0 };
        coords.extend_from_slice(&e.map(|v| s * v));
    }
    Ensemble::from_flat(3, coords).unwrap()
}

#[test]
fn order_parameter_examples() {
    assert_eq!(order_parameter(&blobs(5, 0)).0, 1.0);
    assert_eq!(order_parameter(&blobs(4, 4)).0, 0.0);
    let q: f64 = 7.0 / 10.0;
    assert!((order_parameter(&blobs(7, 3)).0 - (2.0 * q - 1.0).powi(2)).abs() < 1e-15);
}

#[test]
fn analytic_rate_vanishes_on_clusters() {
    assert_eq!(dr2_dt_analytic(&blobs(6, 0)), 0.0);
    assert_eq!(dr2_dt_analytic(&blobs(6, 2)), 0.0);
    assert!(dr2_dt_analytic(&sample_uniform(2, 50, 1).unwrap()) > 0.0);
}

#[test]
fn analytic_rate_matches_centered_difference() {
    let e0 = sample_vmf(&UnitVector::basis(3, 0), 0.5, 400, 2).unwrap();
    let (traj, r2) = simulate_with_order_parameter(&e0, &DrivingField::MeanField { kappa: 1.0 }, 3.0, 1e-3, 1).unwrap();
    let mut worst: f64 = 0.0;
    for i in 1..r2.len() - 1 {
        let fd = (r2[i + 1] - r2[i - 1]) / 2e-3;
        worst = worst.max((fd - dr2_dt_analytic(&traj.states[i])).abs());
    }
    assert!(worst <= 1e-4, "{worst:e}");
}

#[test]
fn common_rotation_drops_out_of_the_rate() {
    // d/dt R² = 2⟨x_c, mean ẋ⟩ computed from the velocity field directly
    let ens = sample_vmf(&UnitVector::basis(3, 1), 1.0, 200, 3).unwrap();
    let (_, xc) = order_parameter(&ens);
    let rate = |om: &SkewMatrix| {
        let mut mean_v = vec![0.0; 3];
        for p in ens.points() {
            let v = velocity(&UnitVector::new(p.to_vec()).unwrap(), om, &xc).unwrap();
            mean_v.iter_mut().zip(&v).for_each(|(a, b)| *a += b / ens.len() as f64);
        }
        2.0 * dot(&xc, &mean_v)
    };
    let a = rate(&SkewMatrix::zero(3));
    let b = rate(&SkewMatrix::random(3, 5.0, 9));
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    assert!((a - dr2_dt_analytic(&ens)).abs() <= 1e-12);
}

#[test]
fn ball_mass_examples() {
    let c = blobs(10, 0);
    let e = UnitVector::basis(3, 2);
    assert_eq!(ball_mass(&c, &e, 0.1).unwrap(), 1.0);
    assert_eq!(ball_mass(&c, &e.neg(), 0.1).unwrap(), 0.0);
    let g = sample_uniform(2, 500, 4).unwrap();
    assert_eq!(ball_mass(&g, &e, 2.0 - 1e-9).unwrap(), 1.0);
    let b = blobs(3, 7);
    assert!((ball_mass(&b, &e, 0.5).unwrap() - 0.3).abs() < 1e-15);
    assert!(ball_mass(&b, &e, 2.5).is_err());
}

#[test]
fn monotone_order_parameter_and_sandwich_bounds() {
    let e0 = sample_uniform(3, 300, 6).unwrap().with_shared_omega(SkewMatrix::random(4, 1.0, 1)).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 10.0, 1e-2, 5).unwrap();
    let s = OrderParameterSeries::from_trajectory(&traj, 1.0);
    assert!(s.max_decrease() <= 1e-10);
    for (r2, e) in s.r2.iter().zip(&traj.states) {
        assert!((0.0..=1.0 + 1e-15).contains(r2));
        let (lo, mid) = sandwich_bounds(e).unwrap();
        assert!(lo <= mid + 1e-15 && mid <= 1.0 + 1e-15);
    }
    let rep = bipolar_report(&traj, 0.5).unwrap();
    assert!(rep.r_infinity_estimate <= 1.0 && rep.r_infinity_estimate >= s.r2[0].sqrt());
    for snap in &rep.snapshots {
        assert!(snap.mass_plus + snap.mass_minus <= 1.0);
    }
}

#[test]
fn consensus_stays_in_the_plus_ball() {
    let e0 = sample_vmf(&UnitVector::basis(3, 0), 1e4, 50, 1).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 2.0, 1e-2, 20).unwrap();
    let rep = bipolar_report(&traj, 0.5).unwrap();
    for s in &rep.snapshots {
        assert_eq!((s.mass_plus, s.mass_minus), (1.0, 0.0));
    }
}

#[test]
fn symmetric_data_has_no_gamma() {
    let e0 = antipodal_ensemble(20, 2, 3).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 1.0, 1e-2, 10).unwrap();
    assert_eq!(bipolar_report(&traj, 0.5), Err(Error::GammaUndefined));
}

#[test]
fn long_run_reaches_bipolar_limit() {
    let e0 = sample_vmf(&UnitVector::basis(3, 2), 0.5, 300, 8).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 40.0, 1e-2, 100).unwrap();
    let rep = bipolar_report(&traj, 0.5).unwrap();
    let r = rep.r_infinity_estimate;
    assert!(rep.mass_plus + rep.mass_minus >= 0.99);
    assert!((rep.mass_plus - 0.5 * (1.0 + r)).abs() <= 0.05);
    assert!((rep.mass_minus - 0.5 * (1.0 - r)).abs() <= 0.05);
}

#[test]
fn instability_requires_four_particles() {
    assert!(instability_experiment(&InstabilityConfig::new(2, 2, 1.0, 1e-3, 1)).is_err());
    assert!(antipodal_ensemble(5, 2, 1).is_err());
}

#[test]
fn small_instability_experiment() {
    let mut cfg = InstabilityConfig::new(100, 2, 1.0, 1e-3, 4);
    cfg.t_end = 30.0;
    let rep = instability_experiment(&cfg).unwrap();
    assert!(rep.symmetric_max_r <= 1e-6);
    assert!(rep.perturbed_final_r >= 0.99);
    assert!(rep.perturbed_initial_r > 0.0);
    // every selected tuple is itself a constant of motion; the series only
    // moves when the selection changes
    assert!(rep.mixed_ratio_max >= rep.mixed_ratio_initial);
    assert!(!rep.mixed_ratio_series.is_empty());
    assert!(rep.fixed_tuple_drift <= 1e-6, "{:e}", rep.fixed_tuple_drift);
    assert!(rep.control_drift <= 1e-6);
    assert!(rep.final_plus.min(rep.final_minus) <= 1);
}

#[test]
fn single_group_reduces_to_plain_conservation() {
    let om = SkewMatrix::random(3, 1.0, 2);
    let e0 = sample_uniform(2, 40, 3).unwrap().with_shared_omega(om).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 2.0, 1e-3, 100).unwrap();
    let rep = per_omega_conservation(&traj, 0.3, 2, 50, 7).unwrap();
    assert_eq!(rep.groups.len(), 1);
    assert!(rep.mixed.is_none());
    let plain = conservation_drift(&traj, 0.3, 2, 50, 7).unwrap();
    assert!(rep.groups[0].report.max_drift <= 1e-6 && plain.max_drift <= 1e-6);
}

#[test]
fn two_groups_conserve_within_but_not_across() {
    let e0 = sample_uniform(2, 48, 9).unwrap();
    let omegas: Vec<SkewMatrix> = (0..48)
        .map(|i| {
            if i < 24 {
                SkewMatrix::zero(3)
            } else {
                SkewMatrix::planar(3, 0, 1, 1.0).unwrap()
            }
        })
        .collect();
    let e0 = e0.with_omegas(omegas).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 5.0, 1e-3, 100).unwrap();
    let rep = per_omega_conservation(&traj, 0.3, 2, 100, 1).unwrap();
    assert_eq!(rep.groups.len(), 2);
    for g in &rep.groups {
        assert!(g.report.max_drift <= 1e-6, "{:e}", g.report.max_drift);
    }
    assert!(rep.mixed.as_ref().unwrap().max_drift >= 1e-2);
    assert!(rep.beta_constant);
    assert!(rep.beta.iter().all(|b| b == &rep.beta[0]));
}

#[test]
fn tiny_groups_are_skipped() {
    let e0 = sample_uniform(2, 12, 1).unwrap();
    let omegas: Vec<SkewMatrix> = (0..12)
        .map(|i| SkewMatrix::planar(3, 0, 1, if i < 10 { 0.0 } else { 1.0 }).unwrap())
        .collect();
    let traj = simulate(&e0.with_omegas(omegas).unwrap(), &DrivingField::MeanField { kappa: 1.0 }, 0.5, 1e-2, 10).unwrap();
    let rep = per_omega_conservation(&traj, 0.3, 2, 10, 1).unwrap();
    assert_eq!(rep.groups.len(), 1);
    assert_eq!(rep.skipped, vec![(1, 2)]);
}
