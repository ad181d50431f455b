//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use swarmsphere_cli::config::parse_str;
use swarmsphere_cli::run;
use swarmsphere_core::dynamics::{simulate, DrivingField, Trajectory};
use swarmsphere_core::functionals::{
    conservation_drift, divergence_probe, drift_for_tuples, existence_check, reduced_pair_integral, sample_tuples,
    DivergenceClass,
};
use swarmsphere_core::geometry::{norm, sample_uniform, sample_vmf, BallVector, SkewMatrix, UnitVector};
use swarmsphere_core::kinetic::{
    bipolar_report, dr2_dt_analytic, instability_experiment, order_parameter, per_omega_conservation,
    simulate_with_order_parameter, InstabilityConfig,
};
use swarmsphere_core::ws_transform::{identity_residuals, push_forward, ws_evolve};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn reference_run() -> (Trajectory, SkewMatrix, f64) {
    let om = SkewMatrix::random(3, 1.0, 7);
    let e0 = sample_uniform(2, 64, 11).unwrap().with_shared_omega(om.clone()).unwrap();
    let start = Instant::now();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 5.0, 1e-3, 1).unwrap();
    (traj, om, start.elapsed().as_secs_f64())
}

fn push_forward_equivalence(traj: &Trajectory, om: &SkewMatrix, sim_time: f64) -> Verdict {
    let start = Instant::now();
    let replay = DrivingField::Replay(traj.replay().unwrap());
    let run = ws_evolve(om, &replay, 5.0, 1e-3).unwrap();
    let mut worst: f64 = 0.0;
    for c in 1..=10 {
        let i = c * 500;
        let pushed = push_forward(&run.states[i], traj.initial()).unwrap();
        worst = worst.max(max_abs_diff(pushed.coords(), traj.states[i].coords()));
    }
    let secs = sim_time + start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "push-forward equivalence",
        pass: worst <= 1e-5 && secs < 30.0,
        detail: format!("max mismatch {worst:.3e} (gate 1e-5) over 10 checkpoints, {secs:.2} s (gate 30 s)"),
    }
}

fn cross_ratio_conservation(traj: &Trajectory) -> Verdict {
    let sub = thin(traj, 100);
    let e0 = traj.initial();
    let all: Vec<usize> = (0..e0.len()).collect();
    let c2 = sample_tuples(e0, &all, 2, 100, 21).unwrap();
    let c3 = sample_tuples(e0, &all, 3, 50, 22).unwrap();
    let d2 = drift_for_tuples(&sub, &c2, 1.0).unwrap().max_tuple_drift;
    let d3 = drift_for_tuples(&sub, &c3, 1.0).unwrap().max_tuple_drift;
    Verdict {
        id: 2,
        name: "cross-ratio / cycle conservation",
        pass: d2 <= 1e-6 && d3 <= 1e-6,
        detail: format!("C_2 drift {d2:.3e}, C_3 drift {d3:.3e} (gate 1e-6)"),
    }
}

fn thin(traj: &Trajectory, every: usize) -> Trajectory {
    let idx: Vec<usize> = (0..traj.len()).step_by(every).collect();
    Trajectory {
        times: idx.iter().map(|&i| traj.times[i]).collect(),
        states: idx.iter().map(|&i| traj.states[i].clone()).collect(),
        field_samples: idx.iter().map(|&i| traj.field_samples[i].clone()).collect(),
    }
}

fn functional_conservation(traj: &Trajectory) -> Verdict {
    let sub = thin(traj, 100);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &k in &[2, 3] {
        for &p in &[0.3, -0.3] {
            let d = conservation_drift(&sub, p, k, 100, 31).unwrap().max_drift;
            worst = worst.max(d);
            parts.push(format!("p={p} k={k}: {d:.2e}"));
        }
    }
    let zero = conservation_drift(&sub, 0.0, 2, 100, 31).unwrap().max_drift;
    Verdict {
        id: 3,
        name: "functional conservation",
        pass: worst <= 1e-6 && zero == 0.0,
        detail: format!("{} (gate 1e-6); p=0 drift {zero:e} (gate exactly 0)", parts.join(", ")),
    }
}

fn existence_boundary() -> Verdict {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut spread: f64 = 0.0;
    let mut points = 0;
    for d in 1..=3usize {
        for j in -6..=6 {
            let p = 0.25 * j as f64;
            let r = divergence_probe(p, d).unwrap();
            points += 1;
            if (r.classification == DivergenceClass::Convergent) != existence_check(p, d) {
                mismatches.push(format!("(p={p}, d={d})"));
            }
            if p == d as f64 / 2.0 {
                spread = spread.max(r.decade_spread);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 4,
        name: "existence boundary",
        pass: mismatches.is_empty() && spread <= 0.1 && secs < 10.0,
        detail: format!(
            "{} mismatches in {points} grid points, log-decade spread at p=d/2 {spread:.2e} (gate 0.1), {secs:.2} s (gate 10 s)",
            mismatches.len()
        ),
    }
}

fn integral_anchors() -> Verdict {
    let four_pi = 4.0 * std::f64::consts::PI;
    let a = (reduced_pair_integral(0.0, 2, 0.0).unwrap() - four_pi).abs();
    let b = (reduced_pair_integral(-1.0, 1, 0.0).unwrap() - four_pi).abs();
    Verdict {
        id: 5,
        name: "reduced-integral anchors",
        pass: a <= 1e-9 && b <= 1e-9,
        detail: format!("|J(d=2,p=0) - 4pi| = {a:.2e}, |J(d=1,p=-1) - 4pi| = {b:.2e} (gate 1e-9)"),
    }
}

fn kinetic_run() -> (Verdict, Verdict) {
    let start = Instant::now();
    let om = SkewMatrix::random(3, 1.0, 41);
    let e0 = sample_vmf(&UnitVector::basis(3, 2), 0.5, 1000, 42)
        .unwrap()
        .with_shared_omega(om)
        .unwrap();
    let r0 = order_parameter(&e0).0.sqrt();
    let (dt, every) = (1e-2, 10);
    let (traj, r2) = simulate_with_order_parameter(&e0, &DrivingField::MeanField { kappa: 1.0 }, 50.0, dt, every).unwrap();
    let decrease = r2.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let mut fd_err: f64 = 0.0;
    let steps = r2.len() - 1;
    for (j, state) in traj.states.iter().enumerate() {
        let n = j * every;
        if n == 0 || n >= steps {
            continue;
        }
        let fd = (r2[n + 1] - r2[n - 1]) / (2.0 * dt);
        fd_err = fd_err.max((fd - dr2_dt_analytic(state)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let six = Verdict {
        id: 6,
        name: "order-parameter monotonicity and derivative identity",
        pass: decrease <= 1e-10 && fd_err <= 1e-4 && secs < 60.0,
        detail: format!(
            "worst per-step R^2 decrease {decrease:.2e} (gate 1e-10), max |analytic - FD| {fd_err:.2e} (gate 1e-4), {secs:.2} s (gate 60 s)"
        ),
    };
    let rep = bipolar_report(&traj, 0.5).unwrap();
    let r = rep.r_infinity_estimate;
    let dp = (rep.mass_plus - 0.5 * (1.0 + r)).abs();
    let dm = (rep.mass_minus - 0.5 * (1.0 - r)).abs();
    let seven = Verdict {
        id: 7,
        name: "complete synchronization",
        pass: r0 >= 0.1 && r >= 0.99 && dp <= 0.05 && dm <= 0.05,
        detail: format!(
            "R(0) = {r0:.3} (need >= 0.1), R(t_end) = {r:.6} (gate 0.99), mass offsets {dp:.2e} / {dm:.2e} (gate 0.05)"
        ),
    };
    (six, seven)
}

fn bipolar_instability() -> Verdict {
    let rep = instability_experiment(&InstabilityConfig::new(1000, 2, 1.0, 1e-3, 51)).unwrap();
    let sym = rep.symmetric_final_r.max(rep.symmetric_max_r);
    Verdict {
        id: 8,
        name: "bipolar instability",
        pass: sym <= 1e-6 && rep.perturbed_final_r >= 0.99 && rep.mixed_ratio_max >= 1e3,
        detail: format!(
            "symmetric max R {sym:.2e} (gate 1e-6), perturbed R(t_end) {:.6} (gate 0.99), mixed-cluster ratio max {:.3e} (gate 1e3; {:.3e} at t = 0)",
            rep.perturbed_final_r, rep.mixed_ratio_max, rep.mixed_ratio_initial
        ),
    }
}

fn heterogeneous_conservation() -> Verdict {
    let n = 64;
    let omegas: Vec<SkewMatrix> = (0..n)
        .map(|i| SkewMatrix::planar(3, 0, 1, if i < n / 2 { 0.0 } else { 1.0 }).unwrap())
        .collect();
    let e0 = sample_uniform(2, n, 61).unwrap().with_omegas(omegas).unwrap();
    let traj = simulate(&e0, &DrivingField::MeanField { kappa: 1.0 }, 5.0, 1e-3, 100).unwrap();
    let rep = per_omega_conservation(&traj, 0.3, 2, 100, 62).unwrap();
    let within = rep
        .groups
        .iter()
        .map(|g| g.report.max_drift.max(g.report.max_tuple_drift))
        .fold(0.0, f64::max);
    let mixed = rep.mixed.as_ref().map_or(0.0, |m| m.max_drift);
    let exact = rep.beta_constant && rep.beta.iter().all(|b| b == &rep.beta[0]);
    Verdict {
        id: 9,
        name: "heterogeneous conservation",
        pass: rep.groups.len() == 2 && within <= 1e-6 && mixed >= 1e-2 && exact,
        detail: format!(
            "within-group drift {within:.2e} (gate 1e-6), mixed-tuple drift {mixed:.3e} (gate 1e-2), beta constant: {exact}"
        ),
    }
}

fn identity_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let dim = 2 + (i % 4) as usize;
        let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let dir = gauss(&mut rng);
        let radius = rng.random::<f64>() * 0.999;
        let w: Vec<f64> = dir.iter().map(|v| v * radius / norm(&dir)).collect();
        let m = gauss(&mut rng);
        let m: Vec<f64> = m.iter().map(|v| v / norm(&m)).collect();
        let x: Vec<f64> = gauss(&mut rng).iter().map(|v| 2.0 * v).collect();
        let om = SkewMatrix::random(dim, 1.0, 1000 + i);
        let r = identity_residuals(&BallVector::new(w).unwrap(), &UnitVector::new(m).unwrap(), &om, &x).unwrap();
        worst.0 = worst.0.max(r.w_radial);
        worst.1 = worst.1.max(r.chord);
    }
    Verdict {
        id: 10,
        name: "algebraic identity suite",
        pass: worst.0 <= 1e-12 && worst.1 <= 1e-12,
        detail: format!(
            "max residuals over 1000 states: radial {:.2e}, chord {:.2e} (gate 1e-12)",
            worst.0, worst.1
        ),
    }
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).map_err(|e| format!("{name:?}: {e}"))?;
        let same = if name == "manifest.json" {
            let mut u: Value = serde_json::from_slice(&x).unwrap();
            let mut v: Value = serde_json::from_slice(&y).unwrap();
            u["wall_time_seconds"] = Value::Null;
            v["wall_time_seconds"] = Value::Null;
            u == v
        } else {
            x == y
        };
        if !same {
            return Err(format!("{name:?} differs"));
        }
    }
    Ok(names.len())
}

fn determinism() -> Verdict {
    let configs = [
        r#"{"experiment": "simulate", "N": 16, "t_end": 1.0, "dt": 1e-2, "record_every": 10,
            "field": {"kind": "time_delay", "tau": 0.3}}"#,
        r#"{"experiment": "ws-verify", "N": 16, "t_end": 0.5, "dt": 1e-3, "record_every": 50,
            "omega": {"kind": "random", "seed": 2, "scale": 1.0}}"#,
        r#"{"experiment": "functional", "N": 32, "t_end": 1.0, "dt": 1e-2, "record_every": 10, "m": 200, "k": 3}"#,
        r#"{"experiment": "existence", "d_list": [1, 2], "p_list": [-1.0, 0.25, 0.5, 1.0]}"#,
        r#"{"experiment": "kinetic", "N": 100, "t_end": 5.0, "dt": 1e-2, "record_every": 10,
            "init": {"kind": "vmf", "concentration": 0.5}}"#,
        r#"{"experiment": "heterogeneous", "N": 32, "t_end": 1.0, "dt": 1e-2, "record_every": 10,
            "omega_groups": [{"kind": "zero"}, {"kind": "planar", "rate": 1.0, "plane": [0, 1]}]}"#,
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut problems = Vec::new();
    for (i, text) in configs.iter().enumerate() {
        let cfg = parse_str(text).unwrap();
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        run(&cfg, &a).unwrap();
        run(&cfg, &b).unwrap();
        match compare_dirs(&a, &b) {
            Ok(n) => files += n,
            Err(e) => problems.push(format!("{:?}: {e}", cfg.experiment)),
        }
    }
    Verdict {
        id: 11,
        name: "determinism",
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("6 experiment families rerun, {files} files byte-identical (manifest wall time excluded)")
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    let mut verdicts = Vec::new();
    let (traj, om, sim_time) = reference_run();
    verdicts.push(push_forward_equivalence(&traj, &om, sim_time));
    verdicts.push(cross_ratio_conservation(&traj));
    verdicts.push(functional_conservation(&traj));
    drop(traj);
    verdicts.push(existence_boundary());
    verdicts.push(integral_anchors());
    let (six, seven) = kinetic_run();
    verdicts.push(six);
    verdicts.push(seven);
    verdicts.push(bipolar_instability());
    verdicts.push(heterogeneous_conservation());
    verdicts.push(identity_suite());
    verdicts.push(determinism());

    let failed = verdicts.iter().filter(|v| !v.pass).count();
    for v in &verdicts {
        println!(
            "criterion {:>2} {} {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
