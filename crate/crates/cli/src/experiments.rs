use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use swarmsphere_core::dynamics::{simulate, DrivingField, Influence, Trajectory};
use swarmsphere_core::ensemble::Ensemble;
use swarmsphere_core::export;
use swarmsphere_core::functionals::{
    conservation_drift, divergence_probe, drift_for_tuples, estimate_h, existence_check, reduced_pair_integral,
    sample_tuples, DivergenceClass, TupleSource,
};
use swarmsphere_core::geometry::{norm, sample_uniform, sample_vmf, SkewMatrix, UnitVector};
use swarmsphere_core::kinetic::{
    bipolar_report, instability_experiment, per_omega_conservation, simulate_with_order_parameter,
    InstabilityConfig, OrderParameterSeries,
};
use swarmsphere_core::rng::derive_seed;
use swarmsphere_core::ws_transform::{
    conjugacy_residual, heterogeneous_push_forward, push_forward, ws_evolve, ws_evolve_heterogeneous,
};

use crate::config::{Experiment, ExperimentConfig, FieldSpec, InitSpec, OmegaSpec};
use crate::error::CliError;

/// One file written by a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub header_only: bool,
}

/// Writes artifacts into one directory and remembers what it wrote.
pub struct Emitter {
    dir: PathBuf,
    pub outputs: Vec<OutputRecord>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let text = std::fs::read(&path).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        })?;
        let lines = text.iter().filter(|&&b| b == b'\n').count();
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            bytes: text.len() as u64,
            header_only: name.ends_with(".csv") && lines <= 1,
        });
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut w = BufWriter::new(file);
        write(&mut w).map_err(|e| CliError::Csv {
            path: path.clone(),
            source: e,
        })?;
        w.flush().map_err(|e| CliError::Io { path, source: e })?;
        self.record(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.record(name)
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let value = serde_json::to_value(value).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Named scalar results of an experiment plus warnings for the user.
#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn set(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.to_string(), v);
    }
}

fn build_omega(om: &OmegaSpec, dim: usize) -> Result<SkewMatrix, CliError> {
    Ok(match om {
        OmegaSpec::Zero => SkewMatrix::zero(dim),
        OmegaSpec::Random { seed, scale } => SkewMatrix::random(dim, *scale, *seed),
        OmegaSpec::Planar { rate, plane } => SkewMatrix::planar(dim, plane[0], plane[1], *rate)?,
    })
}

fn sample_initial(cfg: &ExperimentConfig) -> Result<Ensemble, CliError> {
    let dim = cfg.d + 1;
    Ok(match &cfg.init {
        InitSpec::Uniform => sample_uniform(cfg.d, cfg.n, cfg.seed)?,
        InitSpec::Vmf { concentration, mu } => {
            let mu = match mu {
                Some(v) => UnitVector::new(v.clone())?,
                None => UnitVector::north_pole(dim),
            };
            sample_vmf(&mu, *concentration, cfg.n, cfg.seed)?
        }
    })
}

fn build_initial(cfg: &ExperimentConfig) -> Result<Ensemble, CliError> {
    let e = sample_initial(cfg)?;
    let om = build_omega(&cfg.omega, cfg.d + 1)?;
    Ok(e.with_shared_omega(om)?)
}

fn build_field(cfg: &ExperimentConfig, ens0: &Ensemble) -> Result<DrivingField, CliError> {
    let dim = cfg.d + 1;
    let kappa = cfg.kappa;
    Ok(match &cfg.field {
        FieldSpec::MeanField => DrivingField::MeanField { kappa },
        FieldSpec::Frustrated { v } => DrivingField::Frustrated {
            kappa,
            v: DMatrix::from_fn(dim, dim, |i, j| v[i][j]),
        },
        FieldSpec::Winfree { pole } => DrivingField::Winfree {
            kappa,
            influence: Influence::PoleCosine,
            pole: match pole {
                Some(p) => UnitVector::new(p.clone())?,
                None => UnitVector::north_pole(dim),
            },
        },
        FieldSpec::TimeDelay { tau } => DrivingField::time_delay(kappa, *tau, ens0, cfg.dt)?,
        FieldSpec::Prescribed { a, b, frequency } => {
            let (a, b, f) = (a.clone(), b.clone(), *frequency);
            DrivingField::Prescribed(Arc::new(move |t| {
                let (s, c) = (f * t).sin_cos();
                a.iter().zip(&b).map(|(x, y)| x * c + y * s).collect()
            }))
        }
    })
}

/// Snapshot indices every `every` grid steps plus the last one.
fn checkpoint_indices(len: usize, every: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(every).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

fn subset(traj: &Trajectory, idx: &[usize]) -> Trajectory {
    Trajectory {
        times: idx.iter().map(|&i| traj.times[i]).collect(),
        states: idx.iter().map(|&i| traj.states[i].clone()).collect(),
        field_samples: idx.iter().map(|&i| traj.field_samples[i].clone()).collect(),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fmt_p(p: f64) -> String {
    format!("{p}")
}

pub fn run_experiment(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    match cfg.experiment {
        Experiment::Simulate => run_simulate(cfg, em),
        Experiment::WsVerify => run_ws_verify(cfg, em),
        Experiment::Functional => run_functional(cfg, em),
        Experiment::Existence => run_existence(cfg, em),
        Experiment::Kinetic => run_kinetic(cfg, em),
        Experiment::Heterogeneous => run_heterogeneous(cfg, em),
    }
}

fn run_simulate(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let dim = cfg.d + 1;
    let e0 = build_initial(cfg)?;
    let field = build_field(cfg, &e0)?;
    let traj = simulate(&e0, &field, cfg.t_end, cfg.dt, cfg.record_every)?;
    let series = OrderParameterSeries::from_trajectory(&traj, cfg.kappa);
    let bipolar = bipolar_report(&traj, cfg.epsilon).ok();
    em.csv("trajectory.csv", |w| export::write_trajectory(&traj, dim, w))?;
    em.csv("field.csv", |w| export::write_field(&traj, dim, w))?;
    em.csv("order_parameter.csv", |w| {
        export::write_order_parameter(&series, bipolar.as_ref(), w)
    })?;
    let defect = traj
        .states
        .iter()
        .flat_map(|e| e.points().map(|p| (norm(p) - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.set("final_r2", *series.r2.last().unwrap());
    out.set("max_norm_defect", defect);
    out.set("snapshots", traj.len() as f64);
    Ok(out)
}

fn run_ws_verify(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let dim = cfg.d + 1;
    let e0 = build_initial(cfg)?;
    let omega = build_omega(&cfg.omega, dim)?;
    let field = build_field(cfg, &e0)?;
    let traj = simulate(&e0, &field, cfg.t_end, cfg.dt, 1)?;
    let replay = DrivingField::Replay(traj.replay()?);
    let run = ws_evolve(&omega, &replay, cfg.t_end, cfg.dt)?;
    let idx = checkpoint_indices(traj.len(), cfg.record_every);

    let mut mismatch_rows = Vec::with_capacity(idx.len());
    let mut max_mismatch: f64 = 0.0;
    for &i in &idx {
        let pushed = push_forward(&run.states[i], &e0)?;
        let m = max_abs_diff(pushed.coords(), traj.states[i].coords());
        max_mismatch = max_mismatch.max(m);
        mismatch_rows.push((traj.times[i], m));
    }
    let probe_len = e0.len().min(16);
    let probe = Ensemble::from_flat(dim, e0.coords()[..probe_len * dim].to_vec())?;
    let conj = if run.states.len() >= 3 {
        conjugacy_residual(&run.states, &replay, &omega, &probe)?
    } else {
        0.0
    };
    let ortho = run
        .states
        .iter()
        .map(|s| s.r.orthogonality_defect())
        .fold(0.0, f64::max);

    let members: Vec<usize> = (0..e0.len()).collect();
    let mut out = Outcome::default();
    let checkpoints = subset(&traj, &idx);
    if traj.len() >= 2 {
        for (k, m, name) in [(2, 100, "cross_ratio_drift"), (3, 50, "cycle_ratio_drift")] {
            if e0.len() >= 2 * k {
                let tuples = sample_tuples(&e0, &members, k, m, derive_seed(cfg.seed, k as u64))?;
                let rep = drift_for_tuples(&checkpoints, &tuples, 1.0)?;
                out.set(name, rep.max_tuple_drift);
            } else {
                out.warnings.push(format!("{name}: N < {} so no cycles of half-length {k}", 2 * k));
            }
        }
    }

    let ws_checkpoints: Vec<_> = idx.iter().map(|&i| run.states[i].clone()).collect();
    em.csv("trajectory.csv", |w| export::write_trajectory(&checkpoints, dim, w))?;
    em.csv("field.csv", |w| export::write_field(&checkpoints, dim, w))?;
    em.csv("ws_states.csv", |w| export::write_ws_states(&ws_checkpoints, dim, w))?;
    em.csv("mismatch.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "max_mismatch"])?;
        for (t, m) in &mismatch_rows {
            out.write_record([export::fmt_f64(*t), export::fmt_f64(*m)])?;
        }
        out.flush()?;
        Ok(())
    })?;
    out.set("max_mismatch", max_mismatch);
    out.set("conjugacy_residual", conj);
    out.set("max_orthogonality_defect", ortho);
    out.set("guard_rescales", run.guard_rescales as f64);
    Ok(out)
}

fn run_functional(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let e0 = build_initial(cfg)?;
    let field = build_field(cfg, &e0)?;
    let traj = simulate(&e0, &field, cfg.t_end, cfg.dt, cfg.record_every)?;
    let mu = match &cfg.init {
        InitSpec::Vmf { mu: Some(v), .. } => UnitVector::new(v.clone())?,
        _ => UnitVector::north_pole(cfg.d + 1),
    };
    let continuous = match &cfg.init {
        InitSpec::Uniform => TupleSource::Uniform { d: cfg.d },
        InitSpec::Vmf { concentration, .. } => TupleSource::Vmf {
            mu: &mu,
            concentration: *concentration,
        },
    };
    let mut out = Outcome::default();
    let mut records = Vec::new();
    let mut max_drift: f64 = 0.0;
    let mut max_se: f64 = 0.0;
    let tuple_seed = derive_seed(cfg.seed, 100);
    for (i, &p) in cfg.p_list.iter().enumerate() {
        if !existence_check(p, cfg.d) {
            out.warnings.push(format!(
                "H_p with p = {p} is infinite on S^{}: estimates are not meaningful",
                cfg.d
            ));
        }
        let seed = derive_seed(cfg.seed, 200 + i as u64);
        for (source_name, source) in [("initial_density", continuous), ("ensemble", TupleSource::Ensemble(&e0))] {
            let est = estimate_h(source, p, cfg.k, cfg.m, seed)?;
            max_se = max_se.max(est.std_error);
            records.push(json!({
                "source": source_name,
                "p": est.p,
                "k": est.k,
                "d": est.d,
                "m": est.samples,
                "seed": est.seed,
                "value": est.value,
                "std_error": est.std_error,
                "median_of_means": est.median_of_means,
                "existence_flag": est.existence_flag,
                "rejected": est.rejected,
            }));
        }
        let drift = conservation_drift(&traj, p, cfg.k, cfg.m, tuple_seed)?;
        if p != 0.0 {
            max_drift = max_drift.max(drift.max_drift);
        }
        em.csv(&format!("drift_p{}_k{}.csv", fmt_p(p), cfg.k), |w| export::write_drift(&drift, w))?;
    }
    let zero = conservation_drift(&traj, 0.0, cfg.k, cfg.m, tuple_seed)?;
    em.json("estimates.json", &records)?;
    out.set("max_drift", max_drift);
    out.set("p0_drift", zero.max_drift);
    out.set("max_estimate_std_error", max_se);
    Ok(out)
}

fn run_existence(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let dims = if cfg.d_list.is_empty() { vec![cfg.d] } else { cfg.d_list.clone() };
    let mut rows = Vec::new();
    let mut mismatches = 0usize;
    let mut spread: Option<f64> = None;
    for &d in &dims {
        for &p in &cfg.p_list {
            let exists = existence_check(p, d);
            let probe = divergence_probe(p, d)?;
            let agree = (probe.classification == DivergenceClass::Convergent) == exists;
            mismatches += usize::from(!agree);
            if p.abs() == d as f64 / 2.0 {
                spread = Some(spread.map_or(probe.decade_spread, |s| s.max(probe.decade_spread)));
            }
            rows.push(json!({
                "p": p,
                "d": d,
                "existence": exists,
                "classification": probe.classification,
                "exponent_estimate": probe.exponent_estimate,
                "fit_residual": probe.fit_residual,
                "decade_spread": probe.decade_spread,
                "cutoffs": probe.cutoffs,
                "values": probe.values,
                "decade_increments": probe.decade_increments,
                "agrees": agree,
            }));
        }
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    let a1 = (reduced_pair_integral(0.0, 2, 0.0)? - four_pi).abs();
    let a2 = (reduced_pair_integral(-1.0, 1, 0.0)? - four_pi).abs();
    em.json("existence.json", &rows)?;
    let mut out = Outcome::default();
    out.set("classification_mismatches", mismatches as f64);
    // absent when no boundary point was probed, so a gate on it fails
    if let Some(s) = spread {
        out.set("max_log_decade_spread", s);
    }
    out.set("anchor_error_d2_p0", a1);
    out.set("anchor_error_d1_pm1", a2);
    Ok(out)
}

fn run_kinetic(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let icfg = InstabilityConfig {
        t_end: cfg.t_end,
        dt: cfg.dt,
        record_every: cfg.record_every,
        epsilon: cfg.epsilon,
        p: cfg.p_list.first().copied().unwrap_or(0.3),
        m: cfg.m,
        ..InstabilityConfig::new(cfg.n, cfg.d, cfg.kappa, cfg.delta, cfg.seed)
    };
    // validate the experiment's own preconditions before the long run
    swarmsphere_core::kinetic::antipodal_ensemble(icfg.n, icfg.d, icfg.seed)?;

    let e0 = build_initial(cfg)?;
    let field = build_field(cfg, &e0)?;
    let (traj, r2) = simulate_with_order_parameter(&e0, &field, cfg.t_end, cfg.dt, cfg.record_every)?;
    let series = OrderParameterSeries::from_trajectory(&traj, cfg.kappa);
    let (steps, h) = swarmsphere_core::dynamics::step_grid(cfg.t_end, cfg.dt)?;
    let max_decrease = r2.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let mut fd_rows = Vec::new();
    let mut max_fd: f64 = 0.0;
    for (j, t) in series.times.iter().enumerate() {
        let n = ((t - traj.times[0]) / h).round() as usize;
        if n == 0 || n >= steps {
            continue;
        }
        let fd = (r2[n + 1] - r2[n - 1]) / (2.0 * h);
        let err = (fd - series.dr2_analytic[j]).abs();
        max_fd = max_fd.max(err);
        fd_rows.push((*t, series.dr2_analytic[j], fd));
    }
    let bipolar = bipolar_report(&traj, cfg.epsilon)?;
    let r_end = bipolar.r_infinity_estimate;
    em.csv("order_parameter.csv", |w| {
        export::write_order_parameter(&series, Some(&bipolar), w)
    })?;
    em.csv("derivative_check.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "dR2_analytic", "dR2_finite_difference"])?;
        for (t, a, f) in &fd_rows {
            out.write_record([export::fmt_f64(*t), export::fmt_f64(*a), export::fmt_f64(*f)])?;
        }
        out.flush()?;
        Ok(())
    })?;
    em.json("bipolar.json", &bipolar)?;
    drop(traj);

    let inst = instability_experiment(&icfg)?;
    em.csv("instability_symmetric.csv", |w| {
        export::write_order_parameter(&inst.symmetric_series, None, w)
    })?;
    em.csv("instability_perturbed.csv", |w| {
        export::write_order_parameter(&inst.perturbed_series, None, w)
    })?;
    em.json(
        "instability.json",
        &json!({
            "config": inst.config,
            "symmetric_max_r": inst.symmetric_max_r,
            "symmetric_final_r": inst.symmetric_final_r,
            "perturbed_initial_r": inst.perturbed_initial_r,
            "perturbed_final_r": inst.perturbed_final_r,
            "mixed_ratio_initial": inst.mixed_ratio_initial,
            "mixed_ratio_max": inst.mixed_ratio_max,
            "mixed_ratio_growth": inst.mixed_ratio_growth,
            "final_plus": inst.final_plus,
            "final_minus": inst.final_minus,
            "fixed_tuple_drift": inst.fixed_tuple_drift,
            "fixed_tuple_window_end": inst.fixed_tuple_window_end,
            "control_drift": inst.control_drift,
            "mixed_ratio_series": inst.mixed_ratio_series,
        }),
    )?;
    let mut out = Outcome::default();
    out.set("max_r2_decrease", max_decrease);
    out.set("max_fd_error", max_fd);
    out.set("initial_r", series.r2[0].sqrt());
    out.set("final_r", r_end);
    out.set("mass_plus_error", (bipolar.mass_plus - 0.5 * (1.0 + r_end)).abs());
    out.set("mass_minus_error", (bipolar.mass_minus - 0.5 * (1.0 - r_end)).abs());
    out.set("symmetric_max_r", inst.symmetric_max_r);
    out.set("perturbed_final_r", inst.perturbed_final_r);
    out.set("mixed_ratio_max", inst.mixed_ratio_max);
    out.set("fixed_tuple_drift", inst.fixed_tuple_drift);
    out.set("control_drift", inst.control_drift);
    Ok(out)
}

fn run_heterogeneous(cfg: &ExperimentConfig, em: &mut Emitter) -> Result<Outcome, CliError> {
    let dim = cfg.d + 1;
    let groups = cfg
        .omega_groups
        .iter()
        .map(|g| build_omega(g, dim))
        .collect::<Result<Vec<_>, _>>()?;
    let g = groups.len();
    let labels: Vec<SkewMatrix> = (0..cfg.n).map(|i| groups[i * g / cfg.n].clone()).collect();
    let e0 = sample_initial(cfg)?.with_omegas(labels)?;
    let field = build_field(cfg, &e0)?;
    let traj = simulate(&e0, &field, cfg.t_end, cfg.dt, 1)?;
    let idx = checkpoint_indices(traj.len(), cfg.record_every);
    let checkpoints = subset(&traj, &idx);

    let replay = DrivingField::Replay(traj.replay()?);
    let states = ws_evolve_heterogeneous(&groups, &replay, cfg.t_end, cfg.dt)?;
    let mut max_mismatch: f64 = 0.0;
    for &i in &idx {
        let pushed = heterogeneous_push_forward(&states[i], &e0)?;
        max_mismatch = max_mismatch.max(max_abs_diff(pushed.coords(), traj.states[i].coords()));
    }
    drop(traj);

    let p = cfg.p_list.first().copied().unwrap_or(0.3);
    let rep = per_omega_conservation(&checkpoints, p, cfg.k, cfg.m, derive_seed(cfg.seed, 300))?;
    let mut out = Outcome::default();
    for (grp, size) in &rep.skipped {
        out.warnings.push(format!(
            "group {grp} has {size} particles, fewer than 2k = {}; skipped",
            2 * cfg.k
        ));
    }
    let mut within: f64 = 0.0;
    for gd in &rep.groups {
        within = within.max(gd.report.max_drift.max(gd.report.max_tuple_drift));
        em.csv(&format!("drift_group{}.csv", gd.group), |w| export::write_drift(&gd.report, w))?;
    }
    if let Some(mixed) = &rep.mixed {
        em.csv("drift_mixed.csv", |w| export::write_drift(mixed, w))?;
    }
    em.csv("beta.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..g).map(|k| format!("beta_{k}")));
        out.write_record(&header)?;
        for (t, b) in checkpoints.times.iter().zip(&rep.beta) {
            let mut row = vec![export::fmt_f64(*t)];
            row.extend(b.iter().map(|v| export::fmt_f64(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    em.csv("trajectory.csv", |w| export::write_trajectory(&checkpoints, dim, w))?;
    em.json("per_omega.json", &rep)?;
    out.set("max_within_drift", within);
    out.set("mixed_drift", rep.mixed.as_ref().map_or(f64::NAN, |m| m.max_drift));
    out.set("beta_constant", if rep.beta_constant { 1.0 } else { 0.0 });
    out.set("max_mismatch", max_mismatch);
    out.set("groups_skipped", rep.skipped.len() as f64);
    Ok(out)
}
