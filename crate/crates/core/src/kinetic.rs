//! Order parameter, bipolar mass accounting and the symmetric-state
//! instability experiment for the mean-field swarm on S^d.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{simulate, simulate_observed, DrivingField, Trajectory};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::functionals::{cross_ratio, drift_for_tuples, sample_tuples, DriftReport, TupleIndex};
use crate::geometry::{
    chord_sq, dot, gaussian_unit, norm_sq, renormalize, sample_uniform, sample_vmf, SkewMatrix, UnitVector,
};
use crate::rng::{derive_seed, stream_rng};

/// Default chordal radius for bipolar mass reports.
pub const DEFAULT_BALL_RADIUS: f64 = 0.5;

/// R² = ‖x_c‖² and the centroid x_c.
pub fn order_parameter(ens: &Ensemble) -> (f64, Vec<f64>) {
    let xc = ens.mean();
    (norm_sq(&xc), xc)
}

/// (2/N) Σ_y ‖x_c − ⟨y, x_c⟩y‖², the rate of change of R² for the mean
/// field with κ = 1. A common Ω drops out.
pub fn dr2_dt_analytic(ens: &Ensemble) -> f64 {
    let xc = ens.mean();
    let total: f64 = ens
        .points()
        .map(|y| {
            let s = dot(y, &xc);
            // ‖x_c − s y‖² = ‖x_c‖² − s² for unit y; the explicit form stays ≥ 0
            y.iter().zip(&xc).map(|(yi, ci)| (ci - s * yi).powi(2)).sum::<f64>()
        })
        .sum();
    2.0 * total / ens.len() as f64
}

/// [`dr2_dt_analytic`] scaled by the coupling strength.
pub fn dr2_dt_coupled(ens: &Ensemble, kappa: f64) -> f64 {
    kappa * dr2_dt_analytic(ens)
}

/// Fraction of particles within chordal distance `epsilon` of `center`.
pub fn ball_mass(ens: &Ensemble, center: &UnitVector, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 2.0) {
        return Err(Error::invalid("epsilon", "chordal radius must lie in (0, 2)"));
    }
    crate::geometry::check_dim(ens.dim(), center.dim())?;
    let e2 = epsilon * epsilon;
    let inside = ens.points().filter(|y| chord_sq(y, center.as_slice()) < e2).count();
    Ok(inside as f64 / ens.len() as f64)
}

/// γ = x_c / ‖x_c‖ whenever R > 0.
pub fn gamma(ens: &Ensemble) -> Option<UnitVector> {
    let (r2, xc) = order_parameter(ens);
    if r2 > 0.0 {
        renormalize(&xc).ok()
    } else {
        None
    }
}

/// R², its analytic derivative and γ at each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderParameterSeries {
    pub times: Vec<f64>,
    pub r2: Vec<f64>,
    pub dr2_analytic: Vec<f64>,
    pub gamma: Vec<Option<Vec<f64>>>,
}

impl OrderParameterSeries {
    pub fn from_trajectory(traj: &Trajectory, kappa: f64) -> Self {
        let mut s = OrderParameterSeries {
            times: traj.times.clone(),
            r2: Vec::with_capacity(traj.len()),
            dr2_analytic: Vec::with_capacity(traj.len()),
            gamma: Vec::with_capacity(traj.len()),
        };
        for e in &traj.states {
            s.r2.push(order_parameter(e).0);
            s.dr2_analytic.push(dr2_dt_coupled(e, kappa));
            s.gamma.push(gamma(e).map(UnitVector::into_vec));
        }
        s
    }

    /// Largest drop R²(t_n) − R²(t_{n+1}) between consecutive snapshots
    /// (non-positive when R² is nondecreasing).
    pub fn max_decrease(&self) -> f64 {
        self.r2
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Masses near ±γ(t) at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BipolarSnapshot {
    pub t: f64,
    pub r: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BipolarReport {
    pub epsilon: f64,
    pub snapshots: Vec<BipolarSnapshot>,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub r_infinity_estimate: f64,
}

/// Ball masses around ±γ(t) along `traj`. Snapshots before the first one
/// with R > 0 use that snapshot's γ.
pub fn bipolar_report(traj: &Trajectory, epsilon: f64) -> Result<BipolarReport> {
    let gammas: Vec<Option<UnitVector>> = traj.states.iter().map(gamma).collect();
    let first = gammas
        .iter()
        .position(Option::is_some)
        .ok_or(Error::GammaUndefined)?;
    let mut current = gammas[first].clone().unwrap();
    let mut snapshots = Vec::with_capacity(traj.len());
    for (i, e) in traj.states.iter().enumerate() {
        if let Some(g) = &gammas[i] {
            current = g.clone();
        }
        snapshots.push(BipolarSnapshot {
            t: traj.times[i],
            r: order_parameter(e).0.sqrt(),
            mass_plus: ball_mass(e, &current, epsilon)?,
            mass_minus: ball_mass(e, &current.neg(), epsilon)?,
        });
    }
    let last = snapshots.last().unwrap();
    Ok(BipolarReport {
        epsilon,
        mass_plus: last.mass_plus,
        mass_minus: last.mass_minus,
        r_infinity_estimate: last.r,
        snapshots,
    })
}

/// (1/N)Σ⟨y,γ⟩², (1/N)Σ|⟨y,γ⟩|, with the upper bound 1 implied; `None`
/// when γ is undefined.
pub fn sandwich_bounds(ens: &Ensemble) -> Option<(f64, f64)> {
    let g = gamma(ens)?;
    let n = ens.len() as f64;
    let (sq, abs) = ens.points().fold((0.0, 0.0), |(a, b), y| {
        let c = dot(y, g.as_slice());
        (a + c * c, b + c.abs())
    });
    Some((sq / n, abs / n))
}

/// Settings for [`instability_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityConfig {
    pub n: usize,
    pub d: usize,
    pub kappa: f64,
    pub delta: f64,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub epsilon: f64,
    pub p: f64,
    pub m: usize,
    pub control_concentration: f64,
    pub control_t_end: f64,
}

impl InstabilityConfig {
    pub fn new(n: usize, d: usize, kappa: f64, delta: f64, seed: u64) -> Self {
        InstabilityConfig {
            n,
            d,
            kappa,
            delta,
            seed,
            t_end: 50.0,
            dt: 1e-2,
            record_every: 10,
            epsilon: DEFAULT_BALL_RADIUS,
            p: 0.3,
            m: 100,
            control_concentration: 1.0,
            control_t_end: 5.0,
        }
    }
}

/// 2+2 cross ratio C(a, b, b', a') where a, a' are the two '+' particles
/// nearest γ and b, b' the two '−' particles nearest −γ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedRatioSample {
    pub t: f64,
    pub tuple: [usize; 4],
    pub value: f64,
    pub plus: usize,
    pub minus: usize,
}

/// Picks the 2+2 split tuple at one snapshot; `None` when either side has
/// fewer than two particles or γ is undefined.
pub fn mixed_cluster_ratio(ens: &Ensemble) -> Result<Option<MixedRatioSample>> {
    let Some(g) = gamma(ens) else { return Ok(None) };
    let mut plus: Vec<(f64, usize)> = Vec::new();
    let mut minus: Vec<(f64, usize)> = Vec::new();
    for (i, y) in ens.points().enumerate() {
        let c = dot(y, g.as_slice());
        if c >= 0.0 {
            plus.push((chord_sq(y, g.as_slice()), i));
        } else {
            minus.push((chord_sq(y, g.neg().as_slice()), i));
        }
    }
    let (np, nm) = (plus.len(), minus.len());
    if np < 2 || nm < 2 {
        return Ok(None);
    }
    let two_smallest = |v: &mut Vec<(f64, usize)>| {
        v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        (v[0].1, v[1].1)
    };
    let (a, a2) = two_smallest(&mut plus);
    let (b, b2) = two_smallest(&mut minus);
    let value = match cross_ratio(ens.point(a), ens.point(b), ens.point(b2), ens.point(a2)) {
        Ok(v) => v,
        Err(Error::CoincidentDenominator(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(Some(MixedRatioSample {
        t: ens.time(),
        tuple: [a, b, b2, a2],
        value,
        plus: np,
        minus: nm,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityReport {
    pub config: InstabilityConfig,
    /// Largest R over the exactly symmetric run.
    pub symmetric_max_r: f64,
    pub symmetric_final_r: f64,
    pub perturbed_initial_r: f64,
    pub perturbed_final_r: f64,
    pub mixed_ratio_initial: f64,
    pub mixed_ratio_max: f64,
    pub mixed_ratio_growth: f64,
    pub final_plus: usize,
    pub final_minus: usize,
    /// Fixed-tuple conservation on the perturbed run, up to the last
    /// snapshot where every tuple chord is at least [`RESOLVABLE_CHORD`].
    pub fixed_tuple_drift: f64,
    pub fixed_tuple_window_end: f64,
    /// Fixed-tuple conservation on a von Mises–Fisher control run.
    pub control_drift: f64,
    pub symmetric_series: OrderParameterSeries,
    pub perturbed_series: OrderParameterSeries,
    pub mixed_ratio_series: Vec<MixedRatioSample>,
}

/// Chords shorter than this are too collapsed to resolve a ratio drift.
pub const RESOLVABLE_CHORD: f64 = 1e-4;

/// N/2 uniform points followed in place by their antipodes:
/// x₀, −x₀, x₁, −x₁, …
pub fn antipodal_ensemble(n: usize, d: usize, seed: u64) -> Result<Ensemble> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::invalid("n", "need an even particle count >= 4"));
    }
    let half = sample_uniform(d, n / 2, seed)?;
    let mut coords = Vec::with_capacity(n * (d + 1));
    for p in half.points() {
        coords.extend_from_slice(p);
        coords.extend(p.iter().map(|v| -v));
    }
    Ensemble::from_flat(d + 1, coords)
}

/// Moves particle 0 by `delta` along a random tangent direction.
pub fn perturb_first(ens: &Ensemble, delta: f64, seed: u64) -> Result<Ensemble> {
    let dim = ens.dim();
    let mut rng: ChaCha8Rng = stream_rng(seed, 0);
    let x0 = ens.point(0).to_vec();
    let tangent = loop {
        let g = gaussian_unit(&mut rng, dim);
        let s = dot(&g, &x0);
        let t: Vec<f64> = g.iter().zip(&x0).map(|(gi, xi)| gi - s * xi).collect();
        if norm_sq(&t) > 1e-6 {
            break renormalize(&t)?;
        }
    };
    let moved: Vec<f64> = x0
        .iter()
        .zip(tangent.as_slice())
        .map(|(x, t)| x + delta * t)
        .collect();
    let moved = renormalize(&moved)?;
    let mut coords = ens.coords().to_vec();
    coords[..dim].copy_from_slice(moved.as_slice());
    Ok(Ensemble::from_flat(dim, coords)?.with_time(ens.time()))
}

fn min_tuple_chord_sq(ens: &Ensemble, tuples: &[TupleIndex]) -> f64 {
    tuples
        .iter()
        .flat_map(|t| {
            let idx = t.indices();
            let n = idx.len();
            (0..n).map(move |j| (idx[j], idx[(j + 1) % n]))
        })
        .map(|(a, b)| chord_sq(ens.point(a), ens.point(b)))
        .fold(f64::INFINITY, f64::min)
}

/// Runs the exactly symmetric ensemble and its one-particle perturbation
/// under the mean field with Ω = 0, and a von Mises–Fisher control run.
pub fn instability_experiment(cfg: &InstabilityConfig) -> Result<InstabilityReport> {
    if !(cfg.delta > 0.0) {
        return Err(Error::invalid("delta", "asymmetry must be > 0"));
    }
    let field = DrivingField::MeanField { kappa: cfg.kappa };
    let sym0 = antipodal_ensemble(cfg.n, cfg.d, cfg.seed)?;
    let pert0 = perturb_first(&sym0, cfg.delta, derive_seed(cfg.seed, 1))?;

    let sym = simulate(&sym0, &field, cfg.t_end, cfg.dt, cfg.record_every)?;
    let symmetric_series = OrderParameterSeries::from_trajectory(&sym, cfg.kappa);
    let symmetric_max_r = symmetric_series.r2.iter().cloned().fold(0.0, f64::max).sqrt();
    let symmetric_final_r = symmetric_series.r2.last().unwrap().sqrt();
    drop(sym);

    let pert = simulate(&pert0, &field, cfg.t_end, cfg.dt, cfg.record_every)?;
    let perturbed_series = OrderParameterSeries::from_trajectory(&pert, cfg.kappa);

    let mut mixed_ratio_series = Vec::new();
    for e in &pert.states {
        if let Some(s) = mixed_cluster_ratio(e)? {
            mixed_ratio_series.push(s);
        }
    }
    let mixed_ratio_initial = mixed_ratio_series.first().map_or(f64::NAN, |s| s.value);
    let mixed_ratio_max = mixed_ratio_series.iter().map(|s| s.value).fold(f64::NAN, f64::max);

    let g_final = gamma(pert.last()).ok_or(Error::GammaUndefined)?;
    let final_plus = pert
        .last()
        .points()
        .filter(|y| dot(y, g_final.as_slice()) >= 0.0)
        .count();

    let members: Vec<usize> = (0..cfg.n).collect();
    let tuples = sample_tuples(pert.initial(), &members, 2, cfg.m, derive_seed(cfg.seed, 2))?;
    let limit = RESOLVABLE_CHORD * RESOLVABLE_CHORD;
    let window = pert
        .states
        .iter()
        .take_while(|e| min_tuple_chord_sq(e, &tuples) >= limit)
        .count()
        .max(2);
    let windowed = Trajectory {
        times: pert.times[..window].to_vec(),
        states: pert.states[..window].to_vec(),
        field_samples: pert.field_samples[..window].to_vec(),
    };
    let fixed = drift_for_tuples(&windowed, &tuples, cfg.p)?;

    let mu = UnitVector::north_pole(cfg.d + 1);
    let ctl0 = sample_vmf(&mu, cfg.control_concentration, cfg.n, derive_seed(cfg.seed, 3))?;
    let ctl = simulate(&ctl0, &field, cfg.control_t_end, cfg.dt, cfg.record_every)?;
    let ctl_tuples = sample_tuples(ctl.initial(), &members, 2, cfg.m, derive_seed(cfg.seed, 4))?;
    let control = drift_for_tuples(&ctl, &ctl_tuples, cfg.p)?;

    Ok(InstabilityReport {
        config: cfg.clone(),
        symmetric_max_r,
        symmetric_final_r,
        perturbed_initial_r: perturbed_series.r2[0].sqrt(),
        perturbed_final_r: perturbed_series.r2.last().unwrap().sqrt(),
        mixed_ratio_initial,
        mixed_ratio_max,
        mixed_ratio_growth: mixed_ratio_max / mixed_ratio_initial,
        final_plus,
        final_minus: cfg.n - final_plus,
        fixed_tuple_drift: fixed.max_drift.max(fixed.max_tuple_drift),
        fixed_tuple_window_end: *windowed.times.last().unwrap(),
        control_drift: control.max_drift.max(control.max_tuple_drift),
        symmetric_series,
        perturbed_series,
        mixed_ratio_series,
    })
}

/// Drift of one Ω group's functional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDrift {
    pub group: usize,
    pub size: usize,
    pub report: DriftReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerOmegaReport {
    pub groups: Vec<GroupDrift>,
    /// Groups too small for a 2k-cycle, as (group index, size).
    pub skipped: Vec<(usize, usize)>,
    /// Drift for tuples alternating between the first two groups.
    pub mixed: Option<DriftReport>,
    /// Mass fraction of each group at each snapshot.
    pub beta: Vec<Vec<f64>>,
    pub beta_constant: bool,
}

/// Conservation of the per-group functionals along a heterogeneous run, with
/// a mixed-group control.
pub fn per_omega_conservation(traj: &Trajectory, p: f64, k: usize, m: usize, seed: u64) -> Result<PerOmegaReport> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "need at least 2 snapshots"));
    }
    let e0 = traj.initial();
    let groups0 = e0.omega_groups();
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for (g, grp) in groups0.iter().enumerate() {
        if grp.members.len() < 2 * k {
            skipped.push((g, grp.members.len()));
            continue;
        }
        let tuples = sample_tuples(e0, &grp.members, k, m, derive_seed(seed, g as u64))?;
        groups.push(GroupDrift {
            group: g,
            size: grp.members.len(),
            report: drift_for_tuples(traj, &tuples, p)?,
        });
    }
    let mixed = if groups0.len() >= 2 {
        let (a, b) = (&groups0[0].members, &groups0[1].members);
        let mut rng = stream_rng(derive_seed(seed, u64::MAX), 0);
        let mut tuples = Vec::with_capacity(m);
        while tuples.len() < m {
            let idx: Vec<usize> = (0..2 * k)
                .map(|j| {
                    let pool = if j % 2 == 0 { a } else { b };
                    pool[rand::Rng::random_range(&mut rng, 0..pool.len())]
                })
                .collect();
            let t = TupleIndex::new(idx)?;
            if t.ratio(e0).is_ok() {
                tuples.push(t);
            }
        }
        Some(drift_for_tuples(traj, &tuples, p)?)
    } else {
        None
    };
    let labels: Vec<&SkewMatrix> = groups0.iter().map(|g| &g.omega).collect();
    let beta: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|e| {
            let n = e.len() as f64;
            labels
                .iter()
                .map(|om| (0..e.len()).filter(|&i| e.omega(i) == *om).count() as f64 / n)
                .collect()
        })
        .collect();
    let beta_constant = beta.iter().all(|b| b == &beta[0]);
    Ok(PerOmegaReport {
        groups,
        skipped,
        mixed,
        beta,
        beta_constant,
    })
}

/// Runs `simulate` while recording R² after every step, for monotonicity
/// and finite-difference checks at full time resolution.
pub fn simulate_with_order_parameter(
    ens0: &Ensemble,
    field: &DrivingField,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<(Trajectory, Vec<f64>)> {
    let mut r2 = Vec::new();
    let traj = simulate_observed(ens0, field, t_end, dt, record_every, |e, _| {
        r2.push(order_parameter(e).0);
    })?;
    Ok((traj, r2))
}
