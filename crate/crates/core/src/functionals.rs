//! Cross-ratio invariants, the H_p / H_{p,k} functionals and the pair
//! integral that decides whether they are finite.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::geometry::{chord_sq, check_dim, gaussian_unit, vmf_point, UnitVector, VmfCosine};
use crate::quadrature::integrate;
use crate::rng::{derive_seed, stream_rng};

/// Squared chords at or below this are treated as coincident points.
pub const DEGENERATE_CHORD_SQ: f64 = 1e-14;

/// Number of blocks the Monte-Carlo estimator is split into.
pub const MC_BLOCKS: usize = 32;

const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_MAX_INTERVALS: usize = 1_000_000;

/// C(x₁, x₂, x₃, x₄) = ‖x₁−x₂‖²‖x₃−x₄‖² / (‖x₂−x₃‖²‖x₄−x₁‖²).
pub fn cross_ratio(x1: &[f64], x2: &[f64], x3: &[f64], x4: &[f64]) -> Result<f64> {
    cycle_ratio(&[x1, x2, x3, x4])
}

/// C_k(x₁, …, x_{2k}) = Π_ℓ ‖x_{2ℓ−1} − x_{2ℓ}‖² / ‖x_{2ℓ} − x_{2ℓ+1}‖², with
/// x_{2k+1} = x₁.
pub fn cycle_ratio(points: &[&[f64]]) -> Result<f64> {
    let n = points.len();
    if n < 4 || n % 2 != 0 {
        return Err(Error::invalid("points", format!("need an even count >= 4, got {n}")));
    }
    let dim = points[0].len();
    for p in points {
        check_dim(dim, p.len())?;
    }
    let mut num = 1.0;
    let mut den = 1.0;
    for l in 0..n / 2 {
        let a = points[2 * l];
        let b = points[2 * l + 1];
        let c = points[(2 * l + 2) % n];
        let dd = chord_sq(b, c);
        if dd <= DEGENERATE_CHORD_SQ {
            return Err(Error::CoincidentDenominator(dd));
        }
        num *= chord_sq(a, b);
        den *= dd;
    }
    Ok(num / den)
}

/// A cycle of 2k particle indices with no two cyclically adjacent entries
/// equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TupleIndex(Vec<usize>);

impl TupleIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        if n < 4 || n % 2 != 0 {
            return Err(Error::invalid("indices", format!("need an even count >= 4, got {n}")));
        }
        for i in 0..n {
            if indices[i] == indices[(i + 1) % n] {
                return Err(Error::invalid("indices", "adjacent entries must differ"));
            }
        }
        Ok(TupleIndex(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Half-length k.
    pub fn k(&self) -> usize {
        self.0.len() / 2
    }

    pub fn ratio(&self, ens: &Ensemble) -> Result<f64> {
        let pts: Vec<&[f64]> = self.0.iter().map(|&i| ens.point(i)).collect();
        cycle_ratio(&pts)
    }
}

/// Uniform draw from the 2k-cycles over `members`.
fn draw_cycle(rng: &mut ChaCha8Rng, members: &[usize], k: usize) -> Vec<usize> {
    let n = members.len();
    loop {
        let mut idx = Vec::with_capacity(2 * k);
        let mut prev = rng.random_range(0..n);
        idx.push(prev);
        for _ in 1..2 * k {
            let mut j = rng.random_range(0..n - 1);
            if j >= prev {
                j += 1;
            }
            idx.push(j);
            prev = j;
        }
        if idx[0] != idx[2 * k - 1] {
            return idx.into_iter().map(|i| members[i]).collect();
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("k", "cycle half-length must be >= 2"));
    }
    Ok(())
}

/// `m` cycles drawn uniformly from C_k over the particle indices `members`,
/// skipping any whose ratio in `ens` is degenerate.
pub fn sample_tuples(ens: &Ensemble, members: &[usize], k: usize, m: usize, seed: u64) -> Result<Vec<TupleIndex>> {
    check_k(k)?;
    if members.len() < 2 * k {
        return Err(Error::invalid(
            "ensemble",
            format!("{} particles cannot fill a cycle of length {}", members.len(), 2 * k),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(m);
    let mut rejected = 0;
    while out.len() < m {
        let t = TupleIndex(draw_cycle(&mut rng, members, k));
        match t.ratio(ens) {
            Ok(r) if r > 0.0 => out.push(t),
            Ok(_) | Err(Error::CoincidentDenominator(_)) => {
                rejected += 1;
                if rejected > 100 * m {
                    return Err(Error::TooManyRejections(rejected));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Where the points of each Monte-Carlo tuple come from.
#[derive(Debug, Clone, Copy)]
pub enum TupleSource<'a> {
    /// Indices drawn uniformly from the cycles over the ensemble.
    Ensemble(&'a Ensemble),
    /// Fresh uniform points on S^d.
    Uniform { d: usize },
    /// Fresh von Mises–Fisher points.
    Vmf { mu: &'a UnitVector, concentration: f64 },
}

impl TupleSource<'_> {
    /// Sphere dimension d.
    pub fn sphere_dim(&self) -> usize {
        match self {
            TupleSource::Ensemble(e) => e.sphere_dim(),
            TupleSource::Uniform { d } => *d,
            TupleSource::Vmf { mu, .. } => mu.dim() - 1,
        }
    }
}

/// Monte-Carlo estimate of H_{p,k}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub p: f64,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    /// Median of the block means; present for |p| ≥ d/4 where the plain
    /// mean has infinite variance.
    pub median_of_means: Option<f64>,
    /// Degenerate draws that were discarded.
    pub rejected: usize,
    pub existence_flag: bool,
}

struct BlockSum {
    sum: f64,
    sum_sq: f64,
    count: usize,
    rejected: usize,
}

/// Estimates H_{p,k} from `m` tuples (H_p for k = 2).
///
/// The work is split into fixed blocks with their own random streams, so the
/// result depends only on `seed`.
pub fn estimate_h(source: TupleSource<'_>, p: f64, k: usize, m: usize, seed: u64) -> Result<FunctionalEstimate> {
    check_k(k)?;
    if m == 0 {
        return Err(Error::invalid("m", "tuple count must be >= 1"));
    }
    if !p.is_finite() {
        return Err(Error::invalid("p", "must be finite"));
    }
    let d = source.sphere_dim();
    let members: Vec<usize> = match source {
        TupleSource::Ensemble(e) => {
            if e.len() < 2 * k {
                return Err(Error::invalid(
                    "ensemble",
                    format!("{} particles cannot fill a cycle of length {}", e.len(), 2 * k),
                ));
            }
            (0..e.len()).collect()
        }
        _ => Vec::new(),
    };
    let cosine = match source {
        TupleSource::Vmf { mu, concentration } => {
            if !(concentration >= 0.0) || !concentration.is_finite() {
                return Err(Error::invalid("concentration", "must be finite and >= 0"));
            }
            Some(VmfCosine::new(mu.dim(), concentration))
        }
        _ => None,
    };
    let blocks = MC_BLOCKS.min(m);
    let cap = 100 * m;
    let parts: Vec<Result<BlockSum>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = m / blocks + usize::from(b < m % blocks);
            let mut rng = stream_rng(seed, b as u64);
            let mut acc = BlockSum {
                sum: 0.0,
                sum_sq: 0.0,
                count: 0,
                rejected: 0,
            };
            let dim = d + 1;
            let mut buf: Vec<Vec<f64>> = Vec::with_capacity(2 * k);
            while acc.count < count {
                let ratio = match source {
                    TupleSource::Ensemble(e) => {
                        let idx = draw_cycle(&mut rng, &members, k);
                        let pts: Vec<&[f64]> = idx.iter().map(|&i| e.point(i)).collect();
                        cycle_ratio(&pts)
                    }
                    TupleSource::Uniform { .. } | TupleSource::Vmf { .. } => {
                        buf.clear();
                        for _ in 0..2 * k {
                            buf.push(match (&source, &cosine) {
                                (TupleSource::Vmf { mu, .. }, Some(c)) => vmf_point(&mut rng, mu, c),
                                _ => gaussian_unit(&mut rng, dim),
                            });
                        }
                        let pts: Vec<&[f64]> = buf.iter().map(|v| v.as_slice()).collect();
                        cycle_ratio(&pts)
                    }
                };
                match ratio {
                    Ok(r) if r > 0.0 => {
                        let v = if p == 0.0 { 1.0 } else { r.powf(p) };
                        acc.sum += v;
                        acc.sum_sq += v * v;
                        acc.count += 1;
                    }
                    Ok(_) | Err(Error::CoincidentDenominator(_)) => {
                        acc.rejected += 1;
                        if acc.rejected > cap {
                            return Err(Error::TooManyRejections(acc.rejected));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .collect();
    let parts: Vec<BlockSum> = parts.into_iter().collect::<Result<_>>()?;
    let rejected: usize = parts.iter().map(|b| b.rejected).sum();
    if rejected > cap {
        return Err(Error::TooManyRejections(rejected));
    }
    let sum: f64 = parts.iter().map(|b| b.sum).sum();
    let mf = m as f64;
    let value = sum / mf;
    let std_error = if m > 1 {
        let var = parts
            .iter()
            .map(|b| b.sum_sq)
            .sum::<f64>();
        let var = (var - mf * value * value) / (mf - 1.0);
        (var.max(0.0) / mf).sqrt()
    } else {
        0.0
    };
    let median_of_means = (p.abs() >= d as f64 / 4.0).then(|| {
        let mut means: Vec<f64> = parts.iter().map(|b| b.sum / b.count as f64).collect();
        means.sort_by(f64::total_cmp);
        let n = means.len();
        if n % 2 == 1 {
            means[n / 2]
        } else {
            0.5 * (means[n / 2 - 1] + means[n / 2])
        }
    });
    Ok(FunctionalEstimate {
        value,
        std_error,
        samples: m,
        p,
        k,
        d,
        seed,
        median_of_means,
        rejected,
        existence_flag: existence_check(p, d),
    })
}

/// Weighted sum Σ wᵢ H_{pᵢ,k} over a finite grid of (p, weight) pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub components: Vec<FunctionalEstimate>,
}

pub fn estimate_mixture(
    source: TupleSource<'_>,
    grid: &[(f64, f64)],
    k: usize,
    m: usize,
    seed: u64,
) -> Result<MixtureEstimate> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "need at least one (p, weight) pair"));
    }
    let components = grid
        .iter()
        .enumerate()
        .map(|(i, &(p, _))| estimate_h(source, p, k, m, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let value = grid.iter().zip(&components).map(|((_, w), c)| w * c.value).sum();
    let std_error = grid
        .iter()
        .zip(&components)
        .map(|((_, w), c)| (w * c.std_error).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(MixtureEstimate {
        value,
        std_error,
        components,
    })
}

/// Whether H_p is finite on S^d: −d/2 < p < d/2.
pub fn existence_check(p: f64, d: usize) -> bool {
    let h = d as f64 / 2.0;
    -h < p && p < h
}

/// Surface area |S^n| of the unit n-sphere.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n - 1) as f64 * sphere_area(n - 2),
    }
}

/// |S^{d−1}| ∫ₐᵇ θ^e h(θ) dθ with e = d − 2p − 1 and h(θ) smooth and
/// positive, using a substitution that removes the algebraic factor.
fn pair_integral_between(p: f64, d: usize, lo: f64, hi: f64) -> Result<f64> {
    let e = d as f64 - 2.0 * p - 1.0;
    let smooth = |theta: f64| -> f64 {
        let half = 0.5 * theta;
        let sinc = if half == 0.0 { 1.0 } else { 2.0 * half.sin() / theta };
        sinc.powf(e) * half.cos().powi(d as i32 - 1)
    };
    let value = if e + 1.0 > 0.0 {
        // θ = π s^{1/(e+1)} turns θ^e dθ into a constant multiple of ds
        let q = e + 1.0;
        let s0 = (lo / PI).powf(q);
        let s1 = (hi / PI).powf(q);
        let scale = PI.powf(q) / q;
        scale * integrate(|s: f64| smooth(PI * s.powf(1.0 / q)), s0, s1, QUAD_REL_TOL, QUAD_MAX_INTERVALS)?
    } else {
        // θ = eᵘ
        integrate(
            |u: f64| {
                let theta = u.exp();
                theta.powf(e + 1.0) * smooth(theta)
            },
            lo.ln(),
            hi.ln(),
            QUAD_REL_TOL,
            QUAD_MAX_INTERVALS,
        )?
    };
    Ok(sphere_area(d - 1) * value)
}

/// |S^{d−1}| ∫_ε^π 2^{d−2p−1} sin^{d−2p−1}(θ/2) cos^{d−1}(θ/2) dθ, the pair
/// part of H_p for the uniform density with the diagonal cut out at angle ε.
pub fn reduced_pair_integral(p: f64, d: usize, epsilon: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::invalid("d", "sphere dimension must be >= 1"));
    }
    if !(0.0..PI).contains(&epsilon) {
        return Err(Error::invalid("epsilon", "cutoff must lie in [0, π)"));
    }
    let gap = d as f64 - 2.0 * p;
    if epsilon == 0.0 && gap <= 0.0 {
        return Err(Error::DivergentIntegral(gap));
    }
    pair_integral_between(p, d, epsilon, PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceClass {
    Convergent,
    LogDivergent,
    PowerDivergent,
}

/// Behaviour of the cut-off pair integral as the cutoff shrinks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub p: f64,
    pub d: usize,
    pub classification: DivergenceClass,
    /// For power divergence J(ε) ~ ε^{−exponent}; otherwise the fitted
    /// decay rate of the decade increments, negated.
    pub exponent_estimate: f64,
    /// Root-mean-square residual of the log-log fit.
    pub fit_residual: f64,
    pub cutoffs: Vec<f64>,
    /// J(ε) at each cutoff.
    pub values: Vec<f64>,
    /// ∫_{ε/10}^{ε} at each cutoff.
    pub decade_increments: Vec<f64>,
    /// (max − min) / mean of the decade increments.
    pub decade_spread: f64,
}

/// Cutoffs at which the probe evaluates the pair integral.
pub const PROBE_CUTOFFS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Classifies the singularity of the pair integral at θ = 0.
///
/// H_{−p} = H_p, so the probe runs at |p|; the increments over each decade
/// [ε/10, ε] scale like ε^{d−2|p|}, and the fitted slope decides the class.
pub fn divergence_probe(p: f64, d: usize) -> Result<DivergenceReport> {
    if d < 1 {
        return Err(Error::invalid("d", "sphere dimension must be >= 1"));
    }
    let q = p.abs();
    let cutoffs = PROBE_CUTOFFS.to_vec();
    let values = cutoffs
        .iter()
        .map(|&eps| pair_integral_between(q, d, eps, PI))
        .collect::<Result<Vec<_>>>()?;
    let decade_increments = cutoffs
        .iter()
        .map(|&eps| pair_integral_between(q, d, eps / 10.0, eps))
        .collect::<Result<Vec<_>>>()?;

    let xs: Vec<f64> = cutoffs.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = decade_increments.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fit_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let mean_inc = decade_increments.iter().sum::<f64>() / n;
    let (lo, hi) = decade_increments
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let decade_spread = (hi - lo) / mean_inc;

    let classification = if slope > 0.25 {
        DivergenceClass::Convergent
    } else if slope >= -0.25 {
        DivergenceClass::LogDivergent
    } else {
        DivergenceClass::PowerDivergent
    };
    Ok(DivergenceReport {
        p,
        d,
        classification,
        exponent_estimate: -slope,
        fit_residual,
        cutoffs,
        values,
        decade_increments,
        decade_spread,
    })
}

/// Conservation of H_{p,k} along a trajectory for a fixed set of tuples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub times: Vec<f64>,
    /// Mean of C_k^p over the tuples at each snapshot.
    pub estimates: Vec<f64>,
    /// |estimate(t) − estimate(0)| / |estimate(0)|.
    pub relative_drift: Vec<f64>,
    pub max_drift: f64,
    /// Per tuple, the largest |C_k(t)/C_k(0) − 1| over the snapshots.
    pub tuple_drift: Vec<f64>,
    pub max_tuple_drift: f64,
}

/// Evaluates the given tuples at every snapshot of `traj`.
pub fn drift_for_tuples(traj: &Trajectory, tuples: &[TupleIndex], p: f64) -> Result<DriftReport> {
    if traj.len() < 2 {
        return Err(Error::invalid("trajectory", "need at least 2 snapshots"));
    }
    if tuples.is_empty() {
        return Err(Error::invalid("tuples", "need at least one tuple"));
    }
    let initial: Vec<f64> = tuples
        .iter()
        .map(|t| t.ratio(traj.initial()))
        .collect::<Result<_>>()?;
    let mut estimates = Vec::with_capacity(traj.len());
    let mut tuple_drift = vec![0.0f64; tuples.len()];
    for s in &traj.states {
        let ratios: Vec<f64> = tuples.iter().map(|t| t.ratio(s)).collect::<Result<_>>()?;
        let est = if p == 0.0 {
            1.0
        } else {
            ratios.iter().map(|r| r.powf(p)).sum::<f64>() / ratios.len() as f64
        };
        estimates.push(est);
        for (j, (r, r0)) in ratios.iter().zip(&initial).enumerate() {
            tuple_drift[j] = tuple_drift[j].max((r / r0 - 1.0).abs());
        }
    }
    let e0 = estimates[0];
    let relative_drift: Vec<f64> = estimates.iter().map(|e| ((e - e0) / e0).abs()).collect();
    let max_drift = relative_drift.iter().cloned().fold(0.0, f64::max);
    let max_tuple_drift = tuple_drift.iter().cloned().fold(0.0, f64::max);
    Ok(DriftReport {
        times: traj.times.clone(),
        estimates,
        relative_drift,
        max_drift,
        tuple_drift,
        max_tuple_drift,
    })
}

/// Draws `m` tuples from the initial snapshot and tracks H_{p,k} along
/// `traj`.
pub fn conservation_drift(traj: &Trajectory, p: f64, k: usize, m: usize, seed: u64) -> Result<DriftReport> {
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "need at least 2 snapshots"));
    }
    let e0 = traj.initial();
    let members: Vec<usize> = (0..e0.len()).collect();
    let tuples = sample_tuples(e0, &members, k, m, seed)?;
    drift_for_tuples(traj, &tuples, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_ratio_examples() {
        let sq = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let c = cross_ratio(&sq[0], &sq[1], &sq[2], &sq[3]).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let e3 = [0.0, 0.0, 1.0];
        let m1 = [-1.0, 0.0, 0.0];
        assert!((cross_ratio(&e1, &e2, &e3, &m1).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            cross_ratio(&e1, &e2, &e2, &m1),
            Err(Error::CoincidentDenominator(_))
        ));
    }

    #[test]
    fn hexagon_cycle_is_one() {
        let pts: Vec<[f64; 2]> = (0..6)
            .map(|i| {
                let a = i as f64 * PI / 3.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!((cycle_ratio(&refs).unwrap() - 1.0).abs() < 1e-14);
        assert!(cycle_ratio(&refs[..3]).is_err());
    }

    #[test]
    fn tuple_index_validation() {
        assert!(TupleIndex::new(vec![0, 1, 2, 3]).is_ok());
        assert!(TupleIndex::new(vec![0, 1, 2, 0]).is_err());
        assert!(TupleIndex::new(vec![0, 0, 2, 3]).is_err());
        assert!(TupleIndex::new(vec![0, 1, 2]).is_err());
    }

    #[test]
    fn existence_examples() {
        assert!(!existence_check(0.5, 1));
        assert!(existence_check(0.49, 1));
        assert!(existence_check(-0.9, 2));
        assert!(!existence_check(-1.0, 2));
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(sphere_area(0), 2.0);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-14);
    }

    #[test]
    fn pair_integral_anchors_and_errors() {
        assert!((reduced_pair_integral(0.0, 2, 0.0).unwrap() - 4.0 * PI).abs() <= 1e-9);
        assert!((reduced_pair_integral(-1.0, 1, 0.0).unwrap() - 4.0 * PI).abs() <= 1e-9);
        assert!(matches!(
            reduced_pair_integral(1.0, 2, 0.0),
            Err(Error::DivergentIntegral(_))
        ));
        assert!(reduced_pair_integral(1.0, 2, 1e-3).unwrap().is_finite());
        assert!(reduced_pair_integral(0.0, 2, 4.0).is_err());
    }

    #[test]
    fn probe_examples() {
        let r = divergence_probe(0.25, 1).unwrap();
        assert_eq!(r.classification, DivergenceClass::Convergent);
        let r = divergence_probe(1.0, 2).unwrap();
        assert_eq!(r.classification, DivergenceClass::LogDivergent);
        assert!(r.decade_spread <= 0.1);
        let r = divergence_probe(1.5, 1).unwrap();
        assert_eq!(r.classification, DivergenceClass::PowerDivergent);
        assert!((r.exponent_estimate - 2.0).abs() < 0.05);
    }

    #[test]
    fn p_zero_is_exactly_one() {
        let est = estimate_h(TupleSource::Uniform { d: 2 }, 0.0, 3, 500, 4).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert!(est.median_of_means.is_none());
    }
}
