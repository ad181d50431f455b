//! Particle model ẋᵢ = Ωᵢxᵢ + X − ⟨xᵢ, X⟩xᵢ and its driving fields.
//!
//! Integration is classical RK4 in the ambient space with the output of every
//! step renormalized onto the sphere. State-dependent fields (mean field,
//! frustrated, Winfree) are re-evaluated from each stage state; time-dependent
//! fields (prescribed, replay, delay) are evaluated at the stage time.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::ensemble::{compensated_mean, Ensemble};
use crate::error::{Error, Result};
use crate::geometry::{
    check_dim, chord_sq, dot, renormalize_in_place, SkewMatrix, UnitVector,
};

pub type InfluenceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type PrescribedFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Influence function I of the Winfree-sphere coupling.
#[derive(Clone)]
pub enum Influence {
    /// I(x) = 1 + ⟨x, e⟩ with e the pole of the field.
    PoleCosine,
    Custom(InfluenceFn),
}

impl fmt::Debug for Influence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Influence::PoleCosine => f.write_str("PoleCosine"),
            Influence::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Recorded X(t) on an increasing time grid, evaluated by cubic Hermite
/// interpolation. Node slopes come from finite differences: five-point
/// stencils on a uniform grid, three-point ones otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldReplay {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

/// Relative slack on the replay span, absorbing rounding in stage times.
const SPAN_SLACK: f64 = 1e-12;

impl FieldReplay {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::invalid(
                "replay",
                format!("{} times for {} samples (need >= 2)", times.len(), values.len()),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("replay", "times must be strictly increasing"));
        }
        let dim = values[0].len();
        for v in &values {
            check_dim(dim, v.len())?;
        }
        let slopes = node_slopes(&times, &values);
        Ok(FieldReplay {
            times,
            values,
            slopes,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn covers(&self, start: f64, end: f64) -> bool {
        let (a, b) = self.span();
        let slack = SPAN_SLACK * (1.0 + a.abs().max(b.abs()));
        start >= a - slack && end <= b + slack
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (a, b) = self.span();
        if !self.covers(t, t) {
            return Err(Error::OutsideSpan { t, start: a, end: b });
        }
        let t = t.clamp(a, b);
        let i = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.values[i].clone()),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok((0..self.dim())
            .map(|k| {
                h00 * self.values[i][k]
                    + h10 * h * self.slopes[i][k]
                    + h01 * self.values[i + 1][k]
                    + h11 * h * self.slopes[i + 1][k]
            })
            .collect())
    }
}

fn node_slopes(times: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = times.len();
    let dim = values[0].len();
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    let combo = |idx: &[usize], w: &[f64], scale: f64| -> Vec<f64> {
        (0..dim)
            .map(|k| idx.iter().zip(w).map(|(&j, c)| c * values[j][k]).sum::<f64>() / scale)
            .collect()
    };
    (0..n)
        .map(|i| {
            if uniform && n >= 5 {
                if i >= 2 && i + 2 < n {
                    combo(&[i - 2, i - 1, i + 1, i + 2], &[1.0, -8.0, 8.0, -1.0], 12.0 * h)
                } else if i < 2 {
                    let j = i;
                    let base = [0, 1, 2, 3, 4];
                    // one-sided five-point weights at offset j from the left end
                    let w: [f64; 5] = match j {
                        0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
                        _ => [-3.0, -10.0, 18.0, -6.0, 1.0],
                    };
                    combo(&base, &w, 12.0 * h)
                } else {
                    let j = n - 1 - i;
                    let base = [n - 1, n - 2, n - 3, n - 4, n - 5];
                    let w: [f64; 5] = match j {
                        0 => [25.0, -48.0, 36.0, -16.0, 3.0],
                        _ => [3.0, 10.0, -18.0, 6.0, -1.0],
                    };
                    combo(&base, &w, 12.0 * h)
                }
            } else if n == 2 {
                combo(&[0, 1], &[-1.0, 1.0], times[1] - times[0])
            } else {
                // three-point formula on a possibly nonuniform grid
                let (a, b, c) = if i == 0 {
                    (0, 1, 2)
                } else if i == n - 1 {
                    (n - 3, n - 2, n - 1)
                } else {
                    (i - 1, i, i + 1)
                };
                let (ta, tb, tc, t) = (times[a], times[b], times[c], times[i]);
                let wa = (2.0 * t - tb - tc) / ((ta - tb) * (ta - tc));
                let wb = (2.0 * t - ta - tc) / ((tb - ta) * (tb - tc));
                let wc = (2.0 * t - ta - tb) / ((tc - ta) * (tc - tb));
                combo(&[a, b, c], &[wa, wb, wc], 1.0)
            }
        })
        .collect()
}

/// Past ensemble means for the delayed mean field, on the integrator grid.
///
/// Times before the first recorded sample use the constant initial history
/// φᵢ(s) = xᵢ⁰, whose mean is the initial mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistory {
    tau: f64,
    start: f64,
    initial: Vec<f64>,
    samples: VecDeque<(f64, Vec<f64>)>,
    capacity: usize,
}

impl DelayHistory {
    /// `dt` sizes the ring buffer; it must not exceed the delay.
    pub fn constant(initial: &Ensemble, tau: f64, dt: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", "delay must be > 0"));
        }
        if !(dt > 0.0) || dt > tau {
            return Err(Error::invalid("dt", "step must satisfy 0 < dt <= tau"));
        }
        let mean = initial.mean();
        let mut samples = VecDeque::new();
        samples.push_back((initial.time(), mean.clone()));
        Ok(DelayHistory {
            tau,
            start: initial.time() - tau,
            initial: mean,
            samples,
            capacity: (tau / dt).ceil() as usize + 8,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn push(&mut self, t: f64, mean: Vec<f64>) {
        if let Some((last, _)) = self.samples.back() {
            if t <= *last {
                return;
            }
        }
        self.samples.push_back((t, mean));
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
    }

    /// Mean of the ensemble at time `s`, by cubic Lagrange interpolation over
    /// the four nearest stored samples.
    fn mean_at(&self, s: f64) -> Result<Vec<f64>> {
        let origin = self.start + self.tau;
        let first = self.samples.front().unwrap().0;
        let last = self.samples.back().unwrap().0;
        let slack = SPAN_SLACK * (1.0 + s.abs());
        if s < self.start - slack || s > last + slack {
            return Err(Error::OutsideSpan {
                t: s,
                start: self.start,
                end: last,
            });
        }
        if s <= origin {
            return Ok(self.initial.clone());
        }
        if s < first {
            // the buffer has already discarded this part of the history
            return Err(Error::OutsideSpan {
                t: s,
                start: first,
                end: last,
            });
        }
        let n = self.samples.len();
        let pos = self
            .samples
            .iter()
            .position(|(t, _)| *t >= s)
            .unwrap_or(n - 1);
        let lo = pos.saturating_sub(2).min(n.saturating_sub(4));
        let hi = (lo + 4).min(n);
        let nodes: Vec<&(f64, Vec<f64>)> = self.samples.range(lo..hi).collect();
        let dim = self.initial.len();
        let mut out = vec![0.0; dim];
        for (a, (ta, va)) in nodes.iter().map(|x| (&x.0, &x.1)).enumerate() {
            let mut w = 1.0;
            for (b, node) in nodes.iter().enumerate() {
                if a != b {
                    w *= (s - node.0) / (ta - node.0);
                }
            }
            for k in 0..dim {
                out[k] += w * va[k];
            }
        }
        Ok(out)
    }
}

/// The driving field X(t) of the particle model.
#[derive(Clone)]
pub enum DrivingField {
    /// X = κ · mean(x).
    MeanField { kappa: f64 },
    /// X = κ · V · mean(x).
    Frustrated { kappa: f64, v: DMatrix<f64> },
    /// X = κ · mean(I(x)) · e.
    Winfree {
        kappa: f64,
        influence: Influence,
        pole: UnitVector,
    },
    /// X(t) = κ · mean(x(t − τ)).
    TimeDelay { kappa: f64, history: DelayHistory },
    /// Closed-form X(t).
    Prescribed(PrescribedFn),
    /// Recorded X(t), typically from a direct run.
    Replay(FieldReplay),
}

impl fmt::Debug for DrivingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrivingField::MeanField { kappa } => write!(f, "MeanField {{ kappa: {kappa} }}"),
            DrivingField::Frustrated { kappa, .. } => write!(f, "Frustrated {{ kappa: {kappa} }}"),
            DrivingField::Winfree { kappa, influence, .. } => {
                write!(f, "Winfree {{ kappa: {kappa}, influence: {influence:?} }}")
            }
            DrivingField::TimeDelay { kappa, history } => {
                write!(f, "TimeDelay {{ kappa: {kappa}, tau: {} }}", history.tau)
            }
            DrivingField::Prescribed(_) => f.write_str("Prescribed(..)"),
            DrivingField::Replay(r) => write!(f, "Replay({} samples)", r.times.len()),
        }
    }
}

impl DrivingField {
    pub fn winfree(kappa: f64, dim: usize) -> Self {
        DrivingField::Winfree {
            kappa,
            influence: Influence::PoleCosine,
            pole: UnitVector::north_pole(dim),
        }
    }

    pub fn time_delay(kappa: f64, tau: f64, initial: &Ensemble, dt: f64) -> Result<Self> {
        Ok(DrivingField::TimeDelay {
            kappa,
            history: DelayHistory::constant(initial, tau, dt)?,
        })
    }

    /// True when X is a function of the current ensemble.
    pub fn is_state_dependent(&self) -> bool {
        matches!(
            self,
            DrivingField::MeanField { .. }
                | DrivingField::Frustrated { .. }
                | DrivingField::Winfree { .. }
        )
    }

    /// Feeds the ensemble reached at `ens.time()` into stateful fields.
    pub fn observe(&mut self, ens: &Ensemble) {
        if let DrivingField::TimeDelay { history, .. } = self {
            history.push(ens.time(), ens.mean());
        }
    }

    pub(crate) fn eval_coords(&self, dim: usize, coords: &[f64], t: f64) -> Result<Vec<f64>> {
        match self {
            DrivingField::MeanField { kappa } => Ok(scale(compensated_mean(dim, coords), *kappa)),
            DrivingField::Frustrated { kappa, v } => {
                if v.nrows() != dim || v.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: v.nrows(),
                    });
                }
                let m = compensated_mean(dim, coords);
                Ok((0..dim)
                    .map(|i| kappa * (0..dim).map(|j| v[(i, j)] * m[j]).sum::<f64>())
                    .collect())
            }
            DrivingField::Winfree {
                kappa,
                influence,
                pole,
            } => {
                check_dim(dim, pole.dim())?;
                let n = coords.len() / dim;
                let total: f64 = coords
                    .chunks_exact(dim)
                    .map(|x| match influence {
                        Influence::PoleCosine => 1.0 + dot(x, pole.as_slice()),
                        Influence::Custom(f) => f(x),
                    })
                    .sum();
                let c = kappa * total / n as f64;
                Ok(pole.as_slice().iter().map(|e| c * e).collect())
            }
            DrivingField::TimeDelay { kappa, history } => {
                Ok(scale(history.mean_at(t - history.tau)?, *kappa))
            }
            DrivingField::Prescribed(f) => {
                let x = f(t);
                check_dim(dim, x.len())?;
                Ok(x)
            }
            DrivingField::Replay(r) => {
                check_dim(dim, r.dim())?;
                r.eval(t)
            }
        }
    }
}

fn scale(mut v: Vec<f64>, c: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x *= c);
    v
}

/// X(t) for the given ensemble.
pub fn eval_field(field: &DrivingField, ens: &Ensemble, t: f64) -> Result<Vec<f64>> {
    field.eval_coords(ens.dim(), ens.coords(), t)
}

fn velocity_into(x: &[f64], omega: &SkewMatrix, field: &[f64], out: &mut [f64]) {
    omega.apply_into(x, out);
    let s = dot(x, field);
    for k in 0..x.len() {
        out[k] += field[k] - s * x[k];
    }
}

/// Ωx + X − ⟨x, X⟩x.
pub fn velocity(x: &UnitVector, omega: &SkewMatrix, field: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.dim(), omega.dim())?;
    check_dim(x.dim(), field.len())?;
    let mut out = vec![0.0; x.dim()];
    velocity_into(x.as_slice(), omega, field, &mut out);
    Ok(out)
}

fn rates(ens: &Ensemble, coords: &[f64], field: &[f64], out: &mut [f64]) {
    let dim = ens.dim();
    for (i, (x, o)) in coords
        .chunks_exact(dim)
        .zip(out.chunks_exact_mut(dim))
        .enumerate()
    {
        velocity_into(x, ens.omega(i), field, o);
    }
}

/// One RK4 step of size `dt`.
pub fn step(ens: &Ensemble, field: &DrivingField, dt: f64) -> Result<Ensemble> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "step must be > 0"));
    }
    let dim = ens.dim();
    let t = ens.time();
    let x = ens.coords();
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    let f1 = field.eval_coords(dim, x, t)?;
    rates(ens, x, &f1, &mut k1);

    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k1[i];
    }
    let f2 = field.eval_coords(dim, &stage, t + 0.5 * dt)?;
    rates(ens, &stage, &f2, &mut k2);

    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k2[i];
    }
    let f3 = field.eval_coords(dim, &stage, t + 0.5 * dt)?;
    rates(ens, &stage, &f3, &mut k3);

    for i in 0..n {
        stage[i] = x[i] + dt * k3[i];
    }
    let f4 = field.eval_coords(dim, &stage, t + dt)?;
    rates(ens, &stage, &f4, &mut k4);

    let mut next = stage;
    for i in 0..n {
        next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for p in next.chunks_exact_mut(dim) {
        renormalize_in_place(p)?;
    }
    Ok(ens.with_coords(next, t + dt))
}

/// Snapshots of a run together with X(t) at the snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Ensemble>,
    pub field_samples: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &Ensemble {
        &self.states[0]
    }

    pub fn last(&self) -> &Ensemble {
        self.states.last().unwrap()
    }

    /// X(t) samples as a replay field.
    pub fn replay(&self) -> Result<FieldReplay> {
        FieldReplay::new(self.times.clone(), self.field_samples.clone())
    }
}

/// Number of steps and the uniform step actually used to reach `t_end`.
pub fn step_grid(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "step must be finite and > 0"));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("t_end", "must be finite and >= 0"));
    }
    if t_end == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_end / steps as f64))
}

/// Integrates from `ens0` to `ens0.time() + t_end`.
///
/// The step is shrunk to `t_end / ceil(t_end / dt)` so that the grid lands on
/// `t_end`. Snapshots are taken at t = 0, every `record_every` steps, and at
/// the final step.
pub fn simulate(
    ens0: &Ensemble,
    field: &DrivingField,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    simulate_observed(ens0, field, t_end, dt, record_every, |_, _| {})
}

/// Like [`simulate`], and also calls `observer(state, X)` after every step,
/// including the initial state.
pub fn simulate_observed<F>(
    ens0: &Ensemble,
    field: &DrivingField,
    t_end: f64,
    dt: f64,
    record_every: usize,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&Ensemble, &[f64]),
{
    if record_every == 0 {
        return Err(Error::invalid("record_every", "must be >= 1"));
    }
    let (steps, h) = step_grid(t_end, dt)?;
    let mut field = field.clone();
    let t0 = ens0.time();
    let mut ens = ens0.clone();
    field.observe(&ens);

    let x0 = eval_field(&field, &ens, t0)?;
    observer(&ens, &x0);
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![ens.clone()],
        field_samples: vec![x0],
    };
    for n in 1..=steps {
        let next = step(&ens, &field, h)?;
        let t = t0 + n as f64 * h;
        ens = next.with_time(t);
        field.observe(&ens);
        let record = n % record_every == 0 || n == steps;
        let x = eval_field(&field, &ens, t)?;
        observer(&ens, &x);
        if record {
            traj.times.push(t);
            traj.states.push(ens.clone());
            traj.field_samples.push(x);
        }
    }
    Ok(traj)
}

/// Largest deviation from the collisionless identity
/// ‖x_k − x_l‖(t) = ‖x_k⁰ − x_l⁰‖ exp(−½ ∫₀ᵗ ⟨X, x_k + x_l⟩ ds)
/// over the snapshots, in log form with a trapezoidal integral.
pub fn collision_residual(traj: &Trajectory, k: usize, l: usize) -> Result<f64> {
    if k == l {
        return Err(Error::invalid("k, l", "indices must differ"));
    }
    let n = traj.initial().len();
    if k >= n || l >= n {
        return Err(Error::invalid("k, l", format!("index out of range for {n} particles")));
    }
    let d0 = chord_sq(traj.states[0].point(k), traj.states[0].point(l)).sqrt();
    if d0 < 1e-14 {
        return Err(Error::CoincidentPair(k, l));
    }
    let rate = |i: usize| -> f64 {
        let s = &traj.states[i];
        let x = &traj.field_samples[i];
        s.point(k)
            .iter()
            .zip(s.point(l))
            .zip(x)
            .map(|((a, b), xi)| xi * (a + b))
            .sum()
    };
    let mut integral = 0.0;
    let mut prev = rate(0);
    let mut worst: f64 = 0.0;
    for i in 1..traj.len() {
        let cur = rate(i);
        integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
        let s = &traj.states[i];
        let dist = chord_sq(s.point(k), s.point(l)).sqrt();
        let r = (dist.ln() - d0.ln() + 0.5 * integral).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{norm, sample_uniform};

    fn circle(points: &[(f64, f64)]) -> Ensemble {
        let coords = points.iter().flat_map(|&(a, b)| [a, b]).collect();
        Ensemble::from_flat(2, coords).unwrap()
    }

    #[test]
    fn mean_field_examples() {
        let e = Ensemble::from_flat(3, [0.0, 0.0, 1.0].repeat(5)).unwrap();
        let f = DrivingField::MeanField { kappa: 1.0 };
        assert_eq!(eval_field(&f, &e, 0.0).unwrap(), vec![0.0, 0.0, 1.0]);
        let e = circle(&[(0.6, 0.8), (-0.6, -0.8)]);
        assert_eq!(eval_field(&f, &e, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn winfree_constant_influence() {
        let e = sample_uniform(2, 17, 4).unwrap();
        let pole = UnitVector::north_pole(3);
        let f = DrivingField::Winfree {
            kappa: 1.0,
            influence: Influence::Custom(Arc::new(|_| 1.0)),
            pole: pole.clone(),
        };
        let x = eval_field(&f, &e, 0.3).unwrap();
        for (a, b) in x.iter().zip(pole.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn velocity_examples() {
        let om = SkewMatrix::planar(2, 0, 1, 1.0).unwrap();
        let x = UnitVector::basis(2, 0);
        assert_eq!(velocity(&x, &om, &[0.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(velocity(&x, &om, &[0.0, 0.5]).unwrap(), vec![0.0, 1.5]);
        let z = SkewMatrix::zero(3);
        let field = [0.0, 0.0, 2.0];
        let x = UnitVector::basis(3, 2);
        assert_eq!(velocity(&x, &z, &field).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn step_is_fixed_point_without_forcing() {
        let e = sample_uniform(3, 20, 1).unwrap();
        let f = DrivingField::Prescribed(Arc::new(|_| vec![0.0; 4]));
        let next = step(&e, &f, 0.1).unwrap();
        for (a, b) in next.coords().iter().zip(e.coords()) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert!((next.time() - 0.1).abs() < 1e-16);
        assert!(step(&e, &f, 0.0).is_err());
    }

    #[test]
    fn planar_rotation_matches_closed_form() {
        let om = SkewMatrix::planar(3, 0, 1, 1.0).unwrap();
        let e = Ensemble::from_flat(3, vec![1.0, 0.0, 0.0])
            .unwrap()
            .with_shared_omega(om)
            .unwrap();
        let f = DrivingField::Prescribed(Arc::new(|_| vec![0.0; 3]));
        let traj = simulate(&e, &f, 1.0, 1e-3, 1000).unwrap();
        let p = traj.last().point(0);
        let angle = p[1].atan2(p[0]);
        assert!((angle - 1.0).abs() <= 1e-10, "angle {angle}");
        assert!(p[2].abs() < 1e-15);
    }

    #[test]
    fn simulate_bookkeeping() {
        let e = sample_uniform(2, 8, 2).unwrap();
        let f = DrivingField::MeanField { kappa: 1.0 };
        let traj = simulate(&e, &f, 0.0, 0.01, 1).unwrap();
        assert_eq!(traj.len(), 1);
        let traj = simulate(&e, &f, 1.0, 0.01, 10).unwrap();
        assert_eq!(traj.len(), 100 / 10 + 1);
        assert!((traj.times.last().unwrap() - 1.0).abs() < 1e-12);
        for s in &traj.states {
            for p in s.points() {
                assert!((norm(p) - 1.0).abs() <= 1e-15);
            }
        }
        // a record cadence that does not divide the step count still ends at t_end
        let traj = simulate(&e, &f, 1.0, 0.01, 30).unwrap();
        assert_eq!(traj.len(), 100 / 30 + 2);
        assert!(simulate(&e, &f, 1.0, 0.01, 0).is_err());
    }

    #[test]
    fn collision_residual_errors() {
        let e = circle(&[(1.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let f = DrivingField::MeanField { kappa: 1.0 };
        let traj = simulate(&e, &f, 0.1, 0.01, 1).unwrap();
        assert!(matches!(collision_residual(&traj, 0, 1), Err(Error::CoincidentPair(0, 1))));
        assert!(collision_residual(&traj, 2, 2).is_err());
        assert!(collision_residual(&traj, 0, 2).unwrap() < 1e-6);
    }

    #[test]
    fn replay_interpolates_cubics_exactly() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let f = |t: f64| vec![t * t * t - t, 2.0 * t * t];
        let values = times.iter().map(|&t| f(t)).collect();
        let r = FieldReplay::new(times, values).unwrap();
        for &t in &[0.05, 0.77, 1.33, 1.99] {
            let v = r.eval(t).unwrap();
            let want = f(t);
            assert!((v[0] - want[0]).abs() < 1e-12 && (v[1] - want[1]).abs() < 1e-12);
        }
        assert!(matches!(r.eval(2.5), Err(Error::OutsideSpan { .. })));
        assert!(matches!(r.eval(-0.1), Err(Error::OutsideSpan { .. })));
    }

    #[test]
    fn delay_field_uses_constant_history_then_recorded_means() {
        let e = sample_uniform(2, 32, 9).unwrap();
        let f = DrivingField::time_delay(1.0, 0.5, &e, 0.01).unwrap();
        let m0 = e.mean();
        let x = eval_field(&f, &e, 0.2).unwrap();
        for (a, b) in x.iter().zip(&m0) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(eval_field(&f, &e, 0.6), Err(Error::OutsideSpan { .. })));
        assert!(matches!(eval_field(&f, &e, -0.1), Err(Error::OutsideSpan { .. })));
        let traj = simulate(&e, &f, 2.0, 0.01, 50).unwrap();
        assert_eq!(traj.len(), 5);
        assert!(DrivingField::time_delay(1.0, 0.005, &e, 0.01).is_err());
    }
}
