//! Watanabe–Strogatz reduction: the (w, R) ODEs, the Möbius map and the
//! push-forward of ensembles along M_t(x) = W_w(Rx).

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{step_grid, velocity, DrivingField};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::geometry::{
    check_dim, dot, norm, norm_sq, reorthonormalize, BallVector, Rotation, SkewMatrix, UnitVector,
};

/// Squared-norm threshold on ‖u + w‖² below which the Möbius map is refused.
pub const MOBIUS_POLE_TOL: f64 = 1e-14;

/// Steps between reorthonormalizations of R.
pub const REORTHO_EVERY: usize = 100;

/// One point (w(t), R(t)) of the reduced flow.
#[derive(Debug, Clone, PartialEq)]
pub struct WsState {
    pub w: BallVector,
    pub r: Rotation,
    pub time: f64,
}

impl WsState {
    /// w = 0, R = I at time 0.
    pub fn initial(dim: usize) -> Self {
        WsState {
            w: BallVector::zero(dim),
            r: Rotation::identity(dim),
            time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn is_initial(&self) -> bool {
        self.w.is_zero() && self.r.is_identity()
    }

    /// M_t(x) = W_w(Rx).
    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        mobius_raw(self.w.as_slice(), &self.r.apply(x))
    }
}

/// Right-hand sides (ẇ, Ṙ) of the reduced flow at `s` driven by `x`.
pub fn ws_rhs(s: &WsState, omega: &SkewMatrix, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_dim(s.dim(), omega.dim())?;
    check_dim(s.dim(), x.len())?;
    let dw = w_rate(s.w.as_slice(), omega, x);
    let dr = generator(s.w.as_slice(), omega, x) * s.r.matrix();
    Ok((dw, dr))
}

fn w_rate(w: &[f64], omega: &SkewMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = omega.apply(w);
    let a = 0.5 * (1.0 + norm_sq(w));
    let b = dot(w, x);
    for k in 0..w.len() {
        out[k] += a * x[k] - b * w[k];
    }
    out
}

/// Ω + Xwᵀ − wXᵀ.
fn generator(w: &[f64], omega: &SkewMatrix, x: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let mut g = omega.to_dense();
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] += x[i] * w[j] - w[i] * x[j];
        }
    }
    g
}

/// Reduced-flow states on the integration grid plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct WsEvolution {
    /// One state per grid time, starting with (0, I) at t = 0.
    pub states: Vec<WsState>,
    /// Number of times ‖w‖ had to be pulled back inside the ball.
    pub guard_rescales: usize,
}

fn time_field(field: &DrivingField, dim: usize, t: f64) -> Result<Vec<f64>> {
    match field {
        DrivingField::Replay(_) | DrivingField::Prescribed(_) => {
            field.eval_coords(dim, &[], t)
        }
        _ => Err(Error::invalid(
            "field",
            "the reduced flow needs an explicit X(t): use a replay or prescribed field",
        )),
    }
}

/// Integrates the reduced flow from (0, I) over [0, t_end] with RK4 on the
/// same step grid as [`crate::dynamics::simulate`].
pub fn ws_evolve(omega: &SkewMatrix, field: &DrivingField, t_end: f64, dt: f64) -> Result<WsEvolution> {
    let dim = omega.dim();
    if let DrivingField::Replay(r) = field {
        check_dim(dim, r.dim())?;
        if !r.covers(0.0, t_end) {
            let (start, end) = r.span();
            return Err(Error::OutsideSpan { t: t_end, start, end });
        }
    }
    let (steps, h) = step_grid(t_end, dt)?;
    let mut state = WsState::initial(dim);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(state.clone());
    let mut guard_rescales = 0;
    for n in 1..=steps {
        let t = (n - 1) as f64 * h;
        let (w, r) = rk4_ws(&state, omega, field, t, h)?;
        let (w, hit) = BallVector::guarded(w);
        guard_rescales += hit as usize;
        let r = if n % REORTHO_EVERY == 0 || n == steps {
            reorthonormalize(&r)?
        } else {
            Rotation::from_matrix_unchecked(r)
        };
        state = WsState {
            w,
            r,
            time: n as f64 * h,
        };
        states.push(state.clone());
    }
    Ok(WsEvolution {
        states,
        guard_rescales,
    })
}

fn rk4_ws(
    s: &WsState,
    omega: &SkewMatrix,
    field: &DrivingField,
    t: f64,
    h: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = s.dim();
    let w0 = s.w.as_slice();
    let r0 = s.r.matrix();
    let x1 = time_field(field, dim, t)?;
    let xm = time_field(field, dim, t + 0.5 * h)?;
    let x4 = time_field(field, dim, t + h)?;

    let axpy = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + c * y).collect()
    };

    let kw1 = w_rate(w0, omega, &x1);
    let kr1 = generator(w0, omega, &x1) * r0;
    let w2 = axpy(w0, &kw1, 0.5 * h);
    let r2 = r0 + &kr1 * (0.5 * h);
    let kw2 = w_rate(&w2, omega, &xm);
    let kr2 = generator(&w2, omega, &xm) * &r2;
    let w3 = axpy(w0, &kw2, 0.5 * h);
    let r3 = r0 + &kr2 * (0.5 * h);
    let kw3 = w_rate(&w3, omega, &xm);
    let kr3 = generator(&w3, omega, &xm) * &r3;
    let w4 = axpy(w0, &kw3, h);
    let r4 = r0 + &kr3 * h;
    let kw4 = w_rate(&w4, omega, &x4);
    let kr4 = generator(&w4, omega, &x4) * &r4;

    let w: Vec<f64> = (0..dim)
        .map(|k| w0[k] + h / 6.0 * (kw1[k] + 2.0 * kw2[k] + 2.0 * kw3[k] + kw4[k]))
        .collect();
    let r = r0 + (kr1 + kr2 * 2.0 + kr3 * 2.0 + kr4) * (h / 6.0);
    Ok((w, r))
}

fn mobius_raw(w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if w.iter().all(|&v| v == 0.0) {
        return Ok(u.to_vec());
    }
    let s: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + b).collect();
    let den = norm_sq(&s);
    if den <= MOBIUS_POLE_TOL {
        return Err(Error::MobiusPole(den));
    }
    let c = (1.0 - norm_sq(w)) / den;
    let mut out: Vec<f64> = w.iter().zip(&s).map(|(wi, si)| wi + c * si).collect();
    // the map is exactly sphere-preserving; this only removes rounding
    let n = norm(&out);
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// W_w(x) = w + (x + w)(1 − ‖w‖²)/‖x + w‖².
pub fn mobius(w: &BallVector, x: &UnitVector) -> Result<UnitVector> {
    check_dim(w.dim(), x.dim())?;
    Ok(UnitVector::from_normalized(mobius_raw(w.as_slice(), x.as_slice())?))
}

/// Applies M_t to every particle. The initial state returns `ens0` itself.
pub fn push_forward(s: &WsState, ens0: &Ensemble) -> Result<Ensemble> {
    check_dim(s.dim(), ens0.dim())?;
    if s.is_initial() {
        return Ok(ens0.clone().with_time(s.time));
    }
    let dim = ens0.dim();
    let mapped: Result<Vec<Vec<f64>>> = ens0
        .coords()
        .par_chunks_exact(dim)
        .map(|x| s.map(x))
        .collect();
    let coords = mapped?.concat();
    Ok(ens0.with_coords(coords, s.time))
}

/// Largest gap between the central difference of t ↦ M_t(x) and the model
/// velocity Ω M_t(x) + X − ⟨M_t(x), X⟩M_t(x), over sample points and interior
/// grid times.
pub fn conjugacy_residual(
    states: &[WsState],
    field: &DrivingField,
    omega: &SkewMatrix,
    samples: &Ensemble,
) -> Result<f64> {
    if states.len() < 3 {
        return Err(Error::invalid("states", "need at least 3 consecutive states"));
    }
    let dim = samples.dim();
    check_dim(dim, omega.dim())?;
    let dt = states[1].time - states[0].time;
    if !(dt > 0.0) || states
        .windows(2)
        .any(|p| ((p[1].time - p[0].time) - dt).abs() > 1e-9 * dt)
    {
        return Err(Error::invalid("states", "time spacing must be uniform"));
    }
    let mut worst: f64 = 0.0;
    for i in 1..states.len() - 1 {
        let x = time_field(field, dim, states[i].time)?;
        for p in samples.points() {
            let prev = states[i - 1].map(p)?;
            let next = states[i + 1].map(p)?;
            let here = UnitVector::from_normalized(states[i].map(p)?);
            let v = velocity(&here, omega, &x)?;
            let gap = (0..dim)
                .map(|k| ((next[k] - prev[k]) / (2.0 * dt) - v[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}

/// Residuals of two algebraic identities of the reduced flow at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// |⟨w, ẇ⟩ − ½(1 − ‖w‖²)⟨w, X⟩|.
    pub w_radial: f64,
    /// |⟨D, M − w⟩ + ½‖M − w‖²⟨M + w, X⟩| with D the right-hand side of the
    /// equation for d/dt (M − w).
    pub chord: f64,
}

/// Evaluates both identities for ball point `w`, unit vector `m`, field `x`
/// and generator `omega`.
pub fn identity_residuals(
    w: &BallVector,
    m: &UnitVector,
    omega: &SkewMatrix,
    x: &[f64],
) -> Result<IdentityResiduals> {
    let dim = w.dim();
    check_dim(dim, m.dim())?;
    check_dim(dim, omega.dim())?;
    check_dim(dim, x.len())?;
    let w = w.as_slice();
    let m = m.as_slice();
    let dw = w_rate(w, omega, x);
    let ww = norm_sq(w);
    let w_radial = (dot(w, &dw) - 0.5 * (1.0 - ww) * dot(w, x)).abs();

    let diff: Vec<f64> = m.iter().zip(w).map(|(a, b)| a - b).collect();
    let rot = omega.apply(&diff);
    let mx = dot(m, x);
    let wx = dot(w, x);
    let d: Vec<f64> = (0..dim)
        .map(|k| rot[k] + 0.5 * (1.0 - ww) * x[k] - mx * m[k] + wx * w[k])
        .collect();
    let sum: Vec<f64> = m.iter().zip(w).map(|(a, b)| a + b).collect();
    let chord = (dot(&d, &diff) + 0.5 * norm_sq(&diff) * dot(&sum, x)).abs();
    Ok(IdentityResiduals { w_radial, chord })
}

/// One reduced-flow state per distinct Ω label, keyed by exact bit pattern.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeterWsState {
    pub entries: HashMap<SkewMatrix, WsState>,
}

impl HeterWsState {
    pub fn get(&self, omega: &SkewMatrix) -> Option<&WsState> {
        self.entries.get(omega)
    }
}

/// Evolves one reduced flow per Ω, all driven by the same X(t). Entry `n` of
/// the result holds every group's state at grid time `n`.
pub fn ws_evolve_heterogeneous(
    omegas: &[SkewMatrix],
    field: &DrivingField,
    t_end: f64,
    dt: f64,
) -> Result<Vec<HeterWsState>> {
    let mut distinct: Vec<&SkewMatrix> = Vec::new();
    for om in omegas {
        if !distinct.contains(&om) {
            distinct.push(om);
        }
    }
    let runs: Result<Vec<WsEvolution>> = distinct
        .par_iter()
        .map(|om| ws_evolve(om, field, t_end, dt))
        .collect();
    let runs = runs?;
    let len = runs.first().map_or(0, |r| r.states.len());
    Ok((0..len)
        .map(|n| HeterWsState {
            entries: distinct
                .iter()
                .zip(&runs)
                .map(|(om, run)| ((*om).clone(), run.states[n].clone()))
                .collect(),
        })
        .collect())
}

/// Moves each particle by the map of its own Ω group; labels are kept.
pub fn heterogeneous_push_forward(h: &HeterWsState, ens0: &Ensemble) -> Result<Ensemble> {
    let dim = ens0.dim();
    let mut coords = Vec::with_capacity(ens0.coords().len());
    let mut time = ens0.time();
    for (i, p) in ens0.points().enumerate() {
        let s = h.get(ens0.omega(i)).ok_or(Error::MissingGroup(i))?;
        check_dim(dim, s.dim())?;
        time = s.time;
        if s.is_initial() {
            coords.extend_from_slice(p);
        } else {
            coords.extend(s.map(p)?);
        }
    }
    Ok(ens0.with_coords(coords, time))
}
