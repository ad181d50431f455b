//! Linear algebra on the embedded sphere S^d ⊂ R^{d+1}.
//!
//! All vectors are heap slices of length `d + 1`; the sphere dimension is a
//! runtime value. Skew matrices keep only their strictly-lower triangle so
//! that Ωᵀ = −Ω holds by construction.

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, BLOCK};

/// Inputs with norm at or below this are rejected by [`renormalize`].
pub const DEGENERATE_NORM: f64 = 1e-14;

/// Largest admissible norm of a [`BallVector`] after the drift guard.
pub const BALL_LIMIT: f64 = 1.0 - 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Squared chordal distance ‖a − b‖².
pub fn chord_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// A point on S^d stored in its R^{d+1} embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `coords` onto the sphere.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        renormalize(&coords)
    }

    /// The i-th standard basis vector of R^dim.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        UnitVector(v)
    }

    /// The pole e = (0, …, 0, 1).
    pub fn north_pole(dim: usize) -> Self {
        Self::basis(dim, dim - 1)
    }

    pub(crate) fn from_normalized(coords: Vec<f64>) -> Self {
        UnitVector(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Ambient dimension d + 1.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Returns `v − ⟨x, v⟩ x`, the projection of `v` onto the tangent space at `x`.
pub fn tangent_project(x: &UnitVector, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.dim(), v.len())?;
    let s = dot(x.as_slice(), v);
    Ok(v.iter().zip(x.as_slice()).map(|(vi, xi)| vi - s * xi).collect())
}

pub fn renormalize(y: &[f64]) -> Result<UnitVector> {
    let n = norm(y);
    if !(n > DEGENERATE_NORM) {
        return Err(Error::DegeneratePoint(n));
    }
    Ok(UnitVector(y.iter().map(|v| v / n).collect()))
}

/// Normalizes a buffer in place. Used by the integrators on flat state arrays.
pub(crate) fn renormalize_in_place(y: &mut [f64]) -> Result<()> {
    let n = norm(y);
    if !(n > DEGENERATE_NORM) {
        return Err(Error::DegeneratePoint(n));
    }
    y.iter_mut().for_each(|v| *v /= n);
    Ok(())
}

/// Skew-symmetric generator Ω of the free flow.
///
/// Entry (i, j) with i > j lives at `lower[i (i − 1) / 2 + j]`; the upper
/// triangle is read back as the negated mirror.
#[derive(Debug, Clone)]
pub struct SkewMatrix {
    dim: usize,
    lower: Vec<f64>,
}

fn lower_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

impl SkewMatrix {
    pub fn zero(dim: usize) -> Self {
        SkewMatrix {
            dim,
            lower: vec![0.0; dim * dim.saturating_sub(1) / 2],
        }
    }

    /// Builds Ω from its strictly-lower triangle in row-major order.
    pub fn from_lower(dim: usize, lower: Vec<f64>) -> Result<Self> {
        let expected = dim * dim.saturating_sub(1) / 2;
        check_dim(expected, lower.len())?;
        Ok(SkewMatrix { dim, lower })
    }

    /// Takes the lower triangle of `m`, rejecting inputs that are not skew
    /// within 1e-12.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let dim = m.nrows();
        let asym = (m + m.transpose()).norm();
        if asym > 1e-12 {
            return Err(Error::invalid("omega", format!("not skew: ||Ω + Ωᵀ|| = {asym:e}")));
        }
        let mut out = Self::zero(dim);
        for i in 1..dim {
            for j in 0..i {
                out.lower[lower_index(i, j)] = m[(i, j)];
            }
        }
        Ok(out)
    }

    /// Rotation generator of angular rate `rate` in the coordinate plane
    /// (i, j), carrying e_i toward e_j.
    pub fn planar(dim: usize, i: usize, j: usize, rate: f64) -> Result<Self> {
        if i == j || i >= dim || j >= dim {
            return Err(Error::invalid("plane", format!("({i}, {j}) in dimension {dim}")));
        }
        let mut out = Self::zero(dim);
        if j > i {
            out.lower[lower_index(j, i)] = rate;
        } else {
            out.lower[lower_index(i, j)] = -rate;
        }
        Ok(out)
    }

    /// Lower-triangle entries drawn i.i.d. from N(0, scale²).
    pub fn random(dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let n = dim * dim.saturating_sub(1) / 2;
        let lower = (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        SkewMatrix { dim, lower }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Greater => self.lower[lower_index(i, j)],
            Less => -self.lower[lower_index(j, i)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lower.iter().all(|&v| v == 0.0)
    }

    /// Writes Ωx into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 1..self.dim {
            let row = &self.lower[lower_index(i, 0)..lower_index(i, 0) + i];
            for (j, &a) in row.iter().enumerate() {
                out[i] += a * x[j];
                out[j] -= a * x[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

impl PartialEq for SkewMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self
                .lower
                .iter()
                .zip(&other.lower)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for SkewMatrix {}

impl Hash for SkewMatrix {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        for v in &self.lower {
            v.to_bits().hash(state);
        }
    }
}

/// Element of SO(d+1).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        Rotation(DMatrix::identity(dim, dim))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.0[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)] * x[j]).sum())
            .collect()
    }

    /// ‖RᵀR − I‖_F.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(n, n)).norm()
}

/// Nearest orthogonal matrix to `m` via the Newton–Schulz polar iteration
/// X ← X (3I − XᵀX) / 2, which converges for ‖XᵀX − I‖ < 1.
pub fn reorthonormalize(m: &DMatrix<f64>) -> Result<Rotation> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let n = m.nrows();
    let defect = orthogonality_defect(m);
    if !(defect < 0.5) {
        return Err(Error::NotNearOrthogonal(defect));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut x = m.clone();
    for _ in 0..60 {
        let gram = x.transpose() * &x;
        let next = &x * (&eye * 3.0 - gram) * 0.5;
        let change = (&next - &x).norm();
        x = next;
        if change <= 1e-16 * (n as f64) {
            break;
        }
    }
    if x.determinant() <= 0.0 {
        return Err(Error::NotNearOrthogonal(defect));
    }
    Ok(Rotation(x))
}

/// Parameter w of the Möbius map, strictly inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallVector(Vec<f64>);

impl BallVector {
    pub fn zero(dim: usize) -> Self {
        BallVector(vec![0.0; dim])
    }

    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = norm(&coords);
        if !(n < 1.0) {
            return Err(Error::invalid("w", format!("||w|| = {n} is not < 1")));
        }
        Ok(BallVector(coords))
    }

    /// Pulls `coords` back to ‖w‖ = [`BALL_LIMIT`] when floating-point drift
    /// has pushed it to or past the boundary. The flag reports a rescale.
    pub fn guarded(mut coords: Vec<f64>) -> (Self, bool) {
        let n = norm(&coords);
        if n >= BALL_LIMIT {
            let s = BALL_LIMIT / n;
            coords.iter_mut().for_each(|v| *v *= s);
            (BallVector(coords), true)
        } else {
            (BallVector(coords), false)
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn neg(&self) -> Self {
        BallVector(self.0.iter().map(|x| -x).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn validate_sampling(d: usize, n: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("d", "sphere dimension must be >= 1"));
    }
    if n < 1 {
        return Err(Error::invalid("n", "sample count must be >= 1"));
    }
    Ok(())
}

/// Fills `n` points block by block; each block of [`BLOCK`] points draws from
/// its own stream so the result does not depend on the thread count.
fn sample_blocks<F>(dim: usize, n: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let count = BLOCK.min(n - b * BLOCK);
            let mut out = Vec::with_capacity(count * dim);
            for _ in 0..count {
                out.extend(draw(&mut rng));
            }
            out
        })
        .collect();
    parts.concat()
}

/// `n` i.i.d. uniform points on S^d.
pub fn sample_uniform(d: usize, n: usize, seed: u64) -> Result<Ensemble> {
    validate_sampling(d, n)?;
    let dim = d + 1;
    let coords = sample_blocks(dim, n, seed, |rng| gaussian_unit(rng, dim));
    Ensemble::from_flat(dim, coords)
}

/// One draw of the cosine ⟨x, μ⟩ for vMF(μ, κ) by Wood's rejection scheme.
pub(crate) struct VmfCosine {
    m1: f64,
    kappa: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl VmfCosine {
    pub(crate) fn new(dim: usize, kappa: f64) -> Self {
        let m1 = (dim - 1) as f64;
        // b = (−2κ + sqrt(4κ² + (m−1)²)) / (m−1), written without cancellation
        let b = m1 / (2.0 * kappa + (4.0 * kappa * kappa + m1 * m1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(m1 / 2.0, m1 / 2.0).expect("positive shape");
        VmfCosine {
            m1,
            kappa,
            b,
            x0,
            c,
            beta,
        }
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        loop {
            let z: f64 = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if self.kappa * w + self.m1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }
}

pub(crate) fn vmf_point(
    rng: &mut ChaCha8Rng,
    mu: &UnitVector,
    cosine: &VmfCosine,
) -> Vec<f64> {
    let dim = mu.dim();
    let w = cosine.sample(rng);
    let tangent = loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let s = dot(&g, mu.as_slice());
        let t: Vec<f64> = g.iter().zip(mu.as_slice()).map(|(gi, mi)| gi - s * mi).collect();
        let n = norm(&t);
        if n > 1e-8 {
            break t.into_iter().map(|v| v / n).collect::<Vec<_>>();
        }
    };
    let r = (1.0 - w * w).max(0.0).sqrt();
    let mut x: Vec<f64> = mu
        .as_slice()
        .iter()
        .zip(&tangent)
        .map(|(m, t)| w * m + r * t)
        .collect();
    let n = norm(&x);
    x.iter_mut().for_each(|v| *v /= n);
    x
}

/// `n` i.i.d. von Mises–Fisher(μ, κ) samples on S^d.
pub fn sample_vmf(mu: &UnitVector, concentration: f64, n: usize, seed: u64) -> Result<Ensemble> {
    if !(concentration >= 0.0) || !concentration.is_finite() {
        return Err(Error::invalid("concentration", "must be finite and >= 0"));
    }
    validate_sampling(mu.dim().saturating_sub(1), n)?;
    let dim = mu.dim();
    let cosine = VmfCosine::new(dim, concentration);
    let coords = sample_blocks(dim, n, seed, |rng| vmf_point(rng, mu, &cosine));
    Ensemble::from_flat(dim, coords)
}
