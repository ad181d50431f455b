use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{norm, SkewMatrix, UnitVector};

/// Free-flow generators attached to an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Omegas {
    /// Every particle shares one Ω (the identical model).
    Shared(SkewMatrix),
    /// One label per particle (the non-identical model).
    PerParticle(Arc<Vec<SkewMatrix>>),
}

/// Ordered particle positions on S^d plus their Ω labels and the current time.
///
/// Positions are stored row-major in a flat buffer of `len() * dim()` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    coords: Vec<f64>,
    omegas: Omegas,
    time: f64,
}

/// One Ω group: the shared generator and the particle indices carrying it.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaGroup {
    pub omega: SkewMatrix,
    pub members: Vec<usize>,
}

/// Tolerance on ‖x‖ − 1 accepted when wrapping raw coordinates.
const UNIT_TOL: f64 = 1e-12;

impl Ensemble {
    /// Wraps a flat coordinate buffer with Ω = 0. Every row must already be a
    /// unit vector.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("dim", "ambient dimension must be >= 2"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::invalid(
                "coords",
                format!("length {} is not a positive multiple of {dim}", coords.len()),
            ));
        }
        for p in coords.chunks_exact(dim) {
            let n = norm(p);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid("coords", format!("point norm {n} is not 1")));
            }
        }
        Ok(Ensemble {
            dim,
            coords,
            omegas: Omegas::Shared(SkewMatrix::zero(dim)),
            time: 0.0,
        })
    }

    pub fn from_points(points: &[UnitVector]) -> Result<Self> {
        let dim = points
            .first()
            .ok_or_else(|| Error::invalid("points", "ensemble must be nonempty"))?
            .dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            crate::geometry::check_dim(dim, p.dim())?;
            coords.extend_from_slice(p.as_slice());
        }
        Self::from_flat(dim, coords)
    }

    pub(crate) fn with_coords(&self, coords: Vec<f64>, time: f64) -> Self {
        Ensemble {
            dim: self.dim,
            coords,
            omegas: self.omegas.clone(),
            time,
        }
    }

    pub fn with_shared_omega(mut self, omega: SkewMatrix) -> Result<Self> {
        crate::geometry::check_dim(self.dim, omega.dim())?;
        self.omegas = Omegas::Shared(omega);
        Ok(self)
    }

    pub fn with_omegas(mut self, omegas: Vec<SkewMatrix>) -> Result<Self> {
        if omegas.len() != self.len() {
            return Err(Error::invalid(
                "omegas",
                format!("{} labels for {} particles", omegas.len(), self.len()),
            ));
        }
        for om in &omegas {
            crate::geometry::check_dim(self.dim, om.dim())?;
        }
        self.omegas = Omegas::PerParticle(Arc::new(omegas));
        Ok(self)
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Ambient dimension d + 1.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sphere dimension d.
    pub fn sphere_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn unit(&self, i: usize) -> UnitVector {
        UnitVector::from_normalized(self.point(i).to_vec())
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn omegas(&self) -> &Omegas {
        &self.omegas
    }

    pub fn omega(&self, i: usize) -> &SkewMatrix {
        match &self.omegas {
            Omegas::Shared(om) => om,
            Omegas::PerParticle(v) => &v[i],
        }
    }

    /// Distinct Ω labels in order of first appearance, with their members.
    /// Labels are compared by exact bit pattern.
    pub fn omega_groups(&self) -> Vec<OmegaGroup> {
        match &self.omegas {
            Omegas::Shared(om) => vec![OmegaGroup {
                omega: om.clone(),
                members: (0..self.len()).collect(),
            }],
            Omegas::PerParticle(v) => {
                let mut index = std::collections::HashMap::<&SkewMatrix, usize>::new();
                let mut groups: Vec<OmegaGroup> = Vec::new();
                for (i, om) in v.iter().enumerate() {
                    let g = *index.entry(om).or_insert_with(|| {
                        groups.push(OmegaGroup {
                            omega: om.clone(),
                            members: Vec::new(),
                        });
                        groups.len() - 1
                    });
                    groups[g].members.push(i);
                }
                groups
            }
        }
    }

    /// Mean position, accumulated with Neumaier compensated summation.
    pub fn mean(&self) -> Vec<f64> {
        compensated_mean(self.dim, &self.coords)
    }
}

/// Row mean of a flat `n × dim` buffer with Neumaier compensated summation.
/// Exactly antipodal pairs cancel to exactly zero.
pub(crate) fn compensated_mean(dim: usize, coords: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut comp = vec![0.0; dim];
    for p in coords.chunks_exact(dim) {
        for k in 0..dim {
            let t = sum[k] + p[k];
            if sum[k].abs() >= p[k].abs() {
                comp[k] += (sum[k] - t) + p[k];
            } else {
                comp[k] += (p[k] - t) + sum[k];
            }
            sum[k] = t;
        }
    }
    let n = (coords.len() / dim) as f64;
    sum.iter().zip(&comp).map(|(s, c)| (s + c) / n).collect()
}
