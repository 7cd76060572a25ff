//! Ground truth generation: GMRF samples and LGCP point patterns.
//!
//! All randomness comes from ChaCha8 streams seeded with `seed_from_u64`.
//! Point simulation gives triangle `t` its own stream (`set_stream(t)`), so
//! the result does not depend on how triangles are scheduled on threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SpdeModel;
use crate::geometry::{MeshMode, Point, TriMesh};
use crate::inference::Hyper;
use crate::quadrature::EffortField;
use crate::sparse::{CholeskyFactor, SymbolicCholesky};

/// Guard on the expected number of proposals.
pub const MAX_EXPECTED_POINTS: f64 = 1e7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub z: Vec<f64>,
    pub seed: u64,
    pub hyper: Hyper,
}

/// Factorizes `Q(θ)` once for repeated draws.
pub struct FieldSampler {
    factor: CholeskyFactor,
    hyper: Hyper,
}

impl FieldSampler {
    pub fn new(model: &SpdeModel, hyper: Hyper) -> Result<Self> {
        let q = model.precision_at(hyper.log_tau, hyper.log_kappa2);
        let symbolic = Arc::new(SymbolicCholesky::analyze(&q, 0));
        Ok(Self {
            factor: symbolic.factor(&q)?,
            hyper,
        })
    }

    /// `z = Pᵀ L⁻ᵀ ε`, `ε` standard normal.
    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps: Vec<f64> = (0..self.factor.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        FieldSample {
            z: self.factor.sample_transform(&eps),
            seed,
            hyper: self.hyper,
        }
    }
}

pub fn sample_field(model: &SpdeModel, hyper: Hyper, seed: u64) -> Result<FieldSample> {
    Ok(FieldSampler::new(model, hyper)?.sample(seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointPattern {
    pub points: Vec<Point>,
    pub mode: MeshMode,
}

impl PointPattern {
    pub fn n(&self) -> usize {
        self.points.len()
    }
}

/// Exact simulation of the Poisson process with log intensity
/// `μ + Σ_i z_i φ_i(s)` by thinning within each triangle. The exponent is
/// linear on a triangle, so its largest vertex value bounds it there.
///
/// On a sphere mesh points are drawn uniformly on the flat facets (the
/// same measure the quadrature uses) and then pushed radially onto the
/// sphere.
pub fn simulate_lgcp(
    mesh: &TriMesh,
    field: &FieldSample,
    mu: f64,
    seed: u64,
) -> Result<PointPattern> {
    if field.z.len() != mesh.n_vertices() {
        return Err(Error::BuildError(format!(
            "field has {} values for {} vertices",
            field.z.len(),
            mesh.n_vertices()
        )));
    }
    let bounds: Vec<(f64, f64)> = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let log_bound = mu
                + tri
                    .iter()
                    .map(|&v| field.z[v])
                    .fold(f64::NEG_INFINITY, f64::max);
            (log_bound, log_bound.exp() * mesh.triangle_area(t))
        })
        .collect();
    let expected: f64 = bounds.iter().map(|b| b.1).sum();
    if !(expected <= MAX_EXPECTED_POINTS) {
        return Err(Error::TooIntense(expected));
    }
    let radius = match mesh.mode() {
        MeshMode::Spherical { radius } => Some(radius),
        MeshMode::Planar => None,
    };
    let per_triangle: Vec<Vec<Point>> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let (log_bound, mean) = bounds[t];
            if mean <= 0.0 {
                return Vec::new();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let count = Poisson::new(mean)
                .map(|d| d.sample(&mut rng) as u64)
                .unwrap_or(0);
            let tri = mesh.triangles()[t];
            let pts = mesh.triangle_points(t);
            let mut out = Vec::new();
            for _ in 0..count {
                let r1: f64 = rng.random::<f64>().sqrt();
                let r2: f64 = rng.random();
                let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
                let eta = mu + (0..3).map(|k| bary[k] * field.z[tri[k]]).sum::<f64>();
                let u: f64 = rng.random();
                if u < (eta - log_bound).exp() {
                    let mut p = [0.0; 3];
                    for k in 0..3 {
                        for d in 0..3 {
                            p[d] += bary[k] * pts[k][d];
                        }
                    }
                    if let Some(r) = radius {
                        let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                        p = [p[0] * r / len, p[1] * r / len, p[2] * r / len];
                    }
                    out.push(p);
                }
            }
            out
        })
        .collect();
    Ok(PointPattern {
        points: per_triangle.into_iter().flatten().collect(),
        mode: mesh.mode(),
    })
}

/// Keeps each point with probability `S(s)`; `S` must lie in `[0, 1]`.
/// Effort values of exactly 0 or 1 decide without randomness.
pub fn censor_pattern(
    pattern: &PointPattern,
    effort: &EffortField,
    seed: u64,
) -> Result<PointPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(pattern.n());
    for &p in &pattern.points {
        let s = effort.value_at(p, pattern.mode)?;
        if s > 1.0 {
            return Err(Error::InvalidEffort(format!(
                "censoring needs effort in [0, 1], got {s}"
            )));
        }
        // one draw per point keeps the stream aligned with the input
        let u: f64 = rng.random();
        if u < s {
            points.push(p);
        }
    }
    Ok(PointPattern {
        points,
        mode: pattern.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Alpha;
    use crate::geometry::Polygon;
    use nalgebra::DMatrix;

    fn unit_square(n: usize) -> TriMesh {
        TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn same_seed_same_field() {
        let m = unit_square(4);
        let model = SpdeModel::new(&m, Alpha::Two).unwrap();
        let h = Hyper::new(0.0, 1.0);
        assert_eq!(
            sample_field(&model, h, 9).unwrap(),
            sample_field(&model, h, 9).unwrap()
        );
        assert_ne!(
            sample_field(&model, h, 9).unwrap().z,
            sample_field(&model, h, 10).unwrap().z
        );
    }

    #[test]
    fn sample_covariance_matches_inverse() {
        let m = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 5, 4).unwrap();
        let model = SpdeModel::new(&m, Alpha::Two).unwrap();
        let h = Hyper::new(-1.0, 2.0);
        let sampler = FieldSampler::new(&model, h).unwrap();
        let n = m.n_vertices();
        let reps = 10_000;
        let mut mean = vec![0.0; n];
        let mut cov = vec![vec![0.0; n]; n];
        for s in 0..reps {
            let z = sampler.sample(s).z;
            for i in 0..n {
                mean[i] += z[i] / reps as f64;
                for j in 0..n {
                    cov[i][j] += z[i] * z[j] / reps as f64;
                }
            }
        }
        let q = model.precision_at(h.log_tau, h.log_kappa2).to_dense();
        let inv = DMatrix::from_fn(n, n, |i, j| q[i][j])
            .try_inverse()
            .unwrap();
        for i in 0..n {
            let sd = inv[(i, i)].sqrt();
            assert!(mean[i].abs() <= 4.0 * sd / (reps as f64).sqrt());
            for j in 0..n {
                // standard error of a sample covariance
                let se = ((inv[(i, i)] * inv[(j, j)] + inv[(i, j)].powi(2)) / reps as f64).sqrt();
                assert!((cov[i][j] - inv[(i, j)]).abs() <= 5.0 * se);
            }
        }
    }

    #[test]
    fn homogeneous_count() {
        let m = unit_square(3);
        let field = FieldSample {
            z: vec![0.0; m.n_vertices()],
            seed: 0,
            hyper: Hyper::new(0.0, 0.0),
        };
        let reps = 1000;
        let total: usize = (0..reps)
            .map(|s| simulate_lgcp(&m, &field, 5f64.ln(), s).unwrap().n())
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 5.0).abs() <= 4.0 * (5.0 / reps as f64).sqrt());
    }

    #[test]
    fn guard_on_intensity() {
        let m = unit_square(2);
        let field = FieldSample {
            z: vec![0.0; m.n_vertices()],
            seed: 0,
            hyper: Hyper::new(0.0, 0.0),
        };
        assert!(matches!(
            simulate_lgcp(&m, &field, 20.0, 1),
            Err(Error::TooIntense(_))
        ));
    }

    #[test]
    fn censoring() {
        let pts: Vec<Point> = (0..400)
            .map(|i| {
                [
                    (i % 20) as f64 / 20.0 + 0.01,
                    (i / 20) as f64 / 20.0 + 0.01,
                    0.0,
                ]
            })
            .collect();
        let pattern = PointPattern {
            points: pts,
            mode: MeshMode::Planar,
        };
        assert_eq!(
            censor_pattern(&pattern, &EffortField::Constant(1.0), 3).unwrap(),
            pattern
        );
        let hole = Polygon::rectangle(0.2, 0.2, 0.6, 0.5);
        let cut = censor_pattern(&pattern, &EffortField::indicator(vec![hole.clone()]), 3).unwrap();
        assert!(cut.points.iter().all(|p| !hole.contains([p[0], p[1]])));
        assert!(cut.n() < pattern.n());
        assert!(matches!(
            censor_pattern(&pattern, &EffortField::Constant(1.5), 3),
            Err(Error::InvalidEffort(_))
        ));
    }
}
