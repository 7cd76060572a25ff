//! Pseudo-Poisson form of the log-Gaussian Cox process likelihood.
//!
//! With integration nodes `s̃_i`, exposures `E_i = w_i S(s̃_i)` and observed
//! points `s_j`, the log-likelihood of the latent vector `x` is
//! `−Σ_i E_i exp(η_i) + Σ_j η_j` (up to a constant), `η = A x + offset`,
//! where the rows of `A` evaluate the linear predictor at nodes and points.

use crate::error::{Error, Result};
use crate::geometry::BasisEval;
use crate::quadrature::{apply_effort, EffortField, IntegrationScheme};
use crate::sparse::CsrMatrix;

/// Largest linear predictor accepted before `exp` is considered divergent.
pub const ETA_MAX: f64 = 700.0;

/// Fixed effects entering the linear predictor next to the latent field:
/// an intercept and optional covariates, evaluated at nodes and points.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPredictorMap {
    pub n_field: usize,
    pub names: Vec<String>,
    /// row per integration node, column per fixed effect
    pub covariate_at_nodes: Vec<Vec<f64>>,
    /// row per observed point, column per fixed effect
    pub covariate_at_points: Vec<Vec<f64>>,
    /// row per mesh vertex, column per fixed effect
    pub covariate_at_vertices: Vec<Vec<f64>>,
}

impl LinearPredictorMap {
    pub fn intercept_only(n_field: usize, n_nodes: usize, n_points: usize) -> Self {
        Self {
            n_field,
            names: vec!["intercept".into()],
            covariate_at_nodes: vec![vec![1.0]; n_nodes],
            covariate_at_points: vec![vec![1.0]; n_points],
            covariate_at_vertices: vec![vec![1.0]; n_field],
        }
    }

    /// Intercept plus covariates given per mesh vertex and interpolated
    /// linearly to integration nodes and points.
    pub fn with_vertex_covariates(
        scheme: &IntegrationScheme,
        points: &BasisEval,
        covariates: &[(String, Vec<f64>)],
    ) -> Result<Self> {
        let n_field = scheme.node_basis.n_cols();
        let mut map = Self::intercept_only(n_field, scheme.len(), points.n_rows());
        for (name, values) in covariates {
            if values.len() != n_field {
                return Err(Error::BuildError(format!(
                    "covariate {name} has {} values for {n_field} vertices",
                    values.len()
                )));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::BuildError(format!(
                    "covariate {name} has non-finite value {v}"
                )));
            }
            for (row, v) in map
                .covariate_at_nodes
                .iter_mut()
                .zip(scheme.node_basis.interpolate(values))
            {
                row.push(v);
            }
            for (row, v) in map
                .covariate_at_points
                .iter_mut()
                .zip(points.interpolate(values))
            {
                row.push(v);
            }
            for (row, &v) in map.covariate_at_vertices.iter_mut().zip(values) {
                row.push(v);
            }
            map.names.push(name.clone());
        }
        Ok(map)
    }

    pub fn n_fixed(&self) -> usize {
        self.names.len()
    }
}

#[derive(Clone, Debug)]
pub struct PseudoPoisson {
    /// 0 for integration rows, 1 for data rows
    pub y: Vec<f64>,
    /// node exposures, then zeros for the data rows
    pub exposure: Vec<f64>,
    /// `[A₁ | Z₁; A₂ | Z₂]`
    pub a: CsrMatrix,
    pub offset: Vec<f64>,
    /// fixed-effect design at the mesh vertices, for the linear predictor
    /// `x_v + d_vᵀ β` reported per vertex
    pub vertex_design: Vec<Vec<f64>>,
    pub n_nodes: usize,
    pub n_points: usize,
    pub n_field: usize,
    pub n_fixed: usize,
}

impl PseudoPoisson {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_latent(&self) -> usize {
        self.n_field + self.n_fixed
    }

    /// The additive term dropped from [`loglik`]: the exposure-weighted
    /// domain measure, so that `loglik + log_constant` is the density
    /// relative to a unit-rate Poisson process on the sampled region.
    pub fn log_constant(&self) -> f64 {
        self.exposure.iter().sum()
    }

    pub fn eta(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.n_latent() {
            return Err(Error::BuildError(format!(
                "latent vector has length {}, expected {}",
                latent.len(),
                self.n_latent()
            )));
        }
        let mut eta = self.a.mul_vec(latent);
        for (row, (e, o)) in eta.iter_mut().zip(&self.offset).enumerate() {
            *e += o;
            if !(*e <= ETA_MAX) {
                return Err(Error::EtaOverflow { row, eta: *e });
            }
        }
        Ok(eta)
    }

    /// Overrides the node exposures, e.g. with a different effort field.
    pub fn with_exposure(mut self, node_exposure: &[f64]) -> Result<Self> {
        if node_exposure.len() != self.n_nodes {
            return Err(Error::BuildError(format!(
                "{} exposures for {} integration nodes",
                node_exposure.len(),
                self.n_nodes
            )));
        }
        self.exposure[..self.n_nodes].copy_from_slice(node_exposure);
        Ok(self)
    }
}

pub fn build_pseudo(
    scheme: &IntegrationScheme,
    effort: &EffortField,
    points: &BasisEval,
    predictor: &LinearPredictorMap,
) -> Result<PseudoPoisson> {
    let n = predictor.n_field;
    let m = predictor.n_fixed();
    let p = scheme.len();
    let np = points.n_rows();
    if scheme.node_basis.n_cols() != n || points.n_cols() != n {
        return Err(Error::BuildError(format!(
            "basis widths {} (nodes) and {} (points) differ from field size {n}",
            scheme.node_basis.n_cols(),
            points.n_cols()
        )));
    }
    if predictor.covariate_at_nodes.len() != p
        || predictor.covariate_at_points.len() != np
        || predictor.covariate_at_vertices.len() != n
    {
        return Err(Error::BuildError(
            "covariate rows do not match nodes and points".into(),
        ));
    }
    if predictor
        .covariate_at_nodes
        .iter()
        .chain(&predictor.covariate_at_points)
        .chain(&predictor.covariate_at_vertices)
        .any(|r| r.len() != m)
    {
        return Err(Error::BuildError(format!(
            "every covariate row needs {m} entries"
        )));
    }

    let node_exposure = apply_effort(scheme, effort)?;
    let mut rows = Vec::with_capacity(p + np);
    let blocks = [
        (scheme.node_basis.matrix(), &predictor.covariate_at_nodes),
        (points.matrix(), &predictor.covariate_at_points),
    ];
    for (basis, cov) in blocks {
        for (i, z) in cov.iter().enumerate() {
            let (cols, vals) = basis.row(i);
            let mut row: Vec<(usize, f64)> =
                cols.iter().copied().zip(vals.iter().copied()).collect();
            row.extend(z.iter().enumerate().map(|(k, &v)| (n + k, v)));
            rows.push(row);
        }
    }
    let mut y = vec![0.0; p];
    y.resize(p + np, 1.0);
    let mut exposure = node_exposure;
    exposure.resize(p + np, 0.0);
    Ok(PseudoPoisson {
        y,
        exposure,
        a: CsrMatrix::from_rows(n + m, rows),
        offset: vec![0.0; p + np],
        vertex_design: predictor.covariate_at_vertices.clone(),
        n_nodes: p,
        n_points: np,
        n_field: n,
        n_fixed: m,
    })
}

/// `−Σ E_i exp(η_i) + Σ y_i η_i`
pub fn loglik(pp: &PseudoPoisson, latent: &[f64]) -> Result<f64> {
    let eta = pp.eta(latent)?;
    Ok(eta
        .iter()
        .zip(&pp.exposure)
        .zip(&pp.y)
        .map(|((&e, &ex), &y)| y * e - if ex > 0.0 { ex * e.exp() } else { 0.0 })
        .sum())
}

/// Gradient `Aᵀ(y − E e^η)` and weights `w = E e^η` such that the negative
/// Hessian is `Aᵀ diag(w) A`.
pub fn grad_hess(pp: &PseudoPoisson, latent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let eta = pp.eta(latent)?;
    let w: Vec<f64> = eta
        .iter()
        .zip(&pp.exposure)
        .map(|(&e, &ex)| if ex > 0.0 { ex * e.exp() } else { 0.0 })
        .collect();
    let resid: Vec<f64> = pp.y.iter().zip(&w).map(|(y, w)| y - w).collect();
    Ok((pp.a.mul_t_vec(&resid), w))
}
