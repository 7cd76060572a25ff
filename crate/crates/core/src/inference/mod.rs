//! Laplace approximation of the latent posterior at fixed hyperparameters,
//! grid exploration of the hyperparameter posterior and the resulting
//! mixture marginals.

mod grid;
mod posterior;

pub use grid::{explore_grid, GridPoint, GridSpec, HyperGrid};
pub use posterior::{
    exceedance_from_components, exceedance_map, marginals, normal_cdf, DensityGrid,
    FixedEffectSummary, HyperMarginal, MixtureComponent, PosteriorResult,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SpdeModel;
use crate::likelihood::{grad_hess, loglik, PseudoPoisson};
use crate::sparse::{CholeskyFactor, SparseSym, SymbolicCholesky};

pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Default prior precision of every fixed effect.
pub const FIXED_PRIOR_PRECISION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub log_tau: f64,
    pub log_kappa2: f64,
}

impl Hyper {
    pub fn new(log_tau: f64, log_kappa2: f64) -> Self {
        Self {
            log_tau,
            log_kappa2,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.log_tau, self.log_kappa2]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn kappa(&self) -> f64 {
        (0.5 * self.log_kappa2).exp()
    }

    /// Hyperparameters with practical range `√8/κ` equal to `range` and
    /// stationary variance `σ²` of the α = 2 model in the plane,
    /// `σ² = 1 / (4π κ² τ²)`.
    pub fn from_range_sigma2(range: f64, sigma2: f64) -> Self {
        let kappa = 8f64.sqrt() / range;
        let log_kappa2 = 2.0 * kappa.ln();
        let log_tau = -0.5 * (4.0 * std::f64::consts::PI * kappa * kappa * sigma2).ln();
        Self {
            log_tau,
            log_kappa2,
        }
    }
}

/// Independent Gaussian priors on `log τ` and `log κ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperPrior {
    pub log_tau_mean: f64,
    pub log_tau_sd: f64,
    pub log_kappa2_mean: f64,
    pub log_kappa2_sd: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            log_tau_mean: 0.0,
            log_tau_sd: 3.0,
            log_kappa2_mean: 0.0,
            log_kappa2_sd: 3.0,
        }
    }
}

impl HyperPrior {
    pub fn log_density(&self, h: &Hyper) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let term = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * ln2pi;
        term(h.log_tau, self.log_tau_mean, self.log_tau_sd)
            + term(h.log_kappa2, self.log_kappa2_mean, self.log_kappa2_sd)
    }
}

/// Gaussian approximation of `π(x | y, θ)` at one hyperparameter value.
#[derive(Clone, Debug)]
pub struct GaussianApprox {
    pub hyper: Hyper,
    /// posterior mode of (field, fixed effects)
    pub mode: Vec<f64>,
    /// factor of `Q_post = Q_prior_ext + Aᵀ diag(w) A` at the mode; dropped
    /// by grid exploration to save memory
    pub precision_factor: Option<CholeskyFactor>,
    pub marginal_sd: Vec<f64>,
    /// linear predictor `x_v + d_vᵀβ` at each vertex: mode and sd
    pub predictor_mode: Vec<f64>,
    pub predictor_sd: Vec<f64>,
    /// Laplace approximation of `log π(y | θ)`
    pub log_evidence: f64,
    pub iterations: usize,
}

impl GaussianApprox {
    pub fn n_field(&self) -> usize {
        self.predictor_mode.len()
    }

    pub fn without_factor(mut self) -> Self {
        self.precision_factor = None;
        self
    }
}

/// Structure shared by every Laplace fit of one data set and model: the
/// pattern of the posterior precision, its symbolic factorization and the
/// slots each likelihood row contributes to.
pub struct LaplaceProblem<'a> {
    pp: &'a PseudoPoisson,
    model: &'a SpdeModel,
    fixed_prior_prec: f64,
    h_pattern: SparseSym,
    /// H slot for each slot of the model precision
    q_slots: Vec<usize>,
    /// H slot of each fixed-effect diagonal
    fixed_slots: Vec<usize>,
    /// per likelihood row: (H slot, A_ra A_rb) for a ≤ b
    row_ptr: Vec<usize>,
    pair_slot: Vec<usize>,
    pair_coef: Vec<f64>,
    h_symbolic: Arc<SymbolicCholesky>,
    q_symbolic: Arc<SymbolicCholesky>,
}

impl<'a> LaplaceProblem<'a> {
    pub fn new(pp: &'a PseudoPoisson, model: &'a SpdeModel, fixed_prior_prec: f64) -> Result<Self> {
        let n = pp.n_field;
        let m = pp.n_fixed;
        if model.n() != n {
            return Err(Error::BuildError(format!(
                "model has {} vertices, data map {n}",
                model.n()
            )));
        }
        if !(fixed_prior_prec >= 0.0 && fixed_prior_prec.is_finite()) {
            return Err(Error::BuildError(format!(
                "fixed-effect prior precision {fixed_prior_prec} must be ≥ 0"
            )));
        }
        let q_pattern = model.pattern();
        let mut triplets: Vec<(usize, usize, f64)> = q_pattern.triplets().collect();
        for r in 0..pp.n_rows() {
            let (cols, _) = pp.a.row(r);
            for a in 0..cols.len() {
                for b in a..cols.len() {
                    triplets.push((cols[a], cols[b], 0.0));
                }
            }
        }
        let h_pattern = SparseSym::from_triplets(n + m, triplets);
        let slot = |i: usize, j: usize| h_pattern.position(i, j).expect("slot in pattern");
        let q_slots = q_pattern.triplets().map(|(i, j, _)| slot(i, j)).collect();
        let fixed_slots = (n..n + m).map(|k| slot(k, k)).collect();
        let mut row_ptr = vec![0];
        let mut pair_slot = Vec::new();
        let mut pair_coef = Vec::new();
        for r in 0..pp.n_rows() {
            let (cols, vals) = pp.a.row(r);
            for a in 0..cols.len() {
                for b in a..cols.len() {
                    pair_slot.push(slot(cols[a], cols[b]));
                    pair_coef.push(vals[a] * vals[b]);
                }
            }
            row_ptr.push(pair_slot.len());
        }
        let h_symbolic = Arc::new(SymbolicCholesky::analyze(&h_pattern, m));
        let q_symbolic = Arc::new(SymbolicCholesky::analyze(q_pattern, 0));
        Ok(Self {
            pp,
            model,
            fixed_prior_prec,
            h_pattern,
            q_slots,
            fixed_slots,
            row_ptr,
            pair_slot,
            pair_coef,
            h_symbolic,
            q_symbolic,
        })
    }

    pub fn data(&self) -> &PseudoPoisson {
        self.pp
    }

    pub fn model(&self) -> &SpdeModel {
        self.model
    }

    pub fn n_latent(&self) -> usize {
        self.pp.n_latent()
    }

    /// `−½ xᵀ Q_ext x` and `Q_ext x`
    fn prior_terms(&self, q: &SparseSym, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.pp.n_field;
        let mut qx = q.mul_vec(&x[..n]);
        let mut quad: f64 = qx.iter().zip(x).map(|(a, b)| a * b).sum();
        for &xf in &x[n..] {
            qx.push(self.fixed_prior_prec * xf);
            quad += self.fixed_prior_prec * xf * xf;
        }
        (-0.5 * quad, qx)
    }

    fn objective(&self, q: &SparseSym, x: &[f64]) -> Result<f64> {
        Ok(loglik(self.pp, x)? + self.prior_terms(q, x).0)
    }

    fn posterior_precision(&self, q: &SparseSym, w: &[f64]) -> SparseSym {
        let mut values = vec![0.0; self.h_pattern.nnz()];
        for (&s, &v) in self.q_slots.iter().zip(q.values()) {
            values[s] += v;
        }
        for &s in &self.fixed_slots {
            values[s] += self.fixed_prior_prec;
        }
        for (r, &wr) in w.iter().enumerate() {
            if wr == 0.0 {
                continue;
            }
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                values[self.pair_slot[p]] += wr * self.pair_coef[p];
            }
        }
        self.h_pattern.with_values(values)
    }

    /// Starting point: zero field and the constant-intensity intercept.
    pub fn default_start(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_latent()];
        let exposure: f64 = self.pp.exposure.iter().sum();
        if self.pp.n_fixed > 0 && self.pp.n_points > 0 && exposure > 0.0 {
            x[self.pp.n_field] = (self.pp.n_points as f64 / exposure).ln();
        }
        x
    }

    /// Newton iterations for the mode of `loglik(x) − ½ xᵀ Q_ext x`.
    pub fn fit(&self, hyper: Hyper, start: Option<&[f64]>) -> Result<GaussianApprox> {
        let q = self.model.precision_at(hyper.log_tau, hyper.log_kappa2);
        let mut x = match start {
            Some(s) if s.len() == self.n_latent() => s.to_vec(),
            _ => self.default_start(),
        };
        let mut f = match self.objective(&q, &x) {
            Ok(v) => v,
            Err(Error::EtaOverflow { .. }) => {
                x = self.default_start();
                self.objective(&q, &x)?
            }
            Err(e) => return Err(e),
        };
        let mut iterations = 0;
        let (factor, w) = loop {
            let (mut g, w) = grad_hess(self.pp, &x)?;
            let (_, qx) = self.prior_terms(&q, &x);
            for (gi, qi) in g.iter_mut().zip(&qx) {
                *gi -= qi;
            }
            let factor = self.h_symbolic.factor(&self.posterior_precision(&q, &w))?;
            let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if grad_norm <= GRADIENT_TOLERANCE * (1.0 + f.abs()) {
                break (factor, w);
            }
            if iterations == MAX_NEWTON_ITERATIONS {
                return Err(Error::NoConvergence {
                    iterations,
                    grad_norm,
                });
            }
            iterations += 1;
            let step = factor.solve(&g);
            // step halving on decrease or overflow; a relative slack of a few
            // ulps lets the last iterations through when f has converged
            let slack = 1e-14 * (1.0 + f.abs());
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                match self.objective(&q, &trial) {
                    Ok(ft) if ft >= f - slack => {
                        x = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                    Ok(_) | Err(Error::EtaOverflow { .. }) => t *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            if !accepted {
                return Err(Error::NoConvergence {
                    iterations,
                    grad_norm,
                });
            }
        };
        let _ = w;

        let log_det_q_ext = {
            let qf = self.q_symbolic.factor(&q)?;
            let fixed = if self.fixed_prior_prec > 0.0 {
                self.pp.n_fixed as f64 * self.fixed_prior_prec.ln()
            } else {
                0.0
            };
            qf.log_det() + fixed
        };
        let log_evidence =
            f + 0.5 * log_det_q_ext - 0.5 * factor.log_det() + self.pp.log_constant();

        let sel = factor.selected_inverse();
        let var = sel.diag();
        let marginal_sd: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
        let n = self.pp.n_field;
        let m = self.pp.n_fixed;
        let cov = |i: usize, j: usize| sel.get(i, j).unwrap_or(0.0);
        let mut predictor_mode = Vec::with_capacity(n);
        let mut predictor_sd = Vec::with_capacity(n);
        for (v, d) in self.pp.vertex_design.iter().enumerate() {
            let mut mean = x[v];
            let mut s2 = var[v];
            for k in 0..m {
                mean += d[k] * x[n + k];
                s2 += 2.0 * d[k] * cov(v, n + k);
                for l in 0..m {
                    s2 += d[k] * d[l] * cov(n + k, n + l);
                }
            }
            predictor_mode.push(mean);
            predictor_sd.push(s2.max(0.0).sqrt());
        }
        Ok(GaussianApprox {
            hyper,
            mode: x,
            precision_factor: Some(factor),
            marginal_sd,
            predictor_mode,
            predictor_sd,
            log_evidence,
            iterations,
        })
    }
}

/// Laplace approximation at one hyperparameter value.
pub fn fit_mode(
    pp: &PseudoPoisson,
    model: &SpdeModel,
    hyper: Hyper,
    fixed_prior_prec: f64,
) -> Result<GaussianApprox> {
    LaplaceProblem::new(pp, model, fixed_prior_prec)?.fit(hyper, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Alpha;
    use crate::geometry::{locate_points, TriMesh};
    use crate::likelihood::{build_pseudo, LinearPredictorMap};
    use crate::quadrature::{midpoint_scheme, EffortField};
    use nalgebra::DMatrix;

    fn problem(points: &[[f64; 3]], effort: f64) -> (TriMesh, SpdeModel, PseudoPoisson) {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 6, 6).unwrap();
        let model = SpdeModel::new(&mesh, Alpha::Two).unwrap();
        let scheme = midpoint_scheme(&mesh);
        let basis = locate_points(&mesh, points).unwrap();
        let pred =
            LinearPredictorMap::intercept_only(mesh.n_vertices(), scheme.len(), points.len());
        let pp = build_pseudo(&scheme, &EffortField::Constant(effort), &basis, &pred).unwrap();
        (mesh, model, pp)
    }

    fn grid_points(k: usize) -> Vec<[f64; 3]> {
        (0..k)
            .flat_map(|i| {
                (0..k).map(move |j| {
                    [
                        (i as f64 + 0.5) / k as f64,
                        (j as f64 + 0.37) / k as f64,
                        0.0,
                    ]
                })
            })
            .collect()
    }

    #[test]
    fn no_data_gives_prior() {
        let (_, model, pp) = problem(&[], 0.0);
        let h = Hyper::new(0.3, 1.2);
        let g = fit_mode(&pp, &model, h, 1.0).unwrap();
        assert!(g.mode.iter().all(|&v| v == 0.0));
        assert!(g.log_evidence.abs() < 1e-10);
        let q = model.precision_at(0.3, 1.2).to_dense();
        let n = q.len();
        let inv = DMatrix::from_fn(n, n, |i, j| q[i][j])
            .try_inverse()
            .unwrap();
        for i in 0..n {
            assert!((g.marginal_sd[i] - inv[(i, i)].sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn homogeneous_intercept() {
        let pts = grid_points(12);
        let (_, model, pp) = problem(&pts, 1.0);
        let g = fit_mode(&pp, &model, Hyper::new(1.0, 1.0), FIXED_PRIOR_PRECISION).unwrap();
        let n = pp.n_field;
        let mle = (pts.len() as f64).ln();
        assert!((g.mode[n] - mle).abs() < 2.0 * g.marginal_sd[n]);
    }

    #[test]
    fn mode_certificate_and_dense_sd() {
        let pts: Vec<[f64; 3]> = grid_points(7).into_iter().filter(|p| p[0] < 0.6).collect();
        let (_, model, pp) = problem(&pts, 1.0);
        let h = Hyper::new(-0.5, 2.0);
        let g = fit_mode(&pp, &model, h, FIXED_PRIOR_PRECISION).unwrap();
        // independent gradient at the reported mode
        let q = model.precision_at(h.log_tau, h.log_kappa2);
        let (mut grad, w) = grad_hess(&pp, &g.mode).unwrap();
        let n = pp.n_field;
        let qx = q.mul_vec(&g.mode[..n]);
        for i in 0..n {
            grad[i] -= qx[i];
        }
        grad[n] -= FIXED_PRIOR_PRECISION * g.mode[n];
        let f = loglik(&pp, &g.mode).unwrap()
            - 0.5 * q.quad_form(&g.mode[..n])
            - 0.5 * FIXED_PRIOR_PRECISION * g.mode[n].powi(2);
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= GRADIENT_TOLERANCE * (1.0 + f.abs()));

        // dense posterior precision and its inverse
        let dim = n + 1;
        let qd = q.to_dense();
        let a = pp.a.to_dense();
        let mut hm = DMatrix::from_fn(dim, dim, |i, j| if i < n && j < n { qd[i][j] } else { 0.0 });
        hm[(n, n)] += FIXED_PRIOR_PRECISION;
        for (r, row) in a.iter().enumerate() {
            for i in 0..dim {
                for j in 0..dim {
                    hm[(i, j)] += w[r] * row[i] * row[j];
                }
            }
        }
        let inv = hm.try_inverse().unwrap();
        for i in 0..dim {
            assert!((g.marginal_sd[i] - inv[(i, i)].sqrt()).abs() < 1e-10);
        }
        for v in 0..n {
            let var = inv[(v, v)] + 2.0 * inv[(v, n)] + inv[(n, n)];
            assert!((g.predictor_sd[v] - var.sqrt()).abs() < 1e-10);
            assert!((g.predictor_mode[v] - g.mode[v] - g.mode[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn evidence_without_likelihood_is_flat() {
        let (_, model, pp) = problem(&[], 0.0);
        let prob = LaplaceProblem::new(&pp, &model, FIXED_PRIOR_PRECISION).unwrap();
        let a = prob.fit(Hyper::new(0.0, 0.0), None).unwrap().log_evidence;
        let b = prob.fit(Hyper::new(2.0, -1.0), None).unwrap().log_evidence;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn range_sigma_conversion() {
        let h = Hyper::from_range_sigma2(0.5, 2.0);
        let k = h.kappa();
        assert!((k - 8f64.sqrt() / 0.5).abs() < 1e-12);
        let tau2 = (2.0 * h.log_tau).exp();
        assert!((1.0 / (4.0 * std::f64::consts::PI * k * k * tau2) - 2.0).abs() < 1e-12);
    }
}
