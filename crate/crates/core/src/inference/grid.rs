//! Hyperparameter posterior on a regular grid around its mode.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GaussianApprox, Hyper, HyperPrior, LaplaceProblem};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// lattice spacing in (log τ, log κ²)
    pub step: [f64; 2],
    /// exploration stops where the log posterior is this far below the mode
    pub drop: f64,
    pub max_points: usize,
    /// initial guess for the mode search; derived from the domain size if absent
    pub start: Option<Hyper>,
    /// use this centre and skip the mode search
    pub center: Option<Hyper>,
    /// round the centre to a multiple of `step`, so grids from different
    /// meshes or data sets share lattice points
    pub snap_to_lattice: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: [0.5, 0.5],
            drop: 6.0,
            max_points: 400,
            start: None,
            center: None,
            snap_to_lattice: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// lattice offsets from the centre
    pub index: [i64; 2],
    pub hyper: Hyper,
    pub log_posterior: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub points: Vec<GridPoint>,
    /// optimiser result (before snapping)
    pub mode: Hyper,
    pub center: Hyper,
    pub step: [f64; 2],
    pub max_log_posterior: f64,
    pub optimizer_evaluations: usize,
    /// lattice points whose Laplace fit failed; they carry no weight
    pub failed_points: usize,
    /// exploration hit `max_points` before the drop criterion closed the region
    pub truncated: bool,
}

impl HyperGrid {
    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    /// Marginal weights of one coordinate (0: log τ, 1: log κ²) per lattice
    /// value, in increasing order.
    pub fn axis_weights(&self, axis: usize) -> Vec<(f64, f64)> {
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        for p in &self.points {
            *acc.entry(p.index[axis]).or_default() += p.weight;
        }
        let c = self.center.as_array()[axis];
        acc.into_iter()
            .map(|(k, w)| (c + k as f64 * self.step[axis], w))
            .collect()
    }

    /// Smallest set of lattice values of one coordinate holding at least
    /// `level` of the weight, as intervals of half a step around each value.
    pub fn credible_cells(&self, axis: usize, level: f64) -> Vec<(f64, f64)> {
        let mut w = self.axis_weights(axis);
        w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        let half = 0.5 * self.step[axis];
        let mut total = 0.0;
        let mut cells = Vec::new();
        for (v, wi) in w {
            if total >= level {
                break;
            }
            total += wi;
            cells.push((v - half, v + half));
        }
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        cells
    }

    /// Equal-tailed interval of one coordinate, treating each lattice weight
    /// as spread uniformly over its cell.
    pub fn credible_interval(&self, axis: usize, level: f64) -> (f64, f64) {
        let w = self.axis_weights(axis);
        let half = 0.5 * self.step[axis];
        let tail = 0.5 * (1.0 - level);
        let quantile = |p: f64| {
            let mut acc = 0.0;
            for &(v, wi) in &w {
                if acc + wi >= p && wi > 0.0 {
                    return v - half + (p - acc) / wi * self.step[axis];
                }
                acc += wi;
            }
            w.last().map_or(f64::NAN, |&(v, _)| v + half)
        };
        (quantile(tail), quantile(1.0 - tail))
    }

    /// Membership in the cell set of [`credible_cells`](Self::credible_cells).
    pub fn in_credible_region(&self, axis: usize, value: f64, level: f64) -> bool {
        self.credible_cells(axis, level)
            .iter()
            .any(|&(lo, hi)| value >= lo && value <= hi)
    }

    pub fn best(&self) -> &GridPoint {
        self.points
            .iter()
            .max_by(|a, b| a.log_posterior.total_cmp(&b.log_posterior))
            .expect("grid is never empty")
    }
}

struct Evaluation {
    lp: f64,
    approx: GaussianApprox,
}

fn evaluate(
    problem: &LaplaceProblem<'_>,
    prior: &HyperPrior,
    h: Hyper,
    warm: Option<&[f64]>,
) -> Result<Evaluation> {
    let approx = problem.fit(h, warm)?;
    let lp = approx.log_evidence + prior.log_density(&h);
    if !lp.is_finite() {
        return Err(Error::HyperOptFailure(format!(
            "non-finite log posterior at {h:?}"
        )));
    }
    Ok(Evaluation {
        lp,
        approx: approx.without_factor(),
    })
}

fn default_start(problem: &LaplaceProblem<'_>) -> Hyper {
    let area: f64 = problem.model().c_diag().iter().sum();
    Hyper::from_range_sigma2(0.3 * area.sqrt(), 1.0)
}

/// Damped Newton ascent on the log posterior of θ with finite-difference
/// derivatives. Returns the mode and the number of Laplace fits spent.
fn find_mode(
    problem: &LaplaceProblem<'_>,
    prior: &HyperPrior,
    start: Hyper,
) -> Result<(Hyper, usize)> {
    const H: f64 = 0.05;
    const MAX_STEP: f64 = 1.5;
    let mut evals = 1;
    let mut theta = start.as_array();
    let mut center = evaluate(problem, prior, start, None).map_err(|e| {
        Error::HyperOptFailure(format!("cannot evaluate starting point {start:?}: {e}"))
    })?;
    for _ in 0..60 {
        let offsets: [[f64; 2]; 8] = [
            [H, 0.0],
            [-H, 0.0],
            [0.0, H],
            [0.0, -H],
            [H, H],
            [H, -H],
            [-H, H],
            [-H, -H],
        ];
        let warm = center.approx.mode.clone();
        let f: Vec<f64> = offsets
            .par_iter()
            .map(|d| {
                let h = Hyper::from_array([theta[0] + d[0], theta[1] + d[1]]);
                evaluate(problem, prior, h, Some(&warm)).map(|e| e.lp)
            })
            .collect::<Result<_>>()
            .map_err(|e| Error::HyperOptFailure(e.to_string()))?;
        evals += 8;
        let f0 = center.lp;
        let g = [(f[0] - f[1]) / (2.0 * H), (f[2] - f[3]) / (2.0 * H)];
        let hxx = (f[0] - 2.0 * f0 + f[1]) / (H * H);
        let hyy = (f[2] - 2.0 * f0 + f[3]) / (H * H);
        let hxy = (f[4] - f[5] - f[6] + f[7]) / (4.0 * H * H);
        let det = hxx * hyy - hxy * hxy;
        let mut d = if hxx < 0.0 && det > 0.0 {
            [
                -(hyy * g[0] - hxy * g[1]) / det,
                -(-hxy * g[0] + hxx * g[1]) / det,
            ]
        } else {
            g
        };
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if norm > MAX_STEP {
            d = [d[0] * MAX_STEP / norm, d[1] * MAX_STEP / norm];
        }
        let mut t = 1.0;
        let mut moved = None;
        for _ in 0..12 {
            let trial = [theta[0] + t * d[0], theta[1] + t * d[1]];
            evals += 1;
            match evaluate(problem, prior, Hyper::from_array(trial), Some(&warm)) {
                Ok(e) if e.lp > f0 => {
                    moved = Some((trial, e));
                    break;
                }
                _ => t *= 0.5,
            }
        }
        match moved {
            Some((trial, e)) => {
                let step = t * norm.min(MAX_STEP);
                theta = trial;
                center = e;
                if step < 1e-3 {
                    break;
                }
            }
            None => break,
        }
    }
    Ok((Hyper::from_array(theta), evals))
}

/// Finds the posterior mode of θ and evaluates the Laplace approximation on
/// the lattice around it, spreading outward while the log posterior stays
/// within `drop` of the best value seen. Returns the grid and one Gaussian
/// approximation per grid point (same order).
pub fn explore_grid(
    problem: &LaplaceProblem<'_>,
    prior: &HyperPrior,
    spec: &GridSpec,
) -> Result<(HyperGrid, Vec<GaussianApprox>)> {
    if !(spec.step[0] > 0.0 && spec.step[1] > 0.0 && spec.drop > 0.0) {
        return Err(Error::HyperOptFailure(
            "grid step and drop must be positive".into(),
        ));
    }
    let (mode, optimizer_evaluations) = match spec.center {
        Some(c) => (c, 0),
        None => find_mode(
            problem,
            prior,
            spec.start.unwrap_or_else(|| default_start(problem)),
        )?,
    };
    let center = if spec.snap_to_lattice {
        Hyper::new(
            (mode.log_tau / spec.step[0]).round() * spec.step[0],
            (mode.log_kappa2 / spec.step[1]).round() * spec.step[1],
        )
    } else {
        mode
    };
    let at = |k: [i64; 2]| {
        Hyper::new(
            center.log_tau + k[0] as f64 * spec.step[0],
            center.log_kappa2 + k[1] as f64 * spec.step[1],
        )
    };

    let mut done: BTreeMap<[i64; 2], Option<Evaluation>> = BTreeMap::new();
    let mut frontier: Vec<([i64; 2], Option<[i64; 2]>)> = vec![([0, 0], None)];
    let mut best = f64::NEG_INFINITY;
    let mut truncated = false;
    while !frontier.is_empty() {
        let results: Vec<Option<Evaluation>> = frontier
            .par_iter()
            .map(|(k, parent)| {
                let warm = parent
                    .and_then(|p| done.get(&p))
                    .and_then(|e| e.as_ref())
                    .map(|e| e.approx.mode.as_slice());
                evaluate(problem, prior, at(*k), warm).ok()
            })
            .collect();
        for ((k, _), r) in frontier.iter().zip(results) {
            if let Some(e) = &r {
                best = best.max(e.lp);
            }
            done.insert(*k, r);
        }
        if done.len() == 1 && done.values().all(|e| e.is_none()) {
            return Err(Error::HyperOptFailure(format!(
                "Laplace fit failed at the grid centre {center:?}"
            )));
        }
        let mut next: BTreeMap<[i64; 2], [i64; 2]> = BTreeMap::new();
        for (k, e) in &done {
            let Some(e) = e else { continue };
            if e.lp < best - spec.drop {
                continue;
            }
            for di in -1..=1 {
                for dj in -1..=1 {
                    let nb = [k[0] + di, k[1] + dj];
                    if !done.contains_key(&nb) {
                        next.entry(nb).or_insert(*k);
                    }
                }
            }
        }
        let room = spec.max_points.saturating_sub(done.len());
        if next.len() > room {
            truncated = true;
        }
        frontier = next
            .into_iter()
            .take(room)
            .map(|(k, p)| (k, Some(p)))
            .collect();
    }

    let failed_points = done.values().filter(|e| e.is_none()).count();
    let mut points = Vec::new();
    let mut approxs = Vec::new();
    for (k, e) in done {
        if let Some(e) = e {
            points.push(GridPoint {
                index: k,
                hyper: at(k),
                log_posterior: e.lp,
                weight: (e.lp - best).exp(),
            });
            approxs.push(e.approx);
        }
    }
    let total: f64 = points.iter().map(|p| p.weight).sum();
    for p in &mut points {
        p.weight /= total;
    }
    Ok((
        HyperGrid {
            points,
            mode,
            center,
            step: spec.step,
            max_log_posterior: best,
            optimizer_evaluations,
            failed_points,
            truncated,
        },
        approxs,
    ))
}
