//! Mixture marginals over the hyperparameter grid and exceedance maps.

use serde::{Deserialize, Serialize};

use super::{GaussianApprox, Hyper, HyperGrid};

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Tabulated density on an increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub values: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityGrid {
    /// Trapezoidal integral of the tabulated density.
    pub fn integral(&self) -> f64 {
        self.values
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(v, d)| 0.5 * (v[1] - v[0]) * (d[0] + d[1]))
            .sum()
    }
}

/// Weighted Gaussian mixture in one dimension.
#[derive(Clone, Debug)]
struct Mixture {
    weight: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Mixture {
    fn moments(&self) -> (f64, f64) {
        let mut m = 0.0;
        let mut s2 = 0.0;
        for ((w, mu), sd) in self.weight.iter().zip(&self.mean).zip(&self.sd) {
            m += w * mu;
            s2 += w * (sd * sd + mu * mu);
        }
        (m, (s2 - m * m).max(0.0).sqrt())
    }

    fn pdf(&self, x: f64) -> f64 {
        self.weight
            .iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((w, mu), sd)| w * normal_pdf((x - mu) / sd) / sd)
            .sum()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.weight
            .iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((w, mu), sd)| w * normal_cdf((x - mu) / sd))
            .sum()
    }

    fn range(&self, width: f64) -> (f64, f64) {
        let lo = self
            .mean
            .iter()
            .zip(&self.sd)
            .map(|(m, s)| m - width * s)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .mean
            .iter()
            .zip(&self.sd)
            .map(|(m, s)| m + width * s)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Starts from `n` evenly spaced points over the support plus `n` points
    /// at mixture quantiles of evenly spaced standard-normal levels in
    /// [-6, 6], then bisects any segment whose trapezoid mass moves by more
    /// than `1e-8` when refined. The quantile points find narrow components
    /// next to very wide ones; the bisection fills in their shoulders.
    fn tabulate(&self, n: usize) -> DensityGrid {
        const TOL: f64 = 1e-8;
        const MAX_POINTS: usize = 20_000;
        let (lo, hi) = self.range(7.0);
        let mut values: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let mut below = self.range(40.0).0;
        for i in 0..n {
            let z = -6.0 + 12.0 * i as f64 / (n - 1) as f64;
            below = self.quantile_from(normal_cdf(z), below);
            values.push(below);
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut density: Vec<f64> = values.iter().map(|&x| self.pdf(x)).collect();
        loop {
            let mut next_v = Vec::with_capacity(values.len());
            let mut next_d = Vec::with_capacity(values.len());
            let mut added = false;
            for i in 0..values.len() {
                next_v.push(values[i]);
                next_d.push(density[i]);
                if i + 1 == values.len() || values.len() + next_v.len() - i >= MAX_POINTS {
                    continue;
                }
                let (a, b) = (values[i], values[i + 1]);
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    continue;
                }
                let fm = self.pdf(m);
                let coarse = 0.5 * (b - a) * (density[i] + density[i + 1]);
                let fine = 0.25 * (b - a) * (density[i] + 2.0 * fm + density[i + 1]);
                if (coarse - fine).abs() > TOL {
                    next_v.push(m);
                    next_d.push(fm);
                    added = true;
                }
            }
            values = next_v;
            density = next_d;
            if !added || values.len() >= MAX_POINTS {
                break;
            }
        }
        DensityGrid { values, density }
    }

    fn quantile(&self, p: f64) -> f64 {
        self.quantile_from(p, self.range(40.0).0)
    }

    /// Bisection for the `p` quantile, given a point `lo` below it.
    fn quantile_from(&self, p: f64, mut lo: f64) -> f64 {
        let mut hi = self.range(40.0).1;
        for _ in 0..200 {
            if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub const QUANTILE_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];
const DENSITY_POINTS: usize = 401;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// (level, value) at [`QUANTILE_LEVELS`]
    pub quantiles: Vec<(f64, f64)>,
    pub density: DensityGrid,
}

/// Marginal of one hyperparameter. The density smooths the grid weights
/// with a Gaussian kernel of half a grid step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperMarginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub density: DensityGrid,
}

/// One grid point's contribution to the linear-predictor posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub hyper: Hyper,
    pub predictor_mode: Vec<f64>,
    pub predictor_sd: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    /// latent field at the vertices
    pub field_mean: Vec<f64>,
    pub field_sd: Vec<f64>,
    /// linear predictor (log intensity) at the vertices
    pub predictor_mean: Vec<f64>,
    pub predictor_sd: Vec<f64>,
    pub fixed_effects: Vec<FixedEffectSummary>,
    pub hyper_marginals: Vec<HyperMarginal>,
    pub components: Vec<MixtureComponent>,
}

fn mixture_moments(weights: &[f64], means: &[&[f64]], sds: &[&[f64]], i: usize) -> (f64, f64) {
    let mix = Mixture {
        weight: weights.to_vec(),
        mean: means.iter().map(|m| m[i]).collect(),
        sd: sds.iter().map(|s| s[i]).collect(),
    };
    mix.moments()
}

/// Combines per-grid-point Gaussian approximations into mixture marginals.
/// `fixed_names` labels the fixed effects in latent order.
pub fn marginals(
    grid: &HyperGrid,
    approxs: &[GaussianApprox],
    fixed_names: &[String],
) -> PosteriorResult {
    assert_eq!(
        grid.points.len(),
        approxs.len(),
        "one approximation per grid point"
    );
    let weights = grid.weights();
    let n = approxs[0].n_field();
    let modes: Vec<&[f64]> = approxs.iter().map(|a| a.mode.as_slice()).collect();
    let sds: Vec<&[f64]> = approxs.iter().map(|a| a.marginal_sd.as_slice()).collect();
    let pmodes: Vec<&[f64]> = approxs
        .iter()
        .map(|a| a.predictor_mode.as_slice())
        .collect();
    let psds: Vec<&[f64]> = approxs.iter().map(|a| a.predictor_sd.as_slice()).collect();

    let (field_mean, field_sd) = (0..n)
        .map(|i| mixture_moments(&weights, &modes, &sds, i))
        .unzip();
    let (predictor_mean, predictor_sd) = (0..n)
        .map(|i| mixture_moments(&weights, &pmodes, &psds, i))
        .unzip();

    let n_fixed = approxs[0].mode.len() - n;
    let fixed_effects = (0..n_fixed)
        .map(|k| {
            let mix = Mixture {
                weight: weights.clone(),
                mean: modes.iter().map(|m| m[n + k]).collect(),
                sd: sds.iter().map(|s| s[n + k]).collect(),
            };
            let (mean, sd) = mix.moments();
            FixedEffectSummary {
                name: fixed_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("fixed{k}")),
                mean,
                sd,
                quantiles: QUANTILE_LEVELS
                    .iter()
                    .map(|&p| (p, mix.quantile(p)))
                    .collect(),
                density: mix.tabulate(DENSITY_POINTS),
            }
        })
        .collect();

    let hyper_marginals = ["log_tau", "log_kappa2"]
        .iter()
        .enumerate()
        .map(|(axis, name)| {
            let values: Vec<f64> = grid
                .points
                .iter()
                .map(|p| p.hyper.as_array()[axis])
                .collect();
            let (mean, sd) = Mixture {
                weight: weights.clone(),
                mean: values.clone(),
                sd: vec![0.0; values.len()],
            }
            .moments();
            let kernel = Mixture {
                weight: weights.clone(),
                mean: values,
                sd: vec![0.5 * grid.step[axis]; weights.len()],
            };
            HyperMarginal {
                name: name.to_string(),
                mean,
                sd,
                density: kernel.tabulate(DENSITY_POINTS),
            }
        })
        .collect();

    let components = approxs
        .iter()
        .zip(&grid.points)
        .map(|(a, p)| MixtureComponent {
            weight: p.weight,
            hyper: p.hyper,
            predictor_mode: a.predictor_mode.clone(),
            predictor_sd: a.predictor_sd.clone(),
        })
        .collect();

    PosteriorResult {
        field_mean,
        field_sd,
        predictor_mean,
        predictor_sd,
        fixed_effects,
        hyper_marginals,
        components,
    }
}

/// `P(η(v) > t)` at each vertex under the Gaussian mixture of the linear
/// predictor.
pub fn exceedance_map(result: &PosteriorResult, threshold: f64) -> Vec<f64> {
    exceedance_from_components(&result.components, threshold)
}

/// Exceedance under an explicit list of mixture components.
pub fn exceedance_from_components(components: &[MixtureComponent], threshold: f64) -> Vec<f64> {
    let n = components.first().map_or(0, |c| c.predictor_mode.len());
    (0..n)
        .map(|i| {
            let p: f64 = components
                .iter()
                .map(|c| {
                    let (m, s) = (c.predictor_mode[i], c.predictor_sd[i]);
                    let tail = if s > 0.0 {
                        normal_cdf((m - threshold) / s)
                    } else if m > threshold {
                        1.0
                    } else {
                        0.0
                    };
                    c.weight * tail
                })
                .sum();
            p.clamp(0.0, 1.0)
        })
        .collect()
}
