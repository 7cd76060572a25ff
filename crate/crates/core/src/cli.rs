//! Command-line front end: `mesh`, `simulate`, `fit` and `riskmap`, each
//! driven by one JSON config plus a few flag overrides.
//!
//! Every output except `timing.json` is a deterministic function of the
//! config, the input files and the seed, independent of the thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Alpha, SpdeModel};
use crate::geometry::{
    build_icosphere_masked, build_planar_mesh, locate_points, DomainSpec, TriMesh,
};
use crate::inference::{
    explore_grid, marginals, GridSpec, Hyper, HyperPrior, LaplaceProblem, MixtureComponent,
    FIXED_PRIOR_PRECISION,
};
use crate::io;
use crate::likelihood::{build_pseudo, LinearPredictorMap};
use crate::quadrature::{midpoint_scheme, triangle_gauss_scheme, EffortField};
use crate::simulate::{censor_pattern, sample_field, simulate_lgcp};

pub const THREADS_ENV: &str = "COXMESH_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "coxmesh",
    version,
    about = "Log-Gaussian Cox process models on triangulated domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a mesh from the `domain` section and write `mesh.txt`
    Mesh,
    /// Simulate a field and a point pattern on a mesh
    Simulate,
    /// Fit the model to a point pattern on a mesh
    Fit,
    /// Exceedance probabilities of the log intensity from fit outputs
    Riskmap,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON run configuration; relative paths inside it are relative to its directory
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed for simulate (required there)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core. Falls back to COXMESH_THREADS
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Mesh file written by `mesh`
    #[arg(long, global = true)]
    pub mesh: Option<PathBuf>,
    /// Point CSV with x,y or lon,lat columns
    #[arg(long, global = true)]
    pub points: Option<PathBuf>,
    /// Log-intensity threshold for riskmap
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub mesh: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub domain: Option<DomainConfig>,
    pub simulate: Option<SimulateConfig>,
    pub fit: Option<FitConfig>,
    pub riskmap: Option<RiskmapConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainConfig {
    Planar {
        outer: PathBuf,
        max_edge: f64,
        #[serde(default)]
        holes: Vec<PathBuf>,
        #[serde(default)]
        regions: Vec<RegionConfig>,
    },
    Sphere {
        radius: f64,
        subdivisions: usize,
        /// lon/lat loops whose triangles are removed
        #[serde(default)]
        land: Vec<PathBuf>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub polygon: PathBuf,
    pub max_edge: f64,
}

/// Either the Matérn parameters or the SPDE ones.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum HyperConfig {
    Matern { range: f64, sigma2: f64 },
    Spde { log_tau: f64, log_kappa2: f64 },
}

impl HyperConfig {
    pub fn hyper(self) -> Result<Hyper> {
        let h = match self {
            HyperConfig::Matern { range, sigma2 } => {
                if !(range > 0.0 && sigma2 > 0.0) {
                    return Err(Error::Config(format!(
                        "range {range} and sigma2 {sigma2} must be positive"
                    )));
                }
                Hyper::from_range_sigma2(range, sigma2)
            }
            HyperConfig::Spde {
                log_tau,
                log_kappa2,
            } => Hyper::new(log_tau, log_kappa2),
        };
        if !(h.log_tau.is_finite() && h.log_kappa2.is_finite()) {
            return Err(Error::Config("hyperparameters must be finite".into()));
        }
        Ok(h)
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EffortConfig {
    Constant(f64),
    Indicator {
        zero_regions: Vec<PathBuf>,
        #[serde(default = "one")]
        value: f64,
    },
    /// CSV `node_index,value` over the integration nodes
    PerNode(PathBuf),
}

fn one() -> f64 {
    1.0
}

fn two() -> u32 {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "two")]
    pub alpha: u32,
    pub hyper: HyperConfig,
    pub intercept: f64,
    /// Thin the simulated pattern with this effort (keep probability).
    pub censor: Option<EffortConfig>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// vertices with dual-cell weights (the lumped mass)
    #[default]
    Vertex,
    /// three edge-midpoint nodes per triangle, exact for quadratics
    Gauss2,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "two")]
    pub alpha: u32,
    #[serde(default)]
    pub quadrature: Quadrature,
    pub effort: Option<EffortConfig>,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub prior: HyperPrior,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: two(),
            quadrature: Quadrature::default(),
            effort: None,
            covariates: Vec::new(),
            prior: HyperPrior::default(),
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    /// CSV `vertex_index,value`
    pub path: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskmapConfig {
    /// Directory holding the fit outputs; defaults to the output directory.
    pub fit_dir: Option<PathBuf>,
    pub threshold: Option<f64>,
}

/// Exit status for an error: 2 bad input, 3 simulation guard, 4 numerical
/// failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TooIntense(_) => 3,
        Error::EtaOverflow { .. }
        | Error::NoConvergence { .. }
        | Error::NotPositiveDefinite(_)
        | Error::HyperOptFailure(_)
        | Error::AssemblyError(_)
        | Error::RefinementFailure(_) => 4,
        _ => 2,
    }
}

impl RunConfig {
    /// Parses the config and makes its paths relative to the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_effort = |e: &mut EffortConfig| match e {
            EffortConfig::Indicator { zero_regions, .. } => zero_regions.iter_mut().for_each(fix),
            EffortConfig::PerNode(p) => fix(p),
            EffortConfig::Constant(_) => {}
        };
        for p in [&mut self.out, &mut self.mesh, &mut self.points]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        match &mut self.domain {
            Some(DomainConfig::Planar {
                outer,
                holes,
                regions,
                ..
            }) => {
                fix(outer);
                holes.iter_mut().for_each(fix);
                regions.iter_mut().for_each(|r| fix(&mut r.polygon));
            }
            Some(DomainConfig::Sphere { land, .. }) => land.iter_mut().for_each(fix),
            None => {}
        }
        if let Some(e) = self.simulate.as_mut().and_then(|s| s.censor.as_mut()) {
            fix_effort(e);
        }
        if let Some(f) = &mut self.fit {
            if let Some(e) = &mut f.effort {
                fix_effort(e);
            }
            f.covariates.iter_mut().for_each(|c| fix(&mut c.path));
        }
        if let Some(p) = self.riskmap.as_mut().and_then(|r| r.fit_dir.as_mut()) {
            fix(p);
        }
    }

    /// Flags win over the config file.
    pub fn apply_flags(&mut self, flags: &Flags) {
        self.seed = flags.seed.or(self.seed);
        if let Some(o) = &flags.out {
            self.out = Some(o.clone());
        }
        if let Some(m) = &flags.mesh {
            self.mesh = Some(m.clone());
        }
        if let Some(p) = &flags.points {
            self.points = Some(p.clone());
        }
        if let Some(t) = flags.threshold {
            self.riskmap.get_or_insert_with(Default::default).threshold = Some(t);
        }
        self.threads = flags.threads.or(self.threads);
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn require_mesh(&self) -> Result<&Path> {
        self.mesh
            .as_deref()
            .ok_or_else(|| Error::Config("a mesh file is required (`mesh` key or --mesh)".into()))
    }

    fn require_points(&self) -> Result<&Path> {
        self.points.as_deref().ok_or_else(|| {
            Error::Config("a points file is required (`points` key or --points)".into())
        })
    }
}

/// Thread count: flag, then `COXMESH_THREADS`, then the config, then auto.
pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(config.unwrap_or(0)),
    }
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    Ok(())
}

fn effort_paths(e: Option<&EffortConfig>) -> Vec<&Path> {
    match e {
        Some(EffortConfig::Indicator { zero_regions, .. }) => {
            zero_regions.iter().map(PathBuf::as_path).collect()
        }
        Some(EffortConfig::PerNode(p)) => vec![p.as_path()],
        _ => Vec::new(),
    }
}

fn load_effort(e: Option<&EffortConfig>, n_nodes: usize) -> Result<EffortField> {
    Ok(match e {
        None => EffortField::default(),
        Some(EffortConfig::Constant(v)) => EffortField::Constant(*v),
        Some(EffortConfig::Indicator {
            zero_regions,
            value,
        }) => {
            let mut polys = Vec::new();
            for p in zero_regions {
                polys.extend(io::read_polygons(p)?);
            }
            EffortField::Indicator {
                zero_regions: polys,
                value: *value,
            }
        }
        Some(EffortConfig::PerNode(p)) => {
            EffortField::PerNode(io::read_indexed_values(p, "node_index", n_nodes)?)
        }
    })
}

/// Runs one command. Returns the line printed on success.
pub fn run(cli: &Cli) -> Result<String> {
    let mut cfg = match &cli.flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_flags(&cli.flags);
    let threads = resolve_threads(cli.flags.threads, cfg.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Mesh => cmd_mesh(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Fit => cmd_fit(&cfg, threads),
        Command::Riskmap => cmd_riskmap(&cfg),
    })
}

fn build_domain_mesh(domain: &DomainConfig) -> Result<TriMesh> {
    match domain {
        DomainConfig::Planar {
            outer,
            max_edge,
            holes,
            regions,
        } => {
            check_inputs(
                std::iter::once(outer.as_path())
                    .chain(holes.iter().map(PathBuf::as_path))
                    .chain(regions.iter().map(|r| r.polygon.as_path())),
            )?;
            let mut outer_loops = io::read_polygons(outer)?;
            if outer_loops.len() != 1 {
                return Err(Error::parse(
                    outer,
                    "the outer boundary must be a single loop",
                ));
            }
            let mut spec = DomainSpec::new(outer_loops.remove(0), *max_edge);
            for h in holes {
                for poly in io::read_polygons(h)? {
                    spec = spec.with_hole(poly);
                }
            }
            for r in regions {
                for poly in io::read_polygons(&r.polygon)? {
                    spec = spec.with_region(poly, r.max_edge);
                }
            }
            build_planar_mesh(&spec)
        }
        DomainConfig::Sphere {
            radius,
            subdivisions,
            land,
        } => {
            check_inputs(land.iter().map(PathBuf::as_path))?;
            let mut polys = Vec::new();
            for p in land {
                polys.extend(io::read_polygons(p)?);
            }
            build_icosphere_masked(*radius, *subdivisions, &polys)
        }
    }
}

pub fn cmd_mesh(cfg: &RunConfig) -> Result<String> {
    let domain = cfg
        .domain
        .as_ref()
        .ok_or_else(|| Error::Config("`domain` section is required for mesh".into()))?;
    let mesh = build_domain_mesh(domain)?;
    io::write_mesh(&cfg.out_dir().join("mesh.txt"), &mesh)?;
    Ok(format!(
        "vertices={} triangles={} area={:?}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.area()
    ))
}

#[derive(Serialize)]
struct SimulateManifest {
    seed: u64,
    field_seed: u64,
    pattern_seed: u64,
    censor_seed: Option<u64>,
    alpha: u32,
    log_tau: f64,
    log_kappa2: f64,
    range: f64,
    sigma2: f64,
    intercept: f64,
    n_vertices: usize,
    n_simulated: usize,
    n_points: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("`simulate` section is required".into()))?;
    let seed = cfg
        .seed
        .ok_or_else(|| Error::Config("simulate needs a seed (`seed` key or --seed)".into()))?;
    let mesh_path = cfg.require_mesh()?;
    check_inputs(std::iter::once(mesh_path).chain(effort_paths(sim.censor.as_ref())))?;
    let hyper = sim.hyper.hyper()?;
    let alpha = Alpha::from_int(sim.alpha)?;
    if !sim.intercept.is_finite() {
        return Err(Error::Config("intercept must be finite".into()));
    }

    let mesh = io::read_mesh(mesh_path)?;
    let model = SpdeModel::new(&mesh, alpha)?;
    let (field_seed, pattern_seed, censor_seed) =
        (seed, seed.wrapping_add(1), seed.wrapping_add(2));
    let field = sample_field(&model, hyper, field_seed)?;
    let pattern = simulate_lgcp(&mesh, &field, sim.intercept, pattern_seed)?;
    let n_simulated = pattern.n();
    let pattern = match &sim.censor {
        Some(e) => censor_pattern(
            &pattern,
            &load_effort(Some(e), mesh.n_vertices())?,
            censor_seed,
        )?,
        None => pattern,
    };

    let out = cfg.out_dir();
    io::write_points(&out.join("points.csv"), &pattern)?;
    io::write_text(
        &out.join("true_field.csv"),
        &io::format_vertex_table(&mesh, &[("value", &field.z)]),
    )?;
    let kappa = hyper.kappa();
    let manifest = SimulateManifest {
        seed,
        field_seed,
        pattern_seed,
        censor_seed: sim.censor.as_ref().map(|_| censor_seed),
        alpha: sim.alpha,
        log_tau: hyper.log_tau,
        log_kappa2: hyper.log_kappa2,
        range: 8f64.sqrt() / kappa,
        sigma2: 1.0 / (4.0 * std::f64::consts::PI * kappa * kappa * (2.0 * hyper.log_tau).exp()),
        intercept: sim.intercept,
        n_vertices: mesh.n_vertices(),
        n_simulated,
        n_points: pattern.n(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(format!("points={} simulated={n_simulated}", pattern.n()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    io::write_text(path, &text)
}

#[derive(Serialize)]
struct FixedReport {
    name: String,
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct FitReport {
    n_vertices: usize,
    n_points: usize,
    n_integration_nodes: usize,
    quadrature: Quadrature,
    alpha: u32,
    grid_points: usize,
    failed_points: usize,
    truncated: bool,
    optimizer_evaluations: usize,
    newton_iterations: usize,
    mode: Hyper,
    max_log_posterior: f64,
    fixed_effects: Vec<FixedReport>,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    threads: usize,
}

pub fn cmd_fit(cfg: &RunConfig, threads: usize) -> Result<String> {
    let start = Instant::now();
    let default_fit = FitConfig::default();
    let fit = cfg.fit.as_ref().unwrap_or(&default_fit);
    let (mesh_path, points_path) = (cfg.require_mesh()?, cfg.require_points()?);
    check_inputs(
        [mesh_path, points_path]
            .into_iter()
            .chain(effort_paths(fit.effort.as_ref()))
            .chain(fit.covariates.iter().map(|c| c.path.as_path())),
    )?;
    let alpha = Alpha::from_int(fit.alpha)?;

    let mesh = io::read_mesh(mesh_path)?;
    let points = io::read_points(points_path, mesh.mode())?;
    let basis = locate_points(&mesh, &points)?;
    let scheme = match fit.quadrature {
        Quadrature::Vertex => midpoint_scheme(&mesh),
        Quadrature::Gauss2 => triangle_gauss_scheme(&mesh, 2)?,
    };
    let effort = load_effort(fit.effort.as_ref(), scheme.len())?;
    let covariates = fit
        .covariates
        .iter()
        .map(|c| {
            Ok((
                c.name.clone(),
                io::read_indexed_values(&c.path, "vertex_index", mesh.n_vertices())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let predictor = LinearPredictorMap::with_vertex_covariates(&scheme, &basis, &covariates)?;
    let pp = build_pseudo(&scheme, &effort, &basis, &predictor)?;
    let model = SpdeModel::new(&mesh, alpha)?;
    let problem = LaplaceProblem::new(&pp, &model, FIXED_PRIOR_PRECISION)?;
    let (grid, approxs) = explore_grid(&problem, &fit.prior, &fit.grid)?;
    let result = marginals(&grid, &approxs, &predictor.names);

    let out = cfg.out_dir();
    let table =
        |mean: &[f64], sd: &[f64]| io::format_vertex_table(&mesh, &[("mean", mean), ("sd", sd)]);
    io::write_text(
        &out.join("field.csv"),
        &table(&result.field_mean, &result.field_sd),
    )?;
    io::write_text(
        &out.join("predictor.csv"),
        &table(&result.predictor_mean, &result.predictor_sd),
    )?;
    io::write_text(
        &out.join("hyper_marginals.csv"),
        &io::format_hyper_marginals(&result.hyper_marginals),
    )?;
    io::write_text(
        &out.join("fixed_effects.csv"),
        &io::format_fixed_effects(&result.fixed_effects),
    )?;
    io::write_text(
        &out.join("fixed_densities.csv"),
        &io::format_fixed_densities(&result.fixed_effects),
    )?;
    io::write_text(&out.join("grid.csv"), &io::format_grid(&grid))?;
    write_json(&out.join("mixture.json"), &result.components)?;
    let report = FitReport {
        n_vertices: mesh.n_vertices(),
        n_points: points.len(),
        n_integration_nodes: scheme.len(),
        quadrature: fit.quadrature,
        alpha: fit.alpha,
        grid_points: grid.points.len(),
        failed_points: grid.failed_points,
        truncated: grid.truncated,
        optimizer_evaluations: grid.optimizer_evaluations,
        newton_iterations: approxs.iter().map(|a| a.iterations).sum(),
        mode: grid.mode,
        max_log_posterior: grid.max_log_posterior,
        fixed_effects: result
            .fixed_effects
            .iter()
            .map(|f| FixedReport {
                name: f.name.clone(),
                mean: f.mean,
                sd: f.sd,
            })
            .collect(),
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            threads,
        },
    )?;
    let icpt = &result.fixed_effects[0];
    Ok(format!(
        "grid_points={} intercept={:.4}±{:.4}",
        grid.points.len(),
        icpt.mean,
        icpt.sd
    ))
}

pub fn cmd_riskmap(cfg: &RunConfig) -> Result<String> {
    let default_risk = RiskmapConfig::default();
    let risk = cfg.riskmap.as_ref().unwrap_or(&default_risk);
    let threshold = risk.threshold.ok_or_else(|| {
        Error::Config("riskmap needs a threshold (`riskmap.threshold` or --threshold)".into())
    })?;
    if threshold.is_nan() {
        return Err(Error::Config("threshold is NaN".into()));
    }
    let mesh_path = cfg.require_mesh()?;
    let fit_dir = risk.fit_dir.clone().unwrap_or_else(|| cfg.out_dir());
    let (predictor_path, mixture_path) =
        (fit_dir.join("predictor.csv"), fit_dir.join("mixture.json"));
    check_inputs([mesh_path, predictor_path.as_path(), mixture_path.as_path()])?;

    let mesh = io::read_mesh(mesh_path)?;
    let (mean, sd) = io::read_vertex_mean_sd(&predictor_path, mesh.n_vertices())?;
    let components: Vec<MixtureComponent> = serde_json::from_str(&io::read_text(&mixture_path)?)
        .map_err(|e| Error::parse(&mixture_path, e.to_string()))?;
    if components.is_empty()
        || components
            .iter()
            .any(|c| c.predictor_mode.len() != mesh.n_vertices())
    {
        return Err(Error::parse(
            &mixture_path,
            "mixture does not match the mesh",
        ));
    }
    let p = crate::inference::exceedance_from_components(&components, threshold);
    let text = io::format_vertex_table(&mesh, &[("mean", &mean), ("sd", &sd), ("exceed_p", &p)]);
    io::write_text(&cfg.out_dir().join("riskmap.csv"), &text)?;
    let max = p.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "vertices={} threshold={threshold} max_exceed_p={max:.4}",
        mesh.n_vertices()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).unwrap_err();
        assert!(e.to_string().contains("sed"));
        let e = serde_json::from_str::<RunConfig>(
            r#"{"domain": {"kind": "planar", "outer": "a.csv", "max_edge": 0.1, "holse": []}}"#,
        );
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(r#"{"fit": {"grid": {"stp": [0.5, 0.5]}}}"#);
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(
            r#"{"simulate": {"hyper": {"range": 1, "sigma": 1}, "intercept": 0}}"#,
        );
        assert!(e.is_err());
    }

    #[test]
    fn config_sections_parse() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"seed": 7, "mesh": "m.txt",
                "domain": {"kind": "sphere", "radius": 1, "subdivisions": 3, "land": ["land.csv"]},
                "simulate": {"hyper": {"log_tau": -1, "log_kappa2": 2}, "intercept": 1.5,
                             "censor": {"indicator": {"zero_regions": ["z.csv"]}}},
                "fit": {"quadrature": "gauss2", "effort": {"per_node": "e.csv"},
                        "covariates": [{"name": "elev", "path": "c.csv"}]},
                "riskmap": {"threshold": 5.5}}"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.domain,
            Some(DomainConfig::Sphere {
                subdivisions: 3,
                ..
            })
        ));
        let sim = cfg.simulate.as_ref().unwrap();
        assert_eq!(sim.alpha, 2);
        assert!(matches!(sim.censor, Some(EffortConfig::Indicator { value, .. }) if value == 1.0));
        assert_eq!(cfg.fit.as_ref().unwrap().quadrature, Quadrature::Gauss2);
    }

    #[test]
    fn paths_rebase_on_config_directory() {
        let mut cfg: RunConfig =
            serde_json::from_str(r#"{"mesh": "m.txt", "points": "/abs/p.csv", "fit": {"effort": {"per_node": "e.csv"}}}"#)
                .unwrap();
        cfg.rebase(Path::new("/runs/a"));
        assert_eq!(cfg.mesh.as_deref(), Some(Path::new("/runs/a/m.txt")));
        assert_eq!(cfg.points.as_deref(), Some(Path::new("/abs/p.csv")));
        assert!(
            matches!(&cfg.fit.unwrap().effort, Some(EffortConfig::PerNode(p)) if p == Path::new("/runs/a/e.csv"))
        );
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = RunConfig {
            seed: Some(1),
            ..Default::default()
        };
        let flags = Flags {
            seed: Some(9),
            threshold: Some(-2.0),
            ..Default::default()
        };
        cfg.apply_flags(&flags);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.riskmap.unwrap().threshold, Some(-2.0));
    }

    #[test]
    fn missing_fit_section_matches_empty_one() {
        let empty: FitConfig = serde_json::from_str("{}").unwrap();
        let default = FitConfig::default();
        assert_eq!(default.alpha, empty.alpha);
        assert_eq!(default.quadrature, empty.quadrature);
        assert_eq!(default.grid, empty.grid);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::TooIntense(1e9)), 3);
        assert_eq!(
            exit_code(&Error::NoConvergence {
                iterations: 100,
                grad_norm: 1.0
            }),
            4
        );
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::InvalidDomain("x".into())), 2);
    }
}
