//! Simulates a pattern on the unit square and fits it back: Laplace
//! approximations over a hyperparameter grid, mixed into posterior
//! marginals.

use std::time::Instant;

use coxmesh::fem::{Alpha, SpdeModel};
use coxmesh::geometry::{build_planar_mesh, locate_points, DomainSpec, Polygon};
use coxmesh::inference::{
    explore_grid, marginals, GridSpec, Hyper, HyperPrior, LaplaceProblem, FIXED_PRIOR_PRECISION,
};
use coxmesh::likelihood::{build_pseudo, LinearPredictorMap};
use coxmesh::quadrature::{triangle_gauss_scheme, EffortField};
use coxmesh::simulate::{sample_field, simulate_lgcp};

fn main() -> coxmesh::Result<()> {
    let mesh = build_planar_mesh(&DomainSpec::new(
        Polygon::rectangle(0.0, 0.0, 1.0, 1.0),
        0.06,
    ))?;
    let model = SpdeModel::new(&mesh, Alpha::Two)?;
    let truth = Hyper::from_range_sigma2(0.4, 1.0);
    let mu = 6.0;
    let field = sample_field(&model, truth, 7)?;
    let pattern = simulate_lgcp(&mesh, &field, mu, 8)?;
    println!("{} vertices, {} points", mesh.n_vertices(), pattern.n());

    let t = Instant::now();
    let scheme = triangle_gauss_scheme(&mesh, 2)?;
    let basis = locate_points(&mesh, &pattern.points)?;
    let pred = LinearPredictorMap::intercept_only(mesh.n_vertices(), scheme.len(), pattern.n());
    let pp = build_pseudo(&scheme, &EffortField::Constant(1.0), &basis, &pred)?;
    let problem = LaplaceProblem::new(&pp, &model, FIXED_PRIOR_PRECISION)?;
    let (grid, approxs) = explore_grid(&problem, &HyperPrior::default(), &GridSpec::default())?;
    let post = marginals(&grid, &approxs, &pred.names);
    println!(
        "{} grid points in {:.2}s",
        grid.points.len(),
        t.elapsed().as_secs_f64()
    );

    let best = grid.best();
    println!(
        "grid mode  log tau {:.2}  log kappa2 {:.2}",
        best.hyper.log_tau, best.hyper.log_kappa2
    );
    println!(
        "truth      log tau {:.2}  log kappa2 {:.2}",
        truth.log_tau, truth.log_kappa2
    );
    for m in &post.hyper_marginals {
        println!("{:<11} mean {:.2} sd {:.2}", m.name, m.mean, m.sd);
    }
    // long-range grid points confound the intercept with the field, so the
    // mixture sd has heavy tails; the quantiles are the more useful summary
    for f in &post.fixed_effects {
        let q: Vec<String> = f
            .quantiles
            .iter()
            .map(|(p, v)| format!("q{p}={v:.3}"))
            .collect();
        println!(
            "{:<11} mean {:.3} sd {:.3} {} (true {mu})",
            f.name,
            f.mean,
            f.sd,
            q.join(" ")
        );
    }

    // posterior predictor against the true log intensity at the vertices
    let z: Vec<f64> = post
        .predictor_mean
        .iter()
        .zip(&post.predictor_sd)
        .zip(&field.z)
        .map(|((m, s), z)| (m - (mu + z)) / s)
        .collect();
    let rms = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
    let covered = z.iter().filter(|v| v.abs() < 1.96).count() as f64 / z.len() as f64;
    println!(
        "standardized predictor error: rms {rms:.2}, within 1.96 sd {:.0}%",
        100.0 * covered
    );
    Ok(())
}
