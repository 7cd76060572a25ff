//! Sightings on the ocean part of a unit sphere: icosphere with land cut
//! out, simulated pattern, fit, and the posterior probability that the log
//! intensity exceeds a threshold at each vertex.

use coxmesh::fem::{Alpha, SpdeModel};
use coxmesh::geometry::{build_icosphere_masked, locate_points, xyz_to_lonlat, Polygon};
use coxmesh::inference::{
    exceedance_map, explore_grid, marginals, GridSpec, Hyper, HyperPrior, LaplaceProblem,
    FIXED_PRIOR_PRECISION,
};
use coxmesh::likelihood::{build_pseudo, LinearPredictorMap};
use coxmesh::quadrature::{midpoint_scheme, EffortField};
use coxmesh::simulate::{sample_field, simulate_lgcp};

fn main() -> coxmesh::Result<()> {
    let land = vec![
        Polygon::new(vec![
            [-20.0, -35.0],
            [50.0, -35.0],
            [50.0, 35.0],
            [-20.0, 35.0],
        ])?,
        Polygon::new(vec![
            [-120.0, 10.0],
            [-60.0, 10.0],
            [-60.0, 60.0],
            [-120.0, 60.0],
        ])?,
    ];
    let mesh = build_icosphere_masked(1.0, 4, &land)?;
    println!(
        "{} vertices, ocean area {:.3} of {:.3}",
        mesh.n_vertices(),
        mesh.area(),
        4.0 * std::f64::consts::PI
    );

    let model = SpdeModel::new(&mesh, Alpha::Two)?;
    let truth = Hyper::from_range_sigma2(0.8, 1.0);
    let field = sample_field(&model, truth, 41)?;
    let mu = 4.5;
    let pattern = simulate_lgcp(&mesh, &field, mu, 42)?;
    println!("{} sightings", pattern.n());

    let scheme = midpoint_scheme(&mesh);
    let basis = locate_points(&mesh, &pattern.points)?;
    let pred = LinearPredictorMap::intercept_only(mesh.n_vertices(), scheme.len(), pattern.n());
    let pp = build_pseudo(&scheme, &EffortField::Constant(1.0), &basis, &pred)?;
    let problem = LaplaceProblem::new(&pp, &model, FIXED_PRIOR_PRECISION)?;
    let (grid, approxs) = explore_grid(&problem, &HyperPrior::default(), &GridSpec::default())?;
    let post = marginals(&grid, &approxs, &pred.names);

    let threshold = mu + 1.0;
    let p = exceedance_map(&post, threshold);
    let truly_above: Vec<bool> = field.z.iter().map(|z| mu + z > threshold).collect();
    let flagged = p.iter().filter(|&&q| q > 0.9).count();
    let correct = p
        .iter()
        .zip(&truly_above)
        .filter(|(&q, &t)| q > 0.9 && t)
        .count();
    println!(
        "P(log intensity > {threshold}) > 0.9 at {flagged} vertices, {correct} of them truly above; {} truly above in total",
        truly_above.iter().filter(|&&t| t).count()
    );
    if let Some((i, q)) = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        let [lon, lat] = xyz_to_lonlat(mesh.vertices()[i]);
        println!("highest exceedance {q:.3} at lon {lon:.1}, lat {lat:.1}");
    }
    Ok(())
}
