//! Draws a Gaussian field from the SPDE prior, simulates the Cox process on
//! top of it by thinning, and thins again with a survey-effort map.
//!
//!     cargo run --example simulate_pattern -- [seed] [points.csv]

use coxmesh::fem::{Alpha, SpdeModel};
use coxmesh::geometry::{build_planar_mesh, DomainSpec, Polygon};
use coxmesh::inference::Hyper;
use coxmesh::io;
use coxmesh::quadrature::{midpoint_scheme, EffortField};
use coxmesh::simulate::{censor_pattern, sample_field, simulate_lgcp};

fn main() -> coxmesh::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let mesh = build_planar_mesh(&DomainSpec::new(
        Polygon::rectangle(0.0, 0.0, 2.0, 1.0),
        0.08,
    ))?;
    let model = SpdeModel::new(&mesh, Alpha::Two)?;
    let hyper = Hyper::from_range_sigma2(0.5, 1.0);
    let mu = 5.0;

    let field = sample_field(&model, hyper, seed)?;
    let pattern = simulate_lgcp(&mesh, &field, mu, seed + 1)?;
    // vertex-rule integral of the intensity
    let expected: f64 = midpoint_scheme(&mesh)
        .weights
        .iter()
        .zip(&field.z)
        .map(|(w, z)| w * (mu + z).exp())
        .sum();
    println!(
        "{} vertices, field range [{:.2}, {:.2}]",
        mesh.n_vertices(),
        field.z.iter().cloned().fold(f64::INFINITY, f64::min),
        field.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    println!(
        "{} points, expected about {expected:.0} given the field",
        pattern.n()
    );

    // nothing recorded in the left half
    let effort = EffortField::indicator(vec![Polygon::rectangle(0.0, 0.0, 1.0, 1.0)]);
    let observed = censor_pattern(&pattern, &effort, seed + 2)?;
    println!("{} points after removing the unsurveyed half", observed.n());

    if let Some(path) = std::env::args().nth(2) {
        io::write_points(path.as_ref(), &observed)?;
        println!("wrote {path}");
    }
    Ok(())
}
