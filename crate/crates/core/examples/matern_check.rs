//! Compares the covariance of the discretized SPDE field with the Matérn
//! covariance it approximates, away from the boundary.

use std::sync::Arc;

use coxmesh::fem::{Alpha, MaternParams, SpdeModel};
use coxmesh::geometry::TriMesh;
use coxmesh::inference::Hyper;
use coxmesh::sparse::SymbolicCholesky;

fn main() -> coxmesh::Result<()> {
    let n = 60;
    let mesh = TriMesh::rectangle_grid(-1.0, -1.0, 1.0, 1.0, n, n)?;
    let kappa: f64 = 8.0;
    let hyper = Hyper::new(0.0, 2.0 * kappa.ln());
    let model = SpdeModel::new(&mesh, Alpha::Two)?;
    let q = model.precision_at(hyper.log_tau, hyper.log_kappa2);
    let factor = Arc::new(SymbolicCholesky::analyze(&q, 0)).factor(&q)?;

    let sigma2 = 1.0 / (4.0 * std::f64::consts::PI * kappa * kappa);
    let matern = MaternParams::from_spde(2.0, 2, kappa, sigma2);
    let centre = (n / 2) * (n + 1) + n / 2;
    let mut e = vec![0.0; q.dim()];
    e[centre] = 1.0;
    let column = factor.solve(&e);

    println!(
        "{:>8} {:>12} {:>12} {:>8}",
        "distance", "discrete", "matern", "rel err"
    );
    for step in 0..=10 {
        let v = centre + step;
        let h = (mesh.vertices()[v][0] - mesh.vertices()[centre][0]).abs();
        let exact = matern.covariance(h)?;
        println!(
            "{h:8.4} {:12.6e} {exact:12.6e} {:8.4}",
            column[v],
            (column[v] - exact).abs() / sigma2
        );
    }
    Ok(())
}
