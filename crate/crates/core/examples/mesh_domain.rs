//! Meshes a square with a rectangular hole and a coarse corner, then writes
//! the mesh in the text format the CLI reads.
//!
//!     cargo run --example mesh_domain -- [out.txt]

use coxmesh::geometry::{build_planar_mesh, DomainSpec, Polygon};
use coxmesh::io;

fn main() -> coxmesh::Result<()> {
    let outer = Polygon::rectangle(0.0, 0.0, 4.0, 3.0);
    let hole = Polygon::rectangle(1.5, 1.0, 2.5, 2.0);
    let spec = DomainSpec::new(outer.clone(), 0.15)
        .with_hole(hole.clone())
        .with_region(Polygon::rectangle(3.0, 0.0, 4.0, 3.0), 0.5);
    let mesh = build_planar_mesh(&spec)?;

    println!("vertices        {}", mesh.n_vertices());
    println!("triangles       {}", mesh.n_triangles());
    println!(
        "area            {:.6} (expected {:.6})",
        mesh.area(),
        outer.area() - hole.area()
    );
    println!("max edge        {:.4}", mesh.max_edge_length());
    println!("min angle (deg) {:.2}", mesh.min_angle_deg());
    println!("boundary edges  {}", mesh.boundary_edges().len());

    let uniform = build_planar_mesh(&DomainSpec::new(outer, 0.15).with_hole(hole))?;
    println!("uniform mesh    {} vertices", uniform.n_vertices());

    if let Some(path) = std::env::args().nth(1) {
        io::write_mesh(path.as_ref(), &mesh)?;
        println!("wrote {path}");
    }
    Ok(())
}
