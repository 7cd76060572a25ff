//! Triangular meshes over planar polygonal domains and over the sphere.
//!
//! A [`TriMesh`] is the single computational object shared by every other
//! module: the finite element matrices are assembled on it, the integration
//! nodes are its vertices (or points inside its triangles) and the observed
//! points are located in it to build the evaluation matrix of the
//! piecewise-linear basis.

mod locate;
mod planar;
mod polygon;
mod sphere;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use locate::{locate_points, BasisEval};
pub use planar::{build_planar_mesh, DomainSpec, RefinementRegion, MIN_ANGLE_DEG};
pub use polygon::Polygon;
pub use sphere::{build_icosphere_masked, lonlat_to_xyz, xyz_to_lonlat};

/// Vertex coordinates. Planar meshes keep the third component at zero.
pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshMode {
    Planar,
    Spherical { radius: f64 },
}

/// Conforming triangulation with counter-clockwise triangles.
///
/// For spherical meshes "counter-clockwise" means as seen from outside the
/// sphere, so every flat triangle normal points away from the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    mode: MeshMode,
}

impl TriMesh {
    /// Validates the triangulation and derives its boundary edges.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, mode: MeshMode) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let nv = vertices.len();
        if let MeshMode::Spherical { radius } = mode {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidMesh(format!("bad sphere radius {radius}")));
            }
            for (i, v) in vertices.iter().enumerate() {
                if (norm(*v) - radius).abs() > 1e-10 * radius {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {i} is not on the sphere"
                    )));
                }
            }
        } else if vertices.iter().any(|v| v[2] != 0.0) {
            return Err(Error::InvalidMesh("planar vertex with nonzero z".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }

        // directed edge -> number of uses; a conforming oriented mesh uses every
        // directed edge at most once and every undirected edge at most twice
        let mut edges: BTreeMap<[usize; 2], (usize, [usize; 2])> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a >= nv || b >= nv || c >= nv {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            if a == b || b == c || a == c {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let ok = match mode {
                MeshMode::Planar => signed_area_2d(&vertices[a], &vertices[b], &vertices[c]) > 0.0,
                MeshMode::Spherical { .. } => {
                    let n = cross(sub(vertices[b], vertices[a]), sub(vertices[c], vertices[a]));
                    let centroid = add(add(vertices[a], vertices[b]), vertices[c]);
                    norm(n) > 0.0 && dot(n, centroid) > 0.0
                }
            };
            if !ok {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate or not counter-clockwise"
                )));
            }
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let key = [u.min(v), u.max(v)];
                let entry = edges.entry(key).or_insert((0, [u, v]));
                entry.0 += 1;
                if entry.0 > 2 {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} is shared by more than two triangles"
                    )));
                }
                if entry.0 == 2 && entry.1 == [u, v] {
                    return Err(Error::InvalidMesh(format!(
                        "triangles adjacent across edge {key:?} have inconsistent orientation"
                    )));
                }
            }
        }
        let boundary_edges = edges
            .values()
            .filter(|(count, _)| *count == 1)
            .map(|(_, directed)| *directed)
            .collect();
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            mode,
        })
    }

    /// Convenience constructor for planar meshes from 2D coordinates.
    pub fn planar(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let vertices = vertices.into_iter().map(|[x, y]| [x, y, 0.0]).collect();
        Self::new(vertices, triangles, MeshMode::Planar)
    }

    /// Structured mesh of an axis-aligned rectangle: an `nx` by `ny` grid of
    /// cells, each split along its lower-left to upper-right diagonal.
    ///
    /// Vertex `(i, j)` has index `j * (nx + 1) + i`.
    pub fn rectangle_grid(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidDomain("empty rectangle".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = y0 + (y1 - y0) * j as f64 / ny as f64;
            for i in 0..=nx {
                let x = x0 + (x1 - x0) * i as f64 / nx as f64;
                vertices.push([x, y]);
            }
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        Self::planar(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn mode(&self) -> MeshMode {
        self.mode
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self.mode, MeshMode::Spherical { .. })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Flat (embedded) area of triangle `t`.
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        match self.mode {
            MeshMode::Planar => signed_area_2d(&a, &b, &c),
            MeshMode::Spherical { .. } => 0.5 * norm(cross(sub(b, a), sub(c, a))),
        }
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.n_triangles())
            .map(|t| self.triangle_area(t))
            .collect()
    }

    /// Total area |Ω| as the sum of triangle areas in triangle order.
    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ]
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[u, v]| [u.min(v), u.max(v)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn edge_length(&self, u: usize, v: usize) -> f64 {
        norm(sub(self.vertices[u], self.vertices[v]))
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&[u, v]| self.edge_length(u, v))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..self.n_triangles())
            .flat_map(|t| triangle_angles(&self.triangle_points(t)))
            .fold(180.0, f64::min)
    }

    /// Sorted vertex adjacency lists (excluding the vertex itself).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.n_vertices()];
        for [u, v] in self.edges() {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal, used as the domain length scale.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        norm(sub(hi, lo))
    }
}

/// Per-vertex dual cell areas: every triangle gives one third of its area to
/// each of its corners. These are exactly the lumped mass entries.
pub fn dual_cell_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut areas = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let third = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            areas[v] += third;
        }
    }
    areas
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn signed_area_2d(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn triangle_angles(p: &[Point; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let u = sub(p[(i + 1) % 3], p[i]);
        let v = sub(p[(i + 2) % 3], p[i]);
        let c = (dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0);
        out[i] = c.acos().to_degrees();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_grid_counts_and_area() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 4, 3).unwrap();
        assert_eq!(mesh.n_vertices(), 20);
        assert_eq!(mesh.n_triangles(), 24);
        assert!((mesh.area() - 1.0).abs() < 1e-14);
        assert_eq!(mesh.boundary_edges().len(), 14);
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let err = TriMesh::planar(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_edge_shared_three_times() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]];
        let t = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(TriMesh::planar(v, t).is_err());
    }

    #[test]
    fn single_triangle_dual_cells_are_thirds() {
        let mesh =
            TriMesh::planar(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let areas = dual_cell_areas(&mesh);
        for a in areas {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(mesh.boundary_edges().len(), 3);
    }

    #[test]
    fn interior_dual_cell_of_uniform_lattice() {
        let h = 0.25;
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 4.0 * h, 4.0 * h, 4, 4).unwrap();
        let areas = dual_cell_areas(&mesh);
        // vertex (2, 2) is interior with six incident triangles
        assert!((areas[2 * 5 + 2] - h * h).abs() < 1e-15);
        let total: f64 = areas.iter().sum();
        assert!((total - mesh.area()).abs() <= 1e-12 * mesh.area());
    }
}
