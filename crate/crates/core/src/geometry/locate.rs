use rayon::prelude::*;

use super::{cross, dot, norm, sub, MeshMode, Point, TriMesh};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Evaluation matrix of the piecewise-linear basis: row `i` holds the
/// barycentric weights of query point `i` on the vertices of its triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    matrix: CsrMatrix,
}

impl BasisEval {
    pub fn from_matrix(matrix: CsrMatrix) -> Self {
        Self { matrix }
    }

    /// Identity rows: node `i` is vertex `i`.
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CsrMatrix::identity(n),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.n_cols()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.matrix.row(i)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Interpolates per-vertex values at the query points.
    pub fn interpolate(&self, values: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(values)
    }
}

/// Uniform bucket grid over triangle bounding boxes.
struct Locator<'a> {
    mesh: &'a TriMesh,
    lo: Point,
    cell: Point,
    dims: [usize; 3],
    buckets: Vec<Vec<usize>>,
    tol: f64,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a TriMesh) -> Self {
        let (mut lo, mut hi) = mesh.bounding_box();
        let spherical = mesh.is_spherical();
        let tol = 1e-9 * mesh.diameter();
        // triangles' caps bulge beyond their flat bounding boxes on the sphere
        let boxes: Vec<(Point, Point)> = (0..mesh.n_triangles())
            .map(|t| {
                let pts = mesh.triangle_points(t);
                let mut blo = pts[0];
                let mut bhi = pts[0];
                for p in &pts[1..] {
                    for k in 0..3 {
                        blo[k] = blo[k].min(p[k]);
                        bhi[k] = bhi[k].max(p[k]);
                    }
                }
                let pad = if let MeshMode::Spherical { radius } = mesh.mode() {
                    let n = cross(sub(pts[1], pts[0]), sub(pts[2], pts[0]));
                    let plane = dot(n, pts[0]) / norm(n);
                    (radius - plane).max(0.0) + tol
                } else {
                    tol
                };
                for k in 0..3 {
                    blo[k] -= pad;
                    bhi[k] += pad;
                }
                (blo, bhi)
            })
            .collect();
        for (blo, bhi) in &boxes {
            for k in 0..3 {
                lo[k] = lo[k].min(blo[k]);
                hi[k] = hi[k].max(bhi[k]);
            }
        }
        let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let active = if spherical { 3 } else { 2 };
        let target = (mesh.n_triangles() as f64).max(1.0);
        let volume: f64 = extent[..active]
            .iter()
            .product::<f64>()
            .max(f64::MIN_POSITIVE);
        let side = (volume / target).powf(1.0 / active as f64);
        let mut dims = [1usize; 3];
        let mut cell = [1.0; 3];
        for k in 0..active {
            dims[k] = ((extent[k] / side).ceil() as usize).clamp(1, 512);
            cell[k] = extent[k] / dims[k] as f64;
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (t, (blo, bhi)) in boxes.iter().enumerate() {
            let a = Self::cell_of(lo, cell, dims, *blo);
            let b = Self::cell_of(lo, cell, dims, *bhi);
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        buckets[(k * dims[1] + j) * dims[0] + i].push(t);
                    }
                }
            }
        }
        Self {
            mesh,
            lo,
            cell,
            dims,
            buckets,
            tol,
        }
    }

    fn cell_of(lo: Point, cell: Point, dims: [usize; 3], p: Point) -> [usize; 3] {
        let mut c = [0; 3];
        for k in 0..3 {
            let f = ((p[k] - lo[k]) / cell[k]).floor();
            c[k] = if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(dims[k] - 1)
            };
        }
        c
    }

    fn bucket(&self, p: Point) -> Option<&[usize]> {
        for k in 0..3 {
            if p[k] < self.lo[k] - self.tol
                || p[k] > self.lo[k] + self.cell[k] * self.dims[k] as f64 + self.tol
            {
                return None;
            }
        }
        let c = Self::cell_of(self.lo, self.cell, self.dims, p);
        Some(&self.buckets[(c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]])
    }

    /// Barycentric coordinates of `p` in triangle `t` plus the smallest signed
    /// distance (in length units) from `p` to the triangle's edge lines.
    fn barycentric(&self, t: usize, p: Point) -> Option<([f64; 3], f64)> {
        let [a, b, c] = self.mesh.triangle_points(t);
        let n = cross(sub(b, a), sub(c, a));
        let nn = dot(n, n);
        let q = match self.mesh.mode() {
            MeshMode::Planar => p,
            MeshMode::Spherical { .. } => {
                // gnomonic projection along the ray through the origin
                let np = dot(n, p);
                if np <= 0.0 {
                    return None;
                }
                let s = dot(n, a) / np;
                [p[0] * s, p[1] * s, p[2] * s]
            }
        };
        let lb = dot(cross(sub(q, a), sub(c, a)), n) / nn;
        let lc = dot(cross(sub(b, a), sub(q, a)), n) / nn;
        let la = 1.0 - lb - lc;
        let twice_area = nn.sqrt();
        let heights = [
            twice_area / norm(sub(c, b)),
            twice_area / norm(sub(a, c)),
            twice_area / norm(sub(b, a)),
        ];
        let lam = [la, lb, lc];
        let margin = (0..3)
            .map(|i| lam[i] * heights[i])
            .fold(f64::INFINITY, f64::min);
        Some((lam, margin))
    }

    fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        // lowest-indexed triangle within tolerance wins
        let candidates = self.bucket(p)?;
        candidates
            .iter()
            .filter_map(|&t| {
                let (lam, margin) = self.barycentric(t, p)?;
                (margin >= -self.tol).then_some((t, lam))
            })
            .min_by_key(|(t, _)| *t)
    }
}

/// Builds the basis evaluation matrix for `points`.
///
/// Planar meshes take points with z = 0; spherical meshes take points on
/// (or radially near) the sphere and locate them by gnomonic projection.
pub fn locate_points(mesh: &TriMesh, points: &[Point]) -> Result<BasisEval> {
    let locator = Locator::new(mesh);
    let rows: Vec<Option<Vec<(usize, f64)>>> = points
        .par_iter()
        .map(|&p| {
            let (t, lam) = locator.locate(p)?;
            let tri = mesh.triangles()[t];
            let clamped = lam.map(|l| if l < 1e-13 { 0.0 } else { l });
            let total: f64 = clamped.iter().sum();
            let mut row: Vec<(usize, f64)> = (0..3)
                .filter(|&i| clamped[i] > 0.0)
                .map(|i| (tri[i], clamped[i] / total))
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            Some(row)
        })
        .collect();
    let mut triplets = Vec::with_capacity(points.len());
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(r) => triplets.push(r),
            None => return Err(Error::PointOutsideDomain { index: i }),
        }
    }
    Ok(BasisEval {
        matrix: CsrMatrix::from_rows(mesh.n_vertices(), triplets),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_icosphere_masked, lonlat_to_xyz};

    #[test]
    fn vertex_gives_unit_row() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 5, 5).unwrap();
        for k in [0, 7, 14, 35] {
            let basis = locate_points(&mesh, &[mesh.vertices()[k]]).unwrap();
            assert_eq!(basis.row(0), (&[k][..], &[1.0][..]));
        }
    }

    #[test]
    fn centroid_gives_thirds() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 3, 3).unwrap();
        let basis = locate_points(&mesh, &[mesh.centroid(4)]).unwrap();
        let (cols, w) = basis.row(0);
        let mut expected = mesh.triangles()[4].to_vec();
        expected.sort_unstable();
        assert_eq!(cols, &expected[..]);
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_point_reports_index() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 3, 3).unwrap();
        let err = locate_points(&mesh, &[[0.5, 0.5, 0.0], [2.0, 2.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::PointOutsideDomain { index: 1 }));
    }

    #[test]
    fn edge_point_goes_to_lowest_triangle() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 1, 1).unwrap();
        // on the shared diagonal of triangles 0 and 1
        let basis = locate_points(&mesh, &[[0.25, 0.25, 0.0]]).unwrap();
        let (cols, w) = basis.row(0);
        assert_eq!(cols, &[0, 3]);
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sphere_points_reproduce_linear_functions() {
        let mesh = build_icosphere_masked(1.0, 3, &[]).unwrap();
        let pts: Vec<Point> = (0..50)
            .map(|i| lonlat_to_xyz(-170.0 + 6.9 * i as f64, -80.0 + 3.1 * i as f64, 1.0))
            .collect();
        let basis = locate_points(&mesh, &pts).unwrap();
        for i in 0..pts.len() {
            let (_, w) = basis.row(i);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
        // a point exactly at a vertex
        let b = locate_points(&mesh, &[mesh.vertices()[17]]).unwrap();
        assert_eq!(b.row(0).0, &[17]);
    }
}
