//! Constrained Delaunay meshing of planar polygonal domains.
//!
//! Triangulation and quality refinement are delegated to `spade`. On top of
//! it we seed an equilateral lattice at the locally applicable edge length
//! (so meshes are near-regular, which keeps the vertex quadrature rule well
//! behaved) and repeatedly split over-long edges until every triangle
//! respects the maximum edge length of the region containing it.

use std::collections::HashMap;

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use super::polygon::point_segment_distance;
use super::{Polygon, TriMesh};
use crate::error::{Error, Result};

/// Quality target for refinement.
pub const MIN_ANGLE_DEG: f64 = 20.0;

const MAX_PASSES: usize = 60;

/// A sub-polygon of the domain with its own maximum edge length. The value
/// may be larger than the global one (local de-refinement).
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementRegion {
    pub polygon: Polygon,
    pub max_edge: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub outer_polygon: Polygon,
    pub hole_polygons: Vec<Polygon>,
    pub max_edge_global: f64,
    pub max_edge_regions: Vec<RefinementRegion>,
}

impl DomainSpec {
    pub fn new(outer_polygon: Polygon, max_edge_global: f64) -> Self {
        Self {
            outer_polygon,
            hole_polygons: Vec::new(),
            max_edge_global,
            max_edge_regions: Vec::new(),
        }
    }

    pub fn with_hole(mut self, hole: Polygon) -> Self {
        self.hole_polygons.push(hole);
        self
    }

    pub fn with_region(mut self, polygon: Polygon, max_edge: f64) -> Self {
        self.max_edge_regions
            .push(RefinementRegion { polygon, max_edge });
        self
    }

    fn inside_domain(&self, p: [f64; 2]) -> bool {
        self.outer_polygon.contains(p) && !self.hole_polygons.iter().any(|h| h.contains(p))
    }

    /// Maximum edge length that applies at `p`: the smallest value among
    /// the regions containing `p`, or the global value outside all regions.
    pub fn local_max_edge(&self, p: [f64; 2]) -> f64 {
        self.max_edge_regions
            .iter()
            .filter(|r| r.polygon.contains(p))
            .map(|r| r.max_edge)
            .reduce(f64::min)
            .unwrap_or(self.max_edge_global)
    }

    fn validate(&self) -> Result<()> {
        let polygons = std::iter::once(&self.outer_polygon)
            .chain(&self.hole_polygons)
            .chain(self.max_edge_regions.iter().map(|r| &r.polygon));
        for p in polygons {
            if !p.is_simple() {
                return Err(Error::InvalidDomain("polygon is self-intersecting".into()));
            }
        }
        let edges = std::iter::once(self.max_edge_global)
            .chain(self.max_edge_regions.iter().map(|r| r.max_edge));
        for h in edges {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidDomain(format!(
                    "max edge {h} must be positive"
                )));
            }
        }
        let tol = 1e-12 * self.scale();
        for poly in self
            .hole_polygons
            .iter()
            .chain(self.max_edge_regions.iter().map(|r| &r.polygon))
        {
            if poly
                .points()
                .iter()
                .any(|&p| !self.outer_polygon.contains_closed(p, tol))
            {
                return Err(Error::InvalidDomain(
                    "inner polygon extends outside the outer polygon".into(),
                ));
            }
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        let (lo, hi) = self.outer_polygon.bbox();
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    fn all_polygons(&self) -> impl Iterator<Item = &Polygon> {
        std::iter::once(&self.outer_polygon)
            .chain(&self.hole_polygons)
            .chain(self.max_edge_regions.iter().map(|r| &r.polygon))
    }

    /// Edge length to use when subdividing an input segment: the smallest
    /// local value sampled along and on both sides of it.
    fn segment_max_edge(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let offset = 1e-7 * self.scale();
        let normal = [-d[1] / len * offset, d[0] / len * offset];
        let samples = 8 + (len / self.min_max_edge()).ceil().min(1e4) as usize;
        let mut h = f64::INFINITY;
        for k in 0..samples {
            let t = (k as f64 + 0.5) / samples as f64;
            let m = [a[0] + t * d[0], a[1] + t * d[1]];
            for side in [-1.0, 1.0] {
                let q = [m[0] + side * normal[0], m[1] + side * normal[1]];
                if self.inside_domain(q) {
                    h = h.min(self.local_max_edge(q));
                }
            }
        }
        if h.is_finite() {
            h
        } else {
            self.max_edge_global
        }
    }

    fn min_max_edge(&self) -> f64 {
        self.max_edge_regions
            .iter()
            .map(|r| r.max_edge)
            .fold(self.max_edge_global, f64::min)
    }
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

/// Builds a conforming, quality-refined mesh of the domain.
///
/// All polygon edges (outer boundary, holes and refinement regions) are
/// preserved as unions of mesh edges, every triangle has its longest edge
/// below the applicable maximum and the minimum angle target is
/// [`MIN_ANGLE_DEG`].
pub fn build_planar_mesh(spec: &DomainSpec) -> Result<TriMesh> {
    spec.validate()?;
    let mut cdt = Cdt::new();
    let mut index: HashMap<[u64; 2], spade::handles::FixedVertexHandle> = HashMap::new();
    let mut insert = |cdt: &mut Cdt, p: [f64; 2]| -> Result<spade::handles::FixedVertexHandle> {
        let key = [p[0].to_bits(), p[1].to_bits()];
        if let Some(h) = index.get(&key) {
            return Ok(*h);
        }
        let h = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::InvalidDomain(format!("cannot insert vertex: {e:?}")))?;
        index.insert(key, h);
        Ok(h)
    };

    // constraint segments, subdivided to the local edge length
    for poly in spec.all_polygons() {
        for (a, b) in poly.edges() {
            let h = spec.segment_max_edge(a, b);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let pieces = (len / h).ceil().max(1.0) as usize;
            let mut prev = insert(&mut cdt, a)?;
            for k in 1..=pieces {
                let p = if k == pieces {
                    b
                } else {
                    let t = k as f64 / pieces as f64;
                    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                };
                let next = insert(&mut cdt, p)?;
                if prev != next {
                    cdt.add_constraint_and_split(prev, next, |p| p);
                }
                prev = next;
            }
        }
    }

    for p in seed_lattice(spec) {
        insert(&mut cdt, p)?;
    }

    let mut converged = false;
    for _ in 0..MAX_PASSES {
        let result = cdt.refine(
            RefinementParameters::new()
                .exclude_outer_faces(false)
                .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG)),
        );
        if !result.refinement_complete {
            return Err(Error::RefinementFailure(MAX_PASSES));
        }
        let splits = size_splits(&cdt, spec);
        if splits.is_empty() {
            converged = true;
            break;
        }
        for p in splits {
            cdt.insert(Point2::new(p[0], p[1]))
                .map_err(|e| Error::InvalidDomain(format!("cannot insert vertex: {e:?}")))?;
        }
    }
    if !converged {
        return Err(Error::RefinementFailure(MAX_PASSES));
    }

    extract_mesh(&cdt, spec)
}

fn face_points(
    face: &spade::handles::FaceHandle<
        '_,
        spade::handles::InnerTag,
        Point2<f64>,
        (),
        spade::CdtEdge<()>,
        (),
    >,
) -> [[f64; 2]; 3] {
    face.vertices().map(|v| {
        let p = v.position();
        [p.x, p.y]
    })
}

fn centroid(p: &[[f64; 2]; 3]) -> [f64; 2] {
    [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ]
}

/// Steiner points for triangles whose longest edge exceeds the local
/// maximum: the circumcentre, or the midpoint of a constraint edge the
/// circumcentre would encroach upon. Points closer than half the local edge
/// length to one already chosen in the same pass are deferred.
fn size_splits(cdt: &Cdt, spec: &DomainSpec) -> Vec<[f64; 2]> {
    let mut bad = Vec::new();
    for face in cdt.inner_faces() {
        let p = face_points(&face);
        let c = centroid(&p);
        if !spec.inside_domain(c) {
            continue;
        }
        let h = spec.local_max_edge(c);
        let longest = (0..3)
            .map(|i| dist(p[i], p[(i + 1) % 3]))
            .fold(0.0, f64::max);
        if longest > h * (1.0 + 1e-9) {
            bad.push((longest / h, face.fix()));
        }
    }
    bad.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.index().cmp(&b.1.index())));

    let cell = 0.5 * spec.min_max_edge();
    let mut grid: HashMap<(i64, i64), Vec<[f64; 2]>> = HashMap::new();
    let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut out = Vec::new();
    for (_, fixed) in bad {
        let face = cdt.face(fixed);
        let p = face_points(&face);
        let cc = face.circumcenter();
        let mut target = [cc.x, cc.y];
        let mut on_segment = false;
        for edge in face.adjacent_edges() {
            let [a, b] = edge.vertices().map(|v| [v.position().x, v.position().y]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            if edge.is_constraint_edge() && dist(target, mid) < 0.5 * dist(a, b) {
                target = mid;
                on_segment = true;
                break;
            }
        }
        if !on_segment && !spec.inside_domain(target) {
            // circumcentre beyond the boundary: bisect the longest edge
            let i = (0..3)
                .max_by(|&i, &j| dist(p[i], p[(i + 1) % 3]).total_cmp(&dist(p[j], p[(j + 1) % 3])))
                .unwrap_or(0);
            let (a, b) = (p[i], p[(i + 1) % 3]);
            target = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        }
        let r = 0.5 * spec.local_max_edge(centroid(&p));
        let reach = (r / cell).ceil() as i64;
        let (kx, ky) = key(target);
        let crowded = (-reach..=reach).any(|dx| {
            (-reach..=reach).any(|dy| {
                grid.get(&(kx + dx, ky + dy))
                    .is_some_and(|pts| pts.iter().any(|&q| dist(q, target) < r))
            })
        });
        if !crowded {
            grid.entry((kx, ky)).or_default().push(target);
            out.push(target);
        }
    }
    out
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Equilateral lattice points for every distinct edge-length level, kept
/// where that level applies and away from all input segments.
fn seed_lattice(spec: &DomainSpec) -> Vec<[f64; 2]> {
    let mut levels: Vec<f64> = std::iter::once(spec.max_edge_global)
        .chain(spec.max_edge_regions.iter().map(|r| r.max_edge))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let segments: Vec<([f64; 2], [f64; 2])> = spec.all_polygons().flat_map(|p| p.edges()).collect();
    let (lo, hi) = spec.outer_polygon.bbox();
    let mut points = Vec::new();
    for level in levels {
        // slightly under the limit so lattice edges never need splitting
        let h = 0.97 * level;
        let dy = h * 3f64.sqrt() / 2.0;
        let ny = ((hi[1] - lo[1]) / dy).floor() as usize;
        let nx = ((hi[0] - lo[0]) / h).floor() as usize;
        if nx.saturating_mul(ny) > 50_000_000 {
            continue;
        }
        for j in 0..=ny {
            let y = lo[1] + (j as f64 + 0.5) * dy;
            let shift = if j % 2 == 0 { 0.25 } else { 0.75 };
            for i in 0..=nx {
                let x = lo[0] + (i as f64 + shift) * h;
                let p = [x, y];
                if !spec.inside_domain(p) || spec.local_max_edge(p) != level {
                    continue;
                }
                let clearance = segments
                    .iter()
                    .map(|&(a, b)| point_segment_distance(p, a, b))
                    .fold(f64::INFINITY, f64::min);
                if clearance >= 0.2 * h {
                    points.push(p);
                }
            }
        }
    }
    points
}

fn extract_mesh(cdt: &Cdt, spec: &DomainSpec) -> Result<TriMesh> {
    let mut remap = vec![usize::MAX; cdt.num_vertices()];
    let mut faces = Vec::new();
    for face in cdt.inner_faces() {
        let p = face_points(&face);
        if spec.inside_domain(centroid(&p)) {
            faces.push(face.vertices().map(|v| v.fix().index()));
        }
    }
    if faces.is_empty() {
        return Err(Error::InvalidDomain("domain contains no area".into()));
    }
    // number vertices by their spade index so output order is stable
    let mut used: Vec<usize> = faces.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let positions: Vec<[f64; 2]> = cdt
        .vertices()
        .map(|v| [v.position().x, v.position().y])
        .collect();
    let mut vertices = Vec::with_capacity(used.len());
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
        vertices.push(positions[old]);
    }
    let triangles = faces.into_iter().map(|f| f.map(|v| remap[v])).collect();
    TriMesh::planar(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(h: f64) -> DomainSpec {
        DomainSpec::new(Polygon::rectangle(0.0, 0.0, 1.0, 1.0), h)
    }

    #[test]
    fn unit_square_respects_max_edge_and_area() {
        let mesh = build_planar_mesh(&unit_square(0.1)).unwrap();
        assert!(mesh.max_edge_length() <= 0.1 * (1.0 + 1e-9));
        assert!((mesh.area() - 1.0).abs() < 1e-10);
        assert!(
            mesh.min_angle_deg() >= MIN_ANGLE_DEG - 1e-9,
            "{}",
            mesh.min_angle_deg()
        );
    }

    #[test]
    fn hole_is_excluded_and_boundary_preserved() {
        let spec = DomainSpec::new(Polygon::rectangle(0.0, 0.0, 2.0, 2.0), 0.2)
            .with_hole(Polygon::rectangle(0.5, 0.5, 1.0, 1.5));
        let mesh = build_planar_mesh(&spec).unwrap();
        assert!((mesh.area() - (4.0 - 0.5)).abs() < 1e-10);
        for t in 0..mesh.n_triangles() {
            let c = mesh.centroid(t);
            assert!(!(c[0] > 0.5 && c[0] < 1.0 && c[1] > 0.5 && c[1] < 1.5));
        }
    }

    #[test]
    fn hole_covering_everything_is_invalid() {
        let spec = unit_square(0.2).with_hole(Polygon::rectangle(0.0, 0.0, 1.0, 1.0));
        assert!(matches!(
            build_planar_mesh(&spec),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn self_intersecting_outer_is_invalid() {
        let bowtie = Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let spec = DomainSpec::new(bowtie, 0.1);
        assert!(matches!(
            build_planar_mesh(&spec),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn nonpositive_max_edge_is_invalid() {
        assert!(matches!(
            build_planar_mesh(&unit_square(0.0)),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn derefined_region_uses_fewer_vertices() {
        let outer = Polygon::rectangle(-1.0, -1.0, 1.0, 1.0);
        let hole = Polygon::rectangle(-0.5, -0.1, 0.4, 0.4);
        let uniform = build_planar_mesh(&DomainSpec::new(outer.clone(), 0.035)).unwrap();
        let coarse =
            build_planar_mesh(&DomainSpec::new(outer, 0.035).with_region(hole.clone(), 0.14))
                .unwrap();
        assert!(coarse.n_vertices() < uniform.n_vertices());
        // region edges are mesh edges: no triangle straddles the rectangle
        for t in 0..coarse.n_triangles() {
            let [a, b, c] = coarse.triangle_points(t);
            let inside = |p: [f64; 3]| hole.contains_closed([p[0], p[1]], 1e-12);
            let c0 = coarse.centroid(t);
            if hole.contains([c0[0], c0[1]]) {
                assert!(inside(a) && inside(b) && inside(c));
            }
        }
        assert!((coarse.area() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn halving_max_edge_adds_vertices() {
        let coarse = build_planar_mesh(&unit_square(0.2)).unwrap();
        let fine = build_planar_mesh(&unit_square(0.1)).unwrap();
        assert!(fine.n_vertices() >= coarse.n_vertices());
    }

    #[test]
    fn meshing_is_deterministic() {
        let a = build_planar_mesh(&unit_square(0.15)).unwrap();
        let b = build_planar_mesh(&unit_square(0.15)).unwrap();
        assert_eq!(a, b);
    }
}
