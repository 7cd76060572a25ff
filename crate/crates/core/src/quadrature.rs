//! Deterministic integration rules over a mesh and sampling-effort weights.

use crate::error::{Error, Result};
use crate::geometry::{
    dual_cell_areas, xyz_to_lonlat, BasisEval, MeshMode, Point, Polygon, TriMesh,
};
use crate::sparse::CsrMatrix;

/// Integration nodes, their weights (area units) and the basis evaluated at
/// each node.
#[derive(Clone, Debug)]
pub struct IntegrationScheme {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub node_basis: BasisEval,
    pub mode: MeshMode,
}

impl IntegrationScheme {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i f(node_i)`
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Vertices as nodes with their dual cell areas as weights. The weights are
/// the lumped mass diagonal, computed by the same routine.
pub fn midpoint_scheme(mesh: &TriMesh) -> IntegrationScheme {
    IntegrationScheme {
        nodes: mesh.vertices().to_vec(),
        weights: dual_cell_areas(mesh),
        node_basis: BasisEval::identity(mesh.n_vertices()),
        mode: mesh.mode(),
    }
}

/// Per-triangle Gaussian rules, nodes in triangle-major order.
/// Degree 1: centroid, weight = area. Degree 2: the three edge midpoints,
/// weight = area / 3 each.
pub fn triangle_gauss_scheme(mesh: &TriMesh, degree: usize) -> Result<IntegrationScheme> {
    let local: &[([f64; 3], f64)] = match degree {
        1 => &[([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)],
        2 => &[
            ([0.5, 0.5, 0.0], 1.0 / 3.0),
            ([0.0, 0.5, 0.5], 1.0 / 3.0),
            ([0.5, 0.0, 0.5], 1.0 / 3.0),
        ],
        d => return Err(Error::UnsupportedDegree(d)),
    };
    let mut nodes = Vec::with_capacity(local.len() * mesh.n_triangles());
    let mut weights = Vec::with_capacity(nodes.capacity());
    let mut rows = Vec::with_capacity(nodes.capacity());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        for (bary, w) in local {
            let mut p = [0.0; 3];
            for k in 0..3 {
                for d in 0..3 {
                    p[d] += bary[k] * pts[k][d];
                }
            }
            nodes.push(p);
            weights.push(area * w);
            rows.push(
                (0..3)
                    .filter(|&k| bary[k] != 0.0)
                    .map(|k| (tri[k], bary[k]))
                    .collect(),
            );
        }
    }
    Ok(IntegrationScheme {
        nodes,
        weights,
        node_basis: BasisEval::from_matrix(CsrMatrix::from_rows(mesh.n_vertices(), rows)),
        mode: mesh.mode(),
    })
}

/// Known sampling effort `S(s)`.
#[derive(Clone, Debug, PartialEq)]
pub enum EffortField {
    /// `S ≡ value`
    Constant(f64),
    /// `S = 0` inside any of the polygons and `value` elsewhere. Polygons are
    /// in (x, y) for planar meshes and (lon, lat) degrees on the sphere.
    Indicator {
        zero_regions: Vec<Polygon>,
        value: f64,
    },
    /// One value per integration node; not defined elsewhere.
    PerNode(Vec<f64>),
}

impl Default for EffortField {
    fn default() -> Self {
        EffortField::Constant(1.0)
    }
}

impl EffortField {
    pub fn indicator(zero_regions: Vec<Polygon>) -> Self {
        EffortField::Indicator {
            zero_regions,
            value: 1.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            EffortField::Constant(v) => EffortField::Constant(c * v),
            EffortField::Indicator {
                zero_regions,
                value,
            } => EffortField::Indicator {
                zero_regions: zero_regions.clone(),
                value: c * value,
            },
            EffortField::PerNode(v) => EffortField::PerNode(v.iter().map(|x| c * x).collect()),
        }
    }

    fn check_value(v: f64) -> Result<f64> {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidEffort(format!(
                "effort value {v} must be finite and non-negative"
            )))
        }
    }

    /// Effort at an arbitrary location. Per-node effort has no value away
    /// from the nodes it was given for.
    pub fn value_at(&self, p: Point, mode: MeshMode) -> Result<f64> {
        match self {
            EffortField::Constant(v) => Self::check_value(*v),
            EffortField::Indicator {
                zero_regions,
                value,
            } => {
                let value = Self::check_value(*value)?;
                let q = match mode {
                    MeshMode::Planar => [p[0], p[1]],
                    MeshMode::Spherical { .. } => xyz_to_lonlat(p),
                };
                Ok(if zero_regions.iter().any(|poly| poly.contains(q)) {
                    0.0
                } else {
                    value
                })
            }
            EffortField::PerNode(_) => Err(Error::InvalidEffort(
                "per-node effort cannot be evaluated away from integration nodes".into(),
            )),
        }
    }
}

/// Exposure of each node: `weights[i] · S(node_i)`.
pub fn apply_effort(scheme: &IntegrationScheme, effort: &EffortField) -> Result<Vec<f64>> {
    match effort {
        EffortField::PerNode(values) => {
            if values.len() != scheme.len() {
                return Err(Error::InvalidEffort(format!(
                    "{} effort values for {} integration nodes",
                    values.len(),
                    scheme.len()
                )));
            }
            values
                .iter()
                .zip(&scheme.weights)
                .map(|(&v, &w)| Ok(w * EffortField::check_value(v)?))
                .collect()
        }
        _ => scheme
            .nodes
            .iter()
            .zip(&scheme.weights)
            .map(|(&p, &w)| Ok(w * effort.value_at(p, scheme.mode)?))
            .collect(),
    }
}
