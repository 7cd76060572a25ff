//! Finite element matrices of the SPDE `(κ² − Δ)^{α/2} x = W` with
//! piecewise-linear elements and Neumann boundary conditions.

mod matern;

pub use matern::{bessel_k, matern_correlation_oracle, neumann_variance_1d_oracle, MaternParams};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dot, dual_cell_areas, sub, TriMesh};
use crate::sparse::SparseSym;

/// Lumped mass: `C_ii = Σ area / 3` over the triangles touching `i`.
pub fn assemble_mass_lumped(mesh: &TriMesh) -> Vec<f64> {
    dual_cell_areas(mesh)
}

/// Stiffness matrix `G_ij = ∫ ∇φ_i · ∇φ_j`.
///
/// On a flat triangle with edge vectors `e_k` opposite each corner the local
/// entries are `e_i · e_j / (4 area)`; this form needs no 2D projection, so
/// the same code serves the flat facets of a sphere mesh.
pub fn assemble_stiffness(mesh: &TriMesh) -> Result<SparseSym> {
    let (lo, hi) = mesh.bounding_box();
    let extent = sub(hi, lo);
    let tiny = 1e-14 * dot(extent, extent);
    let locals: Vec<[[f64; 3]; 3]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let area = mesh.triangle_area(t);
            if !(area >= tiny) || area <= 0.0 {
                return Err(Error::DegenerateTriangle(t));
            }
            let [a, b, c] = mesh.triangle_points(t);
            let e = [sub(c, b), sub(a, c), sub(b, a)];
            let mut k = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] = dot(e[i], e[j]) / (4.0 * area);
                }
            }
            Ok(k)
        })
        .collect::<Result<_>>()?;

    // serial accumulation keeps the summation order fixed
    let mut triplets = Vec::with_capacity(6 * locals.len());
    for (tri, k) in mesh.triangles().iter().zip(&locals) {
        for i in 0..3 {
            for j in i..3 {
                triplets.push((tri[i], tri[j], k[i][j]));
            }
        }
    }
    Ok(SparseSym::from_triplets(mesh.n_vertices(), triplets))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alpha {
    One,
    Two,
}

impl Alpha {
    pub fn from_int(alpha: u32) -> Result<Self> {
        match alpha {
            1 => Ok(Alpha::One),
            2 => Ok(Alpha::Two),
            other => Err(Error::AssemblyError(format!(
                "alpha must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn value(self) -> u32 {
        match self {
            Alpha::One => 1,
            Alpha::Two => 2,
        }
    }
}

/// Discretised SPDE on a mesh. The precision structure is fixed at
/// construction; `precision` only rescales stored value arrays.
#[derive(Clone, Debug)]
pub struct SpdeModel {
    pub log_tau: f64,
    pub log_kappa2: f64,
    c_diag: Vec<f64>,
    g: SparseSym,
    alpha: Alpha,
    pattern: SparseSym,
    c_on_q: Vec<f64>,
    g_on_q: Vec<f64>,
    gcg_on_q: Vec<f64>,
}

impl SpdeModel {
    pub fn new(mesh: &TriMesh, alpha: Alpha) -> Result<Self> {
        Self::from_parts(assemble_mass_lumped(mesh), assemble_stiffness(mesh)?, alpha)
    }

    pub fn from_parts(c_diag: Vec<f64>, g: SparseSym, alpha: Alpha) -> Result<Self> {
        let n = c_diag.len();
        if g.dim() != n {
            return Err(Error::AssemblyError(format!(
                "C has {n} entries but G is {0}x{0}",
                g.dim()
            )));
        }
        if let Some(i) = c_diag.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::AssemblyError(format!(
                "lumped mass entry {i} is not positive"
            )));
        }
        let gcg = match alpha {
            Alpha::One => None,
            Alpha::Two => Some(g_cinv_g(&g, &c_diag)),
        };
        let pattern = match &gcg {
            Some(m) => m.clone(),
            None => g.clone(),
        };
        let nnz = pattern.nnz();
        let mut c_on_q = vec![0.0; nnz];
        for (i, &c) in c_diag.iter().enumerate() {
            c_on_q[pattern.position(i, i).expect("diagonal slot")] = c;
        }
        let mut g_on_q = vec![0.0; nnz];
        for (i, j, v) in g.triplets() {
            g_on_q[pattern.position(i, j).expect("G pattern inside Q pattern")] = v;
        }
        let gcg_on_q = gcg.map(|m| m.values().to_vec()).unwrap_or_default();
        Ok(Self {
            log_tau: 0.0,
            log_kappa2: 0.0,
            c_diag,
            g,
            alpha,
            pattern,
            c_on_q,
            g_on_q,
            gcg_on_q,
        })
    }

    pub fn with_hyper(mut self, log_tau: f64, log_kappa2: f64) -> Self {
        self.log_tau = log_tau;
        self.log_kappa2 = log_kappa2;
        self
    }

    pub fn c_diag(&self) -> &[f64] {
        &self.c_diag
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.g
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.c_diag.len()
    }

    /// Sparsity structure shared by every precision this model produces.
    pub fn pattern(&self) -> &SparseSym {
        &self.pattern
    }

    /// Precision at the stored hyperparameters.
    pub fn precision(&self) -> SparseSym {
        self.precision_at(self.log_tau, self.log_kappa2)
    }

    /// α = 1: `τ² (κ² C + G)`; α = 2: `τ² (κ²C + G) C⁻¹ (κ²C + G)`.
    pub fn precision_at(&self, log_tau: f64, log_kappa2: f64) -> SparseSym {
        let tau2 = (2.0 * log_tau).exp();
        let k2 = log_kappa2.exp();
        let values = match self.alpha {
            Alpha::One => (0..self.pattern.nnz())
                .map(|p| tau2 * (k2 * self.c_on_q[p] + self.g_on_q[p]))
                .collect(),
            Alpha::Two => (0..self.pattern.nnz())
                .map(|p| {
                    tau2 * (k2 * k2 * self.c_on_q[p] + 2.0 * k2 * self.g_on_q[p] + self.gcg_on_q[p])
                })
                .collect(),
        };
        self.pattern.with_values(values)
    }
}

/// Precision of `model` at its stored hyperparameters.
pub fn precision(model: &SpdeModel) -> SparseSym {
    model.precision()
}

/// `G C⁻¹ G` for diagonal `C`, with the structural pattern of the product.
fn g_cinv_g(g: &SparseSym, c_diag: &[f64]) -> SparseSym {
    let n = g.dim();
    let mut full: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in g.triplets() {
        full[i].push((j, v));
        if i != j {
            full[j].push((i, v));
        }
    }
    for row in &mut full {
        row.sort_by_key(|e| e.0);
    }
    let mut acc = vec![0.0; n];
    let mut seen = vec![usize::MAX; n];
    let mut cols = Vec::new();
    let mut triplets = Vec::new();
    for i in 0..n {
        cols.clear();
        for &(k, gik) in &full[i] {
            let s = gik / c_diag[k];
            for &(j, gkj) in &full[k] {
                if j < i {
                    continue;
                }
                if seen[j] != i {
                    seen[j] = i;
                    acc[j] = 0.0;
                    cols.push(j);
                }
                acc[j] += s * gkj;
            }
        }
        cols.sort_unstable();
        triplets.extend(cols.iter().map(|&j| (i, j, acc[j])));
    }
    SparseSym::from_triplets(n, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right_triangle() -> TriMesh {
        TriMesh::planar(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn right_triangle_matrices() {
        let m = right_triangle();
        let c = assemble_mass_lumped(&m);
        for v in c {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let g = assemble_stiffness(&m).unwrap().to_dense();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lattice_stencil_matches_hand_assembly() {
        // 3x3 vertices, centre vertex 4, edge h
        let h = 0.5;
        let m = TriMesh::rectangle_grid(0.0, 0.0, 2.0 * h, 2.0 * h, 2, 2).unwrap();
        let k2: f64 = 3.0;
        let model = SpdeModel::new(&m, Alpha::One).unwrap();
        let q = model.precision_at(0.0, k2.ln());
        // right-triangle split along the (1,1) diagonal: the centre couples
        // to its four axis neighbours with -1 and to the diagonal ones with 0
        assert!((q.get(4, 4) - (k2 * h * h + 4.0)).abs() < 1e-12);
        for nb in [1, 3, 5, 7] {
            assert!((q.get(4, nb) + 1.0).abs() < 1e-12);
        }
        for nb in [0, 2, 6, 8] {
            assert!(q.get(4, nb).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = TriMesh::rectangle_grid(-1.0, -1.0, 1.0, 2.0, 7, 9).unwrap();
        let g = assemble_stiffness(&m).unwrap();
        for v in g.mul_vec(&vec![1.0; m.n_vertices()]) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_two_matches_dense_product() {
        let m = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 1, 1).unwrap();
        let model = SpdeModel::new(&m, Alpha::Two).unwrap();
        let q = model.precision_at(0.0, 0.0).to_dense();
        let c = model.c_diag();
        let g = model.stiffness().to_dense();
        let k = |i: usize, j: usize| g[i][j] + if i == j { c[i] } else { 0.0 };
        for i in 0..4 {
            for j in 0..4 {
                let e: f64 = (0..4).map(|l| k(i, l) * k(l, j) / c[l]).sum();
                assert!((q[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_one_times_ones_is_scaled_mass() {
        let m = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 4, 4).unwrap();
        let model = SpdeModel::new(&m, Alpha::One).unwrap();
        let k2: f64 = 2.5;
        let q = model.precision_at(0.0, k2.ln());
        let r = q.mul_vec(&vec![1.0; m.n_vertices()]);
        for (ri, ci) in r.iter().zip(model.c_diag()) {
            assert!((ri - k2 * ci).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_two_pattern_is_two_hop() {
        let m = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 5, 5).unwrap();
        let model = SpdeModel::new(&m, Alpha::Two).unwrap();
        let nb = m.vertex_neighbors();
        for i in 0..m.n_vertices() {
            let mut reach: Vec<usize> = nb[i]
                .iter()
                .flat_map(|&k| nb[k].iter().copied().chain([k]))
                .chain([i])
                .collect();
            reach.sort_unstable();
            reach.dedup();
            let (cols, _) = model.pattern().row(i);
            let upper: Vec<usize> = reach.into_iter().filter(|&j| j >= i).collect();
            assert_eq!(cols, &upper[..]);
        }
    }

    #[test]
    fn tau_scales_precision_quadratically() {
        let m = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 1.0, 3, 3).unwrap();
        let model = SpdeModel::new(&m, Alpha::Two).unwrap();
        let a = model.precision_at(0.0, 1.0);
        let b = model.precision_at(2f64.ln(), 1.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((4.0 * x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn bad_mass_is_rejected() {
        let g = SparseSym::from_triplets(2, [(0, 0, 1.0), (0, 1, -1.0), (1, 1, 1.0)]);
        assert!(matches!(
            SpdeModel::from_parts(vec![1.0, 0.0], g, Alpha::Two),
            Err(Error::AssemblyError(_))
        ));
    }
}
