use std::sync::Arc;

use proptest::prelude::*;

use coxmesh::fem::{Alpha, SpdeModel};
use coxmesh::geometry::{build_planar_mesh, locate_points, DomainSpec, Polygon, TriMesh};
use coxmesh::inference::{exceedance_from_components, Hyper, MixtureComponent};
use coxmesh::likelihood::{build_pseudo, grad_hess, loglik, LinearPredictorMap};
use coxmesh::quadrature::{apply_effort, midpoint_scheme, triangle_gauss_scheme, EffortField};
use coxmesh::sparse::{SparseSym, SymbolicCholesky};

fn small_mesh() -> TriMesh {
    build_planar_mesh(
        &DomainSpec::new(Polygon::rectangle(0.0, 0.0, 1.0, 0.8), 0.2)
            .with_hole(Polygon::rectangle(0.4, 0.3, 0.6, 0.5)),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn precision_is_spd_over_hyper_box(log_tau in -10.0..10.0f64, log_kappa2 in -10.0..10.0f64, two in any::<bool>()) {
        let mesh = small_mesh();
        let alpha = if two { Alpha::Two } else { Alpha::One };
        let q = SpdeModel::new(&mesh, alpha).unwrap().precision_at(log_tau, log_kappa2);
        let factor = Arc::new(SymbolicCholesky::analyze(&q, 0)).factor(&q);
        prop_assert!(factor.is_ok());
        prop_assert!(factor.unwrap().log_det().is_finite());
    }

    #[test]
    fn effort_scales_exposure_linearly(c in 0.0..5.0f64, v in 0.0..3.0f64) {
        let mesh = small_mesh();
        let scheme = triangle_gauss_scheme(&mesh, 2).unwrap();
        let zero = vec![Polygon::rectangle(0.0, 0.0, 0.3, 0.3)];
        let base = apply_effort(&scheme, &EffortField::Indicator { zero_regions: zero.clone(), value: v }).unwrap();
        let scaled = apply_effort(&scheme, &EffortField::Indicator { zero_regions: zero, value: c * v }).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let per_node: Vec<f64> = (0..scheme.len()).map(|i| (i % 7) as f64 * 0.1).collect();
        let e1 = apply_effort(&scheme, &EffortField::PerNode(per_node.clone())).unwrap();
        let e2 = apply_effort(&scheme, &EffortField::PerNode(per_node.iter().map(|s| c * s).collect())).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn exceedance_is_a_monotone_probability(
        comps in proptest::collection::vec((0.01..1.0f64, -3.0..3.0f64, 0.0..2.0f64), 1..6),
        t1 in -5.0..5.0f64,
        dt in 0.0..3.0f64,
    ) {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        let components: Vec<MixtureComponent> = comps
            .iter()
            .map(|&(w, m, s)| MixtureComponent {
                weight: w / total,
                hyper: Hyper::new(0.0, 0.0),
                predictor_mode: vec![m, -m, 0.5 * m],
                predictor_sd: vec![s, 0.5 * s, s + 0.1],
            })
            .collect();
        let p1 = exceedance_from_components(&components, t1);
        let p2 = exceedance_from_components(&components, t1 + dt);
        for (a, b) in p1.iter().zip(&p2) {
            prop_assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn planar_meshes_cover_the_rectangle(
        w in 0.5..3.0f64,
        h in 0.5..3.0f64,
        frac in 0.08..0.3f64,
    ) {
        let max_edge = frac * w.min(h);
        let mesh = build_planar_mesh(&DomainSpec::new(Polygon::rectangle(0.0, 0.0, w, h), max_edge)).unwrap();
        prop_assert!((mesh.area() - w * h).abs() <= 1e-10 * w * h);
        prop_assert!(mesh.max_edge_length() <= max_edge * (1.0 + 1e-9));
        prop_assert!(mesh.triangle_areas().iter().all(|&a| a > 0.0));
        let on_side = |p: [f64; 3]| {
            let tol = 1e-12 * (w + h);
            p[0].abs() < tol || (p[0] - w).abs() < tol || p[1].abs() < tol || (p[1] - h).abs() < tol
        };
        for e in mesh.boundary_edges() {
            prop_assert!(on_side(mesh.vertices()[e[0]]) && on_side(mesh.vertices()[e[1]]));
        }
        let perimeter: f64 = mesh.boundary_edges().iter().map(|e| mesh.edge_length(e[0], e[1])).sum();
        prop_assert!((perimeter - 2.0 * (w + h)).abs() <= 1e-9 * (w + h));
    }

    #[test]
    fn basis_reproduces_linear_functions(pts in proptest::collection::vec((0.0..1.0f64, 0.0..0.8f64), 1..30), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let mesh = small_mesh();
        let pts: Vec<[f64; 3]> = pts
            .into_iter()
            .filter(|&(x, y)| !(x > 0.4 && x < 0.6 && y > 0.3 && y < 0.5))
            .map(|(x, y)| [x, y, 0.0])
            .collect();
        let basis = locate_points(&mesh, &pts).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|v| 1.0 + a * v[0] + b * v[1]).collect();
        for (p, v) in pts.iter().zip(basis.interpolate(&f)) {
            prop_assert!((v - (1.0 + a * p[0] + b * p[1])).abs() < 1e-12);
        }
        for i in 0..basis.n_rows() {
            let (_, w) = basis.row(i);
            prop_assert!(w.iter().all(|&x| x >= -1e-12));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_match_dense(n in 2usize..25, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        let mut diag = vec![1.0; n];
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < 0.3 {
                    let v = rng.random_range(-1.0..1.0);
                    trip.push((i, j, v));
                    diag[i] += f64::abs(v);
                    diag[j] += f64::abs(v);
                }
            }
        }
        trip.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        let a = SparseSym::from_triplets(n, trip);
        let tail = n.min(2);
        let f = Arc::new(SymbolicCholesky::analyze(&a, tail)).factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = f.solve(&b);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-10);
        }
        let d = a.to_dense();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let inv = m.clone().cholesky().unwrap().inverse();
        prop_assert!((f.log_det() - m.determinant().ln()).abs() < 1e-9 * (1.0 + f.log_det().abs()));
        let si = f.selected_inverse();
        for i in 0..n {
            prop_assert!((si.get(i, i).unwrap() - inv[(i, i)]).abs() < 1e-10);
        }
    }

    #[test]
    fn loglik_is_concave_along_lines(seed in any::<u64>(), t in -1.0..1.0f64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mesh = small_mesh();
        let scheme = midpoint_scheme(&mesh);
        let pts: Vec<[f64; 3]> = (0..10).map(|_| [rng.random_range(0.0..0.35), rng.random::<f64>() * 0.8, 0.0]).collect();
        let basis = locate_points(&mesh, &pts).unwrap();
        let pred = LinearPredictorMap::intercept_only(mesh.n_vertices(), scheme.len(), pts.len());
        let pp = build_pseudo(&scheme, &EffortField::Constant(1.0), &basis, &pred).unwrap();
        let n = pp.n_latent();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = |s: f64| loglik(&pp, &x.iter().zip(&d).map(|(a, b)| a + s * b).collect::<Vec<_>>()).unwrap();
        let (f0, fp, fm) = (at(t), at(t + 0.1), at(t - 0.1));
        prop_assert!(fp + fm - 2.0 * f0 <= 1e-9 * (1.0 + f0.abs()));
        let (_, w) = grad_hess(&pp, &x).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
    }
}
