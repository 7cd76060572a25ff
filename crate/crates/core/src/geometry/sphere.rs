use std::collections::HashMap;

use super::{add, cross, dot, norm, scale, sub, MeshMode, Point, Polygon, TriMesh};
use crate::error::{Error, Result};

/// Unit-sphere embedding of (longitude, latitude) in degrees, scaled by `radius`.
pub fn lonlat_to_xyz(lon_deg: f64, lat_deg: f64, radius: f64) -> Point {
    let (lon, lat) = (lon_deg.to_radians(), lat_deg.to_radians());
    [
        radius * lat.cos() * lon.cos(),
        radius * lat.cos() * lon.sin(),
        radius * lat.sin(),
    ]
}

/// Longitude in (-180, 180] and latitude in [-90, 90], degrees.
pub fn xyz_to_lonlat(p: Point) -> [f64; 2] {
    let r = norm(p);
    let lat = (p[2] / r).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = p[1].atan2(p[0]).to_degrees();
    [lon, lat]
}

fn icosahedron() -> (Vec<Point>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|&v| scale(v, 1.0 / norm(v))).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn subdivide(vertices: &mut Vec<Point>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |vertices: &mut Vec<Point>, a: usize, b: usize| -> usize {
        *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let m = add(vertices[a], vertices[b]);
            vertices.push(scale(m, 1.0 / norm(m)));
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = midpoint(vertices, a, b);
        let bc = midpoint(vertices, b, c);
        let ca = midpoint(vertices, c, a);
        out.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    out
}

/// Icosphere of the given radius with every triangle whose centroid falls in
/// one of the land polygons (longitude/latitude loops, degrees) removed.
pub fn build_icosphere_masked(
    radius: f64,
    subdivisions: usize,
    land_polygons: &[Polygon],
) -> Result<TriMesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidDomain(format!(
            "sphere radius {radius} must be positive"
        )));
    }
    if subdivisions > 9 {
        return Err(Error::InvalidDomain("too many subdivisions".into()));
    }
    let (mut unit, mut faces) = icosahedron();
    for f in &mut faces {
        let [a, b, c] = *f;
        let n = cross(sub(unit[b], unit[a]), sub(unit[c], unit[a]));
        if dot(n, unit[a]) < 0.0 {
            f.swap(1, 2);
        }
    }
    for _ in 0..subdivisions {
        faces = subdivide(&mut unit, &faces);
    }

    let kept: Vec<[usize; 3]> = faces
        .into_iter()
        .filter(|&[a, b, c]| {
            let centroid = add(add(unit[a], unit[b]), unit[c]);
            let ll = xyz_to_lonlat(centroid);
            !land_polygons.iter().any(|p| p.contains(ll))
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidDomain(
            "land mask removes every triangle".into(),
        ));
    }

    let mut remap = vec![usize::MAX; unit.len()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(kept.len());
    for tri in kept {
        triangles.push(tri.map(|v| {
            if remap[v] == usize::MAX {
                remap[v] = vertices.len();
                vertices.push(scale(unit[v], radius));
            }
            remap[v]
        }));
    }
    TriMesh::new(vertices, triangles, MeshMode::Spherical { radius })
}
