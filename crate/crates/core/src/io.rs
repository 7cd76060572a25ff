//! Text formats: mesh files, point and polygon CSVs, per-node value CSVs and
//! the posterior tables written by the command line tool.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical and repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{lonlat_to_xyz, xyz_to_lonlat, MeshMode, Point, Polygon, TriMesh};
use crate::inference::{FixedEffectSummary, HyperGrid, HyperMarginal};
use crate::simulate::PointPattern;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `mesh <planar|sphere R> <nv> <nt> <nb>`, then vertex, triangle and
/// boundary-edge lines.
pub fn format_mesh(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let header = match mesh.mode() {
        MeshMode::Planar => "planar".to_string(),
        MeshMode::Spherical { radius } => format!("sphere {radius:?}"),
    };
    let b = mesh.boundary_edges();
    writeln!(
        s,
        "mesh {header} {} {} {}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        b.len()
    )
    .unwrap();
    for v in mesh.vertices() {
        match mesh.mode() {
            MeshMode::Planar => writeln!(s, "{:?} {:?}", v[0], v[1]),
            MeshMode::Spherical { .. } => writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]),
        }
        .unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for e in b {
        writeln!(s, "{} {}", e[0], e[1]).unwrap();
    }
    s
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_text(path, &format_mesh(mesh))
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    parse_mesh(&read_text(path)?, path)
}

/// Parses the mesh format. The boundary-edge block is checked against the
/// edges derived from the triangles.
pub fn parse_mesh(text: &str, path: &Path) -> Result<TriMesh> {
    let bad = |line: usize, msg: &str| Error::parse(path, format!("line {}: {msg}", line + 1));
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty mesh file"))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.first() != Some(&"mesh") {
        return Err(bad(hl, "expected `mesh` header"));
    }
    let (mode, rest) = match tok.get(1) {
        Some(&"planar") => (MeshMode::Planar, &tok[2..]),
        Some(&"sphere") => {
            let r = tok
                .get(2)
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| bad(hl, "missing sphere radius"))?;
            (MeshMode::Spherical { radius: r }, &tok[3..])
        }
        _ => return Err(bad(hl, "mode must be `planar` or `sphere R`")),
    };
    let counts: Vec<usize> = rest
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(hl, "bad counts"))?;
    let [nv, nt, nb] = counts[..] else {
        return Err(bad(hl, "expected three counts"));
    };
    let dim = if mode == MeshMode::Planar { 2 } else { 3 };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (i, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, "truncated vertex block"))?;
        let v = parse_numbers::<f64>(l).ok_or_else(|| bad(i, "bad vertex"))?;
        if v.len() != dim && !(dim == 2 && v.len() == 3 && v[2] == 0.0) {
            return Err(bad(i, &format!("expected {dim} coordinates")));
        }
        vertices.push([v[0], v[1], if dim == 3 { v[2] } else { 0.0 }]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (i, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, "truncated triangle block"))?;
        match parse_numbers::<usize>(l).as_deref() {
            Some(&[a, b, c]) => triangles.push([a, b, c]),
            _ => return Err(bad(i, "expected three vertex indices")),
        }
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (i, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, "truncated boundary block"))?;
        match parse_numbers::<usize>(l).as_deref() {
            Some(&[a, b]) => boundary.push([a, b]),
            _ => return Err(bad(i, "expected two vertex indices")),
        }
    }
    if let Some((i, _)) = lines.next() {
        return Err(bad(i, "trailing content after boundary block"));
    }
    let mesh = TriMesh::new(vertices, triangles, mode)?;
    let key = |e: &[usize; 2]| [e[0].min(e[1]), e[0].max(e[1])];
    let mut derived: Vec<_> = mesh.boundary_edges().iter().map(key).collect();
    let mut given: Vec<_> = boundary.iter().map(key).collect();
    derived.sort_unstable();
    given.sort_unstable();
    if derived != given {
        return Err(Error::parse(
            path,
            "boundary edges do not match the triangulation",
        ));
    }
    Ok(mesh)
}

fn parse_numbers<T: std::str::FromStr>(line: &str) -> Option<Vec<T>> {
    line.split_whitespace().map(|t| t.parse().ok()).collect()
}

/// Reads a CSV with the given header columns (in any order, extra columns
/// are an error) and returns the rows as floats in header order.
fn read_columns(path: &Path, wanted: &[&[&str]]) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let (which, order) = wanted
        .iter()
        .enumerate()
        .find_map(|(w, cols)| {
            if cols.len() != header.len() {
                return None;
            }
            let order: Option<Vec<usize>> = cols
                .iter()
                .map(|c| header.iter().position(|h| h == c))
                .collect();
            order.map(|o| (w, o))
        })
        .ok_or_else(|| {
            let options: Vec<String> = wanted.iter().map(|c| c.join(",")).collect();
            Error::parse(
                path,
                format!(
                    "header `{}` is not one of: {}",
                    header.join(","),
                    options.join(" | ")
                ),
            )
        })?;
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = order
            .iter()
            .map(|&k| rec.get(k).and_then(|v| v.parse::<f64>().ok()))
            .collect::<Option<Vec<f64>>>()
            .filter(|v| v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::parse(path, format!("row {}: expected finite numbers", r + 2)))?;
        rows.push(row);
    }
    Ok((which, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

/// Points CSV: `x,y` for planar meshes, `lon,lat` (degrees) for spheres.
pub fn read_points(path: &Path, mode: MeshMode) -> Result<Vec<Point>> {
    match mode {
        MeshMode::Planar => {
            let (_, rows) = read_columns(path, &[&["x", "y"]])?;
            Ok(rows.into_iter().map(|r| [r[0], r[1], 0.0]).collect())
        }
        MeshMode::Spherical { radius } => {
            let (_, rows) = read_columns(path, &[&["lon", "lat"]])?;
            Ok(rows
                .into_iter()
                .map(|r| lonlat_to_xyz(r[0], r[1], radius))
                .collect())
        }
    }
}

pub fn format_points(pattern: &PointPattern) -> String {
    let mut s = String::new();
    match pattern.mode {
        MeshMode::Planar => {
            s.push_str("x,y\n");
            for p in &pattern.points {
                writeln!(s, "{:?},{:?}", p[0], p[1]).unwrap();
            }
        }
        MeshMode::Spherical { .. } => {
            s.push_str("lon,lat\n");
            for p in &pattern.points {
                let [lon, lat] = xyz_to_lonlat(*p);
                writeln!(s, "{lon:?},{lat:?}").unwrap();
            }
        }
    }
    s
}

pub fn write_points(path: &Path, pattern: &PointPattern) -> Result<()> {
    write_text(path, &format_points(pattern))
}

/// Polygon CSV: a single loop with header `x,y` (or `lon,lat`), or several
/// loops with a leading integer `loop` column. Rows of one loop must be
/// consecutive.
pub fn read_polygons(path: &Path) -> Result<Vec<Polygon>> {
    let (which, rows) = read_columns(
        path,
        &[
            &["x", "y"],
            &["lon", "lat"],
            &["loop", "x", "y"],
            &["loop", "lon", "lat"],
        ],
    )?;
    let mut loops: Vec<(Option<f64>, Vec<[f64; 2]>)> = Vec::new();
    for r in rows {
        let (id, p) = if which < 2 {
            (None, [r[0], r[1]])
        } else {
            (Some(r[0]), [r[1], r[2]])
        };
        match loops.last_mut() {
            Some((last, pts)) if *last == id => pts.push(p),
            _ => {
                if let Some(n) = id.filter(|_| loops.iter().any(|(l, _)| *l == id)) {
                    return Err(Error::parse(path, format!("loop {n} is not contiguous")));
                }
                loops.push((id, vec![p]));
            }
        }
    }
    if loops.is_empty() {
        return Err(Error::parse(path, "no polygon vertices"));
    }
    loops
        .into_iter()
        .map(|(_, pts)| Polygon::new(pts).map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

/// Reads `<index_name>,value` rows covering every index in `0..n` exactly
/// once.
pub fn read_indexed_values(path: &Path, index_name: &str, n: usize) -> Result<Vec<f64>> {
    let (_, rows) = read_columns(path, &[&[index_name, "value"]])?;
    let mut out = vec![None; n];
    for r in rows {
        let i = r[0];
        if i < 0.0 || i.fract() != 0.0 || i >= n as f64 {
            return Err(Error::parse(
                path,
                format!("{index_name} {i} outside 0..{n}"),
            ));
        }
        if out[i as usize].replace(r[1]).is_some() {
            return Err(Error::parse(path, format!("{index_name} {i} listed twice")));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::parse(path, format!("no value for {index_name} {i}"))))
        .collect()
}

/// `vertex,x,y[,z],<columns…>` with one row per mesh vertex.
pub fn format_vertex_table(mesh: &TriMesh, columns: &[(&str, &[f64])]) -> String {
    let spherical = mesh.is_spherical();
    let mut s = String::from(if spherical {
        "vertex,x,y,z"
    } else {
        "vertex,x,y"
    });
    for (name, values) in columns {
        assert_eq!(values.len(), mesh.n_vertices(), "column {name}");
        write!(s, ",{name}").unwrap();
    }
    s.push('\n');
    for (i, v) in mesh.vertices().iter().enumerate() {
        write!(s, "{i},{:?},{:?}", v[0], v[1]).unwrap();
        if spherical {
            write!(s, ",{:?}", v[2]).unwrap();
        }
        for (_, values) in columns {
            write!(s, ",{:?}", values[i]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Reads back the `mean` and `sd` columns of a vertex table.
pub fn read_vertex_mean_sd(path: &Path, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column `{name}`")))
    };
    let (cm, cs) = (col("mean")?, col("sd")?);
    let (mut mean, mut sd) = (Vec::new(), Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let get = |k: usize| {
            rec.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::parse(path, format!("row {}: bad number", r + 2)))
        };
        mean.push(get(cm)?);
        sd.push(get(cs)?);
    }
    if mean.len() != n {
        return Err(Error::parse(
            path,
            format!("{} rows for {n} vertices", mean.len()),
        ));
    }
    Ok((mean, sd))
}

/// `parameter,value,density` with `parameter` one of `log_tau`, `log_kappa2`.
pub fn format_hyper_marginals(marginals: &[HyperMarginal]) -> String {
    let mut s = String::from("parameter,value,density\n");
    for m in marginals {
        for (v, d) in m.density.values.iter().zip(&m.density.density) {
            writeln!(s, "{},{v:?},{d:?}", m.name).unwrap();
        }
    }
    s
}

pub fn format_fixed_effects(fixed: &[FixedEffectSummary]) -> String {
    let mut s = String::from("name,mean,sd");
    if let Some(f) = fixed.first() {
        for (level, _) in &f.quantiles {
            write!(s, ",q{level}").unwrap();
        }
    }
    s.push('\n');
    for f in fixed {
        write!(s, "{},{:?},{:?}", f.name, f.mean, f.sd).unwrap();
        for (_, q) in &f.quantiles {
            write!(s, ",{q:?}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn format_fixed_densities(fixed: &[FixedEffectSummary]) -> String {
    let mut s = String::from("name,value,density\n");
    for f in fixed {
        for (v, d) in f.density.values.iter().zip(&f.density.density) {
            writeln!(s, "{},{v:?},{d:?}", f.name).unwrap();
        }
    }
    s
}

/// `log_tau,log_kappa2,log_posterior,weight` for every explored point.
pub fn format_grid(grid: &HyperGrid) -> String {
    let mut s = String::from("log_tau,log_kappa2,log_posterior,weight\n");
    for p in &grid.points {
        writeln!(
            s,
            "{:?},{:?},{:?},{:?}",
            p.hyper.log_tau, p.hyper.log_kappa2, p.log_posterior, p.weight
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere_masked;

    fn tmp(name: &str, text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn planar_mesh_round_trip() {
        let mesh = TriMesh::rectangle_grid(0.0, 0.0, 1.0, 0.7, 4, 3).unwrap();
        let text = format_mesh(&mesh);
        assert!(text.starts_with(&format!(
            "mesh planar {} {} ",
            mesh.n_vertices(),
            mesh.n_triangles()
        )));
        let back = parse_mesh(&text, Path::new("m")).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(format_mesh(&back), text);
    }

    #[test]
    fn sphere_mesh_round_trip() {
        let mesh = build_icosphere_masked(2.0, 1, &[]).unwrap();
        let back = parse_mesh(&format_mesh(&mesh), Path::new("m")).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn mesh_errors_name_the_line() {
        let err = parse_mesh(
            "mesh planar 3 1 3\n0 0\n1 0\n0 1\n0 1\n0 1\n1 2\n2 0\n",
            Path::new("m.txt"),
        );
        assert!(err.unwrap_err().to_string().contains("line 5"));
        let err = parse_mesh(
            "mesh planar 3 1 2\n0 0\n1 0\n0 1\n0 1 2\n0 1\n1 2\n",
            Path::new("m.txt"),
        );
        assert!(err.unwrap_err().to_string().contains("boundary"));
    }

    #[test]
    fn points_and_polygons() {
        let (_d, p) = tmp("pts.csv", "x, y\n0.5,0.25\n-1,2e-3\n");
        let pts = read_points(&p, MeshMode::Planar).unwrap();
        assert_eq!(pts, vec![[0.5, 0.25, 0.0], [-1.0, 0.002, 0.0]]);
        assert!(read_points(&p, MeshMode::Spherical { radius: 1.0 }).is_err());

        let (_d, p) = tmp(
            "poly.csv",
            "loop,x,y\n0,0,0\n0,1,0\n0,1,1\n1,2,2\n1,3,2\n1,3,3\n",
        );
        let polys = read_polygons(&p).unwrap();
        assert_eq!(polys.len(), 2);
        assert!((polys[1].area() - 0.5).abs() < 1e-15);

        let (_d, p) = tmp("poly.csv", "loop,x,y\n0,0,0\n0,1,0\n1,2,2\n0,1,1\n");
        assert!(read_polygons(&p).is_err());
    }

    #[test]
    fn indexed_values_must_cover_every_index() {
        let (_d, p) = tmp("e.csv", "node_index,value\n1,0.5\n0,1\n");
        assert_eq!(
            read_indexed_values(&p, "node_index", 2).unwrap(),
            vec![1.0, 0.5]
        );
        assert!(read_indexed_values(&p, "node_index", 3).is_err());
        let (_d, p) = tmp("e.csv", "node_index,value\n1,0.5\n1,1\n");
        assert!(read_indexed_values(&p, "node_index", 2).is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_polygons(Path::new("/nonexistent/outer.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/outer.csv"));
    }
}
