use std::path::Path;
use std::process::Command;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn coxmesh(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_coxmesh"))
        .args(args)
        .current_dir(dir)
        .env_remove("COXMESH_THREADS")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in {line:?}"))
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SQUARE: &str = "x,y\n0,0\n1,0\n1,1\n0,1\n";
const CORNER: &str = "x,y\n0,0\n0.5,0\n0.5,0.5\n0,0.5\n";

fn square_config(dir: &Path, extra: &str) {
    write(dir, "square.csv", SQUARE);
    write(dir, "corner.csv", CORNER);
    write(
        dir,
        "run.json",
        &format!(
            r#"{{"mesh": "mesh/mesh.txt", "points": "sim/points.csv",
                "domain": {{"kind": "planar", "outer": "square.csv", "max_edge": 0.1}}{extra}}}"#
        ),
    );
}

#[test]
fn mesh_reports_domain_area() {
    let dir = tempfile::tempdir().unwrap();
    square_config(dir.path(), "");
    let r = coxmesh(
        dir.path(),
        &["mesh", "--config", "run.json", "--out", "mesh"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let area: f64 = field(&r.stdout, "area").parse().unwrap();
    assert!((area - 1.0).abs() < 1e-10);
    assert!(dir.path().join("mesh/mesh.txt").exists());
}

#[test]
fn missing_polygon_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "run.json",
        r#"{"domain": {"kind": "planar", "outer": "nowhere.csv", "max_edge": 0.1}}"#,
    );
    let r = coxmesh(dir.path(), &["mesh", "--config", "run.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("nowhere.csv"), "{}", r.stderr);
}

#[test]
fn coarse_region_reduces_vertex_count() {
    let dir = tempfile::tempdir().unwrap();
    square_config(dir.path(), "");
    let uniform = coxmesh(dir.path(), &["mesh", "--config", "run.json", "--out", "u"]);
    write(
        dir.path(),
        "coarse.json",
        r#"{"domain": {"kind": "planar", "outer": "square.csv", "max_edge": 0.1,
                       "regions": [{"polygon": "corner.csv", "max_edge": 0.3}]}}"#,
    );
    let coarse = coxmesh(
        dir.path(),
        &["mesh", "--config", "coarse.json", "--out", "c"],
    );
    assert_eq!(uniform.code, 0);
    assert_eq!(coarse.code, 0, "{}", coarse.stderr);
    let nu: usize = field(&uniform.stdout, "vertices").parse().unwrap();
    let nc: usize = field(&coarse.stdout, "vertices").parse().unwrap();
    assert!(nc < nu, "{nc} vs {nu}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.json", r#"{"sede": 1}"#);
    let r = coxmesh(dir.path(), &["mesh", "--config", "run.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("sede"), "{}", r.stderr);
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    square_config(
        dir.path(),
        r#", "simulate": {"hyper": {"range": 0.5, "sigma2": 1}, "intercept": 4}"#,
    );
    assert_eq!(
        coxmesh(
            dir.path(),
            &["mesh", "--config", "run.json", "--out", "mesh"]
        )
        .code,
        0
    );
    let r = coxmesh(
        dir.path(),
        &["simulate", "--config", "run.json", "--out", "sim"],
    );
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("seed"), "{}", r.stderr);
}

#[test]
fn excessive_intensity_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    square_config(
        dir.path(),
        r#", "simulate": {"hyper": {"range": 0.5, "sigma2": 1}, "intercept": 40}"#,
    );
    assert_eq!(
        coxmesh(
            dir.path(),
            &["mesh", "--config", "run.json", "--out", "mesh"]
        )
        .code,
        0
    );
    let r = coxmesh(
        dir.path(),
        &[
            "simulate", "--config", "run.json", "--seed", "1", "--out", "sim",
        ],
    );
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn censored_region_stays_empty_and_fit_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    square_config(
        dir.path(),
        r#", "simulate": {"hyper": {"range": 0.5, "sigma2": 0.5}, "intercept": 6,
                          "censor": {"indicator": {"zero_regions": ["corner.csv"]}}},
            "fit": {"effort": {"indicator": {"zero_regions": ["corner.csv"]}}},
            "riskmap": {"fit_dir": "fit"}"#,
    );
    let d = dir.path();
    assert_eq!(
        coxmesh(d, &["mesh", "--config", "run.json", "--out", "mesh"]).code,
        0
    );
    let sim = coxmesh(
        d,
        &[
            "simulate", "--config", "run.json", "--seed", "5", "--out", "sim",
        ],
    );
    assert_eq!(sim.code, 0, "{}", sim.stderr);
    let kept: usize = field(&sim.stdout, "points").parse().unwrap();
    let simulated: usize = field(&sim.stdout, "simulated").parse().unwrap();
    assert!(kept > 0 && kept < simulated);

    let mut rdr = csv::Reader::from_path(d.join("sim/points.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (x, y): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        assert!(
            !(x < 0.5 && y < 0.5),
            "point ({x}, {y}) inside the censored corner"
        );
        rows += 1;
    }
    assert_eq!(rows, kept);

    let fit = coxmesh(d, &["fit", "--config", "run.json", "--out", "fit"]);
    assert_eq!(fit.code, 0, "{}", fit.stderr);
    for name in [
        "field.csv",
        "predictor.csv",
        "hyper_marginals.csv",
        "fixed_effects.csv",
        "grid.csv",
        "report.json",
        "timing.json",
    ] {
        assert!(d.join("fit").join(name).exists(), "{name}");
    }

    let risk = coxmesh(
        d,
        &[
            "riskmap",
            "--config",
            "run.json",
            "--threshold",
            "-1e9",
            "--out",
            "risk",
        ],
    );
    assert_eq!(risk.code, 0, "{}", risk.stderr);
    let mut rdr = csv::Reader::from_path(d.join("risk/riskmap.csv")).unwrap();
    let col = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "exceed_p")
        .unwrap();
    for rec in rdr.records() {
        let p: f64 = rec.unwrap()[col].parse().unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{p}");
    }
}

#[test]
fn zero_effort_everywhere_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    square_config(
        dir.path(),
        r#", "simulate": {"hyper": {"range": 0.5, "sigma2": 0.5}, "intercept": 5},
            "fit": {"effort": {"constant": 0}}"#,
    );
    let d = dir.path();
    assert_eq!(
        coxmesh(d, &["mesh", "--config", "run.json", "--out", "mesh"]).code,
        0
    );
    assert_eq!(
        coxmesh(
            d,
            &["simulate", "--config", "run.json", "--seed", "3", "--out", "sim"]
        )
        .code,
        0
    );
    let r = coxmesh(d, &["fit", "--config", "run.json", "--out", "fit"]);
    assert_eq!(r.code, 4, "{}", r.stderr);
}

#[test]
fn riskmap_without_fit_outputs_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    square_config(
        dir.path(),
        r#", "riskmap": {"fit_dir": "nofit", "threshold": 1}"#,
    );
    assert_eq!(
        coxmesh(
            dir.path(),
            &["mesh", "--config", "run.json", "--out", "mesh"]
        )
        .code,
        0
    );
    let r = coxmesh(dir.path(), &["riskmap", "--config", "run.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("nofit"), "{}", r.stderr);
}

#[test]
fn sphere_simulation_writes_lon_lat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "land.csv", "lon,lat\n-30,-20\n30,-20\n30,20\n-30,20\n");
    write(
        d,
        "run.json",
        r#"{"mesh": "mesh/mesh.txt",
            "domain": {"kind": "sphere", "radius": 1, "subdivisions": 3, "land": ["land.csv"]},
            "simulate": {"hyper": {"range": 0.6, "sigma2": 0.5}, "intercept": 4}}"#,
    );
    let m = coxmesh(d, &["mesh", "--config", "run.json", "--out", "mesh"]);
    assert_eq!(m.code, 0, "{}", m.stderr);
    let area: f64 = field(&m.stdout, "area").parse().unwrap();
    assert!(area > 0.0 && area < 4.0 * std::f64::consts::PI);
    let s = coxmesh(
        d,
        &[
            "simulate", "--config", "run.json", "--seed", "8", "--out", "sim",
        ],
    );
    assert_eq!(s.code, 0, "{}", s.stderr);
    let mut rdr = csv::Reader::from_path(d.join("sim/points.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["lon", "lat"]);
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (lon, lat): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        assert!((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat));
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn fit_runs_without_a_fit_section() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    square_config(
        d,
        r#", "simulate": {"hyper": {"range": 0.5, "sigma2": 0.5}, "intercept": 5}"#,
    );
    assert_eq!(coxmesh(d, &["mesh", "--config", "run.json", "--out", "mesh"]).code, 0);
    assert_eq!(coxmesh(d, &["simulate", "--config", "run.json", "--seed", "1", "--out", "sim"]).code, 0);
    let r = coxmesh(d, &["fit", "--config", "run.json", "--out", "fit", "--threads", "2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("fit/timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 2);
}
