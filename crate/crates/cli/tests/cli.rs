use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floquet-ep"));
    c.env_remove("FLOQUET_EP_THREADS").env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn config(
    preset: &str,
    beta: u32,
    family: &str,
    engine: &str,
    gamma: (f64, f64, usize),
    omega: (f64, f64, usize),
) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "model": {{ "preset": "{preset}", "beta": {beta}, "family": "{family}" }},
  "engine": "{engine}",
  "grid": {{ "gamma_min": {}, "gamma_max": {}, "gamma_count": {}, "omega_min": {}, "omega_max": {}, "omega_count": {} }},
  "berry": {{ "steps": 512 }}
}}"#,
        gamma.0, gamma.1, gamma.2, omega.0, omega.1, omega.2
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr:\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn svg(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{} is not XML: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    text
}

fn square_pt(gamma: (f64, f64, usize), omega: (f64, f64, usize)) -> String {
    config("pt-cosy-cosz", 3, "square", "monodromy-piecewise", gamma, omega)
}

#[test]
fn config_round_trips_through_output() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 1.0, 4), (0.5, 1.5, 4)));
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "a"]));
    let first = fs::read_to_string(dir.path().join("a/run_config.json")).unwrap();
    ok(&run(dir.path(), &["phase-diagram", "--config", "a/run_config.json", "--out", "a"]));
    let second = fs::read_to_string(dir.path().join("a/run_config.json")).unwrap();
    assert_eq!(first, second);
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["berry"]["steps"], 512);
    assert_eq!(v["cutoff"], 20);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 2.0, 30), (0.2, 3.0, 40)));
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "a"]));
    let out = bin()
        .current_dir(dir.path())
        .env("FLOQUET_EP_THREADS", "3")
        .args(["phase-diagram", "--config", "c.json", "--out", "b"])
        .output()
        .unwrap();
    ok(&out);
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "c", "--threads", "1"]));
    for name in ["phase_diagram.csv", "phase_diagram.svg"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
        assert_eq!(a, fs::read(dir.path().join("c").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_gamma_heatmap_is_uniformly_dark() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 0.0, 3), (0.2, 3.0, 25)));
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "o"]));
    let text = svg(&dir.path().join("o/phase_diagram.svg"));
    let doc = roxmltree::Document::parse(&text).unwrap();
    let fills: BTreeSet<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("width") != Some("100%"))
        .filter_map(|n| n.attribute("fill"))
        .filter(|f| *f != "none")
        .collect();
    assert_eq!(fills.into_iter().collect::<Vec<_>>(), ["#0c0726"]);
    let csv = fs::read_to_string(dir.path().join("o/phase_diagram.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0.000000000000e+00")));
}

#[test]
fn heatmap_shows_the_two_thirds_tongue() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 0.3, 4), (0.2, 3.0, 141)));
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "o"]));
    let csv = fs::read_to_string(dir.path().join("o/phase_diagram.csv")).unwrap();
    let unstable: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .filter(|r| r[1] == 0.3 && r[2] > 1e-8)
        .map(|r| r[0])
        .collect();
    assert!(unstable.iter().any(|w| (w - 2.0 / 3.0).abs() < 0.03), "{unstable:?}");
    svg(&dir.path().join("o/phase_diagram.svg"));
}

#[test]
fn large_grid_embeds_a_raster() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 1.0, 3), (0.2, 3.0, 201)));
    ok(&run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "o"]));
    let text = svg(&dir.path().join("o/phase_diagram.svg"));
    let prefix = "data:image/x-portable-pixmap;base64,";
    let start = text.find(prefix).expect("embedded raster") + prefix.len();
    let end = start + text[start..].find('"').unwrap();
    let ppm = STANDARD.decode(&text[start..end]).unwrap();
    let header = b"P6\n201 3\n255\n";
    assert!(ppm.starts_with(header));
    assert_eq!(ppm.len(), header.len() + 201 * 3 * 3);
}

#[test]
fn contour_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 2.0, 41), (0.2, 3.0, 30)));
    ok(&run(dir.path(), &["ep-contours", "--config", "c.json", "--out", "o"]));
    let csv = fs::read_to_string(dir.path().join("o/ep_contours.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("contour_id,omega,gamma,kind"));
    let kinds: BTreeSet<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert!(kinds.contains("EP"));
    assert!(kinds.iter().all(|k| *k == "EP" || *k == "Diabolic"), "{kinds:?}");
    svg(&dir.path().join("o/ep_contours.svg"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/ep_contours.json")).unwrap()).unwrap();
    assert_eq!(meta["format_version"], 1);
}

#[test]
fn tiny_gamma_has_empty_contour_file() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", &square_pt((0.0, 0.01, 5), (1.2, 1.5, 7)));
    ok(&run(dir.path(), &["ep-contours", "--config", "c.json", "--out", "o"]));
    assert_eq!(fs::read_to_string(dir.path().join("o/ep_contours.csv")).unwrap(), "contour_id,omega,gamma,kind\n");
    svg(&dir.path().join("o/ep_contours.svg"));
}

fn berry_rows(path: &Path) -> Vec<(f64, usize, f64, f64, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
                f[4].to_string(),
            )
        })
        .collect()
}

#[test]
fn berry_phase_saturates_beyond_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("apt-cosx-siny", 1, "smooth", "floquet", (0.0, 1.5, 7), (1.0, 2.0, 2));
    write_config(dir.path(), "c.json", &c);
    ok(&run(dir.path(), &["berry", "--config", "c.json", "--out", "o"]));
    let rows = berry_rows(&dir.path().join("o/berry.csv"));
    assert_eq!(rows.len(), 14);
    for (g, band, re, _, _) in &rows {
        if *g > 1.0 {
            let expected = if *band == 0 { -std::f64::consts::PI } else { std::f64::consts::PI };
            assert!((re - expected).abs() < 1e-9, "γ={g} band {band}: {re}");
        }
    }
    svg(&dir.path().join("o/berry.svg"));
}

#[test]
fn hermitian_loop_has_flat_imaginary_part() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("hermitian-cone", 1, "smooth", "floquet", (0.2, 3.0, 8), (1.0, 2.0, 2));
    write_config(dir.path(), "c.json", &c);
    ok(&run(dir.path(), &["berry", "--config", "c.json", "--out", "o", "--steps", "1024"]));
    let rows = berry_rows(&dir.path().join("o/berry.csv"));
    assert!(rows.iter().all(|r| r.3.abs() < 1e-9 && r.4.is_empty()));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/berry.json")).unwrap()).unwrap();
    assert_eq!(meta["options"]["steps"], 1024);
    assert!(meta["points"].as_array().unwrap().iter().all(|p| p["certified"] == true));
}

#[test]
fn spectrum_scan_finds_unit_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("pt-cosy-sinz", 1, "smooth", "floquet", (0.5, 1.5, 11), (1.0, 2.0, 2));
    write_config(dir.path(), "c.json", &c);
    ok(&run(dir.path(), &["spectrum-scan", "--config", "c.json", "--out", "o"]));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/spectrum_scan.json")).unwrap()).unwrap();
    let t = meta["thresholds"].as_array().unwrap();
    assert!(t.iter().any(|x| (x.as_f64().unwrap() - 1.0).abs() < 1e-6), "{t:?}");
    let csv = fs::read_to_string(dir.path().join("o/spectrum_scan.csv")).unwrap();
    assert!(csv.starts_with("gamma,class\n5.000000000000e-01,AllReal\n"));
}

#[test]
fn bad_configs_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let good = square_pt((0.0, 1.0, 3), (0.5, 1.0, 3));
    let cases = [
        "not json".to_string(),
        good.replace("pt-cosy-cosz", "no-such-model"),
        good.replace("\"beta\": 3", "\"beta\": 0"),
        good.replace("\"gamma_count\": 3", "\"gamma_count\": 1"),
        good.replace("monodromy-piecewise", "floquet"),
    ];
    for (k, text) in cases.iter().enumerate() {
        write_config(dir.path(), "bad.json", text);
        let out = run(dir.path(), &["phase-diagram", "--config", "bad.json", "--out", "o"]);
        assert_eq!(out.status.code(), Some(1), "case {k}");
        assert!(out.stdout.is_empty());
    }
    assert_eq!(run(dir.path(), &["phase-diagram", "--config", "missing.json"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["phase-diagram"]).status.code(), Some(1));
    write_config(dir.path(), "c.json", &good);
    assert_eq!(run(dir.path(), &["phase-diagram", "--config", "c.json", "--cutoff", "0"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("apt-cosx-cosy", 1, "smooth", "monodromy-integrate", (400.0, 500.0, 2), (0.01, 0.02, 2));
    write_config(dir.path(), "c.json", &c);
    let out = run(dir.path(), &["phase-diagram", "--config", "c.json", "--out", "o", "--steps", "1000"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_fast_passes() {
    let out = bin().args(["verify", "--level", "fast"]).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains("[PASS]")).count(), 5, "{stdout}");
}

#[test]
fn verify_detects_sign_mutation() {
    let out = bin().args(["verify", "--level", "fast", "--mutate-z-sign"]).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(3), "{stdout}");
    let line = stdout.lines().find(|l| l.starts_with("criterion  7")).expect("engine cross-check line");
    assert!(line.contains("[FAIL]"), "{line}");
}
