use std::process::{Command, Output};

fn conelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conelab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_k_reports_equality() {
    let o = conelab(&["verify", "--cone", "quadrant", "--density", "monomial:0,1", "--region", "K"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let thm2 = s.lines().find(|l| l.starts_with("thm2 ")).expect("thm2 row");
    assert!(thm2.ends_with("equality"), "{s}");
    assert!(s.ends_with("result: pass\n"));
}

#[test]
fn verify_square_is_strict() {
    let o = conelab(&["verify", "--region", "cube", "--quad-res", "128"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.lines().find(|l| l.starts_with("thm2 ")).unwrap().ends_with("holds"), "{s}");
}

#[test]
fn nonconcave_density_gets_an_advisory() {
    let o = conelab(&["verify", "--density", "radial:2"]);
    assert!(stdout(&o).contains("advisory: hypothesis-violated probe"), "{}", stdout(&o));
}

#[test]
fn reflect_reports_split_and_ratio() {
    let o = conelab(&["reflect", "--n", "2", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("R = 1.259921"), "{s}");
    assert!(s.contains("ratio 1.259921"), "{s}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"seed\": 1,\n  \"colour\": 2\n}").unwrap();
    let o = conelab(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("colour"), "{err}");
    assert_eq!(conelab(&["verify", "--density", "monomial:0,1,2"]).status.code(), Some(2));
    assert_eq!(conelab(&["verify", "--density", "cubic"]).status.code(), Some(2));
    assert_eq!(conelab(&["verify", "--cone", "pyramid"]).status.code(), Some(2));
    assert_eq!(conelab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn csv_and_json_outputs_carry_hash() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("o.csv");
    let json = dir.path().join("o.json");
    assert_eq!(conelab(&["stability", "--format", "csv", "--out", csv.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(conelab(&["stability", "--out", json.to_str().unwrap()]).status.code(), Some(0));
    let c = std::fs::read_to_string(&csv).unwrap();
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let hash = j["config_hash"].as_str().unwrap();
    // Only the format differs, and it is part of the hashed config.
    assert!(c.starts_with("# tool: conelab "));
    assert!(c.contains("# config_hash: ") && !c.contains(hash));
    assert!(j["results"]["slope"].as_f64().unwrap() > 1.8);
}

#[test]
fn optimize_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let o = conelab(&["optimize", "--starts", "2", "--quad-res", "32", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("seed,iteration,perimeter\n"));
    assert!(t.lines().count() > 3);
}

#[test]
fn region_files_round_trip_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let cone = conelab::specs::parse_cone("quadrant", 2).unwrap();
    let quad = conelab_core::QuadratureSpec::with_resolution(32);
    let region = conelab::specs::parse_region("random:4", &cone, &quad).unwrap();
    conelab::specs::write_region(&region, &path).unwrap();
    let o = conelab(&["verify", "--quad-res", "32", "--region", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
