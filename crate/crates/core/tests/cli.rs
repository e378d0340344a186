mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use freeconvex::linalg::{c, max_abs};
use freeconvex::pencil::LinearPencil;
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_freeconvex"));
    cmd.env_remove("FREECONVEX_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn validate(name: &str, v: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(v).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:?}");
}

fn pencil_json(l: &LinearPencil) -> String {
    serde_json::to_string(l).unwrap()
}

fn pencil_of(v: &Value) -> LinearPencil {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn analyze_degree_four_example() {
    let o = run(&["analyze", F1_DEG4]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("convexity_report", &v);
    assert_eq!(v["verdict"], "convex");
    let m = pencil_of(&v["minimal_pencil"]);
    assert_eq!(m.size(), 3);
    assert!(m.is_hermitian_monic());
    assert!(v["det_check"]["rel_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn analyze_constant_gives_empty_pencil() {
    let o = run(&["analyze", "1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("convexity_report", &v);
    assert_eq!(v["minimal_pencil"]["rows"], 0);
}

#[test]
fn analyze_nonconvex_exits_three_with_witness() {
    let o = run(&["analyze", NONCONVEX]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    validate("convexity_report", &v);
    assert_eq!(v["verdict"], "not_convex");
    assert!(v["minimal_pencil"].is_null());
    assert!(!v["rank_trace"].as_array().unwrap().is_empty());
}

#[test]
fn analyze_reads_expression_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.txt");
    std::fs::write(&p, "1 - x1*x1'\n").unwrap();
    let o = run(&["analyze", p.to_str().unwrap(), "--text"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("verdict: convex"), "{text}");
    assert!(text.contains("minimal pencil size: 2"), "{text}");
}

#[test]
fn lmi_matrix_example_is_the_ball() {
    let o = run(&["lmi", F_MATRIX]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("pencil", &v);
    let l = pencil_of(&v);
    assert_eq!(l.size(), 2);
    assert!(l.is_hermitian_monic());
    // the ball pencil has a rank-one nilpotent coefficient of unit norm
    let a = l.a(0);
    assert!(max_abs(&(&a * &a)) < 1e-8);
    assert!((a.norm() - 1.0).abs() < 1e-8);
}

#[test]
fn lmi_high_degree_example_has_size_six() {
    let o = run(&["lmi", F_HIGH]);
    assert_eq!(code(&o), 0);
    let l = pencil_of(&json(&o));
    assert_eq!(l.size(), 6);
    assert!(l.is_hermitian_monic());
}

#[test]
fn lmi_prunes_duplicated_blocks() {
    let b = ball();
    let doubled = b.direct_sum(&b).unwrap();
    let o = run(&["lmi", "--format", "pencil", &pencil_json(&doubled)]);
    assert_eq!(code(&o), 0);
    let l = pencil_of(&json(&o));
    assert_eq!(l.size(), 2);
}

#[test]
fn lmi_of_nonconvex_exits_three() {
    let o = run(&["lmi", NONCONVEX]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not convex"));
}

#[test]
fn rankcheck_outcomes() {
    let l = pencil_json(&ball());
    let same = run(&["rankcheck", "--pencil", &l, "--domain", &l]);
    assert_eq!(code(&same), 0);
    let v = json(&same);
    validate("rank_check_outcome", &v);
    assert_eq!(v["result"], "full_rank");

    let singular = pencil_json(&scalar_pencil(1.0, -2.0, -2.0));
    let o = run(&["rankcheck", "--pencil", &singular, "--domain", &l]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    validate("rank_check_outcome", &v);
    assert_eq!(v["result"], "rank_deficient");
    assert!(v["witness"]["sigma_min"].as_f64().unwrap() < 1e-3);
    assert!(v["witness"]["domain_min_eig"].as_f64().unwrap() > 0.0);

    // 1 + x - x* is identity plus a skew-hermitian matrix
    let skew = pencil_json(&scalar_pencil(1.0, 1.0, -1.0));
    let o = run(&["rankcheck", "--pencil", &skew, "--domain", &l]);
    assert_eq!(code(&o), 0);
}

#[test]
fn rankcheck_rejects_malformed_pencils() {
    let l = pencil_json(&ball());
    let o = run(&["rankcheck", "--pencil", r#"{"rows": 1}"#, "--domain", &l]);
    assert_eq!(code(&o), 1);
    let nonherm = pencil_json(&scalar_pencil(1.0, -1.0, 0.0));
    let o = run(&["rankcheck", "--pencil", &l, "--domain", &nonherm]);
    assert_eq!(code(&o), 1);
}

#[test]
fn realize_inverse_of_product() {
    let o = run(&["realize", "inv(1 - x1*x2)"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("realization", &v);
    assert_eq!(v["d"], 2);
    assert_eq!(v["g"], 2);
}

#[test]
fn genflip_real_data_is_hermitian() {
    let o = run(&["genflip", "--u", "[1, 2, 0.5]", "--v", "[[1, -1, 3], [0.5, 2, 1]]"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("pencil", &v);
    let l = pencil_of(&v);
    assert!(l.is_hermitian_monic());
    for j in 0..2 {
        let a = l.a(j);
        assert!(max_abs(&(&a - a.adjoint())) < 1e-12);
    }
}

#[test]
fn genflip_missing_override_is_a_usage_error() {
    let o = run(&["genflip", "--u", "[1, 0]", "--v", "[[1, 1]]"]);
    assert_eq!(code(&o), 1);
    let o = run(&["genflip", "--u", "[1, 0]", "--v", "[[1, 1]]", "--vtilde", "[[null, [0, 2]]]"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn eval_at_zero_and_at_a_point() {
    let zero = r#"{"n": 2, "X": [[[[0,0],[0,0]],[[0,0],[0,0]]]]}"#;
    let o = run(&["eval", F1_DEG4, "--point", zero]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("matrix_value", &v);
    assert_eq!(v["rows"], 2);
    assert_eq!(v["value"][0][0][0].as_f64().unwrap(), 1.0);
    assert_eq!(v["value"][0][1][0].as_f64().unwrap(), 0.0);

    let pt = r#"{"n": 1, "X": [[[[0.5, 0.25]]]]}"#;
    let o = run(&["eval", "inv(1 - x1)", "--point", pt]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let z = c(v["value"][0][0][0].as_f64().unwrap(), v["value"][0][0][1].as_f64().unwrap());
    assert!((z - c(1.0, 0.0) / c(0.5, -0.25)).norm() < 1e-12);
}

#[test]
fn eval_singular_rational_is_numeric_failure() {
    let o = run(&["eval", "inv(1 - x1)", "--point", r#"{"n": 1, "X": [[[[1, 0]]]]}"#]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["analyze", "1 +"])), 1);
    assert_eq!(code(&run(&["analyze", "1", "--tol", "0.5"])), 1);
    assert_eq!(code(&run(&["analyze", "1", "--tol", "0"])), 1);
    assert_eq!(code(&run(&["analyze", "1", "--max-level", "0"])), 1);
    assert_eq!(code(&run(&["analyze", "1 - x2*x2'", "--vars", "1"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["analyze", "1", "--json", "--text"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn output_is_byte_identical_for_a_fixed_seed() {
    for args in [
        vec!["analyze", NONCONVEX, "--seed", "7"],
        vec!["analyze", F1_DEG4],
        vec!["lmi", F_MATRIX, "--seed", "3"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), b.status.code());
        assert_eq!(a.stdout, b.stdout, "nondeterministic output for {args:?}");
    }
}

#[test]
fn seed_defaults_from_environment() {
    let with_env = bin().args(["analyze", NONCONVEX]).env("FREECONVEX_SEED", "11").output().unwrap();
    let with_flag = run(&["analyze", NONCONVEX, "--seed", "11"]);
    assert_eq!(with_env.stdout, with_flag.stdout);
    assert_eq!(json(&with_env)["seed"], 11);
}

#[test]
fn dumped_sdps_match_their_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", NONCONVEX, "--dump-sdp", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let mut n = 0;
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap();
        validate("sdp_dump", &v);
        n += 1;
    }
    assert!(n > 0, "no SDP dumps written");
}

#[test]
fn rational_input_routes_through_realization() {
    let o = run(&["analyze", "inv(1 - x1*x1')"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    validate("convexity_report", &v);
    assert!(v["det_check"].is_null());
}
