//! End-to-end tests of the `opkit` binary: exit-code contract, report
//! contents and determinism.

use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::{Command, Output};

fn opkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opkit")).args(args).output().expect("binary runs")
}

fn opkit_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opkit")).args(args).env(key, value).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&path, contents).expect("write temp file");
    path
}

fn json_of(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("invalid JSON ({e}): {}", stdout(o)))
}

/// Scalar matrix c·I of size d in the `[re, im]` row encoding.
fn scaled_identity(c: f64, d: usize) -> Value {
    json!((0..d).map(|i| (0..d).map(|j| [if i == j { c } else { 0.0 }, 0.0]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

#[test]
fn check_symmetrized_unitaries_is_gamma_unitary() {
    let o = opkit(&["check", "--generator", "symmetrized-unitaries", "--params", "n=3", "dim=3", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("GammaUnitary"), "{}", stdout(&o));
}

#[test]
fn check_malformed_json_exits_2() {
    let path = temp_file("malformed.json", "{\"n\": 2, \"members\": [");
    let o = opkit(&["check", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_missing_file_exits_2() {
    let o = opkit(&["check", "--instance", "/nonexistent/instance.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_dimension_mismatch_exits_3() {
    let doc = json!({"n": 2, "dim": 2, "members": [scaled_identity(0.1, 2), scaled_identity(0.1, 3)]});
    let path = temp_file("mismatch.json", &doc.to_string());
    let o = opkit(&["check", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn check_refutes_three_identity_pair_with_witness() {
    let doc = json!({"n": 2, "dim": 2, "members": [scaled_identity(3.0, 2), scaled_identity(0.0, 2)]});
    let path = temp_file("three.json", &doc.to_string());
    let o = opkit(&["check", "--instance", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    assert_eq!(v["verdict"], "Refuted");
    let w = &v["witness"];
    assert!(w["polynomial"]["terms"].as_array().is_some_and(|t| !t.is_empty()));
    assert!(w["operator_norm"].as_f64().unwrap() > w["sup"].as_f64().unwrap());
}

#[test]
fn check_tetrablock_two_identity_refuted_by_coordinate() {
    let doc = json!({"A": scaled_identity(2.0, 2), "B": scaled_identity(0.0, 2), "P": scaled_identity(0.0, 2)});
    let path = temp_file("e_two.json", &doc.to_string());
    let o = opkit(&["check", "--instance", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    assert_eq!(v["verdict"], "Refuted");
    assert_eq!(v["family"], "tetrablock");
    assert_eq!(v["witness"]["sup"].as_f64().unwrap(), 1.0);
}

#[test]
fn fo_scalar_gamma2_gives_point_eight() {
    let o = opkit(&["fo", "--generator", "scalar", "--params", "n=2", "point=1.2,0.5", "--seed", "0", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    let a = v["A"][0][0][0][0].as_f64().unwrap();
    assert!((a - 0.8).abs() < 1e-12, "A = {a}");
}

#[test]
fn fo_zero_p_echoes_members() {
    let args = ["--generator", "zero-p", "--params", "n=3", "dim=2", "--seed", "3"];
    let gen = opkit(&[&["generate"][..], &args[..]].concat());
    let fo = opkit(&[&["fo"][..], &args[..], &["--format", "json"][..]].concat());
    assert_eq!(code(&fo), 0);
    let tuple = json_of(&gen);
    let v = json_of(&fo);
    for i in 0..2 {
        let s = tuple["members"][i].as_array().unwrap();
        let a = v["A"][i].as_array().unwrap();
        for (rs, ra) in s.iter().zip(a) {
            for (x, y) in rs.as_array().unwrap().iter().zip(ra.as_array().unwrap()) {
                for k in 0..2 {
                    assert!((x[k].as_f64().unwrap() - y[k].as_f64().unwrap()).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn fo_gamma_unitary_has_empty_tuple() {
    let o = opkit(&["fo", "--generator", "symmetrized-unitaries", "--params", "n=3", "dim=2", "--seed", "1", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    assert_eq!(v["defect_dim"], 0);
    assert_eq!(v["note"], "defect dimension 0");
}

#[test]
fn fo_residual_too_large_exits_4() {
    // P = 1 has no defect, so S = 0.5i cannot satisfy S − S*P = 0.
    let doc = json!({"n": 2, "dim": 1, "members": [[[[0.0, 0.5]]], [[[1.0, 0.0]]]]});
    let path = temp_file("residual.json", &doc.to_string());
    let o = opkit(&["fo", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}

#[test]
fn fo_tetrablock_scalar_closed_form() {
    let o = opkit(&["fo", "--generator", "tetra/scalar", "--params", "point=0.3,0.4,0.5", "--seed", "0", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v = json_of(&o);
    let f1 = v["F1"][0][0][0].as_f64().unwrap();
    let f2 = v["F2"][0][0][0].as_f64().unwrap();
    assert!((f1 - (0.3 - 0.4 * 0.5) / 0.75).abs() < 1e-12);
    assert!((f2 - (0.4 - 0.3 * 0.5) / 0.75).abs() < 1e-12);
}

#[test]
fn verify_binomial_isometry_extract_passes() {
    let o = opkit(&[
        "verify", "--generator", "binomial-isometry", "--params", "n=3", "N=16", "--seed", "0", "--ids", "MODEL-EXTRACT",
        "--format", "json",
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v = json_of(&o);
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["identity"], "MODEL-EXTRACT");
    assert_eq!(v[0]["pass"], true);
}

#[test]
fn verify_backshift_appx_passes() {
    let o = opkit(&["verify", "--generator", "backshift-astar", "--seed", "0", "--ids", "MODEL-APPX", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v = json_of(&o);
    assert_eq!(v[0]["identity"], "MODEL-APPX");
    assert_eq!(v[0]["pass"], true);
    assert_eq!(v[0]["window"]["kind"], "interior");
}

/// Tuple JSON with precomputed fundamental operators; A₁ optionally
/// perturbed by `delta` in its (0,0) entry.
fn tuple_with_fo(delta: f64) -> PathBuf {
    let args = ["--generator", "coinvariant-compression", "--params", "n=3", "dim=2", "points=2", "--seed", "4"];
    let mut tuple = json_of(&opkit(&[&["generate"][..], &args[..]].concat()));
    let fo = json_of(&opkit(&[&["fo"][..], &args[..], &["--format", "json"][..]].concat()));
    let mut a = fo["A"].clone();
    let entry = a[0][0][0][0].as_f64().unwrap();
    a[0][0][0][0] = json!(entry + delta);
    tuple["A"] = a;
    tuple["B"] = fo["adjoint"]["B"].clone();
    temp_file(&format!("tuple_fo_{delta}.json"), &tuple.to_string())
}

#[test]
fn verify_precomputed_fo_passes_l44() {
    let path = tuple_with_fo(0.0);
    let o = opkit(&["verify", "--instance", path.to_str().unwrap(), "--ids", "GAMMA-L44"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn verify_corrupted_fo_fails_l44_with_exit_5() {
    let path = tuple_with_fo(1e-3);
    let o = opkit(&["verify", "--instance", path.to_str().unwrap(), "--ids", "GAMMA-L44", "--format", "json"]);
    assert_eq!(code(&o), 5);
    let v = json_of(&o);
    assert_eq!(v[0]["pass"], false);
    assert!(v[0]["residual"].as_f64().unwrap() > 1e-8);
}

#[test]
fn verify_skips_are_not_failures() {
    // A finite tuple cannot run model identities; they are skipped.
    let o = opkit(&[
        "verify", "--generator", "zero-p", "--params", "n=2", "dim=2", "--seed", "0", "--ids", "MODEL-NEC,GAMMA-L45",
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("SKIP MODEL-NEC"));
    assert!(stdout(&o).contains("PASS GAMMA-L45"));
}

#[test]
fn verify_tetrablock_model_suite_passes() {
    let o = opkit(&["verify", "--generator", "tetra/compression-model", "--params", "dim=1", "points=2", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for id in ["TETRA-L52a", "TETRA-L52b", "TETRA-ASTAR", "TETRA-HALFUNIT", "TETRA-NEC", "TETRA-EXTRACT", "TETRA-DIL"] {
        assert!(stdout(&o).contains(&format!("PASS {id}")), "{id}: {}", stdout(&o));
    }
}

#[test]
fn verify_reports_are_deterministic_across_thread_caps() {
    let args = [
        "verify", "--generator", "compression-model", "--params", "n=3", "dim=1", "points=2", "--seed", "7", "--format",
        "json",
    ];
    let a = opkit(&args);
    let b = opkit_env(&args, "GAMMA_OPKIT_THREADS", "1");
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let reports = json_of(&a);
    let ids: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["identity"].as_str().unwrap()).collect();
    // Catalog order survives concurrent execution.
    assert_eq!(ids.first(), Some(&"GAMMA-L44"));
    assert!(ids.iter().position(|&i| i == "MODEL-APPX") < ids.iter().position(|&i| i == "MODEL-POWDIL"));
    for r in reports.as_array().unwrap() {
        assert_eq!(r["instance_digest"], reports[0]["instance_digest"]);
        assert_eq!(r["instance_digest"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn generator_requires_seed() {
    let o = opkit(&["generate", "--generator", "scalar"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_generator_and_identity_exit_2() {
    assert_eq!(code(&opkit(&["generate", "--generator", "no-such", "--seed", "1"])), 2);
    assert_eq!(code(&opkit(&["verify", "--generator", "scalar", "--seed", "1", "--ids", "GAMMA-L99"])), 2);
    assert_eq!(code(&opkit(&["check", "--generator", "scalar", "--seed", "1", "--params", "bogus"])), 2);
}

#[test]
fn generated_instance_round_trips_through_a_file() {
    let gen = opkit(&["generate", "--generator", "tetra/e-unitary", "--params", "dim=3", "--seed", "5"]);
    assert_eq!(code(&gen), 0);
    let path = temp_file("e_unitary.json", &stdout(&gen));
    let o = opkit(&["check", "--instance", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("EUnitary"), "{}", stdout(&o));
}

#[test]
fn model_instance_file_keeps_its_truncation() {
    let gen = opkit(&["generate", "--generator", "compression-model", "--params", "n=2", "dim=1", "points=2", "--seed", "2"]);
    assert_eq!(code(&gen), 0);
    let path = temp_file("model_instance.json", &stdout(&gen));
    let o = opkit(&["verify", "--instance", path.to_str().unwrap(), "--ids", "GAMMA-L44,GAMMA-L43"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn out_flag_writes_report_file() {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("report.json");
    let _ = std::fs::remove_file(&path);
    let o = opkit(&[
        "check", "--generator", "zero-p", "--params", "n=2", "dim=2", "--seed", "0", "--format", "json", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["verdict"].is_string());
}
