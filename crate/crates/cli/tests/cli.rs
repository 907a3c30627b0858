use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use opsym::{CMatrix, ConcreteOpSpace, KernelFunction, TensorElement, TrilinearForm};
use serde_json::Value;

fn opsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opsym")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn gamma_curve_values_and_flags() {
    let v = json(&opsym(&["gamma-curve", "--t", "0.1,0.99"]));
    let pts = v["result"]["points"].as_array().unwrap();
    let lower = pts[0]["rows"][0]["lower"].as_f64().unwrap();
    assert!((lower - 0.55).abs() < 1e-3);
    assert_eq!(pts[0]["gap"], Value::Bool(true));
    let est = pts[1]["rows"][3]["estimate"].as_f64().unwrap();
    assert!((est - 0.995).abs() < 1e-3 && est < 1.0);
    assert_eq!(pts[1]["haagerup"].as_f64().unwrap(), 1.0);
}

#[test]
fn gamma_curve_empty_and_out_of_range() {
    let v = json(&opsym(&["gamma-curve"]));
    assert!(v["result"]["points"].as_array().unwrap().is_empty());
    let out = opsym(&["gamma-curve", "--t", "1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad parameter range"));
}

#[test]
fn csv_has_the_gamma_columns() {
    let out = opsym(&["gamma-curve", "--t", "0.2", "--truncation", "2", "--out", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,k,lower,estimate"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn reports_are_deterministic_and_carry_provenance() {
    let args = ["gamma-curve", "--t", "0.3", "--seed", "7", "--restarts", "3"];
    let a = opsym(&args);
    let b = opsym(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 16);
    let c = json(&opsym(&["gamma-curve", "--t", "0.3", "--seed", "8", "--restarts", "3"]));
    assert_ne!(v["config_hash"], c["config_hash"]);
}

#[test]
fn kernel_check_positive_and_refuted_with_replay() {
    let dir = tempfile::tempdir().unwrap();
    let gram = KernelFunction::from_real(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
    let gp = dir.path().join("gram.json");
    write(&gp, &serde_json::to_string(&gram).unwrap());
    let v = json(&opsym(&["kernel-check", gp.to_str().unwrap()]));
    assert_eq!(v["result"]["positive"], Value::Bool(true));
    assert!(v["result"]["witness_file"].is_null());

    let bad = KernelFunction::from_real(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
    let bp = dir.path().join("bad.json");
    let wp = dir.path().join("w.json");
    write(&bp, &serde_json::to_string(&bad).unwrap());
    let v = json(&opsym(&["kernel-check", bp.to_str().unwrap(), "--witness", wp.to_str().unwrap()]));
    assert_eq!(v["result"]["positive"], Value::Bool(false));
    assert!((v["result"]["min_eigenvalue"].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert!(v["result"]["pair_eigenvalue"].as_f64().unwrap() <= -1e-9);
    let r = json(&opsym(&["replay", wp.to_str().unwrap()]));
    assert_eq!(r["result"]["verdict"], "Refuted");
    assert_eq!(r["result"]["replayed"], Value::Bool(true));
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    write(&p, "{\"omega\": 2,\n \"n\": 1,\n \"blocks\": [[}\n");
    let out = opsym(&["kernel-check", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("parse error") && err.contains("line 3"), "{err}");
}

#[test]
fn non_hermitian_kernel_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let k = KernelFunction::from_real(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
    let p = dir.path().join("k.json");
    write(&p, &serde_json::to_string(&k).unwrap());
    let out = opsym(&["kernel-check", p.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not Hermitian"));
}

#[test]
fn dims_builtins_and_space_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d4.json");
    write(&p, &ConcreteOpSpace::diagonal(4).to_json());
    let v = json(&opsym(&["dims", "--builtin", "D3", "--builtin", "C3", "--builtin", "M4x2", p.to_str().unwrap()]));
    let e = v["result"]["entries"].as_array().unwrap();
    assert_eq!(e[0]["not_operator_system"], Value::Bool(true));
    assert_eq!(e[1]["not_operator_system"], Value::Bool(false));
    assert_eq!(e[1]["tro_cross_check"]["passed"], Value::Bool(true));
    assert_eq!(e[2]["not_operator_system"], Value::Bool(true));
    assert_eq!(e[3]["dim"], 4);
    assert_eq!(e[3]["not_operator_system"], Value::Bool(true));
}

#[test]
fn gns_writes_factors() {
    let dir = tempfile::tempdir().unwrap();
    let m2 = Arc::new(ConcreteOpSpace::full(2));
    let theta = TrilinearForm::multiplication(m2.clone(), m2.clone()).unwrap();
    let p = dir.path().join("mult.json");
    write(&p, &serde_json::to_string(&theta).unwrap());
    let out_dir = dir.path().join("out");
    let v = json(&opsym(&["gns", p.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--restarts", "2"]));
    assert!(v["result"]["reconstruction"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["result"]["cb_consistent"], Value::Bool(true));
    for f in ["phi.json", "psi.json", "gram.json"] {
        assert!(out_dir.join(f).exists());
    }
    let gram: CMatrix = serde_json::from_str(&std::fs::read_to_string(out_dir.join("gram.json")).unwrap()).unwrap();
    assert_eq!(gram.rows(), 8);

    let zero = TrilinearForm::zero(m2.clone(), m2, 2);
    let zp = dir.path().join("zero.json");
    write(&zp, &serde_json::to_string(&zero).unwrap());
    let v = json(&opsym(&["gns", zp.to_str().unwrap(), "--out-dir", dir.path().join("z").to_str().unwrap()]));
    assert_eq!(v["result"]["k_dim"], 0);
}

#[test]
fn gns_rejects_non_positive_forms() {
    let dir = tempfile::tempdir().unwrap();
    let m2 = Arc::new(ConcreteOpSpace::full(2));
    let theta = TrilinearForm::multiplication(m2.clone(), m2).unwrap().scale(opsym::C64::new(-1.0, 0.0));
    let p = dir.path().join("neg.json");
    write(&p, &serde_json::to_string(&theta).unwrap());
    let out = opsym(&["gns", p.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not positive"));
}

#[test]
fn norms_of_an_elementary_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let m2 = Arc::new(ConcreteOpSpace::full(2));
    let c = Arc::new(ConcreteOpSpace::scalars());
    let u = TensorElement::elementary(m2, c, &CMatrix::identity(2), &CMatrix::identity(1), &CMatrix::identity(2)).unwrap();
    let p = dir.path().join("u.json");
    write(&p, &serde_json::to_string(&u).unwrap());
    let v = json(&opsym(&["norms", p.to_str().unwrap()]));
    assert!((v["result"]["sym"]["lower"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["result"]["haagerup_upper"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn tro_dual_and_balanced_commands() {
    let v = json(&opsym(&["tro-verify", "--pair", "R2:C", "--samples", "4"]));
    assert_eq!(v["result"]["entries"][0]["report"]["passed"], Value::Bool(true));
    assert_eq!(v["result"]["entries"][0]["report"]["target_dim"], 4);
    let v = json(&opsym(&["dual-check", "--space", "R2", "--samples", "6"]));
    assert_eq!(v["result"]["entries"][0]["pairing_full_rank"], Value::Bool(true));
    assert_eq!(v["result"]["entries"][0]["transfer_holds"], Value::Bool(true));
    let v = json(&opsym(&["balanced-demo"]));
    assert_eq!(v["result"]["balanced"]["upper"].as_f64().unwrap(), 0.0);
    assert_eq!(v["result"]["collapse_holds"], Value::Bool(true));
}

#[test]
fn unknown_space_is_a_usage_error() {
    let out = opsym(&["dual-check", "--space", "Q7"]);
    assert_eq!(out.status.code(), Some(2));
}
