use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anticonc"))
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn exact_q_of_ten_ones() {
    let f = corpus().join("c01_ones10_tau0.json");
    let out = run(&["q", f.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["value"].as_f64(), Some(0.24609375));
    assert_eq!(v["method"], "exact");
    assert_eq!(v["spec_version"], "1");
}

#[test]
fn monte_carlo_q_is_within_four_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "i.json",
        r#"{"id":"mc","distribution":"rademacher","weights":[[1],[1],[1],[1],[1],[1],[1],[1],[1],[1]],"tau":0,"mc_samples":200000}"#,
    );
    let out = run(&["q", "--method", "mc", "--seed", "7", f.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let (q, se) = (v["value"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((q - 0.24609375).abs() <= 4.0 * se, "{q} +- {se}");
}

#[test]
fn esseen_value_dominates_exact() {
    let f = corpus().join("c05_range6.json");
    let exact = stdout_json(&run(&["q", f.to_str().unwrap()]))["value"]
        .as_f64()
        .unwrap();
    let out = run(&["q", "--method", "esseen", f.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["method"], "esseen_upper");
    assert!(v["value"].as_f64().unwrap() > 0.0 && exact > 0.0);
}

#[test]
fn malformed_instance_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "bad.json",
        r#"{"id":"x","distribution":"rademacher","weights":[[1]],"tau":"wide"}"#,
    );
    let out = run(&["q", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`tau`"), "{err}");

    let f = write(dir.path(), "broken.json", r#"{"id":"x","#);
    assert_eq!(run(&["q", f.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(
        run(&["q", "/nonexistent/instance.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn enumeration_over_budget_exits_three() {
    let f = corpus().join("c16_ones40.json");
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "wide.json",
        r#"{"id":"w","distribution":"rademacher","weights":[[1],[1.1],[1.3],[1.7],[2.3],[2.9],[3.1],[3.7],[4.1],[4.3]],"tau":1}"#,
    );
    assert!(run(&["q", f.to_str().unwrap()]).status.success());
    assert_eq!(
        run(&["q", "--budget", "16", g.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn lcd_brackets_the_closed_form() {
    let f = corpus().join("c02_ones4.json");
    let v = stdout_json(&run(&["lcd", f.to_str().unwrap()]));
    let (lo, hi) = (
        v["d_lower"].as_f64().unwrap(),
        v["d_upper"].as_f64().unwrap(),
    );
    assert!(lo <= 2.0 / 3.0 + 1e-12 && 2.0 / 3.0 <= hi + 1e-12);
    assert_eq!(v["certified"], true);

    let g = corpus().join("c05_range6.json");
    assert_eq!(run(&["lcd", g.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn gapfit_covers_integer_weights() {
    let f = corpus().join("c07_multiples_of_three.json");
    let v = stdout_json(&run(&["gapfit", f.to_str().unwrap()]));
    assert_eq!(v["uncovered"], 0);
    assert_eq!(v["rank"], 1);
    let g = v["gap"]["g"][0][0].as_f64().unwrap();
    let l = v["gap"]["L"][0].as_f64().unwrap();
    for w in [3.0f64, 6.0, 9.0] {
        let k = (w / g).round().clamp(-l, l);
        assert!(
            (w - k * g).abs() <= 1.0 + 1e-12,
            "{w} not within delta of the witness"
        );
    }
    assert!(v["size"].as_u64().unwrap() <= 11);
}

#[test]
fn bounds_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["c02_ones4.json", "c25_single.json", "c05_range6.json"] {
        fs::copy(corpus().join(name), dir.path().join(name)).unwrap();
    }
    let out = run(&["bounds", dir.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    let ids: Vec<&str> = v["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["instance"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["c02_ones4", "c05_range6", "c25_single"]);
    for r in v["reports"].as_array().unwrap() {
        for (_, b) in r["bounds"].as_object().unwrap() {
            assert!(b["value"].is_f64() || b["value"].is_null());
        }
    }

    let out = run(&["bounds", "--format", "csv", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "spec_version,instance,tag,value,vacuous,ratio,q,q_method,q_stderr"
    );
    assert!(lines.any(|l| l.contains(",lcd_moment,")));
}

#[test]
fn constants_file_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let f = corpus().join("c02_ones4.json");
    let bad = write(dir.path(), "c.json", r#"{"c2": 1.0, "c99": 2.0}"#);
    let out = run(&[
        "bounds",
        "--constants",
        bad.to_str().unwrap(),
        f.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c99"));
    let neg = write(dir.path(), "n.json", r#"{"c3": -1.0}"#);
    assert_eq!(
        run(&[
            "bounds",
            "--constants",
            neg.to_str().unwrap(),
            f.to_str().unwrap()
        ])
        .status
        .code(),
        Some(2)
    );
    let good = write(dir.path(), "g.json", r#"{"c_d": 2.0}"#);
    let out = run(&[
        "bounds",
        "--constants",
        good.to_str().unwrap(),
        f.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["reports"][0]["constants"]["c_d"], 2.0);
}

#[test]
fn corrupted_expectation_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst: Value =
        serde_json::from_str(&fs::read_to_string(corpus().join("c01_ones10_tau0.json")).unwrap())
            .unwrap();
    inst["expected"]["q"] = serde_json::json!(0.25);
    fs::write(dir.path().join("c.json"), inst.to_string()).unwrap();
    let out = run(&["verify", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["first_counterexample"]["check"], "expected_q");
    assert!(String::from_utf8_lossy(&out.stderr).contains("counterexample"));
}

#[test]
fn seed_changes_draws_but_not_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "c10_uniform3.json",
        "c12_plane_identity.json",
        "c17_random30_mc.json",
    ] {
        fs::copy(corpus().join(name), dir.path().join(name)).unwrap();
    }
    let a = run(&["verify", "--seed", "1", dir.path().to_str().unwrap()]);
    let b = run(&["verify", "--seed", "2", dir.path().to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
    let verdicts = |o: &Output| -> Vec<(String, bool)> {
        stdout_json(o)["results"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r["checks"].as_array().unwrap().clone())
            .map(|c| {
                (
                    c["name"].as_str().unwrap().to_string(),
                    c["passed"].as_bool().unwrap(),
                )
            })
            .collect()
    };
    assert_eq!(verdicts(&a), verdicts(&b));
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("q.json");
    let f = corpus().join("c25_single.json");
    let out = run(&["q", "--out", target.to_str().unwrap(), f.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(v["value"], 0.5);
}
