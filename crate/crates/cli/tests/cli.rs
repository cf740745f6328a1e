use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ncoadj"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TRIAL: &str = "A,X,N,Y
1,0.5,1.2,2.3
0,-0.3,0.1,0.4
1,1.1,2.0,3.1
0,0.2,0.9,1.0
1,-0.7,-0.2,0.8
0,0.9,1.7,1.5
1,0.0,0.6,1.9
0,-1.2,-0.9,-0.6
1,0.4,1.4,2.6
0,0.6,0.3,0.9
1,-0.1,0.8,1.7
0,1.5,2.2,2.0
";

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn estimate_reports_plug_in_as_reference() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "t.csv", TRIAL);
    let o = run(&["estimate", "--data", data.to_str().unwrap(), "--covariates", "X", "--ncos", "N"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let names = column(&out, "estimator");
    assert_eq!(names, ["plug-in", "cov", "nco", "cov+nco"]);
    let re: f64 = column(&out, "relative_efficiency")[0].parse().unwrap();
    assert_eq!(re, 1.0);
    assert!(stderr(&o).contains("\"subcommand\": \"estimate\""));
}

#[test]
fn json_output_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "t.csv", TRIAL);
    let out = dir.path().join("res");
    let o = run(&[
        "estimate", "--data", data.to_str().unwrap(), "--ncos", "N", "--adjust", "none,nco", "--json", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "estimate");
}

#[test]
fn unit_leverage_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    // Treated arm: X = 0, 0, 0, 10 puts all leverage on the last unit.
    let text = "A,X,Y\n1,0,1.0\n1,0,2.0\n1,0,1.5\n1,10,4.0\n0,0.3,0.2\n0,1.2,0.9\n0,-0.4,0.1\n0,0.8,1.1\n";
    let data = write(dir.path(), "lev.csv", text);
    let o = run(&["estimate", "--data", data.to_str().unwrap(), "--covariates", "X", "--adjust", "cov", "--correction", "hc2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leverage=1"), "{}", stderr(&o));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "bad.csv", "A,Y\n1,1\n2,0\n0,1\n1,3\n0,2\n");
    let o = run(&["estimate", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("non-binary treatment"));
    let o = run(&["estimate", "--data", "/nonexistent.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_statistic_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "flat.csv", "A,Y\n1,2\n0,2\n1,2\n0,2\n1,2\n0,2\n");
    let o = run(&["test", "--data", data.to_str().unwrap(), "--statistic", "robust-t"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn constant_nco_pretest() {
    let dir = tempfile::tempdir().unwrap();
    let text = TRIAL
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let mut f: Vec<&str> = l.split(',').collect();
            if i > 0 {
                f[2] = "3.0";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let data = write(dir.path(), "c.csv", &text);
    let o = run(&["pretest", "--data", data.to_str().unwrap(), "--ncos", "N"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), "p_sharp"), ["1.0"]);
    assert!(stderr(&o).contains("constant"));
}

#[test]
fn pretest_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "t.csv", TRIAL);
    let args = [
        "pretest", "--data", data.to_str().unwrap(), "--ncos", "N", "--pretest", "equiv", "--epsilon-rule", "sd:0.5",
        "--B", "1000", "--seed", "42", "--monte-carlo",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let o = run(&["pretest", "--data", data.to_str().unwrap(), "--ncos", "N", "--pretest", "equiv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sensitivity_curve_starts_at_uncorrected_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "t.csv", TRIAL);
    let d = data.to_str().unwrap();
    let est = run(&["estimate", "--data", d, "--ncos", "N", "--adjust", "nco"]);
    let curve = run(&["sensitivity", "--data", d, "--ncos", "N", "--delta-grid", "0,-1,2"]);
    assert!(curve.status.success(), "{}", stderr(&curve));
    let out = stdout(&curve);
    assert!(out.starts_with("delta,estimate,ci_low,ci_high\n"));
    assert_eq!(column(&out, "estimate")[0], column(&stdout(&est), "estimate")[0]);
}

#[test]
fn simulate_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "grid.json",
        r#"{"seed": 99, "replicates": 10, "grid": {"n": [40]},
            "estimators": ["plug-in", "nco", "sharp-gated"], "corrections": ["hc0", "hc3"],
            "options": {"gate": {"draws": 200}}}"#,
    );
    let outs: Vec<PathBuf> = ["1", "8"]
        .iter()
        .map(|t| {
            let out = dir.path().join(format!("out{t}"));
            let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", t]);
            assert!(o.status.success(), "{}", stderr(&o));
            out
        })
        .collect();
    for f in ["results.csv", "records.csv"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    assert!(outs[0].join("manifest.json").exists());
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"seed": 1, "estimators": ["nco"], "corrections": ["hc9"]}"#);
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
