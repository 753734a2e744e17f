//! End-to-end CLI checks: subcommand wiring, output formats, exit codes,
//! and byte-level determinism of seeded reports.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lphidpd"))
}

fn write_temp_csv(name: &str, content: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("lphidpd-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

#[test]
fn datasets_listing_and_dump() {
    let out = bin().arg("datasets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("newcomb: 66 rows"));
    assert!(text.contains("salinity: 28 rows"));
}

#[test]
fn are_table_csv_shape_and_determinism() {
    let run = || {
        bin()
            .args(["are-table", "--betas", "0.1,0.5", "--gammas", "0,0.01"])
            .output()
            .unwrap()
    };
    let a = run();
    assert!(a.status.success());
    let text = String::from_utf8_lossy(&a.stdout).to_string();
    assert!(text.starts_with("beta,"), "{text}");
    assert!(text.contains("_meta,config_hash,"));
    let b = run();
    assert_eq!(a.stdout, b.stdout, "are-table output must be deterministic");
}

#[test]
fn fit_and_test_roundtrip_on_temp_data() {
    let path = write_temp_csv(
        "sample.csv",
        "value\n0.1\n-0.4\n0.3\n1.2\n-0.2\n0.5\n0.0\n-0.8\n0.9\n0.2\n-0.1\n0.4\n",
    );
    let out = bin()
        .args(["fit", "--data"])
        .arg(&path)
        .args(["--alpha", "0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["theta_hat"][0].as_f64().unwrap().abs() < 1.0);
    assert_eq!(v["tuning"], "Mle");

    let out = bin()
        .args(["test", "simple", "--data"])
        .arg(&path)
        .args(["--beta", "0.3", "--gamma", "0.05", "--mu0", "0.0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["p_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn ddt_subcommand_matches_published_example() {
    let out = bin()
        .args([
            "test", "ddt", "--successes", "264", "--failures", "201", "--beta", "0.3",
            "--gamma", "0.05", "--p0", "0.5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stat = v["statistic"].as_f64().unwrap();
    assert!((stat - 6.62).abs() < 0.05, "{stat}");
    assert_eq!(v["reject_at_5pct"], true);
}

#[test]
fn input_errors_exit_3() {
    // missing file
    let out = bin()
        .args(["fit", "--data", "/nonexistent/nope.csv", "--alpha", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // malformed cell with line number in the message
    let path = write_temp_csv("bad.csv", "value\n1.0\nnot_a_number\n");
    let out = bin()
        .args(["fit", "--data"])
        .arg(&path)
        .args(["--alpha", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // invalid tuning parameter
    let good = write_temp_csv("good.csv", "value\n1.0\n2.0\n3.0\n");
    let out = bin()
        .args(["fit", "--data"])
        .arg(&good)
        .args(["--beta", "1.5", "--gamma", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_records_format_and_seed_determinism() {
    let run = |seed: &str| {
        bin()
            .args([
                "simulate",
                "--eps",
                "0.1",
                "--n",
                "30",
                "--replications",
                "20",
                "--grid",
                "0.3,0.01;alpha:0",
                "--format",
                "records",
                "--seed",
                seed,
            ])
            .output()
            .unwrap()
    };
    let a = run("7");
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let first_line = String::from_utf8_lossy(&a.stdout);
    let meta: serde_json::Value =
        serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(meta["type"], "meta");
    assert_eq!(meta["seed"], 7);
    let b = run("7");
    assert_eq!(a.stdout, b.stdout);
    let c = run("8");
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn influence_export_runs() {
    let out = bin()
        .args([
            "influence",
            "--pairs",
            "0.5,0.2;0.5,0.9",
            "--y-grid",
            "-5:7:25",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 25 + 1 + 1 /* header + meta */);
}
