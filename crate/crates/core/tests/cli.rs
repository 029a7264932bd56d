use std::path::Path;
use std::process::Command;

use serde_json::Value;
use wignersim::cli::{run_cli, EXIT_ENGINE, EXIT_EXPECTATION, EXIT_INPUT, EXIT_OK};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(
        std::iter::once("wignersim").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn golden(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn run_unitary_report_fields() {
    let o = cli(&[
        "run",
        "--builtin",
        "deutsch-wigner",
        "--model",
        "unitary",
        "--trials",
        "100",
        "--seed",
        "7",
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = vec![
        "format_version",
        "protocol",
        "model",
        "trials",
        "seed",
        "histogram",
        "expectations",
        "return_rate",
        "bayes_factor",
        "wall_ms",
    ];
    expected.sort();
    let mut keys_sorted = keys.clone();
    keys_sorted.sort();
    assert_eq!(keys_sorted, expected);
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["protocol"], "deutsch-wigner");
    assert_eq!(v["model"], "unitary");
    assert_eq!(v["return_rate"], 1.0);
    assert_eq!(v["histogram"][0]["outcome"], serde_json::json!([0, 0, 0, 0, 1]));
    assert_eq!(v["histogram"][0]["count"], 100);
    assert_eq!(v["expectations"][0]["pass"], true);
    assert_eq!(v["bayes_factor"].as_f64().unwrap(), 2f64.powi(100));
}

#[test]
fn run_collapse_fails_expectation_with_exit_3() {
    let o = cli(&[
        "run",
        "--builtin",
        "deutsch-wigner",
        "--model",
        "collapse",
        "--trials",
        "100000",
        "--seed",
        "7",
    ]);
    assert_eq!(o.code, EXIT_EXPECTATION);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    let observed = v["expectations"][0]["observed_prob"].as_f64().unwrap();
    assert!((observed - 0.5).abs() < 0.0047);
    assert_eq!(v["expectations"][0]["pass"], false);
    assert_eq!(v["bayes_factor"], 0.0);
    assert!(o.stderr.contains("expectation at step 10 failed"));
}

#[test]
fn tsv_report_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.tsv");
    let o = cli(&[
        "run",
        "--builtin",
        "photon-mirror",
        "--model",
        "collapse",
        "--trials",
        "1000",
        "--seed",
        "3",
        "--format",
        "tsv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.stdout, "");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "photon\tmirror\tcount");
    let total: u64 = lines
        .map(|l| l.rsplit('\t').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 1000);
    assert_eq!(o.code, EXIT_EXPECTATION);
}

#[test]
fn identical_invocations_are_byte_identical_apart_from_wall_time() {
    let args = [
        "run",
        "--builtin",
        "which-outcome",
        "--model",
        "collapse",
        "--trials",
        "5000",
        "--seed",
        "11",
    ];
    let strip = |s: String| -> String {
        s.lines()
            .filter(|l| !l.contains("wall_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(cli(&args).stdout), strip(cli(&args).stdout));
    let tsv = [
        "run",
        "--builtin",
        "which-outcome",
        "--model",
        "collapse",
        "--trials",
        "5000",
        "--seed",
        "11",
        "--format",
        "tsv",
    ];
    assert_eq!(cli(&tsv).stdout, cli(&tsv).stdout);
}

#[test]
fn broken_file_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.wproto");
    std::fs::write(
        &path,
        "protocol b\nregisters\n  a 2\ninit a=0\nstep superpose a theta=x phi=0\n",
    )
    .unwrap();
    let o = cli(&["run", "--protocol", path.to_str().unwrap(), "--model", "unitary"]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("broken.wproto:5:24:"), "{}", o.stderr);
    assert_eq!(o.stdout, "");
}

#[test]
fn validation_errors_point_at_the_step_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.wproto");
    std::fs::write(
        &path,
        "protocol b\nregisters\n  a 2\n  b 2\ninit a=0 b=0\nstep couple a b\n\nreverse 1..2\n",
    )
    .unwrap();
    let o = cli(&["validate", "--protocol", path.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("bad.wproto:8:1: step 2:"), "{}", o.stderr);
}

#[test]
fn engine_assertion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("entangled.wproto");
    std::fs::write(
        &path,
        "protocol e\nregisters\n  a 2\n  b 2\ninit a=0 b=0\nstep superpose a theta=0.7853981633974483 phi=0.0\nstep couple a b\ncheck-factorized b tol=1e-10\n",
    )
    .unwrap();
    let o = cli(&[
        "run",
        "--protocol",
        path.to_str().unwrap(),
        "--model",
        "unitary",
        "--trials",
        "3",
    ]);
    assert_eq!(o.code, EXIT_ENGINE, "{}", o.stderr);
    assert!(o.stderr.contains("entangled"));
}

#[test]
fn validate_canon_invert() {
    let o = cli(&["validate", "--builtin", "deutsch-wigner"]);
    assert_eq!((o.code, o.stdout.as_str()), (EXIT_OK, "ok 10 steps\n"));

    let o = cli(&["canon", "--protocol", &golden("deutsch-wigner.shuffled.wproto")]);
    assert_eq!(o.code, EXIT_OK);
    assert_eq!(
        o.stdout,
        std::fs::read_to_string(golden("deutsch-wigner.wproto")).unwrap()
    );

    let o = cli(&["invert", "--builtin", "deutsch-wigner"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(!o.stdout.contains("reverse"));
    let lines: Vec<&str> = o.stdout.lines().collect();
    let at = lines.iter().position(|l| l.starts_with("check-factorized")).unwrap();
    assert_eq!(
        &lines[at + 1..at + 5],
        [
            "step couple cat bob",
            "step couple poison cat",
            "step couple atom poison",
            "step superpose atom theta=-0.7853981633974483 phi=0.0",
        ]
    );
    // the expanded protocol is itself valid and canonical
    let parsed = wignersim::protofile::parse(&o.stdout).unwrap();
    wignersim::protocol::validate(&parsed).unwrap();
}

#[test]
fn oversized_system_rejected() {
    let o = cli(&["validate", "--builtin", "chain-30"]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("system too large"));
}

#[test]
fn distinguish_thresholds() {
    for (b, n) in [("100", 7), ("2", 1), ("1000000", 20)] {
        let o = cli(&["distinguish", "--bayes-factor", b]);
        assert_eq!(o.code, EXIT_OK);
        let mut lines = o.stdout.lines();
        assert_eq!(lines.next().unwrap(), format!("trials_to_threshold {n}"));
        assert_eq!(lines.next().unwrap(), "n\tbayes_factor");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), n);
        assert_eq!(rows[n - 1], format!("{n}\t{:?}", 2f64.powi(n as i32)));
    }
    for bad in ["1", "0.5", "-3", "NaN"] {
        assert_eq!(cli(&["distinguish", "--bayes-factor", bad]).code, EXIT_INPUT, "{bad}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cli(&[]).code, EXIT_INPUT);
    assert_eq!(cli(&["run", "--model", "unitary"]).code, EXIT_INPUT);
    assert_eq!(
        cli(&[
            "run",
            "--builtin",
            "photon-mirror",
            "--protocol",
            "x",
            "--model",
            "unitary"
        ])
        .code,
        EXIT_INPUT
    );
    assert_eq!(
        cli(&["run", "--builtin", "photon-mirror", "--model", "magic"]).code,
        EXIT_INPUT
    );
    assert_eq!(
        cli(&[
            "run",
            "--builtin",
            "photon-mirror",
            "--model",
            "unitary",
            "--trials",
            "0"
        ])
        .code,
        EXIT_INPUT
    );
    assert_eq!(
        cli(&["run", "--builtin", "nope", "--model", "unitary"]).code,
        EXIT_INPUT
    );
    assert_eq!(
        cli(&["validate", "--protocol", "/nonexistent/x.wproto"]).code,
        EXIT_INPUT
    );
    let help = cli(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("distinguish"));
}

#[test]
fn binary_exit_codes_and_dimension_override() {
    let bin = env!("CARGO_BIN_EXE_wignersim");
    let status = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(bin);
        cmd.args(args).env_remove("WIGNERSIM_MAX_DIM");
        if let Some(v) = env {
            cmd.env("WIGNERSIM_MAX_DIM", v);
        }
        cmd.output().unwrap()
    };
    let ok = status(&["validate", "--builtin", "chain-5"], None);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&ok.stdout), "ok 8 steps\n");

    let capped = status(&["validate", "--builtin", "chain-5"], Some("16"));
    assert_eq!(capped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&capped.stderr).contains("exceeds cap 16"));

    // values above the built-in cap do not raise it
    let raised = status(&["validate", "--builtin", "chain-25"], Some("1000000000"));
    assert_eq!(raised.status.code(), Some(1));

    assert_eq!(
        status(&["validate", "--builtin", "chain-5"], Some("lots"))
            .status
            .code(),
        Some(1)
    );

    let fail = status(
        &[
            "run",
            "--builtin",
            "photon-mirror",
            "--model",
            "collapse",
            "--trials",
            "200",
        ],
        None,
    );
    assert_eq!(fail.status.code(), Some(3));
}
