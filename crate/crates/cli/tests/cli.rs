use std::path::Path;
use std::process::{Command, Output};

fn cglab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cglab"))
        .args(args)
        .current_dir(dir)
        .env_remove("CGLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve_args<'a>(generator: &'a str, trace: &'a str, report: &'a str) -> Vec<&'a str> {
    vec![
        "solve", "--gen", generator, "--precision", "double", "--criteria", "ginsburg,relres:1e-12",
        "--max-iters", "500", "--trace", trace, "--report", report,
    ]
}

#[test]
fn solve_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglab(&solve_args("two-cluster:1e8:100", "t.csv", "r.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(trace.starts_with("k,"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["problem"]["config"]["max_iters"], 500);
    assert_eq!(report["problem"]["config"]["criteria"], "ginsburg,relres:1e-12");
}

#[test]
fn spread_spectrum_exhausts_500_steps_but_still_writes_outputs() {
    // a geometric spectrum at this condition number is still far from the
    // floor after 500 steps, so neither criterion can fire
    let dir = tempfile::tempdir().unwrap();
    let out = cglab(&solve_args("diag-geometric:1e8:100", "t.csv", "r.json"), dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(dir.path().join("t.csv").is_file());
    assert!(dir.path().join("r.json").is_file());
}

#[test]
fn solve_matrix_market_at_simulated_precision() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("m.mtx"),
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 5\n1 1 4\n2 1 1\n2 2 3\n3 2 1\n3 3 2\n",
    )
    .unwrap();
    let out = cglab(
        &[
            "solve", "--matrix", "m.mtx", "--rhs", "ones", "--precision", "p:24", "--criteria",
            "relres:1e-5", "--report", "r.json", "--plot", "p.csv", "--plot-cols", "k,rnorm,snorm",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["precision"]["bits"], 24);
    let plot = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(plot.starts_with("k,rnorm,snorm\n"));
}

#[test]
fn exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let exhausted = cglab(&["solve", "--gen", "diag-geometric:1e8:100", "--max-iters", "5"], dir.path());
    assert_eq!(exhausted.status.code(), Some(2));

    std::fs::write(
        dir.path().join("indef.mtx"),
        "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 2 -1\n",
    )
    .unwrap();
    let out = cglab(&["solve", "--matrix", "indef.mtx", "--rhs", "ones"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("breakdown"));
}

#[test]
fn validation_errors_exit_1_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["solve"], "problem"),
        (&["solve", "--gen", "diag-geometric:1e8:10", "--precision", "p:99"], "precision"),
        (&["solve", "--gen", "nope:3"], "gen"),
        (&["solve", "--gen", "diag-geometric:1e8:10", "--criteria", "fast"], "criteria"),
        (&["solve", "--gen", "diag-geometric:1e8:10", "--max-iters", "0"], "max_iters"),
        (&["solve", "--gen", "diag-geometric:1e8:10", "--plot", "p.csv"], "plot_cols"),
        (&["compare", "--gen", "diag-geometric:1e8:10", "--precisions", "p:10"], "precisions"),
        (&["solve", "--bogus"], "--bogus"),
    ];
    for (args, field) in cases {
        let out = cglab(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(stderr(&out).contains(field), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn config_file_round_trip_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"kind": "generated", "generator": "dense-spd:1e4:20"},
        "precision": "p:30",
        "criteria": "stagnation",
        "max_iters": 400,
        "seed": 7,
        "outputs": {"trace": "a.csv"}
    }"#;
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let run = |extra: &[&str], seed_env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cglab"));
        cmd.args(["solve", "--config", "c.json"]).args(extra).current_dir(dir.path());
        match seed_env {
            Some(s) => cmd.env("CGLAB_SEED", s),
            None => cmd.env_remove("CGLAB_SEED"),
        };
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    };
    run(&[], None);
    run(&["--trace", "b.csv"], None);
    run(&["--trace", "c.csv"], Some("8"));
    run(&["--trace", "d.csv", "--seed", "7"], Some("8"));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert_eq!(read("a.csv"), read("d.csv"));

    std::fs::write(dir.path().join("bad.json"), cfg.replace("\"seed\"", "\"sead\"")).unwrap();
    let out = cglab(&["solve", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sead"));
}

#[test]
fn compare_tabulates_each_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglab(
        &[
            "compare", "--gen", "dense-spd:1e6:60", "--seed", "5", "--criteria", "stagnation", "--max-iters",
            "3000", "--precisions", "double,p:24,double", "--trace", "t.csv", "--report", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let floor = |i: usize| rows[i]["floor_norm"].as_f64().unwrap();
    assert!(floor(1) > 1e3 * floor(0));
    assert!(rows[1]["floor_ratio"].as_f64().unwrap() > 1e3);
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("t.0.csv"), read("t.2.csv"));
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglab(&["verify", "oracle"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["suite"], "oracle");
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["failures"], 0);

    let out = cglab(&["verify", "theorem5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = cglab(&["verify", "everything"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown suite"));
}
