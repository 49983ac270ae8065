//! End-to-end checks of the `sbn` binary: exit codes, output formats,
//! round trips, and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sbn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbn"))
}

fn write(dir: &TempDir, name: &str, content: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    sbn().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_sa_single_tree_gives_five_fifths_and_eval_gives_one() {
    let dir = TempDir::new().unwrap();
    let trees = write(&dir, "trees.txt", "(A,B,(C,D));\n");
    let params = dir.path().join("sa.params");
    let out = run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&params),
        "-m",
        "sbn-sa",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(summary.contains("method=sbn-sa"));
    assert!(summary.contains("K=1"));
    assert!(summary.contains("root_splits=5"));

    let text = std::fs::read_to_string(&params).unwrap();
    let root_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("root\t")).collect();
    assert_eq!(root_lines.len(), 5);
    for line in root_lines {
        assert!(line.ends_with("2.0000000000000001e-1"), "{line}");
    }

    let out = run(&["eval", "-p", path_str(&params), "-t", path_str(&trees)]);
    assert!(out.status.success());
    let eval = stdout(&out);
    assert!(
        eval.starts_with("1.0000000000000000e0\t"),
        "unexpected eval output: {eval}"
    );

    // An unsupported topology scores zero.
    let other = write(&dir, "other.txt", "(A,C,(B,D));\n");
    let out = run(&["eval", "-p", path_str(&params), "-t", path_str(&other)]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("0.0000000000000000e0\t"));
}

#[test]
fn fit_on_empty_file_exits_3_and_parse_error_exits_2() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.txt", "# nothing here\n");
    let out_path = dir.path().join("p.params");
    let out = run(&[
        "fit",
        "-i",
        path_str(&empty),
        "-o",
        path_str(&out_path),
        "-m",
        "sbn-sa",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(!out_path.exists());

    let bad = write(&dir, "bad.txt", "(A,B,(C,);\n");
    let out = run(&[
        "fit",
        "-i",
        path_str(&bad),
        "-o",
        path_str(&out_path),
        "-m",
        "sbn-sa",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("line 1"));
}

#[test]
fn em_trace_is_nondecreasing() {
    let dir = TempDir::new().unwrap();
    let trees = write(
        &dir,
        "trees.txt",
        "(A,B,((C,D),E));\n3\t(A,C,((B,D),E));\n2\t(A,B,((C,E),D));\n(A,E,((B,C),D));\n",
    );
    let params = dir.path().join("em.params");
    let out = run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&params),
        "-m",
        "sbn-em",
        "--alpha",
        "0",
        "--trace",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("iterations="));
    assert!(text.contains("zero_support_trees=0"));
    let lls: Vec<f64> = text
        .lines()
        .filter_map(|l| l.strip_prefix("loglik["))
        .map(|l| l.split_once("]=").unwrap().1.parse().unwrap())
        .collect();
    assert!(lls.len() >= 2);
    for w in lls.windows(2) {
        assert!(w[1] >= w[0] - 1e-8 * 7.0, "trace decreased: {w:?}");
    }
}

#[test]
fn param_file_round_trip_changes_nothing() {
    let dir = TempDir::new().unwrap();
    let trees = write(
        &dir,
        "trees.txt",
        "(A,B,((C,D),E));\n(A,C,((B,D),E));\n(A,B,((C,E),D));\n",
    );
    let params = dir.path().join("sa.params");
    assert!(run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&params),
        "-m",
        "sbn-sa"
    ])
    .status
    .success());
    let eval1 = stdout(&run(&[
        "eval",
        "-p",
        path_str(&params),
        "-t",
        path_str(&trees),
    ]));
    // Round trip the parameter file through a copy.
    let copy = write(
        &dir,
        "copy.params",
        &std::fs::read_to_string(&params).unwrap(),
    );
    let eval2 = stdout(&run(&[
        "eval",
        "-p",
        path_str(&copy),
        "-t",
        path_str(&trees),
    ]));
    assert_eq!(eval1, eval2);
}

#[test]
fn kl_worked_example_and_infinities() {
    let dir = TempDir::new().unwrap();
    let target = write(&dir, "target.txt", "0.5\t(A,B,(C,D));\n0.5\t(A,C,(B,D));\n");
    let estimate = write(&dir, "est.txt", "0.75\t(A,B,(C,D));\n0.25\t(A,C,(B,D));\n");
    let out = run(&[
        "kl",
        "--target",
        path_str(&target),
        "-p",
        path_str(&estimate),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let kl: f64 = stdout(&out).trim().parse().unwrap();
    assert!((kl - 0.1308).abs() < 1e-4, "kl = {kl}");

    // Identical distributions give zero.
    let out = run(&["kl", "--target", path_str(&target), "-p", path_str(&target)]);
    let kl: f64 = stdout(&out).trim().parse().unwrap();
    assert!(kl.abs() < 1e-12);

    // Zero estimate support with target-to-estimate and no floor: inf.
    let narrow = write(&dir, "narrow.txt", "1.0\t(A,B,(C,D));\n");
    let out = run(&[
        "kl",
        "--target",
        path_str(&target),
        "-p",
        path_str(&narrow),
        "--direction",
        "target-to-estimate",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "inf");

    // A non-normalized target reports its sum and exits 3.
    let bad = write(&dir, "bad.txt", "0.5\t(A,B,(C,D));\n0.4\t(A,C,(B,D));\n");
    let out = run(&["kl", "--target", path_str(&bad), "-p", path_str(&estimate)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("0.9"), "{}", stderr(&out));
}

#[test]
fn eval_taxa_mismatch_exits_3() {
    let dir = TempDir::new().unwrap();
    let trees = write(&dir, "trees.txt", "(A,B,(C,D));\n");
    let params = dir.path().join("sa.params");
    assert!(run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&params),
        "-m",
        "sbn-sa"
    ])
    .status
    .success());
    let other = write(&dir, "other.txt", "(A,B,(C,E));\n");
    let out = run(&["eval", "-p", path_str(&params), "-t", path_str(&other)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("do not match"));
}

#[test]
fn audit_sums_to_one_and_respects_cap() {
    let dir = TempDir::new().unwrap();
    let trees = write(
        &dir,
        "trees.txt",
        "(t1,t2,((t3,t4),(t5,t6)));\n(t1,t3,((t2,t4),(t5,t6)));\n",
    );
    let params = dir.path().join("sa.params");
    assert!(run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&params),
        "-m",
        "sbn-sa"
    ])
    .status
    .success());
    for space in ["unrooted", "rooted"] {
        let out = run(&["audit", "-p", path_str(&params), "--space", space]);
        assert!(out.status.success(), "{}", stderr(&out));
        let total: f64 = stdout(&out).trim().parse().unwrap();
        assert!((total - 1.0).abs() < 1e-9, "{space} audit = {total}");
    }

    // CCD audits over the unrooted space too; a rooted CCD audit is refused.
    let ccd = dir.path().join("ccd.params");
    assert!(run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&ccd),
        "-m",
        "ccd"
    ])
    .status
    .success());
    let out = run(&["audit", "-p", path_str(&ccd), "--space", "unrooted"]);
    let total: f64 = stdout(&out).trim().parse().unwrap();
    assert!((total - 1.0).abs() < 1e-9, "ccd audit = {total}");
    let out = run(&["audit", "-p", path_str(&ccd), "--space", "rooted"]);
    assert_eq!(out.status.code(), Some(3));

    // Eleven taxa exceed the default enumeration cap.
    let big = write(
        &dir,
        "big.txt",
        "(t01,t02,(t03,(t04,(t05,(t06,(t07,(t08,(t09,(t10,t11)))))))));\n",
    );
    let big_params = dir.path().join("big.params");
    assert!(run(&[
        "fit",
        "-i",
        path_str(&big),
        "-o",
        path_str(&big_params),
        "-m",
        "sbn-sa"
    ])
    .status
    .success());
    let out = run(&["audit", "-p", path_str(&big_params), "--space", "unrooted"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cap"));
}

#[test]
fn enumerate_counts_lines_and_cap() {
    let out = run(&["enumerate", "-n", "4"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 3);

    let out = run(&["enumerate", "-n", "8", "--count-only"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "10395");

    let out = run(&["enumerate", "-n", "12"]);
    assert_eq!(out.status.code(), Some(3));

    // The environment variable raises the cap (count-only stays cheap).
    let out = sbn()
        .args(["enumerate", "-n", "12", "--count-only"])
        .env("SBN_ENUM_CAP", "12")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "654729075");
}

#[test]
fn simulate_same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path, summary: &Path| {
        vec![
            "simulate".to_string(),
            "--seed".into(),
            "7".into(),
            "--n-taxa".into(),
            "5".into(),
            "--betas".into(),
            "0.1".into(),
            "--sample-sizes".into(),
            "30".into(),
            "--methods".into(),
            "srf,ccd,sbn-em".into(),
            "--replicates".into(),
            "2".into(),
            "-o".into(),
            out.to_str().unwrap().into(),
            "--summary".into(),
            summary.to_str().unwrap().into(),
        ]
    };
    let (a, sa) = (dir.path().join("a.csv"), dir.path().join("a_sum.csv"));
    let (b, sb) = (dir.path().join("b.csv"), dir.path().join("b_sum.csv"));
    assert!(sbn().args(args(&a, &sa)).output().unwrap().status.success());
    assert!(sbn().args(args(&b, &sb)).output().unwrap().status.success());
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "result CSVs differ between identical seeds"
    );
    assert_eq!(std::fs::read(&sa).unwrap(), std::fs::read(&sb).unwrap());

    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("method,beta,K,replicate,kl,fit_seconds\n"));
    // 3 methods x 1 beta x 1 K x 2 replicates.
    assert_eq!(text.lines().count(), 1 + 6);
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",0.000000"), "timing not zeroed: {line}");
    }
}

#[test]
fn fit_ml_requires_rooted_input_and_accepts_rooted() {
    let dir = TempDir::new().unwrap();
    let unrooted = write(&dir, "u.txt", "(A,B,(C,D));\n");
    let params = dir.path().join("ml.params");
    let out = run(&[
        "fit",
        "-i",
        path_str(&unrooted),
        "-o",
        path_str(&params),
        "-m",
        "sbn-ml",
    ]);
    assert_eq!(out.status.code(), Some(3));

    let rooted = write(&dir, "r.txt", "((A,B),(C,D));\n3\t(((A,B),C),D);\n");
    let out = run(&[
        "fit",
        "-i",
        path_str(&rooted),
        "-o",
        path_str(&params),
        "-m",
        "sbn-ml",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&params).unwrap();
    // Root relative frequencies 1/4 and 3/4.
    assert!(text.contains("2.5000000000000000e-1"));
    assert!(text.contains("7.5000000000000000e-1"));
}

#[test]
fn srf_fit_weights_and_eval() {
    let dir = TempDir::new().unwrap();
    let trees = write(&dir, "trees.txt", "(A,B,(C,D));\n3\t(A,C,(B,D));\n");
    let srf = dir.path().join("srf.txt");
    let out = run(&[
        "fit",
        "-i",
        path_str(&trees),
        "-o",
        path_str(&srf),
        "-m",
        "srf",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("unique_trees=2"));
    let text = std::fs::read_to_string(&srf).unwrap();
    assert!(text.contains("2.5000000000000000e-1"));
    assert!(text.contains("7.5000000000000000e-1"));
    // The SRF table is itself a loadable estimate.
    let out = run(&["eval", "-p", path_str(&srf), "-t", path_str(&trees)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert!(lines[0].starts_with("2.5000000000000000e-1"));
    assert!(
        lines[1].starts_with("7.5000000000000011e-1")
            || lines[1].starts_with("7.5000000000000000e-1")
    );
}
