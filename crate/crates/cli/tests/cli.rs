//! End-to-end tests of the `gctf` binary: file handling, exit codes,
//! output contracts, and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = "\
index i 6
index j 5
index k 4
index r 2
factor A i,r
factor B j,r
factor C k,r
observe X1 i,j,k = A,B,C
";

fn gctf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gctf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_cp_fixture(dir: &Path) -> (String, String) {
    let model = dir.join("cp.model");
    fs::write(&model, MODEL).unwrap();
    // planted 6x5x4 data on the full support
    let mut coo = String::from("# indices: i=6 j=5 k=4\n");
    for i in 0..6u32 {
        for j in 0..5u32 {
            for k in 0..4u32 {
                let value = ((i + 1) * (j + 1)) as f64 * 0.2 + (k as f64) * 0.3;
                coo.push_str(&format!("{i} {j} {k} {value}\n"));
            }
        }
    }
    let data = dir.join("x1.coo");
    fs::write(&data, coo).unwrap();
    (
        model.to_string_lossy().into_owned(),
        data.to_string_lossy().into_owned(),
    )
}

#[test]
fn fit_writes_factors_trace_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, data) = write_cp_fixture(tmp.path());
    let out = gctf(
        &[
            "fit", &model, &data, "--algo", "vb", "--iters", "30", "--seed", "7", "--out",
            "run1",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for factor in ["A", "B", "C"] {
        let text = fs::read_to_string(tmp.path().join(format!("run1/factor_{factor}.txt")))
            .unwrap();
        assert!(text.contains("# columns: "));
        assert!(text.contains(" value C D E L"), "VB columns missing");
    }
    let trace = fs::read_to_string(tmp.path().join("run1/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,seconds\n"));
    assert!(trace.lines().count() > 1);
    let manifest = fs::read_to_string(tmp.path().join("run1/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["command"], "fit");
    assert_eq!(parsed["seed"], 7);
}

#[test]
fn fit_is_reproducible_from_equal_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, data) = write_cp_fixture(tmp.path());
    for out_dir in ["a", "b"] {
        let out = gctf(
            &[
                "fit", &model, &data, "--algo", "em", "--iters", "20", "--seed", "3", "--out",
                out_dir,
            ],
            tmp.path(),
        );
        assert!(out.status.success());
    }
    for factor in ["A", "B", "C"] {
        let a = fs::read(tmp.path().join(format!("a/factor_{factor}.txt"))).unwrap();
        let b = fs::read(tmp.path().join(format!("b/factor_{factor}.txt"))).unwrap();
        assert_eq!(a, b, "factor {factor} differs between identical runs");
    }
    let a = fs::read_to_string(tmp.path().join("a/trace.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("b/trace.csv")).unwrap();
    let strip = |text: &str| {
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
    };
    // identical objectives; wall seconds may differ
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn missing_data_file_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, _) = write_cp_fixture(tmp.path());
    let out = gctf(
        &["fit", &model, "nope.coo", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.coo"), "stderr: {stderr}");
}

#[test]
fn model_syntax_error_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("bad.model");
    fs::write(&model, "index i 4\nfactor\n").unwrap();
    let out = gctf(
        &["fit", model.to_str().unwrap(), "x.coo", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.model") && stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn eval_emits_per_run_rows_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("cp.model");
    fs::write(&model, MODEL).unwrap();
    // binary data so AUC is defined
    let mut coo = String::from("# indices: i=6 j=5 k=4\n");
    for i in 0..6u32 {
        for j in 0..5u32 {
            for k in 0..4u32 {
                let value = u32::from((i + j + k) % 2 == 0);
                coo.push_str(&format!("{i} {j} {k} {value}\n"));
            }
        }
    }
    let data = tmp.path().join("x1.coo");
    fs::write(&data, coo).unwrap();
    let out = gctf(
        &[
            "eval",
            model.to_str().unwrap(),
            data.to_str().unwrap(),
            "--hide",
            "0.6",
            "--algo",
            "vb",
            "--repeats",
            "3",
            "--iters",
            "25",
            "--seed",
            "5",
            "--out",
            "ev",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("ev/eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 3 + 1, "header, 3 runs, summary: {csv}");
    assert_eq!(
        lines[0],
        "algorithm,model,hide_fraction,seed,auc,rmse,iterations,wall_seconds"
    );
    assert!(lines[4].contains("summary"));
    assert!(lines[4].contains('\u{b1}'), "summary uses mean±std: {}", lines[4]);
    for line in &lines[1..4] {
        assert!(line.starts_with("vb,cp,0.6,"));
    }
}

#[test]
fn eval_slices_scope_requires_index() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, data) = write_cp_fixture(tmp.path());
    let out = gctf(
        &[
            "eval", &model, &data, "--hide", "0.5", "--scope", "slices", "--out", "ev",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--slice-index"));
}

#[test]
fn bench_trajectory_is_monotone_in_time_and_seed_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = gctf(
            &[
                "bench", "--dims", "12", "--rank", "2", "--observed-frac", "0.3", "--noise",
                "0.1", "--iters", "8", "--seed", "11", "--algo", "vb", "--out", dir,
            ],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(tmp.path().join(dir).join("bench_run0.csv")).unwrap()
    };
    let a = run("b1");
    let b = run("b2");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "iteration,elapsed_seconds,heldout_rmse");
    let mut prev = 0.0;
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let elapsed: f64 = fields[1].parse().unwrap();
        assert!(elapsed >= prev, "elapsed went backwards: {line}");
        prev = elapsed;
    }
    let rmse_col = |text: &str| {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(rmse_col(&a), rmse_col(&b), "same seed must give same RMSE column");
}

#[test]
fn convert_reindexes_sorts_and_deduplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.txt");
    fs::write(&input, "2 1 1 3.5\n1 1 1 5.0\n1 1 1 5.0\n").unwrap();
    let out = gctf(
        &[
            "convert",
            input.to_str().unwrap(),
            "--reindex",
            "--out",
            "clean.coo",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("clean.coo")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# indices: i0=2 i1=1 i2=1");
    assert_eq!(lines[1], "0 0 0 5");
    assert_eq!(lines[2], "1 0 0 3.5");
    assert_eq!(lines.len(), 3);
}

#[test]
fn convert_rejects_conflicting_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.txt");
    fs::write(&input, "1 1 1 5.0\n1 1 1 6.0\n").unwrap();
    let out = gctf(
        &[
            "convert",
            input.to_str().unwrap(),
            "--reindex",
            "--out",
            "clean.coo",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conflicting duplicate"));
}

#[test]
fn convert_honors_indices_override() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.txt");
    fs::write(&input, "0 0 1\n1 2 2\n").unwrap();
    let out = gctf(
        &[
            "convert",
            input.to_str().unwrap(),
            "--indices",
            "u=5,v=9",
            "--out",
            "clean.coo",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("clean.coo")).unwrap();
    assert!(text.starts_with("# indices: u=5 v=9\n"));
}

#[test]
fn env_variables_override_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, data) = write_cp_fixture(tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_gctf"))
        .args(["fit", &model, &data, "--out", "enved"])
        .env("GCTF_ALGO", "vb")
        .env("GCTF_ITERS", "5")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.path().join("enved/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["algo"], "vb");
    assert_eq!(parsed["iters"], 5);
}
