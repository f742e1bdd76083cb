use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blockprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockprox"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_small(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let out = blockprox(&[
        "gen",
        "--m",
        "30",
        "--n",
        "60",
        "--sparsity",
        "6",
        "--seed",
        seed,
        "--out",
        &p,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    p
}

#[test]
fn gen_reports_certificate_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_small(dir.path(), "a.bpxi", "7");
    let b = gen_small(dir.path(), "b.bpxi", "7");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let out = blockprox(&[
        "gen",
        "--m",
        "30",
        "--n",
        "60",
        "--sparsity",
        "6",
        "--out",
        &a,
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.starts_with("KKT residual") && l.ends_with("<= 1e-8")),
        "{text}"
    );
}

#[test]
fn gen_rejects_bad_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.bpxi");
    let p = p.to_str().unwrap();
    for args in [
        ["--m", "0", "--n", "5", "--sparsity", "1"],
        ["--m", "5", "--n", "5", "--sparsity", "9"],
    ] {
        let mut full = vec!["gen"];
        full.extend(args);
        full.extend(["--out", p]);
        assert_eq!(blockprox(&full).status.code(), Some(2));
    }
}

#[test]
fn run_reaches_target_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_small(dir.path(), "i.bpxi", "3");
    let trace = dir.path().join("t.csv");
    let out = blockprox(&[
        "run",
        "--instance",
        &inst,
        "--block-size",
        "5",
        "--seed",
        "2",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let summary = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], &["rnbpg", "5", "2", "yes"]);

    let csv = fs::read_to_string(&trace).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "k,epoch,block,theta,inner_trials,f,gap,step_norm_sq,pg_norm,elapsed_s,kkt_residual"
    );
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    let gap: f64 = last[6].parse().unwrap();
    assert!(gap <= 1e-6);
}

#[test]
fn run_without_trace_streams_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_small(dir.path(), "i.bpxi", "4");
    let out = blockprox(&["run", "--instance", &inst, "--max-iters", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "header only: {stdout}");
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("method,"));
}

#[test]
fn run_is_reproducible_apart_from_timing() {
    let args = [
        "run",
        "--m",
        "30",
        "--n",
        "60",
        "--sparsity",
        "6",
        "--method",
        "rbcd_ls",
        "--seed",
        "5",
        "--block-size",
        "3",
    ];
    let strip = |out: Output| -> Vec<String> {
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(9);
                f.join(",")
            })
            .collect()
    };
    let a = strip(blockprox(&args));
    let b = strip(blockprox(&args));
    assert!(a.len() > 10);
    assert_eq!(a, b);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = blockprox(&[
        "run",
        "--m",
        "10",
        "--n",
        "10",
        "--sparsity",
        "2",
        "--method",
        "sgd",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_instance_source_is_a_usage_error() {
    assert_eq!(blockprox(&["run"]).status.code(), Some(2));
}

#[test]
fn line_search_failure_exits_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    fs::write(&cfg, "max_inner_trials = 1\n").unwrap();
    let out = blockprox(&[
        "run",
        "--m",
        "20",
        "--n",
        "30",
        "--sparsity",
        "3",
        "--method",
        "rbcd_ls",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("thetas") && err.contains("window"), "{err}");
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "eta = 1.1\nspeed = 3\n").unwrap();
    let out = blockprox(&[
        "run",
        "--m",
        "10",
        "--n",
        "10",
        "--sparsity",
        "2",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn bench_aggregates_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_small(dir.path(), "i.bpxi", "5");
    let traces = dir.path().join("traces");
    let runs = dir.path().join("runs.csv");
    let out = blockprox(&[
        "bench",
        "--instance",
        &inst,
        "--block-sizes",
        "1,5",
        "--seeds",
        "0..3",
        "--trace-dir",
        traces.to_str().unwrap(),
        "--runs",
        runs.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "method,block_size,runs,hits,misses,failed,mean_epochs,sd_epochs,median_epochs,mean_iters"
    );
    assert_eq!(lines.len(), 1 + 3 * 2);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(&f[2..6], &["3", "3", "0", "0"], "{line}");
    }
    assert_eq!(fs::read_dir(&traces).unwrap().count(), 18);
    assert_eq!(fs::read_to_string(&runs).unwrap().lines().count(), 19);
}

#[test]
fn bench_single_seed_has_zero_deviation_and_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_small(dir.path(), "i.bpxi", "6");
    let traces = dir.path().join("traces");
    let out = blockprox(&[
        "bench",
        "--instance",
        &inst,
        "--methods",
        "rbcd",
        "--block-sizes",
        "4",
        "--seeds",
        "9",
        "--jobs",
        "2",
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[7], "0e0");

    let single = dir.path().join("single.csv");
    let out = blockprox(&[
        "run",
        "--instance",
        &inst,
        "--method",
        "rbcd",
        "--block-size",
        "4",
        "--seed",
        "9",
        "--max-epochs",
        "1000",
        "--max-iters",
        "100000000",
        "--trace",
        single.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let strip = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(9);
                f.join(",")
            })
            .collect()
    };
    let cell = strip(fs::read_to_string(traces.join("rbcd_b4_s9.csv")).unwrap());
    assert_eq!(cell, strip(fs::read_to_string(&single).unwrap()));
}

#[test]
fn bench_marks_budget_misses() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_small(dir.path(), "i.bpxi", "8");
    let out = blockprox(&[
        "bench",
        "--instance",
        &inst,
        "--methods",
        "rbcd",
        "--seeds",
        "0,1",
        "--max-epochs",
        "0.5",
    ]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[2..6], &["2", "0", "2", "0"]);
    assert_eq!(row[6], "");
}
