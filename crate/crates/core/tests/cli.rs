//! Command-line behaviour: exit codes, determinism and output layout.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn demo_config() -> PathBuf {
    repo_root().join("configs/demo/run.toml")
}

fn algograph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_algograph"))
        .args(args)
        .env_remove("ALGOGRAPH_TEST_KEY")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = demo_config();
    for (dir, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        let out = algograph(&["run", "--config", s(&cfg), "--seed", seed, "--out", s(dir)]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    for file in ["trace.jsonl", "incumbent.txt", "credit.csv", "graph.json", "fitness.jsonl", "run.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    assert_ne!(fs::read(a.join("trace.jsonl")).unwrap(), fs::read(c.join("trace.jsonl")).unwrap());
}

#[test]
fn missing_api_key_is_a_config_error_before_any_query() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let port = listener.local_addr().unwrap().port();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("live.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 1\n\n[search]\nbudget = 1000\n\n[problem]\ndescription = \"x\"\n\n\
             [generator]\nkind = \"live\"\nbase_url = \"http://127.0.0.1:{port}/v1\"\nmodel = \"m\"\n\
             api_key_env = \"ALGOGRAPH_TEST_KEY\"\n\n\
             [evaluator]\nkind = \"synthetic\"\nbase = 0.0\nweights = []\n"
        ),
    )
    .unwrap();
    let out = algograph(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("ALGOGRAPH_TEST_KEY"), "{}", stderr(&out));
    assert!(listener.accept().is_err(), "a query was sent");
}

#[test]
fn usage_errors_exit_two() {
    let out = algograph(&["run", "--config", s(&demo_config()), "--out", "x", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = algograph(&["run", "--config", "/nonexistent/run.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/run.toml"), "{}", stderr(&out));
}

#[test]
fn malformed_profile_is_rejected_with_its_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("configs/theory/malformed.toml");
    let out = algograph(&["budget-theory", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("profile.mu.rate"), "{}", stderr(&out));
}

#[test]
fn shipped_profiles_pass_and_write_grids() {
    for name in ["light_tailed", "bounded"] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = repo_root().join(format!("configs/theory/{name}.toml"));
        let out = algograph(&["budget-theory", "--config", s(&cfg), "--out", s(tmp.path())]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        for file in ["report.txt", "z_grid.csv", "omega_star.csv"] {
            assert!(tmp.path().join(file).is_file(), "{name}: missing {file}");
        }
    }
}

#[test]
fn batch_writes_one_trace_per_run_and_feeds_bootstrap() {
    let tmp = tempfile::tempdir().unwrap();
    let bank = tmp.path().join("bank");
    let out = algograph(&[
        "batch",
        "--config",
        s(&demo_config()),
        "--runs",
        "3",
        "--parallelism",
        "2",
        "--out",
        s(&bank),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for i in 0..3 {
        assert!(bank.join(format!("run-{i:03}/trace.jsonl")).is_file());
    }
    let manifest = bank.join("bank.json");
    assert!(manifest.is_file());

    let out = algograph(&[
        "bootstrap",
        "--bank",
        s(&manifest),
        "--budget",
        "5000",
        "--iterations",
        "0",
        "--iterations",
        "3",
        "--trajectories",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,budget,n_cap,estimate,std_error"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn bootstrap_on_an_empty_bank_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("bank.json");
    fs::write(&manifest, "{\"master_seed\": 0, \"runs\": []}\n").unwrap();
    let out = algograph(&["bootstrap", "--bank", s(&manifest), "--trajectories", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn credit_and_export_graph_read_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = algograph(&["run", "--config", s(&demo_config()), "--out", s(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let credit = tmp.path().join("credit.csv");
    let out = algograph(&["credit", "--run", s(&run), "--out", s(&credit)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&credit).unwrap().lines().count(), 6);

    let out = algograph(&["export-graph", "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.trim_end().ends_with('}'));
}
