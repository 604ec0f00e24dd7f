use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use specflow::flowopt::OptResult;
use specflow::scheduler::IndexValueTables;

const TINY_MODEL: &str = r#"
name = "tiny"
fft_size = 8
alpha = 4

[[layer]]
name = "c1"
in_channels = 4
out_channels = 16
h_in = 24
w_in = 24
k = 3

[[layer]]
name = "c2"
in_channels = 16
out_channels = 16
h_in = 24
w_in = 24
k = 3
"#;

fn specflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specflow")).args(args).env("SOURCE_DATE_EPOCH", "0").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn tiny_model(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY_MODEL).unwrap();
    p.display().to_string()
}

#[test]
fn analyze_matches_golden() {
    let o = specflow(&["analyze"]);
    assert!(o.status.success());
    let want = include_str!("golden/vgg16_k8_analyze.csv");
    assert_eq!(stdout(&o), want);
    let rows = data_rows(want);
    assert_eq!(rows.len(), 48);
    assert!(rows.iter().all(|r| r[0] != "conv1_1"));
}

#[test]
fn analyze_writes_json_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = specflow(&["analyze", "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("analyze.json")).unwrap()).unwrap();
    assert_eq!(v["manifest"]["command"], "analyze");
    assert_eq!(v["manifest"]["config"], "vgg16-k8");
    assert_eq!(v["manifest"]["seeds"][0], 7);
    assert_eq!(v["manifest"]["timestamp"], "1970-01-01T00:00:00Z");
    assert_eq!(v["layers"].as_array().unwrap().len(), 12);
    let csv = fs::read_to_string(out.join("analyze.csv")).unwrap();
    assert!(csv.starts_with("# schema: specflow-analyze/1\n"));
    assert!(csv.contains("# seeds: 7\n"));
}

#[test]
fn empty_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.toml");
    fs::write(&p, "fft_size = 8\nalpha = 4\n").unwrap();
    let o = specflow(&["--config", p.to_str().unwrap(), "analyze"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no layers"));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(specflow(&["schedule", "--pattern", "stripes"]).status.code(), Some(2));
    assert_eq!(specflow(&["--builtin", "alexnet", "analyze"]).status.code(), Some(2));
    assert_eq!(specflow(&["--tau-ms", "0", "analyze"]).status.code(), Some(2));
}

#[test]
fn optimize_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = specflow(&["optimize", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("optimize.json")).unwrap()).unwrap();
    let res = OptResult::from_json(&v["result"].to_string()).unwrap();
    assert_eq!((res.arch.p_par, res.arch.n_par), (16, 64));
    assert_eq!(OptResult::from_json(&res.to_json()).unwrap(), res);
    let csv = fs::read_to_string(dir.path().join("optimize.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 12);
    assert!(csv.contains(&format!("# total_transfers: {}\n", res.total_transfers())));
}

#[test]
fn infeasible_budget_exits_3_naming_layer() {
    let o = specflow(&["--bram-budget", "100", "optimize"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conv1_2"));
}

#[test]
fn schedule_random_seeds_give_one_row_each() {
    let o = specflow(&["schedule", "--methods", "random", "--seeds", "2", "--r", "4,8", "--channels", "1"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    let weighted: Vec<_> = rows.iter().filter(|r| r[4] == "weighted").collect();
    assert_eq!(weighted.len(), 4);
    for r in ["4", "8"] {
        assert_eq!(weighted.iter().filter(|w| w[3] == r).count(), 2);
    }
}

#[test]
fn schedule_saturates_at_full_replication() {
    // r = K^2 / alpha lets every kernel index be fetched in one cycle
    let o = specflow(&["schedule", "--methods", "greedy", "--r", "16", "--channels", "1"]);
    let rows = data_rows(&stdout(&o));
    let mu: f64 = rows.iter().find(|r| r[4] == "weighted").unwrap()[8].parse().unwrap();
    assert!(mu > 0.9, "{mu}");
}

#[test]
fn schedule_emits_readable_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_model(dir.path());
    let out = dir.path().join("s");
    let o = specflow(&["--config", &cfg, "--out", out.to_str().unwrap(), "schedule", "--r", "4", "--n-kernels", "16"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = IndexValueTables::read_binary(fs::File::open(out.join("tables/clustered/c1.ivt")).unwrap()).unwrap();
    assert_eq!(t.lanes, 16);
    let j = IndexValueTables::from_json(&fs::read_to_string(out.join("tables/clustered/c1.json")).unwrap()).unwrap();
    assert_eq!(j, t);
}

#[test]
fn simulate_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_model(dir.path());
    let arch = ["--p-par", "4", "--n-par", "8", "--replicas", "4"];
    for extra in [&["--ps", "8", "--ns", "16"][..], &[][..], &["--plan", "flow3", "--cycles", "3"][..]] {
        let mut args = vec!["--config", cfg.as_str(), "--bram-budget", "100000", "simulate"];
        args.extend(arch);
        args.extend(extra);
        let o = specflow(&args);
        assert!(o.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        let rows = data_rows(&stdout(&o));
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert_eq!(&r[14..], ["true", "true"], "{extra:?} {r:?}");
        }
    }
}

#[test]
fn simulate_rejects_unknown_layer() {
    assert_eq!(specflow(&["simulate", "--layer", "conv9_9", "--cycles", "1"]).status.code(), Some(2));
}

#[test]
fn verify_tiny_passes_quickly() {
    let start = Instant::now();
    let o = specflow(&["verify", "--sizes", "tiny"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn verify_zero_tolerance_fails_fft() {
    let o = specflow(&["verify", "--sizes", "tiny", "--tolerance-scale", "0"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("FAIL fft-vs-dft"));
}
