use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spy_cli::config::ExperimentConfig;

const SMALL: &str = r#"
name = "small"
seeds = [7]
target = 1e-8
[problem]
support_target = 6
workers = 4
[problem.data]
kind = "synthetic-lasso"
d = 200
m = 100
sparsity = 0.96
noise = 0.5
seed = 31
[algorithm]
kind = "reconditioned"
c_factor = 1.0
criterion = "c1-simple"
"#;

fn spy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spy")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn defaults_parse_back() {
    let o = spy(&["defaults"]);
    assert!(o.status.success());
    let c = ExperimentConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(c, ExperimentConfig::default());
}

#[test]
fn same_seed_same_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = spy(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);
}

#[test]
fn row_counts_follow_the_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", &SMALL.replace("seeds = [7]", "seeds = [1, 2]"));
    let out = tmp.path().join("o");
    let o = spy(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let mut total = 0;
    for seed in [1, 2] {
        let dir = out.join(format!("seed_{seed}"));
        let trace = rows(&dir.join("trace.csv"));
        let obj = rows(&dir.join("objective.csv"));
        let per_seed = &summary["per_seed"].as_array().unwrap().iter().find(|s| s["seed"] == seed).unwrap();
        assert_eq!(trace.len() as u64, per_seed["iterations"].as_u64().unwrap());
        // k is 0..n in order
        assert!(trace.iter().enumerate().all(|(i, r)| r[0].parse::<usize>().unwrap() == i));
        let up: u64 = trace.iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
        let down: u64 = trace.iter().map(|r| r[3].parse::<u64>().unwrap()).sum();
        let last = rows(&dir.join("outer.csv")).pop().unwrap();
        let (cum_up, cum_down): (u64, u64) = (last[4].parse().unwrap(), last[5].parse().unwrap());
        // the remainder is the priming and center broadcasts
        assert!(up <= cum_up && down <= cum_down);
        assert_eq!(obj.last().unwrap()[1].parse::<u64>().unwrap(), cum_up + cum_down);
        assert_eq!(cum_up + cum_down, per_seed["exchanges"].as_u64().unwrap());
        total += obj.len();
    }
    for f in ["support_vs_iters.csv", "subopt_vs_iters.csv", "subopt_vs_exchanges.csv"] {
        assert_eq!(rows(&out.join(f)).len(), total, "{f}");
    }
    let band = rows(&out.join("subopt_vs_iters_band.csv"));
    let n1 = rows(&out.join("seed_1/objective.csv")).len();
    let n2 = rows(&out.join("seed_2/objective.csv")).len();
    assert_eq!(band.len(), n1.max(n2));
}

#[test]
fn invalid_config_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("target = 1e-8", "target = -1.0").replace("c_factor = 1.0", "c_factor = -2.0");
    let cfg = write(tmp.path(), "bad.toml", &bad);
    let o = spy(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("target") && err.contains("c must be positive"), "{err}");

    let typo = write(tmp.path(), "typo.toml", &SMALL.replace("workers", "wrokers"));
    assert_eq!(spy(&["run", "--config", typo.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(spy(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(spy(&["run", "--preset", "nope"]).status.code(), Some(2));
}

#[test]
fn missed_target_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("target = 1e-8", "target = 1e-8\nmax_epochs = 3").replace(
        "kind = \"reconditioned\"\nc_factor = 1.0\ncriterion = \"c1-simple\"",
        "kind = \"davepg\"",
    );
    let cfg = write(tmp.path(), "short.toml", &text);
    let out = tmp.path().join("o");
    let o = spy(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    // three epochs plus the initial point
    assert_eq!(rows(&out.join("seed_7/objective.csv")).len(), 4);
}

#[test]
fn compare_merges_and_checks_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.toml", SMALL);
    let b = write(
        tmp.path(),
        "b.toml",
        &SMALL.replace("name = \"small\"", "name = \"dave\"").replace(
            "kind = \"reconditioned\"\nc_factor = 1.0\ncriterion = \"c1-simple\"",
            "kind = \"davepg\"",
        ),
    );
    let out = tmp.path().join("o");
    let o = spy(&["compare", "--config", a.to_str().unwrap(), b.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let merged = rows(&out.join("subopt_vs_exchanges.csv"));
    let labels: std::collections::BTreeSet<String> = merged.iter().map(|r| r[0].to_string()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), vec!["dave".to_string(), "small".to_string()]);
    let cx = rows(&out.join("complexity.csv"));
    assert_eq!(cx.len(), 2);
    assert!(cx.iter().all(|r| !r[2].is_empty()));
    assert!(out.join("00_small/seed_7/trace.csv").is_file());

    let other = write(tmp.path(), "c.toml", &SMALL.replace("seed = 31", "seed = 32"));
    let o = spy(&["compare", "--config", a.to_str().unwrap(), other.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("same problem"));
}

#[test]
fn warmstart_counters_continue() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[warmstart]\nsubopt = 1e-2\ndensity = 0.1\n[warmstart.algorithm]\nkind = \"davepg\"\n");
    let cfg = write(tmp.path(), "w.toml", &text);
    let out = tmp.path().join("o");
    let o = spy(&["warmstart", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let w = &summary["per_seed"][0]["warmstart"];
    assert_eq!(w["skipped"], false);
    let phase1 = w["exchanges"].as_u64().unwrap();
    let ex: Vec<u64> = rows(&out.join("seed_7/objective.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(ex.windows(2).all(|p| p[1] > p[0]));
    assert!(ex.contains(&phase1));
    assert!(*ex.last().unwrap() > phase1);
}

#[test]
fn warmstart_skipped_when_trigger_holds_at_start() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[warmstart]\nsubopt = 1e6\ndensity = 1.0\n[warmstart.algorithm]\nkind = \"davepg\"\n");
    let cfg = write(tmp.path(), "w.toml", &text);
    let out = tmp.path().join("o");
    assert_eq!(spy(&["warmstart", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["per_seed"][0]["warmstart"]["skipped"], true);
    assert_eq!(summary["per_seed"][0]["warmstart"]["exchanges"], 0);
}

#[test]
fn unreachable_trigger_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[warmstart]\nsubopt = 1e-2\ndensity = 0.001\nmax_epochs = 20\n[warmstart.algorithm]\nkind = \"davepg\"\n"
    );
    let cfg = write(tmp.path(), "w.toml", &text);
    let o = spy(&["warmstart", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn seeds_and_mode_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("o");
    let o = spy(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "0..2",
        "--mode",
        "concurrent",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("seed_0").is_dir() && out.join("seed_1").is_dir() && !out.join("seed_7").exists());
    let used = ExperimentConfig::from_toml(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(used.seeds, vec![0, 1]);
    assert_eq!(used.mode, spy_cli::config::Mode::Concurrent);
}

#[test]
fn presets_print_and_write() {
    let o = spy(&["presets"]);
    assert!(o.status.success());
    let listing = String::from_utf8(o.stdout).unwrap();
    for name in spy_cli::presets::NAMES {
        assert!(listing.contains(name));
    }
    let tmp = tempfile::tempdir().unwrap();
    let o = spy(&["presets", "fig-lasso", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let written: Vec<_> = fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(written.len(), 5);
    let p = spy_cli::presets::preset("fig-lasso").unwrap();
    for c in p.configs {
        let back = ExperimentConfig::load(&tmp.path().join(format!("{}.toml", c.name))).unwrap();
        assert_eq!(back, c);
    }
}
