//! End-to-end runs of the `latent-bo` binary on a tiny configuration.

use std::{
    collections::BTreeMap,
    fs,
    path::{Path, PathBuf},
    process::{Command, Output},
};

const TINY: &str = r#"
seeds = [1]
baseline = "t-lbo"

[task]
kind = "shape"
unlabeled_size = 64
labeled_size = 32

[model]
hidden = [8]
latent_dim = 2

[pretrain]
epochs = 2
batch_size = 32

[train]
epochs = 1
batch_size = 16

[bo]
budget = 6
retrain_every = 3
regret_samples = 4

[bo.acquisition]
starts = 4
incumbent_starts = 2
iters = 5

[analysis]
splits = 2
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-bo")).args(args).env("LATENT_BO_LOG", "off").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Every regular file under `dir`, keyed by relative path.
fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_baseline_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = run(&["bo-run", "--config", s(&cfg), "--baseline", "x-lbo", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline"));
}

#[test]
fn unknown_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("[bo]\n", "[bo]\nbugdet = 3\n"));
    let out = run(&["bo-run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bugdet"));
}

#[test]
fn invalid_value_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("budget = 6", "budget = 0"));
    let out = run(&["bo-run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn every_subcommand_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let mut outs = Vec::new();
    for rep in ["a", "b"] {
        let out = tmp.path().join(rep);
        for cmd in ["pretrain", "finetune", "bo-run", "analyze", "probe", "regret"] {
            ok(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
        }
        ok(&["regret", "--two-thirds", "--config", s(&cfg), "--out", s(&out)]);
        outs.push(files(&out));
    }
    let csvs = outs[0].keys().filter(|k| k.ends_with(".csv")).count();
    assert_eq!(csvs, 11, "only {csvs} csv files");
    assert_eq!(outs[0].keys().collect::<Vec<_>>(), outs[1].keys().collect::<Vec<_>>());
    for (k, v) in &outs[0] {
        assert!(v == &outs[1][k], "{k} differs between runs");
    }
}

#[test]
fn parallel_seeds_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("seeds = [1]", "seeds = [1, 2]"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["bo-run", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["bo-run", "--config", s(&cfg), "--out", s(&b), "--parallel", "2"]);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn loading_a_pretrain_run_matches_recomputing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let (pre, a, b) = (tmp.path().join("pre"), tmp.path().join("a"), tmp.path().join("b"));
    ok(&["pretrain", "--config", s(&cfg), "--out", s(&pre)]);
    ok(&["bo-run", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["bo-run", "--config", s(&cfg), "--out", s(&b), "--from", s(&pre)]);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn json_and_toml_configs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let toml_cfg = write_config(tmp.path(), "c.toml", TINY);
    let value: toml::Value = toml::from_str(TINY).unwrap();
    let json_cfg = write_config(tmp.path(), "c.json", &serde_json::to_string(&value).unwrap());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["regret", "--config", s(&toml_cfg), "--out", s(&a)]);
    ok(&["regret", "--config", s(&json_cfg), "--out", s(&b)]);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn seed_flag_replaces_the_seed_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    ok(&["pretrain", "--config", s(&cfg), "--out", s(tmp.path()), "--seed", "7"]);
    assert!(tmp.path().join("seed_7").join("pretrain.ckpt").exists());
    assert!(!tmp.path().join("seed_1").exists());
}

#[test]
fn outputs_follow_the_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = tmp.path().join("o");
    for cmd in ["bo-run", "analyze", "probe", "regret"] {
        ok(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
    }
    let dir = out.join("seed_1");

    let trace = fs::read_to_string(dir.join("trace_t-lbo.csv")).unwrap();
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "step,epoch,inner,acquired_f,incumbent_f,ei_value,regret_term,cum_regret");
    assert_eq!(rows.len(), 1 + 6);
    let inc: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(inc.windows(2).all(|w| w[1] >= w[0]));
    assert!(trace.lines().any(|l| l.starts_with("# config: {")));

    let sep: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("separation_finetuned_t-lbo.json")).unwrap()).unwrap();
    for key in ["mean_high_high", "mean_low_low", "mean_high_low", "inter_intra_ratio", "histogram_edges", "pairs"] {
        assert!(sep.get(key).is_some(), "separation report lacks {key}");
    }
    let gen: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("generalization_pretrained.json")).unwrap()).unwrap();
    assert_eq!(gen["per_split"].as_array().unwrap().len(), 2);
    for group in ["high_high", "low_low", "high_low"] {
        let h = fs::read_to_string(dir.join(format!("hist_pretrained_{group}.csv"))).unwrap();
        assert!(h.lines().any(|l| l == "bin_left,bin_right,count"));
    }

    let probe = fs::read_to_string(dir.join("probe_t-lbo.csv")).unwrap();
    let rows: Vec<&str> = probe.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,probability,flagged,candidates_tried,z_0,z_1");
    // The pretrained model plus one row per retraining.
    assert_eq!(rows.len(), 1 + 1 + 2);

    let regret = fs::read_to_string(dir.join("regret_t-lbo_fixed.csv")).unwrap();
    assert!(regret.lines().any(|l| l == "step,regret_term,std_error,cum_regret,average_regret"));
    assert!(out.join("summary_t-lbo.csv").exists());
}

#[test]
fn analyze_accepts_explicit_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = tmp.path().join("o");
    ok(&["pretrain", "--config", s(&cfg), "--out", s(&out)]);
    let ckpt = out.join("seed_1").join("pretrain.ckpt");
    ok(&["analyze", "--config", s(&cfg), "--out", s(&out), "--from", s(&out), "--checkpoint", s(&ckpt)]);
    assert!(out.join("seed_1").join("separation_pretrain.json").exists());
}
