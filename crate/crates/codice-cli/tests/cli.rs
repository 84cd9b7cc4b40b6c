//! End-to-end subcommand tests against the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn codice() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codice"))
}

fn run(args: &[&str]) -> Output {
    codice().args(args).output().expect("binary runs")
}

fn synth(dir: &Path, shape: &str, n: usize, seed: u64) {
    let out = run(&[
        "synth",
        "--shape",
        shape,
        "--n",
        &n.to_string(),
        "--noise",
        "0.05",
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let config = format!(
        r#"
[dataset]
source = "csv"
csv_path = "{dir}/data.csv"
schema_path = "{dir}/schema.toml"
target_column = "class"
target_kind = "classes"
test_fraction = 0.2
seed = 7

[model]
kind = "knn"
k = 5

[diffusion]
k = 5

[desired]
class = 1

[ga]
population_size = 16
max_iterations = 30

[benchmark]
n_instances = 2
seed = 3

[output]
dir = "{dir}/out"
{extra}
"#,
        dir = dir.display(),
    );
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn synth_writes_csv_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 120, 42);
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);
    assert_eq!(csv.lines().next().unwrap(), "x,y,z,class");
    assert!(dir.path().join("schema.toml").exists());
}

#[test]
fn synth_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "swiss-roll", 80, 9);
    synth(b.path(), "swiss-roll", 80, 9);
    assert_eq!(
        fs::read(a.path().join("data.csv")).unwrap(),
        fs::read(b.path().join("data.csv")).unwrap()
    );
}

#[test]
fn synth_minimal_swiss_roll() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "swiss-roll", 2, 1);
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn explain_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 11);
    let config = write_config(dir.path(), "");

    // Find a test instance of each predicted class by trying both desired
    // values on index 0: exactly one of them is "already desired".
    let valid = run(&[
        "explain",
        "--config",
        config.to_str().unwrap(),
        "--instance",
        "0",
        "--desired",
        "1",
    ]);
    let already = run(&[
        "explain",
        "--config",
        config.to_str().unwrap(),
        "--instance",
        "0",
        "--desired",
        "0",
    ]);
    let codes = [
        valid.status.code().unwrap(),
        already.status.code().unwrap(),
    ];
    assert!(codes.contains(&0), "one run should produce a counterfactual: {codes:?}");
    assert!(codes.contains(&2), "one run should hit the already-desired path: {codes:?}");

    // The successful run printed a JSON record.
    let ok_out = if codes[0] == 0 { &valid } else { &already };
    let text = String::from_utf8_lossy(&ok_out.stdout);
    assert!(text.contains("\"counterfactual\""));
    assert!(text.contains("\"per_feature_signs\""));
    assert!(dir.path().join("out/explain_record.json").exists());
}

#[test]
fn explain_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 13);
    let config = write_config(dir.path(), "");
    let out = run(&[
        "explain",
        "--config",
        config.to_str().unwrap(),
        "--instance",
        "0",
        "--desired",
        "1",
        "--lambda1",
        "0.9",
        "--proximity-mode",
        "weighted_l1",
    ]);
    assert!(out.status.code().unwrap() != 1, "explain errored: {out:?}");
    let effective =
        fs::read_to_string(dir.path().join("out/effective_config.toml")).unwrap();
    assert!(effective.contains("lambda1 = 0.9"), "{effective}");
    assert!(effective.contains("proximity_mode = \"weighted_l1\""));
}

#[test]
fn benchmark_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 17);
    let config = write_config(dir.path(), "");
    let out = run(&["benchmark", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("out/benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method,validity_pct,diffusion_mean"));
    assert!(lines[1].starts_with("CoDiCE_diff,"));
    assert!(lines[2].starts_with("CoDiCE_L1,"));
    assert!(dir.path().join("out/records.jsonl").exists());
    assert!(dir.path().join("out/model.json").exists());
    assert!(dir.path().join("out/diffusion.json").exists());
}

#[test]
fn ablate_emits_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 19);
    let config = write_config(dir.path(), "");
    let out = run(&["ablate", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("out/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.contains("proximity_only"));
    assert!(csv.contains("sparsity_only"));
    assert!(csv.contains("coherence_only"));
}

#[test]
fn sweep_emits_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 23);
    let config = write_config(dir.path(), "");
    let out = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "0,0.2,0.4,0.6,0.8,1.0",
    ]);
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().next().unwrap().starts_with("lambda1,lambda2,lambda3"));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 60, 29);
    let config = write_config(dir.path(), "nonsense_key = true");
    let out = run(&["benchmark", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nonsense_key"), "{err}");
}

#[test]
fn coords_export_when_enabled() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 31);
    let config = write_config(dir.path(), "emit_coords = true\npca_dims = 2");
    let out = run(&["benchmark", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let coords = fs::read_to_string(dir.path().join("out/coords.csv")).unwrap();
    assert!(coords.lines().next().unwrap().starts_with("id,role,pca0,pca1"));
    assert!(coords.contains(",counterfactual,"));
}

#[test]
fn artifacts_are_reused_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 41);
    let extra = String::new();
    let config_path = {
        // Same base config plus artifact caching paths.
        let base = fs::read_to_string(write_config(dir.path(), &extra)).unwrap();
        let patched = base
            .replace(
                "[model]\n",
                &format!(
                    "[model]\nartifact_path = \"{}/model_cache.json\"\n",
                    dir.path().display()
                ),
            )
            .replace(
                "[diffusion]\n",
                &format!(
                    "[diffusion]\nartifact_path = \"{}/dm_cache.json\"\n",
                    dir.path().display()
                ),
            );
        let p = dir.path().join("run.toml");
        fs::write(&p, patched).unwrap();
        p
    };
    let first = run(&["benchmark", "--config", config_path.to_str().unwrap()]);
    assert!(first.status.success(), "{first:?}");
    assert!(dir.path().join("model_cache.json").exists());
    assert!(dir.path().join("dm_cache.json").exists());
    let csv_first = fs::read_to_string(dir.path().join("out/benchmark.csv")).unwrap();

    // Second run loads the cached artifacts and reproduces the table.
    let second = run(&["benchmark", "--config", config_path.to_str().unwrap()]);
    assert!(second.status.success(), "{second:?}");
    let csv_second = fs::read_to_string(dir.path().join("out/benchmark.csv")).unwrap();
    assert_eq!(csv_first, csv_second);
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 43);
    let config = write_config(dir.path(), "");
    let env_out = dir.path().join("env_out");
    let out = codice()
        .args([
            "explain",
            "--config",
            config.to_str().unwrap(),
            "--instance",
            "0",
            "--desired",
            "1",
        ])
        .env("CODICE_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(1), "{out:?}");
    assert!(env_out.join("effective_config.toml").exists());
}

#[test]
fn benchmark_respects_worker_count() {
    // Same seed, different worker counts: identical tables.
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "s-curve", 150, 37);
    let config = write_config(dir.path(), "");
    let single = codice()
        .args(["benchmark", "--config", config.to_str().unwrap(), "--workers", "1"])
        .output()
        .unwrap();
    let csv_single = fs::read_to_string(dir.path().join("out/benchmark.csv")).unwrap();
    let multi = codice()
        .args(["benchmark", "--config", config.to_str().unwrap(), "--workers", "4"])
        .output()
        .unwrap();
    let csv_multi = fs::read_to_string(dir.path().join("out/benchmark.csv")).unwrap();
    assert!(single.status.success() && multi.status.success());
    assert_eq!(csv_single, csv_multi);
}
