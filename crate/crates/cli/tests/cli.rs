use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use origins_core::bundle::{RUN_FILES, YEAR_FILES};
use sha2::{Digest, Sha256};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn origins(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_origins"))
        .arg("--data-dir")
        .arg(fixtures())
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("spawn origins")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, "n_captives = 400\n\n[search]\nn_captives = 300\nc_max = [0.0, 3.0]\nepsilon = [0.1]\nreward_sd = [25.0]\n").unwrap();
    p
}

#[test]
fn krig_writes_both_grids_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = origins(out, &["krig", "--year", "1828"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["intensity.json", "pdf.json"] {
        assert_eq!(digest(&a.join("1828").join(f)), digest(&b.join("1828").join(f)), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest-krig.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 2);
    assert!(manifest["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("conflicts.csv")));
}

#[test]
fn empty_year_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = origins(tmp.path(), &["krig", "--year", "1827"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("1827"), "{}", stderr(&o));
    assert!(!tmp.path().join("1827").exists());
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[mdp]\nepsilon = 1.5\n").unwrap();
    let o = origins(tmp.path(), &["--config", cfg.to_str().unwrap(), "krig", "--year", "1828"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));

    let o = origins(tmp.path(), &["simulate", "--years", "1830-1824"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn print_defaults_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = origins(tmp.path(), &["config", "--print-defaults"]);
    assert_eq!(code(&o), 0);
    let cfg = tmp.path().join("defaults.toml");
    fs::write(&cfg, &o.stdout).unwrap();
    let again = origins(tmp.path(), &["--config", cfg.to_str().unwrap(), "config"]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn simulate_score_export_and_load() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let results = tmp.path().join("results");
    let o = origins(&results, &["--config", cfg, "simulate", "--years", "1824-1826"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for year in 1824..=1826 {
        for f in RUN_FILES.iter().chain(&["run.json"]) {
            assert!(results.join(year.to_string()).join(f).is_file(), "{year}/{f}");
        }
    }

    // scoring the CSVs reproduces the in-memory score written at simulation time
    let o = origins(&results, &["--config", cfg, "score"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scores: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(results.join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores.len(), 3);
    for s in &scores {
        let run: serde_json::Value = serde_json::from_slice(
            &fs::read(results.join(s["year"].to_string()).join("run.json")).unwrap(),
        )
        .unwrap();
        let (a, b) = (s["total"].as_f64().unwrap(), run["score"]["total"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    let bundle = tmp.path().join("bundle");
    let o = origins(&bundle, &["--config", cfg, "export-bundle", "--results", results.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for year in 1824..=1826 {
        let files: Vec<String> = fs::read_dir(bundle.join(year.to_string()))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(files.len(), YEAR_FILES.len(), "{files:?}");
        for f in YEAR_FILES {
            assert!(files.iter().any(|x| x == f), "{year}/{f}");
        }
    }
    let store = origins_server::BundleStore::open(&bundle).unwrap();
    assert_eq!(store.years(), vec![1824, 1825, 1826]);

    // a missing run artifact aborts the export and names the file
    fs::remove_file(results.join("1825").join("simulation.csv")).unwrap();
    let o = origins(&tmp.path().join("bundle2"), &["export-bundle", "--results", results.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("simulation.csv"), "{}", stderr(&o));
    assert!(!tmp.path().join("bundle2").join("bundle.json").exists());
}

#[test]
fn simulate_is_reproducible_and_records_failed_years() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&origins(&a, &["--config", cfg, "simulate", "--years", "1826-1828"])), 3);
    assert_eq!(code(&origins(&b, &["--config", cfg, "simulate", "--years", "1826,1828,1827"])), 3);
    for year in ["1826", "1828"] {
        for f in RUN_FILES {
            assert_eq!(digest(&a.join(year).join(f)), digest(&b.join(year).join(f)), "{year}/{f}");
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest-simulate.json")).unwrap()).unwrap();
    let failures: BTreeMap<String, String> = serde_json::from_value(manifest["failures"].clone()).unwrap();
    assert_eq!(failures.keys().collect::<Vec<_>>(), vec!["1827"]);

    let reseeded = tmp.path().join("c");
    origins(&reseeded, &["--config", cfg, "--seed", "7", "simulate", "--years", "1826"]);
    let csv = |d: &Path| digest(&d.join("1826").join("simulation.csv"));
    assert_ne!(csv(&a), csv(&reseeded));
}

#[test]
fn search_ranks_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = origins(tmp.path(), &["--config", cfg.to_str().unwrap(), "search", "--years", "1825,1832"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ranked: Vec<serde_json::Value> = serde_json::from_slice(&fs::read(tmp.path().join("search.json")).unwrap()).unwrap();
    assert_eq!(ranked.len(), 2);
    let scores: Vec<Option<f64>> = ranked.iter().map(|c| c["score"].as_f64()).collect();
    if let [Some(a), Some(b)] = scores[..] {
        assert!(a <= b);
    }
}
