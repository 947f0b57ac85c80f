use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use btf_cli::config::RunConfig;
use btf_core::io::read_long_csv;
use btf_core::{LikelihoodSpec, Sampler};
use serde_json::Value;

const GAUSSIAN_FIT: &str = "\
[model]
likelihood = \"gaussian\"
d = 2
k = 1
rho2 = 0.1

[sampler]
sweeps = 200
burn_in = 100
checkpoint_every = 50
";

fn btf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = btf(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A 3×3×4 Gaussian fixture and its fit config.
fn fixture(tmp: &Path) -> (PathBuf, PathBuf) {
    let gen = tmp.join("gen");
    ok(&["generate", "gaussian", "--rows", "3", "--cols", "3", "--doses", "4", "--seed", "11", "--out", s(&gen)]);
    let cfg = tmp.join("fit.toml");
    fs::write(&cfg, GAUSSIAN_FIT).unwrap();
    (gen.join("data.csv"), cfg)
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["generate", "poisson", "--seed", "7", "--out", s(&a)]);
    ok(&["generate", "poisson", "--seed", "7", "--out", s(&b)]);
    for f in ["data.csv", "heldout.csv", "truth.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn default_poisson_instance_is_11_by_12_by_20() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["generate", "poisson", "--out", s(tmp.path())]);
    let truth = fs::read_to_string(tmp.path().join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 11 * 12 * 20);
    let last = truth.lines().last().unwrap();
    assert!(last.starts_with("10,11,19,"), "{last}");
    let held = fs::read_to_string(tmp.path().join("heldout.csv")).unwrap();
    assert_eq!(held.lines().count(), 1 + 3 * 3 * 20);
}

#[test]
fn invalid_kind_is_a_usage_error() {
    let o = btf(&["generate", "lognormal"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid value"));
}

#[test]
fn missing_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = fixture(tmp.path());
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, GAUSSIAN_FIT.replace("burn_in = 100\n", "")).unwrap();
    let out = tmp.path().join("out");
    let o = btf(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampler.burn_in"));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("sampler.burn_in"));
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn tiny_gaussian_fit_emits_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let out = tmp.path().join("fit");
    let start = Instant::now();
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    assert!(start.elapsed() < Duration::from_secs(60));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    for f in ["checkpoint.json", "curves.csv", "dic.json", "fit.json", "trace.csv", "v_samples.csv", "w_samples.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
        assert!(listed.contains(&f), "{f} not in manifest");
    }
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 201);
    assert_eq!(fs::read_to_string(out.join("curves.csv")).unwrap().lines().count(), 1 + 36);
    assert!(json(&out.join("dic.json"))["dic"]["dic"].is_f64());
}

#[test]
fn grid_runs_every_combination_and_picks_min_dic() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let out = tmp.path().join("grid");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&out), "--grid", "rho2=0.001,0.01,0.1", "D=1,3"]);
    let sel = json(&out.join("selection.json"));
    let runs = sel["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 6);
    let best = runs
        .iter()
        .min_by(|a, b| a["dic"]["dic"].as_f64().unwrap().total_cmp(&b["dic"]["dic"].as_f64().unwrap()))
        .unwrap();
    assert_eq!(sel["selected"], best["label"]);
    for r in runs {
        assert!(out.join(r["label"].as_str().unwrap()).join("curves.csv").exists());
    }
    assert!(fs::read_to_string(out.join("selection.txt")).unwrap().contains("minimum DIC"));
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let full = tmp.path().join("full");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--seed", "5", "--out", s(&full)]);

    // a run interrupted after 120 sweeps, as the periodic checkpoint leaves it
    let resolved = RunConfig::parse(GAUSSIAN_FIT).unwrap().resolve(tmp.path()).unwrap();
    let y = read_long_csv(fs::File::open(&data).unwrap()).unwrap();
    let fc = resolved.fit_config(LikelihoodSpec::Gaussian { nu2: resolved.init_nu2 }, 5);
    let mut sampler = Sampler::new(&y, fc).unwrap();
    for _ in 0..120 {
        sampler.sweep().unwrap();
    }
    let part = tmp.path().join("part");
    fs::create_dir_all(&part).unwrap();
    fs::write(part.join("checkpoint.json"), serde_json::to_vec(&sampler.checkpoint()).unwrap()).unwrap();

    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--seed", "5", "--out", s(&part), "--resume"]);
    for f in ["checkpoint.json", "curves.csv", "dic.json", "trace.csv", "w_samples.csv", "v_samples.csv"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(part.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_without_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let o = btf(&["fit", "--data", s(&data), "--config", s(&cfg), "--resume", "--out", s(&tmp.path().join("x"))]);
    assert!(!o.status.success());
}

#[test]
fn single_trial_benchmark_reports_na() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["benchmark", "gass-table1", "--m", "50", "--trials", "1", "--out", s(tmp.path())]);
    let report = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("± n/a"), "{report}");
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("method,trial,metric,value\n"));
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
}

#[test]
fn poisson_table_has_its_columns() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["benchmark", "poisson-table2", "--trials", "1", "--burn-in", "10", "--samples", "10", "--out", s(tmp.path())]);
    let report = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    for col in ["NLL", "MAE", "RMSE"] {
        assert!(report.contains(col), "{report}");
    }
    assert!(json(&tmp.path().join("manifest.json"))["notes"]["nll"].is_string());
}

#[test]
fn zero_trials_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = btf(&["benchmark", "gass-table1", "--trials", "0", "--out", s(tmp.path())]);
    assert!(!o.status.success());
}

#[test]
fn predict_and_metrics_on_a_finished_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let fit = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&fit)]);
    let pred = tmp.path().join("pred");
    ok(&["predict", "--from", s(&fit), "--data", s(&data), "--level", "0.5", "--out", s(&pred)]);
    let p = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(p.lines().count(), 1 + 36);
    let met = tmp.path().join("met");
    let truth = tmp.path().join("gen").join("truth.csv");
    ok(&["metrics", "--pred", s(&pred.join("predictions.csv")), "--truth", s(&truth), "--out", s(&met)]);
    let m = json(&met.join("metrics.json"));
    assert_eq!(m["cells"], 36);
    assert!(m["rmse"].as_f64().unwrap() < 1.0);
    let cov = m["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&cov));
}

#[test]
fn plate_fit_estimates_the_mixture() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("plates");
    ok(&["generate", "plates", "--rows", "4", "--cols", "3", "--out", s(&gen)]);
    let cfg = tmp.path().join("dose.toml");
    fs::write(
        &cfg,
        "[model]\nlikelihood = \"gamma-mixture\"\nd = 2\nk = 1\nrho2 = 0.01\n[sampler]\nsweeps = 60\nburn_in = 30\n[pipetting]\nmin_plates = 3\n",
    )
    .unwrap();
    let out = tmp.path().join("fit");
    ok(&["fit", "--plates", s(&gen.join("plates.csv")), "--config", s(&cfg), "--out", s(&out)]);
    for f in ["mixture.json", "pipetting.json", "predictive.csv", "curves.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    for l in curves.lines().skip(1) {
        let mean: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!((-1e-9..=1.0 + 1e-9).contains(&mean), "{l}");
    }
}

#[test]
fn replay_reproduces_and_detects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(tmp.path());
    let fit = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--out", s(&fit)]);
    let again = tmp.path().join("again");
    ok(&["replay", s(&fit.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(json(&again.join("replay.json"))["identical"], true);

    // the config text travels in the manifest; the data file must be unchanged
    fs::remove_file(&cfg).unwrap();
    ok(&["replay", s(&fit.join("manifest.json")), "--out", s(&tmp.path().join("again2"))]);
    fs::write(&data, fs::read_to_string(&data).unwrap().replace("0,0,0,0,", "0,0,0,0,1")).unwrap();
    let o = btf(&["replay", s(&fit.join("manifest.json")), "--out", s(&tmp.path().join("again3"))]);
    assert!(!o.status.success());
}
