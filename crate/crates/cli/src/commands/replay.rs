//! `btf replay`: re-runs a recorded command and compares output hashes.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::manifest::{hash_file, write_atomic, RunManifest, Status};

#[derive(Debug, Serialize)]
struct FileCheck {
    path: String,
    expected: String,
    actual: Option<String>,
    matches: bool,
}

/// Reproduces the run of `manifest_path` in `out` and writes `replay.json`
/// there. Fails if an input changed or any output differs.
pub fn run(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let original = RunManifest::load(manifest_path)?;
    if original.status != Status::Ok {
        bail!("{} records a failed run", manifest_path.display());
    }
    // the config travels as embedded text, so its file may be gone
    let config_path = original.args.global.config.as_ref().map(|p| p.display().to_string());
    for input in original.inputs.iter().filter(|i| Some(&i.path) != config_path.as_ref()) {
        let now = hash_file(Path::new(&input.path))?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path);
        }
    }
    let mut cli = original.args.clone();
    cli.global.out = out.to_path_buf();
    let config = original.config_text.clone().zip(original.config_dir.clone());
    let rerun = crate::execute(cli, config)?;

    let actual: BTreeMap<&str, &str> = rerun.outputs.iter().map(|e| (e.path.as_str(), e.sha256.as_str())).collect();
    let checks: Vec<FileCheck> = original
        .outputs
        .iter()
        .map(|e| {
            let got = actual.get(e.path.as_str()).map(|s| s.to_string());
            FileCheck {
                path: e.path.clone(),
                expected: e.sha256.clone(),
                matches: got.as_deref() == Some(e.sha256.as_str()),
                actual: got,
            }
        })
        .collect();
    let extra: Vec<&str> = actual
        .keys()
        .filter(|k| !original.outputs.iter().any(|e| e.path == **k))
        .copied()
        .collect();
    let mismatched: Vec<&str> = checks.iter().filter(|c| !c.matches).map(|c| c.path.as_str()).collect();
    let report = serde_json::json!({
        "manifest": manifest_path.display().to_string(),
        "identical": mismatched.is_empty() && extra.is_empty(),
        "files": checks,
        "unexpected": extra,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_atomic(&out.join("replay.json"), text.as_bytes())?;
    if !mismatched.is_empty() || !extra.is_empty() {
        bail!(
            "replay differs from {}: mismatched {:?}, unexpected {:?}",
            manifest_path.display(),
            mismatched,
            extra
        );
    }
    Ok(rerun)
}
