//! The `btf` command line: data generation, fitting with grid search,
//! benchmarks, metrics, prediction and manifest replay.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use args::{Cli, Command};
use config::RunConfig;
use manifest::{versions, Clock, OutputDir, RunManifest, RunRecord, Status, MANIFEST_NAME};

/// A parsed config together with its source text and base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub dir: PathBuf,
}

/// Shared inputs of every command.
pub struct Ctx {
    pub cli: Cli,
    pub config: Option<LoadedConfig>,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.cli.global.seed
    }

    pub fn require_config(&self) -> Result<&LoadedConfig> {
        self.config
            .as_ref()
            .context("this command needs a run configuration; pass --config FILE")
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn absolutize(cli: &mut Cli) -> Result<()> {
    let g = &mut cli.global;
    g.out = absolute(&g.out)?;
    if let Some(c) = &g.config {
        g.config = Some(absolute(c)?);
    }
    let abs_opt = |p: &mut Option<PathBuf>| -> Result<()> {
        if let Some(x) = p {
            *x = absolute(x)?;
        }
        Ok(())
    };
    match &mut cli.command {
        Command::Fit(a) => {
            abs_opt(&mut a.data)?;
            abs_opt(&mut a.plates)?;
        }
        Command::Metrics(a) => {
            a.pred = absolute(&a.pred)?;
            a.truth = absolute(&a.truth)?;
        }
        Command::Predict(a) => {
            a.from = absolute(&a.from)?;
            abs_opt(&mut a.data)?;
        }
        Command::Replay(a) => a.manifest = absolute(&a.manifest)?,
        Command::Generate(_) | Command::Benchmark(_) => {}
    }
    Ok(())
}

/// Runs a command and writes its manifest, also on failure. `config_override`
/// supplies config text and base directory in place of `--config`, as replay
/// does.
pub fn execute(mut cli: Cli, config_override: Option<(String, PathBuf)>) -> Result<RunManifest> {
    absolutize(&mut cli)?;
    if let Command::Replay(a) = &cli.command {
        return commands::replay::run(&a.manifest, &cli.global.out);
    }
    let clock = Clock::start();
    let replaying = config_override.is_some();
    let config = match (config_override, &cli.global.config) {
        (Some((text, dir)), _) => Some(LoadedConfig {
            config: RunConfig::parse(&text)?,
            text,
            dir,
        }),
        (None, Some(path)) => {
            let (config, text) = RunConfig::load(path)?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Some(LoadedConfig { config, text, dir })
        }
        (None, None) => None,
    };
    let ctx = Ctx { cli, config };
    let mut out = OutputDir::create(&ctx.cli.global.out)?;
    let mut rec = RunRecord::default();
    if let (Some(path), false) = (&ctx.cli.global.config, replaying) {
        rec.input(path)?;
    }
    let result = match &ctx.cli.command {
        Command::Generate(a) => commands::generate::run(&ctx, a, &mut out, &mut rec),
        Command::Fit(a) => commands::fit::run(&ctx, a, &mut out, &mut rec),
        Command::Benchmark(a) => commands::benchmark::run(&ctx, a, &mut out, &mut rec),
        Command::Metrics(a) => commands::metrics::run(a, &mut out, &mut rec),
        Command::Predict(a) => commands::predict::run(&ctx, a, &mut out, &mut rec),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let manifest = RunManifest {
        command: ctx.cli.command.name().to_string(),
        args: ctx.cli.clone(),
        config_text: ctx.config.as_ref().map(|c| c.text.clone()),
        config_dir: ctx.config.as_ref().map(|c| c.dir.clone()),
        config: rec.config.take(),
        seed: ctx.seed(),
        versions: versions(),
        started_unix: clock.started_unix,
        elapsed_seconds: clock.elapsed(),
        status: if result.is_ok() { Status::Ok } else { Status::Failed },
        error: result.as_ref().err().map(|e| format!("{e:#}")),
        degenerate_steps: rec.degenerate_steps,
        notes: std::mem::take(&mut rec.notes),
        inputs: std::mem::take(&mut rec.inputs),
        outputs: out.entries(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    manifest::write_atomic(&out.path(MANIFEST_NAME), text.as_bytes())?;
    result.map(|()| manifest)
}
