//! `btf fit`: one chain, or a grid of chains ranked by DIC.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use btf_core::dose::{estimate_pipetting_prior, plates_to_tensor, posterior_predictive_intervals};
use btf_core::gibbs::{compute_dic, Checkpoint, DicReport};
use btf_core::io::{
    read_array3_csv, read_long_csv, read_plate_csv, write_curve_summary_csv, write_trace_csv, write_v_csv, write_w_csv,
};
use btf_core::rng::{stream_rng, Phase};
use btf_core::{GammaMixture, GammaMixtureLik, LikelihoodSpec, ObservationTensor, PoissonLik, PosteriorSamples, Sampler};
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::open;
use crate::args::FitArgs;
use crate::config::{LikelihoodKind, Resolved};
use crate::manifest::{write_atomic, OutputDir, RunRecord};
use crate::Ctx;

pub const CHECKPOINT: &str = "checkpoint.json";
pub const FIT_INFO: &str = "fit.json";
pub const MIXTURE: &str = "mixture.json";

/// What `predict` needs to reread a finished fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitInfo {
    pub config: Resolved,
    pub seed: u64,
    pub dims: (usize, usize, usize, usize),
}

fn binomial_trials(r: &Resolved, dims: (usize, usize, usize, usize), rec: &mut RunRecord) -> Result<Array3<u64>> {
    let (n, m, t, _) = dims;
    if let Some(path) = &r.trials_file {
        rec.input(path)?;
        let raw = read_array3_csv(open(path)?)?;
        let mut out = Array3::zeros((n, m, t));
        for ((i, j, d), v) in out.indexed_iter_mut() {
            let x = raw.get([i, j, d]).copied().unwrap_or(f64::NAN);
            if x.is_finite() {
                if x < 0.0 || x.fract() != 0.0 {
                    bail!("trials at ({i}, {j}, {d}) = {x} is not a count");
                }
                *v = x as u64;
            }
        }
        return Ok(out);
    }
    Ok(Array3::from_elem((n, m, t), r.trials.expect("checked by resolve")))
}

fn likelihood(
    r: &Resolved,
    y: &ObservationTensor,
    mixture: Option<&GammaMixture>,
    rec: &mut RunRecord,
) -> Result<LikelihoodSpec> {
    Ok(match r.likelihood {
        LikelihoodKind::Gaussian => LikelihoodSpec::Gaussian { nu2: r.init_nu2 },
        LikelihoodKind::Binomial => LikelihoodSpec::Binomial {
            trials: binomial_trials(r, y.dims(), rec)?,
        },
        LikelihoodKind::Poisson => LikelihoodSpec::black_box(PoissonLik, r.constraints),
        LikelihoodKind::GammaMixture => {
            let mix = mixture.context("a gamma-mixture fit needs a mixture")?;
            LikelihoodSpec::black_box(GammaMixtureLik::new(mix.clone())?, r.constraints)
        }
    })
}

/// Per-run result used by the grid selection report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub rho2: f64,
    pub d: usize,
    pub k: usize,
    pub dic: Option<DicReport>,
    pub dic_error: Option<String>,
    pub degenerate_steps: u64,
}

fn observed_cells(y: &ObservationTensor) -> Array3<bool> {
    y.mask().map_axis(Axis(3), |reps| reps.iter().any(|&b| b))
}

/// Runs one chain into `out`, checkpointing as it goes.
#[allow(clippy::too_many_arguments)]
fn run_chain(
    r: &Resolved,
    y: &ObservationTensor,
    lik: LikelihoodSpec,
    mixture: Option<&GammaMixture>,
    seed: u64,
    resume: bool,
    label: &str,
    out: &mut OutputDir,
) -> Result<RunSummary> {
    let fc = r.fit_config(lik.clone(), seed);
    let ckpt_path = out.path(CHECKPOINT);
    let mut sampler = if resume {
        let text = std::fs::read_to_string(&ckpt_path)
            .with_context(|| format!("--resume needs {}", ckpt_path.display()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", ckpt_path.display()))?;
        Sampler::resume(y, fc, ckpt)?
    } else {
        Sampler::new(y, fc)?
    };
    let index = sampler.index().clone();
    sampler.run_with_checkpoints(r.checkpoint_every, |c| {
        let bytes = serde_json::to_vec(c).map_err(std::io::Error::other)?;
        write_atomic(&ckpt_path, &bytes).map_err(|e| std::io::Error::other(format!("{e:#}")))?;
        Ok(())
    })?;
    out.write_bytes(CHECKPOINT, &serde_json::to_vec(&sampler.checkpoint())?)?;
    let samples = sampler.into_samples();

    out.write_with("trace.csv", |w| write_trace_csv(&samples, w))?;
    out.write_with("w_samples.csv", |w| write_w_csv(&samples, w))?;
    out.write_with("v_samples.csv", |w| write_v_csv(&samples, w))?;
    let observed = observed_cells(y);
    write_curves(&samples, r.level, Some(&observed), "curves.csv", out)?;
    if let Some(mix) = mixture {
        write_predictive(&samples, mix, r.level, seed, Some(&observed), out)?;
    }
    let (dic, dic_error) = match compute_dic(&samples, &index, &lik) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    out.write_json("dic.json", &serde_json::json!({ "dic": dic, "error": dic_error }))?;
    out.write_json(
        FIT_INFO,
        &FitInfo {
            config: r.clone(),
            seed,
            dims: y.dims(),
        },
    )?;
    Ok(RunSummary {
        label: label.to_string(),
        rho2: r.rho2,
        d: r.d,
        k: r.k,
        dic,
        dic_error,
        degenerate_steps: samples.degenerate_steps,
    })
}

/// Posterior mean of every cell with its central credible interval.
pub fn write_curves(
    samples: &PosteriorSamples,
    level: f64,
    observed: Option<&Array3<bool>>,
    name: &str,
    out: &mut OutputDir,
) -> Result<()> {
    let mean = samples.mean_theta()?;
    let (lo, hi) = samples.theta_intervals(level)?;
    out.write_with(name, |w| write_curve_summary_csv(&mean, &lo, &hi, observed, w))
}

/// Intervals for a future replicate under the gamma mixture.
pub fn write_predictive(
    samples: &PosteriorSamples,
    mix: &GammaMixture,
    level: f64,
    seed: u64,
    observed: Option<&Array3<bool>>,
    out: &mut OutputDir,
) -> Result<()> {
    let pi = posterior_predictive_intervals(samples, mix, level, &mut stream_rng(seed, 0, Phase::Predict, 0))?;
    let mean = samples.mean_theta()?;
    out.write_with("predictive.csv", |w| {
        write_curve_summary_csv(&mean, &pi.lower, &pi.upper, observed, w)
    })
}

/// Parses `key=v1,v2,...` axes into their cartesian product.
pub fn grid_points(axes: &[String]) -> Result<Vec<Vec<(String, String)>>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let (key, values) = axis
            .split_once('=')
            .with_context(|| format!("grid axis `{axis}` is not key=v1,v2,..."))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            bail!("grid axis `{key}` has no values");
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.trim().to_string(), v.to_string()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn label(point: &[(String, String)]) -> String {
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
}

fn selection_table(runs: &[RunSummary], best: Option<usize>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<28}{:>10}{:>4}{:>4}{:>14}{:>12}", "run", "rho2", "D", "k", "DIC", "p_D");
    for (i, r) in runs.iter().enumerate() {
        let (dic, pd) = match &r.dic {
            Some(d) => (format!("{:.3}", d.dic), format!("{:.3}", d.p_d)),
            None => ("n/a".into(), "n/a".into()),
        };
        let mark = if Some(i) == best { " *" } else { "" };
        let _ = writeln!(s, "{:<28}{:>10}{:>4}{:>4}{:>14}{:>12}{mark}", r.label, r.rho2, r.d, r.k, dic, pd);
    }
    match best {
        Some(i) => {
            let _ = writeln!(s, "selected {} (minimum DIC)", runs[i].label);
        }
        None => {
            let _ = writeln!(s, "no run produced a DIC");
        }
    }
    s
}

fn load_data(a: &FitArgs, r: &Resolved, out: &mut OutputDir, rec: &mut RunRecord) -> Result<(ObservationTensor, Option<GammaMixture>)> {
    let mut mixture = match &r.mixture {
        Some(path) => {
            rec.input(path)?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(GammaMixture::from_json(&text)?)
        }
        None => None,
    };
    let y = if let Some(path) = &a.plates {
        rec.input(path)?;
        let plates = read_plate_csv(open(path)?).with_context(|| path.display().to_string())?;
        if r.likelihood == LikelihoodKind::GammaMixture && mixture.is_none() {
            let fit = estimate_pipetting_prior(&plates, &r.pipetting)?;
            out.write_json("pipetting.json", &fit)?;
            rec.note("pipetting_glm_basis", "cubic polynomial in the histogram bin centre");
            mixture = Some(fit.mixture);
        }
        plates_to_tensor(&plates)?
    } else {
        let path = a.data.as_ref().context("pass --data or --plates")?;
        rec.input(path)?;
        read_long_csv(open(path)?).with_context(|| path.display().to_string())?
    };
    if r.likelihood == LikelihoodKind::GammaMixture {
        let mix = mixture
            .as_ref()
            .context("missing required config key `data.mixture` (or pass --plates to estimate it)")?;
        out.write_bytes(MIXTURE, format!("{}\n", mix.to_json()?).as_bytes())?;
    } else {
        mixture = None;
    }
    Ok((y, mixture))
}

pub fn run(ctx: &Ctx, a: &FitArgs, out: &mut OutputDir, rec: &mut RunRecord) -> Result<()> {
    let loaded = ctx.require_config()?;
    let base = loaded.config.resolve(&loaded.dir)?;
    rec.config = Some(serde_json::to_value(&base)?);
    let (y, mixture) = load_data(a, &base, out, rec)?;
    let lik = likelihood(&base, &y, mixture.as_ref(), rec)?;
    let seed = ctx.seed();

    if a.grid.is_empty() {
        let s = run_chain(&base, &y, lik, mixture.as_ref(), seed, a.resume, "fit", out)?;
        rec.add_degenerate(s.degenerate_steps);
        return Ok(());
    }

    let points = grid_points(&a.grid)?;
    let configs: Vec<(String, Resolved)> = points
        .iter()
        .map(|p| {
            let mut r = base.clone();
            for (k, v) in p {
                r.set_axis(k, v)?;
            }
            Ok((label(p), r))
        })
        .collect::<Result<_>>()?;
    let root = out.root().to_path_buf();
    let results: Vec<(String, Result<(RunSummary, OutputDir)>)> = configs
        .par_iter()
        .map(|(name, r)| {
            let res = (|| {
                let mut sub = OutputDir::create(&root.join(name))?;
                let s = run_chain(r, &y, lik.clone(), mixture.as_ref(), seed, a.resume, name, &mut sub)
                    .with_context(|| format!("grid run {name}"))?;
                Ok((s, sub))
            })();
            (name.clone(), res)
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (name, res) in results {
        match res {
            Ok((s, sub)) => {
                rec.add_degenerate(s.degenerate_steps);
                out.absorb(&name, sub);
                runs.push(s);
            }
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.dic.map(|d| (i, d.dic)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    out.write_bytes("selection.txt", selection_table(&runs, best).as_bytes())?;
    out.write_json(
        "selection.json",
        &serde_json::json!({
            "selected": best.map(|i| runs[i].label.clone()),
            "runs": runs,
            "failures": failures,
        }),
    )?;
    if !failures.is_empty() {
        bail!("{} of {} grid runs failed: {}", failures.len(), configs.len(), failures.join("; "));
    }
    Ok(())
}

/// Reads the checkpoint and settings of a finished fit.
pub fn load_finished(dir: &Path) -> Result<(FitInfo, PosteriorSamples)> {
    let info_path = dir.join(FIT_INFO);
    let info: FitInfo = serde_json::from_str(
        &std::fs::read_to_string(&info_path).with_context(|| format!("reading {}", info_path.display()))?,
    )
    .with_context(|| format!("parsing {}", info_path.display()))?;
    let ckpt_path = dir.join(CHECKPOINT);
    let ckpt: Checkpoint = serde_json::from_str(
        &std::fs::read_to_string(&ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?,
    )
    .with_context(|| format!("parsing {}", ckpt_path.display()))?;
    let c = &info.config;
    let samples = PosteriorSamples {
        snapshots: ckpt.chain.snapshots,
        trace: ckpt.chain.trace,
        sweeps: c.sweeps,
        burn_in: c.burn_in,
        thin: c.thin,
        degenerate_steps: ckpt.chain.degenerate_steps,
    };
    Ok((info, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_cartesian() {
        let p = grid_points(&["rho2=0.001,0.01,0.1".into(), "D=1,3".into()]).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(label(&p[1]), "rho2=0.001_D=3");
    }

    #[test]
    fn malformed_axis_rejected() {
        assert!(grid_points(&["rho2".into()]).is_err());
        assert!(grid_points(&["rho2=".into()]).is_err());
    }
}
