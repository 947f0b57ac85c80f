//! `btf benchmark`: the sampler table, the held-out Poisson table and the
//! simulated dose-response screen.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use btf_core::benchgen::dose_sim::{run_dose_sim, DoseSimConfig};
use btf_core::benchgen::table1::{run_table1, Method};
use btf_core::benchgen::table2::{run_table2, Table2Config};
use btf_core::GassConfig;

use crate::args::{BenchmarkArgs, BenchmarkKind};
use crate::manifest::{OutputDir, RunRecord};
use crate::Ctx;

/// Tidy `method,trial,metric,value` rows.
#[derive(Default)]
struct Tidy(String);

impl Tidy {
    fn new() -> Self {
        Self("method,trial,metric,value\n".into())
    }

    fn push(&mut self, method: &str, trial: usize, metric: &str, value: f64) {
        let _ = writeln!(self.0, "{method},{trial},{metric},{value}");
    }
}

pub fn run(ctx: &Ctx, a: &BenchmarkArgs, out: &mut OutputDir, rec: &mut RunRecord) -> Result<()> {
    if a.trials == Some(0) {
        bail!("--trials must be at least 1");
    }
    let seed = ctx.seed();
    let mut tidy = Tidy::new();
    let text = match a.kind {
        BenchmarkKind::GassTable1 => {
            let gass = GassConfig {
                grid_size: a.grid_size,
                ..GassConfig::default()
            };
            let trials = a.trials.unwrap_or(20);
            let report = run_table1(&Method::ALL, a.m, trials, &gass, seed)?;
            for row in &report.rows {
                for (t, s) in row.trials.iter().enumerate() {
                    tidy.push(row.method.label(), t, "mse", s.mse);
                    tidy.push(row.method.label(), t, "coverage", s.coverage);
                }
            }
            rec.config = Some(serde_json::json!({ "m": a.m, "trials": trials, "grid_size": a.grid_size }));
            rec.note("coverage", "central 90% interval of the retained draws, per dose, averaged over doses");
            out.write_json("report.json", &report)?;
            report.to_string()
        }
        BenchmarkKind::PoissonTable2 => {
            let cfg = Table2Config {
                burn_in: a.burn_in.unwrap_or(2000),
                samples: a.samples.unwrap_or(2000),
                seed,
                ..Table2Config::default()
            };
            let report = run_table2(&cfg, a.trials.unwrap_or(3))?;
            for (t, s) in report.trials.iter().enumerate() {
                tidy.push("BTF", t, "nll", s.nll);
                tidy.push("BTF", t, "mae", s.mae);
                tidy.push("BTF", t, "rmse", s.rmse);
                rec.add_degenerate(s.degenerate_steps);
            }
            rec.config = Some(serde_json::to_value(cfg)?);
            rec.note(
                "nll",
                "negative log posterior-predictive mass, log-mean-exp over retained draws, summed over held-out cells",
            );
            out.write_json("report.json", &report)?;
            report.to_string()
        }
        BenchmarkKind::DoseSim => {
            let cfg = DoseSimConfig {
                burn_in: a.burn_in.unwrap_or(500),
                samples: a.samples.unwrap_or(500),
                seed,
                ..DoseSimConfig::default()
            };
            let report = run_dose_sim(&cfg, a.trials.unwrap_or(5))?;
            for (t, s) in report.trials.iter().enumerate() {
                tidy.push("BTF", t, "rmse", s.rmse);
                tidy.push("replicate-mean", t, "rmse", s.baseline_rmse);
                tidy.push("BTF", t, "coverage", s.coverage());
                rec.add_degenerate(s.degenerate_steps);
            }
            rec.config = Some(serde_json::to_value(cfg)?);
            rec.note("pipetting_glm_basis", "cubic polynomial in the histogram bin centre");
            out.write_json("report.json", &report)?;
            report.to_string()
        }
    };
    out.write_bytes("report.txt", text.as_bytes())?;
    out.write_bytes("results.csv", tidy.0.as_bytes())?;
    print!("{text}");
    Ok(())
}
