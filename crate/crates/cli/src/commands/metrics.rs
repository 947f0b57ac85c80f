//! `btf metrics`: scores a curve summary against ground truth.

use anyhow::{bail, Context, Result};
use btf_core::benchgen::metrics;
use btf_core::io::{read_array3_csv, read_curve_summary_csv};
use serde::Serialize;

use super::open;
use crate::args::MetricsArgs;
use crate::manifest::{OutputDir, RunRecord};

#[derive(Debug, Serialize)]
struct MetricsFile {
    cells: usize,
    unobserved_only: bool,
    mse: f64,
    mae: f64,
    rmse: f64,
    /// Fraction of true values inside the summary's interval.
    coverage: Option<f64>,
}

pub fn run(a: &MetricsArgs, out: &mut OutputDir, rec: &mut RunRecord) -> Result<()> {
    rec.input(&a.pred)?;
    rec.input(&a.truth)?;
    let pred = read_curve_summary_csv(open(&a.pred)?).with_context(|| a.pred.display().to_string())?;
    let truth = read_array3_csv(open(&a.truth)?).with_context(|| a.truth.display().to_string())?;
    let (mut p, mut t, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in pred.iter().filter(|r| !a.unobserved_only || !r.observed) {
        let Some(&x) = truth.get([r.row, r.col, r.dose]) else {
            bail!("truth has no cell ({}, {}, {})", r.row, r.col, r.dose);
        };
        if x.is_nan() {
            bail!("truth has no cell ({}, {}, {})", r.row, r.col, r.dose);
        }
        p.push(r.mean);
        t.push(x);
        lo.push(r.lower);
        hi.push(r.upper);
    }
    if p.is_empty() {
        bail!("no cells to score");
    }
    let m = metrics(&p, &t, Some((&lo, &hi)), None)?;
    let file = MetricsFile {
        cells: p.len(),
        unobserved_only: a.unobserved_only,
        mse: m.mse,
        mae: m.mae,
        rmse: m.rmse,
        coverage: m.coverage,
    };
    out.write_json("metrics.json", &file)?;
    println!("{}", serde_json::to_string_pretty(&file)?);
    Ok(())
}
