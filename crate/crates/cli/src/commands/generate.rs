//! `btf generate`: synthetic instances with ground truth.

use anyhow::{bail, Result};
use btf_core::benchgen::{gen_gass_benchmark, gen_gaussian_functional_matrix, gen_poisson_dynsys, GassBenchParams};
use btf_core::dose::{simulate_screen, PlateSimConfig};
use btf_core::io::{write_array3_csv, write_long_csv, write_plate_csv};
use btf_core::rng::{stream_rng, Phase};
use btf_core::{LongRecord, ObservationTensor};
use ndarray::Array3;

use crate::args::{GenerateArgs, GenerateKind};
use crate::manifest::{OutputDir, RunRecord};
use crate::Ctx;

fn long_from(records: Vec<LongRecord>, what: &str) -> Result<ObservationTensor> {
    if records.is_empty() {
        bail!("{what} is empty");
    }
    Ok(ObservationTensor::from_long(records)?)
}

pub fn run(ctx: &Ctx, a: &GenerateArgs, out: &mut OutputDir, rec: &mut RunRecord) -> Result<()> {
    let mut rng = stream_rng(ctx.seed(), 0, Phase::Generate, 0);
    match a.kind {
        GenerateKind::Gass => {
            let mut params = GassBenchParams::default();
            if let Some(r) = a.replicates {
                params.replicates = r;
            }
            let inst = gen_gass_benchmark(&params, &mut rng)?;
            let records = inst
                .y
                .indexed_iter()
                .map(|((t, r), &value)| LongRecord { row: 0, col: 0, dose: t, replicate: r, value })
                .collect();
            let y = long_from(records, "instance")?;
            out.write_with("data.csv", |w| write_long_csv(&y, w))?;
            let truth = Array3::from_shape_vec((1, 1, inst.theta_true.len()), inst.theta_true.clone())?;
            out.write_with("truth.csv", |w| write_array3_csv(&truth, w))?;
            out.write_json("params.json", &params)?;
            rec.config = Some(serde_json::to_value(params)?);
        }
        GenerateKind::Poisson => {
            let (n, m, t) = (a.rows.unwrap_or(11), a.cols.unwrap_or(12), a.doses.unwrap_or(20));
            let d = a.rank.unwrap_or(3);
            let holdout = match a.holdout.as_deref() {
                Some([r, c]) => (*r, *c),
                _ => (3, 3),
            };
            let inst = gen_poisson_dynsys(n, m, t, d, holdout, &mut rng)?;
            let split = |held: bool| -> Vec<LongRecord> {
                inst.y
                    .indexed_iter()
                    .filter(|(k, _)| inst.holdout[*k] == held)
                    .map(|((i, j, t), &value)| LongRecord { row: i, col: j, dose: t, replicate: 0, value })
                    .collect()
            };
            let observed = long_from(split(false), "observed part")?;
            out.write_with("data.csv", |w| write_long_csv(&observed, w))?;
            if holdout.0 > 0 && holdout.1 > 0 {
                let held = long_from(split(true), "held-out part")?;
                out.write_with("heldout.csv", |w| write_long_csv(&held, w))?;
            }
            out.write_with("truth.csv", |w| write_array3_csv(&inst.rate, w))?;
            rec.config = Some(serde_json::json!({
                "rows": n, "cols": m, "doses": t, "rank": d, "holdout": [holdout.0, holdout.1],
            }));
        }
        GenerateKind::Gaussian => {
            let (n, m, t) = (a.rows.unwrap_or(10), a.cols.unwrap_or(8), a.doses.unwrap_or(20));
            let (d, r) = (a.rank.unwrap_or(3), a.replicates.unwrap_or(3));
            let (noise, jump) = (a.noise_sd.unwrap_or(0.3), a.jump_prob.unwrap_or(0.05));
            let inst = gen_gaussian_functional_matrix(n, m, t, d, r, jump, noise, &mut rng)?;
            out.write_with("data.csv", |w| write_long_csv(&inst.tensor, w))?;
            out.write_with("truth.csv", |w| write_array3_csv(&inst.theta, w))?;
            rec.config = Some(serde_json::json!({
                "rows": n, "cols": m, "doses": t, "rank": d, "replicates": r,
                "noise_sd": noise, "jump_prob": jump,
            }));
        }
        GenerateKind::Plates => {
            let mut pc = PlateSimConfig::default();
            pc.rows = a.rows.unwrap_or(pc.rows);
            pc.cols = a.cols.unwrap_or(pc.cols);
            pc.doses = a.doses.unwrap_or(pc.doses);
            pc.replicates = a.replicates.unwrap_or(pc.replicates);
            pc.factors = a.rank.unwrap_or(pc.factors);
            let screen = simulate_screen(&pc, &mut rng)?;
            out.write_with("plates.csv", |w| write_plate_csv(&screen.plates, w))?;
            out.write_with("truth.csv", |w| write_array3_csv(&screen.theta, w))?;
            rec.config = Some(serde_json::to_value(pc)?);
        }
    }
    Ok(())
}
