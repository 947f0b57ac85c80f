//! `btf predict`: posterior summaries from a finished fit directory.

use anyhow::{bail, Context, Result};
use btf_core::io::read_long_csv;
use btf_core::GammaMixture;
use ndarray::Axis;

use super::fit::{load_finished, write_curves, write_predictive, CHECKPOINT, FIT_INFO, MIXTURE};
use super::open;
use crate::args::PredictArgs;
use crate::manifest::{OutputDir, RunRecord};
use crate::Ctx;

pub fn run(ctx: &Ctx, a: &PredictArgs, out: &mut OutputDir, rec: &mut RunRecord) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        bail!("--level {} must be in (0, 1)", a.level);
    }
    rec.input(&a.from.join(FIT_INFO))?;
    rec.input(&a.from.join(CHECKPOINT))?;
    let (info, samples) = load_finished(&a.from)?;
    if samples.is_empty() {
        bail!("{} holds no retained draws yet", a.from.display());
    }
    let observed = match &a.data {
        Some(path) => {
            rec.input(path)?;
            let y = read_long_csv(open(path)?).with_context(|| path.display().to_string())?;
            let ((n, m, t, _), f) = (y.dims(), info.dims);
            if (n, m, t) != (f.0, f.1, f.2) {
                bail!("data dims {:?} do not match the fit {:?}", y.dims(), info.dims);
            }
            Some(y.mask().map_axis(Axis(3), |r| r.iter().any(|&b| b)))
        }
        None => None,
    };
    write_curves(&samples, a.level, observed.as_ref(), "predictions.csv", out)?;
    let mix_path = a.from.join(MIXTURE);
    if mix_path.exists() {
        rec.input(&mix_path)?;
        let mix = GammaMixture::from_json(&std::fs::read_to_string(&mix_path)?)?;
        write_predictive(&samples, &mix, a.level, ctx.seed(), observed.as_ref(), out)?;
    }
    rec.config = Some(serde_json::json!({ "level": a.level, "fit": info.config, "fit_seed": info.seed }));
    Ok(())
}
