//! CSV readers and writers for tensors, plates, traces and posterior draws.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::dose::PlateExperiment;
use crate::error::{BtfError, Result};
use crate::model::PosteriorSamples;
use crate::tensor::{LongRecord, ObservationTensor};

fn csv_err(e: csv::Error) -> BtfError {
    BtfError::Parse(e.to_string())
}

/// Reads `row,col,dose,replicate,value` records.
pub fn read_long_csv<R: Read>(reader: R) -> Result<ObservationTensor> {
    let mut rdr = csv::Reader::from_reader(reader);
    let records = rdr
        .deserialize::<LongRecord>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    ObservationTensor::from_long(records)
}

pub fn write_long_csv<W: Write>(y: &ObservationTensor, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in y.to_long() {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlateRecord {
    plate_id: String,
    row: usize,
    col: usize,
    dose_index: Option<usize>,
    replicate: usize,
    value: f64,
    is_control: bool,
}

/// Reads `plate_id,row,col,dose_index,replicate,value,is_control` records.
/// Plates are returned in order of first appearance and must be complete.
pub fn read_plate_csv<R: Read>(reader: R) -> Result<Vec<PlateExperiment>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<PlateRecord>> = BTreeMap::new();
    for rec in rdr.deserialize::<PlateRecord>() {
        let rec = rec.map_err(csv_err)?;
        if !groups.contains_key(&rec.plate_id) {
            order.push(rec.plate_id.clone());
        }
        groups.entry(rec.plate_id.clone()).or_default().push(rec);
    }
    order
        .into_iter()
        .map(|id| {
            let recs = &groups[&id];
            let (row, col) = (recs[0].row, recs[0].col);
            if recs.iter().any(|r| r.row != row || r.col != col) {
                return Err(BtfError::Parse(format!("plate {id} spans several (row, col) pairs")));
            }
            let mut control: BTreeMap<usize, f64> = BTreeMap::new();
            let mut doses: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for r in recs {
                let dup = if r.is_control {
                    control.insert(r.replicate, r.value).is_some()
                } else {
                    let t = r.dose_index.ok_or_else(|| {
                        BtfError::Parse(format!("plate {id}: treated well without dose_index"))
                    })?;
                    doses.insert((t, r.replicate), r.value).is_some()
                };
                if dup {
                    return Err(BtfError::Parse(format!("plate {id}: duplicate well")));
                }
            }
            let t_len = doses.keys().map(|k| k.0 + 1).max().unwrap_or(0);
            let r_len = doses.keys().map(|k| k.1 + 1).max().unwrap_or(0);
            if doses.len() != t_len * r_len || t_len == 0 {
                return Err(BtfError::Parse(format!(
                    "plate {id}: expected a complete {t_len} x {r_len} block of treated wells, found {}",
                    doses.len()
                )));
            }
            let dose_values = Array2::from_shape_fn((t_len, r_len), |(t, r)| doses[&(t, r)]);
            let plate = PlateExperiment {
                plate_id: id,
                row,
                col,
                control_values: control.into_values().collect(),
                dose_values,
            };
            plate.validate()?;
            Ok(plate)
        })
        .collect()
}

pub fn write_plate_csv<W: Write>(plates: &[PlateExperiment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in plates {
        for (r, &value) in p.control_values.iter().enumerate() {
            w.serialize(PlateRecord {
                plate_id: p.plate_id.clone(),
                row: p.row,
                col: p.col,
                dose_index: None,
                replicate: r,
                value,
                is_control: true,
            })
            .map_err(csv_err)?;
        }
        for ((t, r), &value) in p.dose_values.indexed_iter() {
            w.serialize(PlateRecord {
                plate_id: p.plate_id.clone(),
                row: p.row,
                col: p.col,
                dose_index: Some(t),
                replicate: r,
                value,
                is_control: false,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sweep,loglik,sigma2,nu2,degenerate_steps`; `nu2` is empty when unused.
pub fn write_trace_csv<W: Write>(samples: &PosteriorSamples, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sweep", "loglik", "sigma2", "nu2", "degenerate_steps"])
        .map_err(csv_err)?;
    for t in &samples.trace {
        w.write_record([
            t.sweep.to_string(),
            t.loglik.to_string(),
            t.sigma2.to_string(),
            t.nu2.map(|v| v.to_string()).unwrap_or_default(),
            t.degenerate_steps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Row factors of every retained draw: `sweep,row,dim,value`.
pub fn write_w_csv<W: Write>(samples: &PosteriorSamples, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sweep", "row", "dim", "value"]).map_err(csv_err)?;
    for s in &samples.snapshots {
        for ((i, d), v) in s.factors.w.indexed_iter() {
            w.write_record([s.sweep.to_string(), i.to_string(), d.to_string(), v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Column factors of every retained draw: `sweep,col,dose,dim,value`.
pub fn write_v_csv<W: Write>(samples: &PosteriorSamples, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sweep", "col", "dose", "dim", "value"]).map_err(csv_err)?;
    for s in &samples.snapshots {
        for ((j, t, d), v) in s.factors.v.indexed_iter() {
            w.write_record([
                s.sweep.to_string(),
                j.to_string(),
                t.to_string(),
                d.to_string(),
                v.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-cell summary: `row,col,dose,mean,lower,upper` plus an `observed` flag.
pub fn write_curve_summary_csv<W: Write>(
    mean: &Array3<f64>,
    lower: &Array3<f64>,
    upper: &Array3<f64>,
    observed: Option<&Array3<bool>>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "dose", "mean", "lower", "upper", "observed"])
        .map_err(csv_err)?;
    for ((i, j, t), m) in mean.indexed_iter() {
        let obs = observed.map(|o| o[[i, j, t]]).unwrap_or(true);
        w.write_record([
            i.to_string(),
            j.to_string(),
            t.to_string(),
            m.to_string(),
            lower[[i, j, t]].to_string(),
            upper[[i, j, t]].to_string(),
            obs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A dense 3-array as `row,col,dose,value`.
pub fn write_array3_csv<W: Write>(a: &Array3<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "dose", "value"]).map_err(csv_err)?;
    for ((i, j, t), v) in a.indexed_iter() {
        w.write_record([i.to_string(), j.to_string(), t.to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `row,col,dose,value` file into a dense array; absent cells are NaN.
pub fn read_array3_csv<R: Read>(reader: R) -> Result<Array3<f64>> {
    #[derive(Deserialize)]
    struct Rec {
        row: usize,
        col: usize,
        dose: usize,
        value: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let recs = rdr
        .deserialize::<Rec>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    let dim = recs.iter().fold((0, 0, 0), |d, r| {
        (d.0.max(r.row + 1), d.1.max(r.col + 1), d.2.max(r.dose + 1))
    });
    let mut out = Array3::from_elem(dim, f64::NAN);
    for r in recs {
        out[[r.row, r.col, r.dose]] = r.value;
    }
    Ok(out)
}

/// One row of a curve summary file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummaryRecord {
    pub row: usize,
    pub col: usize,
    pub dose: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub observed: bool,
}

/// Reads a file written by [`write_curve_summary_csv`].
pub fn read_curve_summary_csv<R: Read>(reader: R) -> Result<Vec<CurveSummaryRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn long_round_trip() {
        let y = ObservationTensor::from_long(vec![(0, 1, 2, 0, 1.5), (1, 0, 0, 1, -0.25)]).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&y, &mut buf).unwrap();
        assert!(buf.starts_with(b"row,col,dose,replicate,value\n"));
        assert_eq!(read_long_csv(buf.as_slice()).unwrap(), y);
    }

    #[test]
    fn plate_round_trip() {
        let p = PlateExperiment {
            plate_id: "a".into(),
            row: 1,
            col: 2,
            control_values: vec![10.0, 12.0],
            dose_values: array![[9.0, 11.0], [4.0, 5.0], [1.0, 0.5]],
        };
        let mut buf = Vec::new();
        write_plate_csv(std::slice::from_ref(&p), &mut buf).unwrap();
        assert_eq!(read_plate_csv(buf.as_slice()).unwrap(), vec![p]);
    }

    #[test]
    fn curve_summary_round_trip() {
        let mean = Array3::from_shape_fn((2, 1, 2), |(i, _, t)| i as f64 + 0.1 * t as f64);
        let lower = mean.mapv(|v| v - 0.5);
        let upper = mean.mapv(|v| v + 0.5);
        let obs = Array3::from_shape_fn((2, 1, 2), |(i, _, _)| i == 0);
        let mut buf = Vec::new();
        write_curve_summary_csv(&mean, &lower, &upper, Some(&obs), &mut buf).unwrap();
        let recs = read_curve_summary_csv(buf.as_slice()).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[3].mean, 1.1);
        assert!(recs[1].observed && !recs[2].observed);
    }

    #[test]
    fn incomplete_plate_rejected() {
        let csv = "plate_id,row,col,dose_index,replicate,value,is_control\n\
                   a,0,0,,0,1.0,true\na,0,0,,1,1.0,true\na,0,0,0,0,1.0,false\na,0,0,1,1,1.0,false\n";
        assert!(read_plate_csv(csv.as_bytes()).is_err());
    }
}
