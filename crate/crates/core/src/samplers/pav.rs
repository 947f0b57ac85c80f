//! Pool-adjacent-violators projection onto monotone sequences.

use crate::constraints::Monotone;
use crate::error::{BtfError, Result};

/// Least-squares projection of `y` onto the monotone cone in `direction`.
pub fn pav_monotone_projection(y: &[f64], direction: Monotone) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(BtfError::InvalidArgument("empty vector".into()));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(BtfError::NonFinite {
            value: *bad,
            location: "PAV input".into(),
        });
    }
    Ok(match direction {
        Monotone::Nondecreasing => pav_increasing(y),
        Monotone::Nonincreasing => {
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            pav_increasing(&neg).into_iter().map(|v| -v).collect()
        }
    })
}

fn pav_increasing(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 > s1 / n1 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}
