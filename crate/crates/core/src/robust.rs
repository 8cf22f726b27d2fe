//! Order statistics and robust location/scale primitives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Consistency constant making the MAD unbiased for σ at the normal.
pub const MAD_CONSTANT: f64 = 1.4826;

fn check_sample(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    Ok(())
}

// Median of a scratch buffer, reordering it in place.
fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Sample median; even-length samples average the two central order statistics.
pub fn median(s: &[f64]) -> Result<f64> {
    check_sample(s)?;
    Ok(median_in_place(&mut s.to_vec()))
}

/// Median absolute deviation scaled by [`MAD_CONSTANT`].
pub fn mad(s: &[f64]) -> Result<f64> {
    check_sample(s)?;
    let mut buf = s.to_vec();
    let med = median_in_place(&mut buf);
    Ok(mad_about(&mut buf, med))
}

/// Median and MAD in one pass over a scratch copy.
pub fn median_mad(s: &[f64]) -> Result<(f64, f64)> {
    check_sample(s)?;
    let mut buf = s.to_vec();
    let med = median_in_place(&mut buf);
    Ok((med, mad_about(&mut buf, med)))
}

fn mad_about(buf: &mut [f64], center: f64) -> f64 {
    for v in buf.iter_mut() {
        *v = (*v - center).abs();
    }
    MAD_CONSTANT * median_in_place(buf)
}

pub(crate) fn median_mad_view(col: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    match col.as_slice() {
        Some(s) => median_mad(s),
        None => median_mad(&col.to_vec()),
    }
}

/// Empirical quantile with linear interpolation between order statistics.
///
/// With sorted values x₀ ≤ … ≤ xₙ₋₁ and h = (n − 1)·prob, returns
/// x⌊h⌋ + (h − ⌊h⌋)(x⌊h⌋₊₁ − x⌊h⌋).
pub fn quantile(s: &[f64], prob: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::InvalidProbability(prob));
    }
    check_sample(s)?;
    let mut sorted = s.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

const L1_TOL: f64 = 1e-10;
const L1_MAX_ITER: usize = 500;

/// Spatial (L1) median: the point minimizing the sum of Euclidean distances to the rows.
///
/// Weiszfeld iteration started from the mean, with the Vardi–Zhang
/// modification when the iterate lands on an observation.
pub fn l1_median(x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if x.nrows() == 0 {
        return Err(Error::EmptySample);
    }
    crate::data::check_finite(x)?;
    let p = x.ncols();
    let mut y = x.mean_axis(Axis(0)).expect("nonempty");
    for _ in 0..L1_MAX_ITER {
        let mut weighted = Array1::<f64>::zeros(p);
        let mut weight_sum = 0.0;
        let mut resultant = Array1::<f64>::zeros(p);
        let mut coincident = 0usize;
        for row in x.rows() {
            let diff = &row - &y;
            let dist = diff.dot(&diff).sqrt();
            if dist <= f64::EPSILON * (1.0 + y.dot(&y).sqrt()) {
                coincident += 1;
                continue;
            }
            let w = 1.0 / dist;
            weighted.scaled_add(w, &row);
            weight_sum += w;
            resultant.scaled_add(w, &diff);
        }
        if weight_sum == 0.0 {
            // every observation sits on the iterate
            return Ok(y);
        }
        let target = weighted / weight_sum;
        let next = if coincident == 0 {
            target
        } else {
            let r = resultant.dot(&resultant).sqrt();
            if r <= coincident as f64 {
                // the observation under the iterate is the minimizer
                return Ok(y);
            }
            let gamma = coincident as f64 / r;
            target * (1.0 - gamma) + &y * gamma
        };
        let step = &next - &y;
        y = next;
        if step.dot(&step).sqrt() < L1_TOL {
            break;
        }
    }
    Ok(y)
}

/// Per-column medians and MADs from a robust sphering, plus the columns dropped for zero MAD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub medians: Vec<f64>,
    pub mads: Vec<f64>,
    pub dropped_columns: Vec<usize>,
}

impl ScaleParams {
    /// Indices of the columns kept by the sphering, ascending.
    pub fn retained_columns(&self) -> Vec<usize> {
        (0..self.mads.len())
            .filter(|j| !self.dropped_columns.contains(j))
            .collect()
    }
}

/// Centers each column at its median and divides by its MAD; MAD-zero columns are dropped.
pub fn sphere_columns(x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ScaleParams)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let mut medians = Vec::with_capacity(x.ncols());
    let mut mads = Vec::with_capacity(x.ncols());
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in x.columns().into_iter().enumerate() {
        let (med, scale) = median_mad_view(col)?;
        medians.push(med);
        mads.push(scale);
        if scale > 0.0 {
            kept.push(j);
        } else {
            dropped.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate(
            "every column has zero MAD; nothing to analyze".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros((n, kept.len()));
    for (k, &j) in kept.iter().enumerate() {
        let (med, scale) = (medians[j], mads[j]);
        out.column_mut(k)
            .iter_mut()
            .zip(x.column(j))
            .for_each(|(o, &v)| *o = (v - med) / scale);
    }
    Ok((
        out,
        ScaleParams {
            medians,
            mads,
            dropped_columns: dropped,
        },
    ))
}

/// Robustly spheres every column of `x` by median and MAD.
pub fn robust_sphere(x: &DataMatrix) -> Result<(DataMatrix, ScaleParams)> {
    let (values, params) = sphere_columns(x.values())?;
    let names = params
        .retained_columns()
        .into_iter()
        .map(|j| x.col_names()[j].clone())
        .collect();
    let sphered = DataMatrix::with_names(values, x.row_ids().to_vec(), names)?;
    Ok((sphered, params))
}

/// Absolute excess of the robust fourth-moment ratio: |mean((z − med)⁴) / MAD⁴ − 3|.
pub fn robust_kurtosis_weight(z: &[f64]) -> Result<f64> {
    let (med, scale) = median_mad(z)?;
    if scale == 0.0 {
        return Err(Error::Degenerate(
            "kurtosis weight undefined for a zero-MAD component".into(),
        ));
    }
    let s4 = scale.powi(4);
    let m4 = z.iter().map(|v| (v - med).powi(4)).sum::<f64>() / z.len() as f64;
    Ok((m4 / s4 - 3.0).abs())
}
