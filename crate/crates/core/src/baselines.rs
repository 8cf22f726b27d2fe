//! Comparison detectors: classical Mahalanobis, OGK and spatial-sign PCA.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_quantile;
use crate::data::DataMatrix;
use crate::detector::transform_distances;
use crate::error::{Error, Result};
use crate::robust::{mad, median_mad_view, sphere_columns};
use crate::spectral::{covariance, gram_eigen_scaled, retain_components, sym_eigen, SymEigen};

/// Location vector T and scatter matrix C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationScatter {
    pub location: Array1<f64>,
    pub scatter: Array2<f64>,
}

/// Distances, the cutoff they were compared against, and the resulting flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub method: String,
    pub distances: Vec<f64>,
    pub cutoff: f64,
    pub flags: Vec<bool>,
    /// Degrees of freedom behind the cutoff.
    pub df: usize,
}

impl DetectionResult {
    fn new(method: &str, distances: Vec<f64>, cutoff: f64, df: usize) -> Self {
        let flags = distances.iter().map(|&d| d > cutoff).collect();
        Self {
            method: method.to_string(),
            distances,
            cutoff,
            flags,
            df,
        }
    }

    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

const SINGULAR_REL: f64 = 1e-12;

/// Mahalanobis distances √((x − T)ᵀ C⁻¹ (x − T)) of every row.
///
/// C is inverted through its eigendecomposition, so a singular scatter is
/// reported with the offending eigenvalue.
pub fn robust_distances(x: ArrayView2<'_, f64>, est: &LocationScatter) -> Result<Vec<f64>> {
    let p = est.location.len();
    if x.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.ncols(),
        });
    }
    let eig = sym_eigen(est.scatter.view())?;
    let largest = eig.values[0];
    let smallest = eig.values[p - 1];
    if !(largest > 0.0) || smallest <= SINGULAR_REL * largest {
        return Err(Error::Singular { smallest, largest });
    }
    let centered = &x - &est.location;
    let scores = centered.dot(&eig.vectors);
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(eig.values.iter())
                .map(|(s, l)| s * s / l)
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// √χ²_{df,1−α}.
pub fn chi2_cutoff(df: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(chi2_quantile(1.0 - alpha, df as f64)?.sqrt())
}

/// Sample mean and covariance with a √χ²_{p,1−α} cutoff.
pub fn classical_detect(x: &DataMatrix, alpha: f64) -> Result<DetectionResult> {
    check_alpha(alpha)?;
    let (n, p) = (x.nrows(), x.ncols());
    if n <= p {
        return Err(Error::Degenerate(format!(
            "classical detection needs more rows than columns (n = {n}, p = {p}); \
             use the prcmpout method for wide data"
        )));
    }
    let est = LocationScatter {
        location: x.values().mean_axis(Axis(0)).expect("n > 0"),
        scatter: covariance(x.values())?,
    };
    let distances = robust_distances(x.values(), &est)?;
    Ok(DetectionResult::new(
        "classical",
        distances,
        chi2_cutoff(p, alpha)?,
        p,
    ))
}

/// Pairwise covariance ¼(σ(x + y)² − σ(x − y)²) for a scale estimator σ.
pub fn ogk_pairwise_cov<F>(x: &[f64], y: &[f64], sigma: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let s_plus = sigma(&sum)?;
    let s_minus = sigma(&diff)?;
    Ok(0.25 * (s_plus * s_plus - s_minus * s_minus))
}

/// Orthogonalized Gnanadesikan–Kettenring estimate with MAD as the robust scale.
///
/// Columns are scaled by their MADs, the pairwise robust correlation matrix
/// is eigendecomposed, and robust variances of the data projected onto the
/// eigenvectors replace the eigenvalues before mapping back. The result is
/// positive semidefinite by construction.
pub fn ogk_estimate(x: ArrayView2<'_, f64>) -> Result<LocationScatter> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let mut scales = Vec::with_capacity(p);
    for (j, col) in x.columns().into_iter().enumerate() {
        let (_, s) = median_mad_view(col)?;
        if s == 0.0 {
            return Err(Error::Degenerate(format!("column {j} has zero MAD")));
        }
        scales.push(s);
    }
    let scales = Array1::from(scales);
    let y = &x / &scales;
    let cols: Vec<Vec<f64>> = y.columns().into_iter().map(|c| c.to_vec()).collect();

    let mut u = Array2::<f64>::eye(p);
    for j in 0..p {
        for k in (j + 1)..p {
            let v = ogk_pairwise_cov(&cols[j], &cols[k], mad)?;
            u[[j, k]] = v;
            u[[k, j]] = v;
        }
    }
    let eig = sym_eigen(u.view())?;
    let z = y.dot(&eig.vectors);
    let mut nu = Array1::<f64>::zeros(p);
    let mut gamma = Array1::<f64>::zeros(p);
    for (k, col) in z.columns().into_iter().enumerate() {
        let (m, s) = median_mad_view(col)?;
        nu[k] = m;
        gamma[k] = s * s;
    }
    // A = D·E maps eigen-coordinates back to the original scale
    let a = &eig.vectors * &scales.view().insert_axis(Axis(1));
    let location = a.dot(&nu);
    let mut scatter = (&a * &gamma).dot(&a.t());
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (scatter[[i, j]] + scatter[[j, i]]);
            scatter[[i, j]] = v;
            scatter[[j, i]] = v;
        }
    }
    Ok(LocationScatter { location, scatter })
}

/// Hard-rejection reweighting: keeps rows with d² < χ²_p(β)·med(d²)/χ²_p(0.5).
pub fn ogk_reweight(
    x: ArrayView2<'_, f64>,
    est: &LocationScatter,
    beta: f64,
) -> Result<LocationScatter> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    let p = x.ncols();
    let d2: Vec<f64> = robust_distances(x, est)?.iter().map(|d| d * d).collect();
    let med = crate::robust::median(&d2)?;
    let cut = chi2_quantile(beta, p as f64)? * med / chi2_quantile(0.5, p as f64)?;
    let keep: Vec<usize> = (0..d2.len()).filter(|&i| d2[i] < cut).collect();
    if keep.len() < p + 1 {
        return Err(Error::TooFewRows {
            needed: p + 1,
            have: keep.len(),
        });
    }
    let kept = x.select(Axis(0), &keep);
    Ok(LocationScatter {
        location: kept.mean_axis(Axis(0)).expect("nonempty"),
        scatter: covariance(kept.view())?,
    })
}

/// OGK location/scatter, reweighted with `beta`, scored against √χ²_{p,1−α}.
pub fn ogk_detect(x: &DataMatrix, alpha: f64, beta: f64) -> Result<DetectionResult> {
    check_alpha(alpha)?;
    let raw = ogk_estimate(x.values()).map_err(Error::at("ogk estimate"))?;
    let est = ogk_reweight(x.values(), &raw, beta).map_err(Error::at("ogk reweighting"))?;
    let distances = robust_distances(x.values(), &est)?;
    Ok(DetectionResult::new(
        "ogk",
        distances,
        chi2_cutoff(x.ncols(), alpha)?,
        x.ncols(),
    ))
}

/// OGK without the reweighting step.
pub fn ogk_detect_unweighted(x: &DataMatrix, alpha: f64) -> Result<DetectionResult> {
    check_alpha(alpha)?;
    let est = ogk_estimate(x.values()).map_err(Error::at("ogk estimate"))?;
    let distances = robust_distances(x.values(), &est)?;
    Ok(DetectionResult::new(
        "ogk",
        distances,
        chi2_cutoff(x.ncols(), alpha)?,
        x.ncols(),
    ))
}

/// Spatial signs about the coordinatewise median.
#[derive(Debug, Clone)]
pub struct SpatialSigns {
    pub center: Array1<f64>,
    /// Unit vectors, one row per observation; zero rows for observations at the center.
    pub signs: Array2<f64>,
    /// Rows with a nonzero sign.
    pub used_rows: Vec<usize>,
}

pub fn spatial_signs(x: ArrayView2<'_, f64>) -> Result<SpatialSigns> {
    let mut center = Array1::<f64>::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        center[j] = median_mad_view(col)?.0;
    }
    let mut signs = &x - &center;
    let mut used_rows = Vec::with_capacity(x.nrows());
    for (i, mut row) in signs.rows_mut().into_iter().enumerate() {
        let r = row.dot(&row).sqrt();
        if r > 0.0 {
            row /= r;
            used_rows.push(i);
        } else {
            row.fill(0.0);
        }
    }
    Ok(SpatialSigns {
        center,
        signs,
        used_rows,
    })
}

/// Spatial sign covariance (1/m)·Σ sᵢsᵢᵀ over the m off-center rows.
pub fn sign_covariance(signs: &SpatialSigns) -> Result<Array2<f64>> {
    let used = signs.signs.select(Axis(0), &signs.used_rows);
    if used.nrows() == 0 {
        return Err(Error::Degenerate(
            "every observation sits at the center".into(),
        ));
    }
    Ok(used.t().dot(&used) / used.nrows() as f64)
}

fn sign_eigen(signs: &SpatialSigns) -> Result<SymEigen> {
    let used = signs.signs.select(Axis(0), &signs.used_rows);
    let m = used.nrows();
    if m == 0 {
        return Err(Error::Degenerate(
            "every observation sits at the center".into(),
        ));
    }
    let mut eig = if used.ncols() > m {
        gram_eigen_scaled(used.view(), m as f64)?
    } else {
        sym_eigen(sign_covariance(signs)?.view())?
    };
    eig.values.mapv_inplace(|l| l.max(0.0));
    Ok(eig)
}

/// Sign2-style detector: PCA on spatial signs, robust distances of the
/// original data in the retained sign-PCA directions.
pub fn sign2_detect(x: &DataMatrix, alpha: f64) -> Result<DetectionResult> {
    check_alpha(alpha)?;
    let n = x.nrows();
    if n < 3 {
        return Err(Error::TooFewRows { needed: 3, have: n });
    }
    let signs = spatial_signs(x.values())?;
    let eig = sign_eigen(&signs).map_err(Error::at("sign covariance"))?;
    let k = retain_components(eig.values.as_slice().expect("contiguous"), 0.99, n - 1)
        .map_err(Error::at("sign covariance"))?;
    let directions = eig.vectors.slice(ndarray::s![.., ..k]);
    let centered = &x.values() - &signs.center;
    let scores = centered.dot(&directions);
    let (scaled, _) = sphere_columns(scores.view()).map_err(Error::at("score sphering"))?;
    let rd: Vec<f64> = scaled
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let df = scaled.ncols();
    let calibrated = transform_distances(&rd, df).map_err(Error::at("distance calibration"))?;
    Ok(DetectionResult::new(
        "sign2",
        calibrated.transformed,
        chi2_cutoff(df, alpha)?,
        df,
    ))
}
