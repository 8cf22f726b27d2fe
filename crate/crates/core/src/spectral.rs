//! Covariance, symmetric eigendecomposition and principal-component projection.
//!
//! Eigenpairs come from a cyclic Jacobi solver. When there are more columns
//! than rows the decomposition goes through the n×n Gram matrix instead of
//! the p×p covariance, so the cost depends on min(n, p).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample covariance with denominator n − 1.
pub fn covariance(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let xc = center(x);
    let mut c = xc.t().dot(&xc) / (n - 1) as f64;
    symmetrize(&mut c);
    Ok(c)
}

/// Subtracts column means.
pub fn center(x: ArrayView2<'_, f64>) -> Array2<f64> {
    match x.mean_axis(Axis(0)) {
        Some(mean) => &x - &mean,
        None => x.to_owned(),
    }
}

fn symmetrize(c: &mut Array2<f64>) {
    let p = c.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
}

/// Eigenvalues in nonincreasing order with matching unit eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen(c: ArrayView2<'_, f64>) -> Result<SymEigen> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.ncols(),
        });
    }
    crate::data::check_finite(c)?;
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((c[[i, j]] - c[[j, i]]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = c.to_owned();
    symmetrize(&mut a);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut a: Vec<f64> = a.iter().copied().collect();
    // eigenvectors are accumulated as rows so rotations touch contiguous memory
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    if norm > 0.0 {
        jacobi_sweeps(&mut a, &mut vt, n, norm);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&k| a[k * n + k]).collect::<Array1<f64>>();
    let mut vectors = Array2::from_shape_fn((n, n), |(i, j)| vt[order[j] * n + i]);
    fix_signs(&mut vectors);
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for v in &a[i * n + i + 1..(i + 1) * n] {
            s += v * v;
        }
    }
    (2.0 * s).sqrt()
}

// Two distinct rows of a row-major n×n buffer.
fn row_pair(buf: &mut [f64], n: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = buf.split_at_mut(q * n);
    (&mut head[p * n..(p + 1) * n], &mut tail[..n])
}

fn jacobi_sweeps(a: &mut [f64], vt: &mut [f64], n: usize, norm: f64) {
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(a, n) < JACOBI_TOL * norm {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                {
                    let (rp, rq) = row_pair(a, n, p, q);
                    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                        let (akp, akq) = (*x, *y);
                        *x = c * akp - s * akq;
                        *y = s * akp + c * akq;
                    }
                    rp[p] = app - t * apq;
                    rq[q] = aqq + t * apq;
                    rp[q] = 0.0;
                    rq[p] = 0.0;
                }
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                let (vp, vq) = row_pair(vt, n, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (vkp, vkq) = (*x, *y);
                    *x = c * vkp - s * vkq;
                    *y = s * vkp + c * vkq;
                }
            }
        }
    }
}

// Deterministic orientation: the largest-magnitude entry of each column is positive.
fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-12 {
                best = x;
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Nonzero eigenpairs of XcᵀXc/(n−1) computed from the n×n Gram matrix.
///
/// `xc` should already be column-centered; eigenvectors are returned in
/// p-space (one column per nonzero eigenvalue) and renormalized.
pub fn gram_eigen(xc: ArrayView2<'_, f64>) -> Result<SymEigen> {
    let n = xc.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let mut pairs = gram_eigen_scaled(xc, (n - 1) as f64)?;
    if pairs.values.len() > n - 1 {
        pairs.values = pairs.values.slice(ndarray::s![..n - 1]).to_owned();
        pairs.vectors = pairs.vectors.slice(ndarray::s![.., ..n - 1]).to_owned();
    }
    Ok(pairs)
}

const NONZERO_REL: f64 = 1e-10;

/// Nonzero eigenpairs of XᵀX/divisor via the Gram matrix X·Xᵀ/divisor.
pub(crate) fn gram_eigen_scaled(x: ArrayView2<'_, f64>, divisor: f64) -> Result<SymEigen> {
    crate::data::check_finite(x)?;
    let mut gram = x.dot(&x.t()) / divisor;
    symmetrize(&mut gram);
    let small = sym_eigen(gram.view())?;
    let top = small.values.first().copied().unwrap_or(0.0);
    let keep = small
        .values
        .iter()
        .take_while(|&&l| top > 0.0 && l > NONZERO_REL * top)
        .count();
    let mut values = Vec::with_capacity(keep);
    let mut vectors = Array2::<f64>::zeros((x.ncols(), keep));
    for k in 0..keep {
        let u = small.vectors.column(k);
        let mut w = x.t().dot(&u);
        let len = w.dot(&w).sqrt();
        if len == 0.0 {
            break;
        }
        w /= len;
        vectors.column_mut(k).assign(&w);
        values.push(small.values[k]);
    }
    let kept = values.len();
    let mut vectors = vectors.slice(ndarray::s![.., ..kept]).to_owned();
    fix_signs(&mut vectors);
    Ok(SymEigen {
        values: Array1::from(values),
        vectors,
    })
}

/// Smallest k whose leading eigenvalues reach `threshold` of the total, capped at `max_components`.
pub fn retain_components(
    eigenvalues: &[f64],
    threshold: f64,
    max_components: usize,
) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("spectrum is identically zero".into()));
    }
    let mut cumulative = 0.0;
    let mut k = eigenvalues.len();
    for (i, l) in eigenvalues.iter().enumerate() {
        cumulative += l.max(0.0);
        // relative slack absorbs summation roundoff at exact ties
        if cumulative / total >= threshold - 1e-12 {
            k = i + 1;
            break;
        }
    }
    Ok(k.min(max_components.max(1)))
}

/// Retained principal directions of a sphered data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// p×p* matrix with orthonormal columns.
    pub eigenvectors: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub variance_fraction: f64,
    pub total_variance: f64,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Eigenpairs of the sample covariance of `x`, choosing the Gram route when p > n.
pub fn covariance_eigen(x: ArrayView2<'_, f64>) -> Result<(SymEigen, f64)> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let xc = center(x);
    let total = xc.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let mut eig = if p > n {
        gram_eigen(xc.view())?
    } else {
        sym_eigen(covariance(x)?.view())?
    };
    eig.values.mapv_inplace(|l| l.max(0.0));
    Ok((eig, total))
}

/// Fits the principal-component basis covering `threshold` of the variance, at most n − 1 components.
pub fn fit_basis(x: ArrayView2<'_, f64>, threshold: f64) -> Result<PcaBasis> {
    let n = x.nrows();
    let (eig, total) = covariance_eigen(x)?;
    let values = eig.values.to_vec();
    let k = retain_components(&values, threshold, n - 1)?;
    let kept = &values[..k];
    let denom = if total > 0.0 {
        total
    } else {
        values.iter().sum()
    };
    Ok(PcaBasis {
        eigenvectors: eig.vectors.slice(ndarray::s![.., ..k]).to_owned(),
        eigenvalues: kept.to_vec(),
        variance_fraction: (kept.iter().sum::<f64>() / denom).min(1.0),
        total_variance: denom,
    })
}

/// Scores of the rows of `x` on the basis directions.
pub fn project(x: ArrayView2<'_, f64>, basis: &PcaBasis) -> Result<Array2<f64>> {
    if x.ncols() != basis.eigenvectors.nrows() {
        return Err(Error::DimensionMismatch {
            expected: basis.eigenvectors.nrows(),
            found: x.ncols(),
        });
    }
    Ok(x.dot(&basis.eigenvectors))
}
