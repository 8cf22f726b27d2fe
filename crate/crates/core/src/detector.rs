//! Two-stage principal-component outlier detection.
//!
//! Stage 1 looks for location outliers using kurtosis-weighted distances in
//! the robustly sphered principal-component space; stage 2 looks for scatter
//! outliers using plain Euclidean norms in the same space. Each stage maps its
//! calibrated distances to weights with a translated biweight, and the two
//! weight vectors are combined into a final weight per observation.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_quantile;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::robust::{mad, median, quantile, robust_kurtosis_weight, sphere_columns};
use crate::spectral::{fit_basis, project};

/// Tuning constants for [`detect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Fraction of total variance the retained components must cover.
    pub variance_threshold: f64,
    /// Offset `s` in the weight combination.
    pub scale_const_s: f64,
    /// Final weights strictly below this are flagged.
    pub outlier_cut: f64,
    /// Quantile of the stage-1 distances below which weight is 1.
    pub stage1_full_weight_fraction: f64,
    /// Multiplier on MAD(d) in the stage-1 rejection point.
    pub stage1_c_mad_multiplier: f64,
    pub stage2_m_quantile: f64,
    pub stage2_c_quantile: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 0.99,
            scale_const_s: 0.25,
            outlier_cut: 0.25,
            stage1_full_weight_fraction: 1.0 / 3.0,
            stage1_c_mad_multiplier: 2.5,
            stage2_m_quantile: 0.25,
            stage2_c_quantile: 0.99,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} is out of range")));
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return bad("variance_threshold", self.variance_threshold);
        }
        if !(self.scale_const_s >= 0.0 && self.scale_const_s.is_finite()) {
            return bad("scale_const_s", self.scale_const_s);
        }
        if !open_unit(self.outlier_cut) {
            return bad("outlier_cut", self.outlier_cut);
        }
        if !open_unit(self.stage1_full_weight_fraction) {
            return bad(
                "stage1_full_weight_fraction",
                self.stage1_full_weight_fraction,
            );
        }
        if !(self.stage1_c_mad_multiplier > 0.0 && self.stage1_c_mad_multiplier.is_finite()) {
            return bad("stage1_c_mad_multiplier", self.stage1_c_mad_multiplier);
        }
        if !open_unit(self.stage2_m_quantile) {
            return bad("stage2_m_quantile", self.stage2_m_quantile);
        }
        if !open_unit(self.stage2_c_quantile) {
            return bad("stage2_c_quantile", self.stage2_c_quantile);
        }
        if self.stage2_m_quantile >= self.stage2_c_quantile {
            return Err(Error::Config(
                "stage2_m_quantile must be below stage2_c_quantile".into(),
            ));
        }
        Ok(())
    }
}

/// Raw distances and their median-calibrated counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSet {
    pub raw: Vec<f64>,
    pub transformed: Vec<f64>,
    pub df: usize,
}

/// Rescales `raw` so its median equals √χ²_{df,0.5}.
pub fn transform_distances(raw: &[f64], df: usize) -> Result<DistanceSet> {
    if df == 0 {
        return Err(Error::InvalidArgument("df must be positive".into()));
    }
    if raw.iter().any(|&d| d < 0.0) {
        return Err(Error::InvalidArgument(
            "distances must be nonnegative".into(),
        ));
    }
    let med = median(raw)?;
    if med <= 0.0 {
        return Err(Error::Degenerate("median distance is zero".into()));
    }
    let factor = chi2_quantile(0.5, df as f64)?.sqrt() / med;
    Ok(DistanceSet {
        raw: raw.to_vec(),
        transformed: raw.iter().map(|d| d * factor).collect(),
        df,
    })
}

/// Weight 1 up to `m`, 0 from `c` on, and a biweight bridge in between.
pub fn translated_biweight(d: f64, m: f64, c: f64) -> Result<f64> {
    if !(c > m && m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "biweight needs c > M >= 0, got M = {m}, c = {c}"
        )));
    }
    Ok(biweight_unchecked(d, m, c))
}

fn biweight_unchecked(d: f64, m: f64, c: f64) -> f64 {
    if d <= m {
        1.0
    } else if d >= c {
        0.0
    } else {
        let u = (d - m) / (c - m);
        (1.0 - u * u).powi(2)
    }
}

// Step weights when c collapses onto M.
fn weights_between(d: &[f64], m: f64, c: f64) -> Vec<f64> {
    if c > m {
        d.iter().map(|&x| biweight_unchecked(x, m, c)).collect()
    } else {
        d.iter().map(|&x| if x <= m { 1.0 } else { 0.0 }).collect()
    }
}

/// Output of the location stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationStage {
    pub weights: Vec<f64>,
    pub distances: DistanceSet,
    /// Relative kurtosis weights, summing to one.
    pub kurtosis_weights: Vec<f64>,
    pub m: f64,
    pub c: f64,
}

/// Output of the scatter stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterStage {
    pub weights: Vec<f64>,
    pub distances: DistanceSet,
    pub m: f64,
    pub c: f64,
}

fn row_norms(z: ArrayView2<'_, f64>, weights: Option<&[f64]>) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|row| {
            let s: f64 = match weights {
                Some(w) => row.iter().zip(w).map(|(v, w)| w * v * v).sum(),
                None => row.iter().map(|v| v * v).sum(),
            };
            s.sqrt()
        })
        .collect()
}

/// Location stage on the sphered component scores `zs` (n×p*).
pub fn stage1_location(zs: ArrayView2<'_, f64>, cfg: &DetectorConfig) -> Result<LocationStage> {
    let p_star = zs.ncols();
    if p_star == 0 {
        return Err(Error::Degenerate("no components".into()));
    }
    let mut kurt = Vec::with_capacity(p_star);
    for col in zs.columns() {
        kurt.push(robust_kurtosis_weight(&col.to_vec())?);
    }
    let total: f64 = kurt.iter().sum();
    let relative: Vec<f64> = if total > 0.0 {
        kurt.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / p_star as f64; p_star]
    };

    let rd = row_norms(zs, Some(&relative));
    let distances = transform_distances(&rd, p_star)?;
    let d = &distances.transformed;
    let m = quantile(d, cfg.stage1_full_weight_fraction)?;
    let c = median(d)? + cfg.stage1_c_mad_multiplier * mad(d)?;
    Ok(LocationStage {
        weights: weights_between(d, m, c),
        distances,
        kurtosis_weights: relative,
        m,
        c,
    })
}

/// Scatter stage on the same sphered scores, with χ²_{p*}-based boundaries.
pub fn stage2_scatter(zs: ArrayView2<'_, f64>, cfg: &DetectorConfig) -> Result<ScatterStage> {
    let p_star = zs.ncols();
    if p_star == 0 {
        return Err(Error::Degenerate("no components".into()));
    }
    let rd = row_norms(zs, None);
    let distances = transform_distances(&rd, p_star)?;
    let m = chi2_quantile(cfg.stage2_m_quantile, p_star as f64)?.sqrt();
    let c = chi2_quantile(cfg.stage2_c_quantile, p_star as f64)?.sqrt();
    Ok(ScatterStage {
        weights: weights_between(&distances.transformed, m, c),
        distances,
        m,
        c,
    })
}

/// (w1 + s)(w2 + s) / (1 + s)², elementwise.
pub fn combine_weights(w1: &[f64], w2: &[f64], s: f64) -> Result<Vec<f64>> {
    if w1.len() != w2.len() {
        return Err(Error::DimensionMismatch {
            expected: w1.len(),
            found: w2.len(),
        });
    }
    let denom = (1.0 + s) * (1.0 + s);
    Ok(w1
        .iter()
        .zip(w2)
        .map(|(a, b)| (a + s) * (b + s) / denom)
        .collect())
}

/// Everything [`detect`] computed, per observation and per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w_final: Vec<f64>,
    pub stage1_distances: DistanceSet,
    pub stage2_distances: DistanceSet,
    pub kurtosis_weights: Vec<f64>,
    pub flags: Vec<bool>,
    pub p_star: usize,
    pub dropped_columns: Vec<usize>,
    pub stage1_bounds: (f64, f64),
    pub stage2_bounds: (f64, f64),
    pub variance_fraction: f64,
}

impl WeightReport {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Runs both stages on `x` and flags observations whose final weight is below the cut.
pub fn detect(x: &DataMatrix, cfg: &DetectorConfig) -> Result<WeightReport> {
    cfg.validate()?;
    let n = x.nrows();
    if n < 3 {
        return Err(Error::TooFewRows { needed: 3, have: n });
    }
    let (xs, scale) = sphere_columns(x.values()).map_err(Error::at("robust sphering"))?;
    let basis =
        fit_basis(xs.view(), cfg.variance_threshold).map_err(Error::at("principal components"))?;
    let z = project(xs.view(), &basis).map_err(Error::at("projection"))?;
    let zs = sphere_scores(z).map_err(Error::at("score sphering"))?;

    let loc = stage1_location(zs.view(), cfg).map_err(Error::at("location stage"))?;
    let sca = stage2_scatter(zs.view(), cfg).map_err(Error::at("scatter stage"))?;
    let w_final = combine_weights(&loc.weights, &sca.weights, cfg.scale_const_s)?;
    let flags = w_final.iter().map(|&w| w < cfg.outlier_cut).collect();

    Ok(WeightReport {
        w1: loc.weights,
        w2: sca.weights,
        w_final,
        stage1_distances: loc.distances,
        stage2_distances: sca.distances,
        kurtosis_weights: loc.kurtosis_weights,
        flags,
        p_star: zs.ncols(),
        dropped_columns: scale.dropped_columns,
        stage1_bounds: (loc.m, loc.c),
        stage2_bounds: (sca.m, sca.c),
        variance_fraction: basis.variance_fraction,
    })
}

// Components with zero MAD carry no robust spread and are discarded.
fn sphere_scores(z: Array2<f64>) -> Result<Array2<f64>> {
    let (zs, _) = sphere_columns(z.view())?;
    Ok(zs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn default_config_valid() {
        DetectorConfig::default().validate().unwrap();
        let bad = DetectorConfig {
            stage2_m_quantile: 0.99,
            stage2_c_quantile: 0.25,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn transform_constant_distances() {
        let ds = transform_distances(&[2.0, 2.0, 2.0], 1).unwrap();
        for d in &ds.transformed {
            assert!((d - 0.454_936_423_119_572_7_f64.sqrt()).abs() < 1e-10);
            assert!((d - 0.67449).abs() < 1e-5);
        }
    }

    #[test]
    fn transform_fixed_point() {
        let target = chi2_quantile(0.5, 4.0).unwrap().sqrt();
        let raw = [0.5 * target, target, 3.0 * target];
        let ds = transform_distances(&raw, 4).unwrap();
        for (a, b) in ds.transformed.iter().zip(raw) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_zero_median_errors() {
        assert!(matches!(
            transform_distances(&[0.0, 0.0, 1.0], 2),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn biweight_regions() {
        assert_eq!(translated_biweight(0.5, 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(translated_biweight(2.0, 1.0, 3.0).unwrap(), 0.5625);
        assert_eq!(translated_biweight(3.5, 1.0, 3.0).unwrap(), 0.0);
        assert!(translated_biweight(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let s = 0.25;
        assert_eq!(combine_weights(&[1.0], &[1.0], s).unwrap(), vec![1.0]);
        assert!((combine_weights(&[0.0], &[0.0], s).unwrap()[0] - 0.04).abs() < 1e-15);
        assert_eq!(combine_weights(&[1.0], &[0.0625], s).unwrap(), vec![0.25]);
        assert_eq!(combine_weights(&[0.375], &[0.375], s).unwrap(), vec![0.25]);
        assert!(combine_weights(&[1.0], &[1.0, 1.0], s).is_err());
    }

    #[test]
    fn stage1_uniform_kurtosis_gives_scaled_norm() {
        // sign-symmetric design: every column has the same kurtosis
        let base = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
        let mut z = Array2::<f64>::zeros((7, 3));
        for i in 0..7 {
            for j in 0..3 {
                z[[i, j]] = base[(i + 2 * j) % 7];
            }
        }
        let (zs, _) = sphere_columns(z.view()).unwrap();
        let st = stage1_location(zs.view(), &DetectorConfig::default()).unwrap();
        for w in &st.kurtosis_weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        let plain: Vec<f64> = zs.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let ratio = st.distances.raw[0] / plain[0];
        for (a, b) in st.distances.raw.iter().zip(&plain) {
            assert!((a - ratio * b).abs() < 1e-12);
        }
    }

    #[test]
    fn stage1_rejects_planted_point() {
        let mut x = normal_matrix(100, 10, 3);
        x.row_mut(42).mapv_inplace(|v| v * 100.0 + 100.0);
        let (zs, _) = sphere_columns(x.view()).unwrap();
        let st = stage1_location(zs.view(), &DetectorConfig::default()).unwrap();
        assert_eq!(st.weights[42], 0.0);
    }

    #[test]
    fn stage1_full_weight_count() {
        for (seed, n) in [(1u64, 10usize), (2, 31), (3, 100)] {
            let (zs, _) = sphere_columns(normal_matrix(n, 4, seed).view()).unwrap();
            let st = stage1_location(zs.view(), &DetectorConfig::default()).unwrap();
            let ones = st.weights.iter().filter(|&&w| w == 1.0).count();
            assert!(ones >= n.div_ceil(3), "n={n}: {ones}");
        }
    }

    #[test]
    fn stage2_center_row_full_weight() {
        let mut z = normal_matrix(50, 5, 4);
        z.row_mut(0).fill(0.0);
        let st = stage2_scatter(z.view(), &DetectorConfig::default()).unwrap();
        assert_eq!(st.distances.transformed[0], 0.0);
        assert_eq!(st.weights[0], 1.0);
    }

    #[test]
    fn stage2_scale_free() {
        let z = normal_matrix(60, 4, 5);
        let cfg = DetectorConfig::default();
        let a = stage2_scatter(z.view(), &cfg).unwrap();
        let b = stage2_scatter((&z * 7.5).view(), &cfg).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn stage2_tail_fraction_near_one_percent() {
        let z = normal_matrix(10_000, 10, 6);
        let st = stage2_scatter(z.view(), &DetectorConfig::default()).unwrap();
        let cut = chi2_quantile(0.99, 10.0).unwrap();
        let frac = st
            .distances
            .transformed
            .iter()
            .filter(|d| *d * *d > cut)
            .count() as f64
            / 10_000.0;
        assert!((frac - 0.01).abs() <= 0.01, "tail fraction {frac}");
    }

    #[test]
    fn detect_clean_data_few_flags() {
        let cfg = DetectorConfig::default();
        let mut total = 0.0;
        for seed in 0..16 {
            let x = DataMatrix::new(normal_matrix(100, 10, 1000 + seed)).unwrap();
            total += detect(&x, &cfg).unwrap().n_flagged() as f64 / 100.0;
        }
        // clean-data flag rate at p = 10 sits near 12% over many seeds
        assert!(total / 16.0 < 0.15, "mean flag rate {}", total / 16.0);
    }

    #[test]
    fn detect_wide_data_uses_gram_route() {
        let x = DataMatrix::new(normal_matrix(100, 1000, 7)).unwrap();
        let r = detect(&x, &DetectorConfig::default()).unwrap();
        assert!(r.p_star <= 99);
        assert_eq!(r.flags.len(), 100);
    }

    #[test]
    fn detect_reports_weights_in_range() {
        let x = DataMatrix::new(normal_matrix(40, 6, 8)).unwrap();
        let cfg = DetectorConfig::default();
        let r = detect(&x, &cfg).unwrap();
        let floor = 0.25f64.powi(2) / 1.25f64.powi(2);
        for i in 0..40 {
            assert!((0.0..=1.0).contains(&r.w1[i]));
            assert!((0.0..=1.0).contains(&r.w2[i]));
            assert!(r.w_final[i] >= floor - 1e-15 && r.w_final[i] <= 1.0);
            assert_eq!(r.flags[i], r.w_final[i] < cfg.outlier_cut);
        }
    }

    #[test]
    fn detect_names_failing_step() {
        let x = DataMatrix::new(Array2::from_elem((5, 3), 1.0)).unwrap();
        let err = detect(&x, &DetectorConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("robust sphering"), "{err}");
        assert!(detect(
            &DataMatrix::new(normal_matrix(2, 3, 1)).unwrap(),
            &DetectorConfig::default()
        )
        .is_err());
    }
}
