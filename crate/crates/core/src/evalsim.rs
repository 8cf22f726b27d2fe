//! Contaminated-data simulation, error-rate bookkeeping, dimension sweeps and timing.
//!
//! Inliers are i.i.d. standard normal. Outliers are normal with mean
//! `location_shift` and covariance `scatter_factor`·I, so a shift of zero with
//! unit scatter makes them indistinguishable from inliers. Every table records
//! the [`SimSpec`] it was generated from.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{classical_detect, ogk_detect, sign2_detect, DetectionResult};
use crate::data::DataMatrix;
use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};

/// Row positions (1-based) of the 18 planted outliers among 100 observations.
pub const REFERENCE_OUTLIER_ROWS: [usize; 18] = [
    10, 16, 18, 22, 23, 25, 27, 29, 30, 47, 66, 70, 72, 80, 84, 90, 99, 100,
];

/// Simulation design for one contaminated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    /// 1-based row indices of the outliers.
    pub outlier_indices: Vec<usize>,
    pub location_shift: Vec<f64>,
    pub scatter_factor: f64,
    pub seed: u64,
}

impl SimSpec {
    /// n = 100 with outliers at [`REFERENCE_OUTLIER_ROWS`], each coordinate shifted by `shift`.
    pub fn reference_design(p: usize, shift: f64, seed: u64) -> Self {
        Self {
            n: 100,
            p,
            outlier_indices: REFERENCE_OUTLIER_ROWS.to_vec(),
            location_shift: vec![shift; p],
            scatter_factor: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config("n and p must be positive".into()));
        }
        if let Some(&bad) = self.outlier_indices.iter().find(|&&i| i == 0 || i > self.n) {
            return Err(Error::Config(format!(
                "outlier index {bad} is outside 1..={}",
                self.n
            )));
        }
        if self.location_shift.len() != self.p {
            return Err(Error::Config(format!(
                "location_shift has {} entries for p = {}",
                self.location_shift.len(),
                self.p
            )));
        }
        if !(self.scatter_factor > 0.0 && self.scatter_factor.is_finite()) {
            return Err(Error::Config("scatter_factor must be positive".into()));
        }
        Ok(())
    }

    /// Same design at a different dimension; a constant shift is replicated to the new length.
    pub fn with_dimension(&self, p: usize) -> Result<Self> {
        let shift = if self.location_shift.len() == p {
            self.location_shift.clone()
        } else {
            match self.location_shift.first() {
                Some(&s) if self.location_shift.iter().all(|&v| v == s) => vec![s; p],
                None => vec![0.0; p],
                _ => {
                    return Err(Error::Config(
                        "a non-constant location_shift cannot be resized".into(),
                    ))
                }
            }
        };
        Ok(Self {
            p,
            location_shift: shift,
            ..self.clone()
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn truth(&self) -> Vec<bool> {
        let mut t = vec![false; self.n];
        for &i in &self.outlier_indices {
            t[i - 1] = true;
        }
        t
    }
}

/// Draws one data set; a pure function of `spec`.
pub fn generate_contaminated(spec: &SimSpec) -> Result<(DataMatrix, Vec<bool>)> {
    spec.validate()?;
    let truth = spec.truth();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spread = spec.scatter_factor.sqrt();
    let mut values = Array2::<f64>::zeros((spec.n, spec.p));
    for (mut row, &outlier) in values.rows_mut().into_iter().zip(&truth) {
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = if outlier {
                spec.location_shift[j] + spread * z
            } else {
                z
            };
        }
    }
    Ok((DataMatrix::new(values)?, truth))
}

/// 2×2 outcome counts: a/b are true outliers flagged/missed, c/d are inliers flagged/passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl ConfusionCounts {
    /// Outlier error rate b/(a+b); `None` without true outliers.
    pub fn fn_rate(&self) -> Option<f64> {
        let k = self.a + self.b;
        (k > 0).then(|| self.b as f64 / k as f64)
    }

    /// Inlier error rate c/(c+d); `None` without true inliers.
    pub fn fp_rate(&self) -> Option<f64> {
        let k = self.c + self.d;
        (k > 0).then(|| self.c as f64 / k as f64)
    }

    pub fn total(&self) -> usize {
        self.a + self.b + self.c + self.d
    }
}

pub fn confusion(truth: &[bool], flags: &[bool]) -> Result<ConfusionCounts> {
    if truth.len() != flags.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: flags.len(),
        });
    }
    let mut cc = ConfusionCounts {
        a: 0,
        b: 0,
        c: 0,
        d: 0,
    };
    for (&t, &f) in truth.iter().zip(flags) {
        match (t, f) {
            (true, true) => cc.a += 1,
            (true, false) => cc.b += 1,
            (false, true) => cc.c += 1,
            (false, false) => cc.d += 1,
        }
    }
    Ok(cc)
}

/// Anything that turns a data matrix into per-row outlier flags.
pub trait Detector: Sync {
    fn name(&self) -> &str;

    /// Significance level behind a χ² cutoff, if the method uses one.
    fn alpha(&self) -> Option<f64> {
        None
    }

    fn flag(&self, x: &DataMatrix) -> Result<Vec<bool>>;
}

/// The detectors shipped with this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Prcmpout(DetectorConfig),
    Classical {
        alpha: f64,
    },
    /// `beta = None` skips the reweighting step.
    Ogk {
        alpha: f64,
        beta: Option<f64>,
    },
    Sign2 {
        alpha: f64,
    },
}

impl Method {
    /// Runs a cutoff-based method; `None` for the weight-based detector.
    pub fn cutoff_result(&self, x: &DataMatrix) -> Option<Result<DetectionResult>> {
        match *self {
            Method::Prcmpout(_) => None,
            Method::Classical { alpha } => Some(classical_detect(x, alpha)),
            Method::Ogk { alpha, beta } => Some(match beta {
                Some(beta) => ogk_detect(x, alpha, beta),
                None => crate::baselines::ogk_detect_unweighted(x, alpha),
            }),
            Method::Sign2 { alpha } => Some(sign2_detect(x, alpha)),
        }
    }
}

impl Detector for Method {
    fn name(&self) -> &str {
        match self {
            Method::Prcmpout(_) => "prcmpout",
            Method::Classical { .. } => "classical",
            Method::Ogk { .. } => "ogk",
            Method::Sign2 { .. } => "sign2",
        }
    }

    fn alpha(&self) -> Option<f64> {
        match *self {
            Method::Prcmpout(_) => None,
            Method::Classical { alpha } | Method::Ogk { alpha, .. } | Method::Sign2 { alpha } => {
                Some(alpha)
            }
        }
    }

    fn flag(&self, x: &DataMatrix) -> Result<Vec<bool>> {
        match self {
            Method::Prcmpout(cfg) => Ok(detect(x, cfg)?.flags),
            other => Ok(other.cutoff_result(x).expect("cutoff method")?.flags),
        }
    }
}

/// Runs `detector` on labeled data and tallies the outcome.
pub fn evaluate_labeled(
    detector: &dyn Detector,
    x: &DataMatrix,
    truth: &[bool],
) -> Result<ConfusionCounts> {
    confusion(truth, &detector.flag(x)?)
}

/// One (p, detector) cell of a dimension sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub alpha: Option<f64>,
    pub detector: String,
    pub mean_fn: Option<f64>,
    pub mean_fp: Option<f64>,
    pub replications: usize,
    /// Base seed; replication r used seed + r.
    pub seed: u64,
    pub failures: usize,
    pub errors: Vec<String>,
}

/// Sweep results together with the design that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SimSpec,
    pub rows: Vec<SweepRow>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, k) = values
        .flatten()
        .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    (k > 0).then(|| sum / k as f64)
}

/// Mean FN/FP of `detector` at each dimension over seeded replications.
///
/// Replications run in parallel; results are reduced in replication order.
pub fn dimension_sweep(
    detector: &dyn Detector,
    p_values: &[usize],
    replications: usize,
    base_spec: &SimSpec,
) -> Result<SweepTable> {
    if replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let mut rows = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let spec = base_spec.with_dimension(p)?;
        spec.validate()?;
        let outcomes: Vec<Result<ConfusionCounts>> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let rep = spec.with_seed(spec.seed.wrapping_add(r as u64));
                let (x, truth) = generate_contaminated(&rep)?;
                evaluate_labeled(detector, &x, &truth)
            })
            .collect();
        let mut counts = Vec::new();
        let mut errors = Vec::new();
        for outcome in outcomes {
            match outcome {
                Ok(c) => counts.push(c),
                Err(e) => errors.push(e.to_string()),
            }
        }
        rows.push(SweepRow {
            p,
            alpha: detector.alpha(),
            detector: detector.name().to_string(),
            mean_fn: mean_defined(counts.iter().map(ConfusionCounts::fn_rate)),
            mean_fp: mean_defined(counts.iter().map(ConfusionCounts::fp_rate)),
            replications,
            seed: spec.seed,
            failures: errors.len(),
            errors,
        });
    }
    Ok(SweepTable {
        spec: base_spec.clone(),
        rows,
    })
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "p",
            "alpha",
            "detector",
            "mean_fn",
            "mean_fp",
            "replications",
            "seed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                fmt_opt(r.alpha),
                r.detector.clone(),
                fmt_opt(r.mean_fn),
                fmt_opt(r.mean_fp),
                r.replications.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Median wall-clock time of one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub detector: String,
    pub median_seconds: f64,
    pub runs: Vec<f64>,
}

/// Times each detector `repeats` times on one generated data set.
pub fn time_detectors(
    detectors: &[&dyn Detector],
    spec: &SimSpec,
    repeats: usize,
) -> Result<Vec<TimingRow>> {
    if repeats < 3 {
        return Err(Error::Config("timing needs at least 3 repeats".into()));
    }
    let (x, _) = generate_contaminated(spec)?;
    let mut rows = Vec::with_capacity(detectors.len());
    for det in detectors {
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let flags = det.flag(&x).map_err(|e| Error::Step {
                step: "timing run",
                source: Box::new(e),
            })?;
            runs.push(start.elapsed().as_secs_f64());
            std::hint::black_box(flags);
        }
        let median_seconds = crate::robust::median(&runs)?;
        rows.push(TimingRow {
            detector: det.name().to_string(),
            median_seconds,
            runs,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_spec_has_no_outliers() {
        let spec = SimSpec {
            outlier_indices: vec![],
            ..SimSpec::reference_design(5, 3.0, 1)
        };
        let (x, truth) = generate_contaminated(&spec).unwrap();
        assert!(truth.iter().all(|t| !t));
        assert_eq!((x.nrows(), x.ncols()), (100, 5));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SimSpec::reference_design(7, 1.5, 42);
        let (a, _) = generate_contaminated(&spec).unwrap();
        let (b, _) = generate_contaminated(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_contaminated(&spec.with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn outliers_carry_the_shift() {
        let spec = SimSpec::reference_design(3, 50.0, 3);
        let (x, truth) = generate_contaminated(&spec).unwrap();
        for (row, t) in x.values().rows().into_iter().zip(truth) {
            assert_eq!(row.iter().all(|&v| v > 25.0), t);
        }
        assert_eq!(spec.truth().iter().filter(|&&t| t).count(), 18);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SimSpec::reference_design(3, 1.0, 0);
        spec.outlier_indices.push(101);
        assert!(generate_contaminated(&spec).is_err());
        let mut spec = SimSpec::reference_design(3, 1.0, 0);
        spec.scatter_factor = 0.0;
        assert!(generate_contaminated(&spec).is_err());
        let mut spec = SimSpec::reference_design(3, 1.0, 0);
        spec.location_shift.pop();
        assert!(generate_contaminated(&spec).is_err());
    }

    #[test]
    fn confusion_examples() {
        let mut truth = vec![true; 18];
        truth.extend(vec![false; 82]);
        let mut flags = vec![true; 15];
        flags.extend(vec![false; 3]);
        flags.extend(vec![true; 8]);
        flags.extend(vec![false; 74]);
        let cc = confusion(&truth, &flags).unwrap();
        assert_eq!(
            cc,
            ConfusionCounts {
                a: 15,
                b: 3,
                c: 8,
                d: 74
            }
        );
        assert!((cc.fn_rate().unwrap() - 3.0 / 18.0).abs() < 1e-15);
        assert!((cc.fp_rate().unwrap() - 8.0 / 82.0).abs() < 1e-15);
        assert_eq!(format!("{:.2}", 100.0 * cc.fn_rate().unwrap()), "16.67");
        assert_eq!(format!("{:.2}", 100.0 * cc.fp_rate().unwrap()), "9.76");

        let perfect = confusion(&truth, &truth).unwrap();
        assert_eq!(
            (perfect.fn_rate(), perfect.fp_rate()),
            (Some(0.0), Some(0.0))
        );
        let all = confusion(&truth, &[true; 100]).unwrap();
        assert_eq!((all.fn_rate(), all.fp_rate()), (Some(0.0), Some(1.0)));

        let none = confusion(&[false, false], &[true, false]).unwrap();
        assert_eq!(none.fn_rate(), None);
        assert!(confusion(&[true], &[true, false]).is_err());
    }

    #[test]
    fn separable_sweep_has_no_misses() {
        let det = Method::Prcmpout(DetectorConfig::default());
        let base = SimSpec::reference_design(10, 50.0, 7);
        let t = dimension_sweep(&det, &[10, 20], 1, &base).unwrap();
        for row in &t.rows {
            assert_eq!(row.mean_fn, Some(0.0));
            assert_eq!(row.failures, 0);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let det = Method::Classical { alpha: 0.05 };
        let a = dimension_sweep(&det, &[10], 1, &SimSpec::reference_design(10, 1.0, 1)).unwrap();
        let b = dimension_sweep(&det, &[10], 1, &SimSpec::reference_design(10, 1.0, 2)).unwrap();
        assert_ne!(a.rows[0].mean_fn, b.rows[0].mean_fn);
    }

    #[test]
    fn sweep_failures_are_recorded() {
        // classical needs n > p
        let det = Method::Classical { alpha: 0.05 };
        let t = dimension_sweep(&det, &[150], 2, &SimSpec::reference_design(10, 1.0, 1)).unwrap();
        assert_eq!(t.rows[0].failures, 2);
        assert_eq!(t.rows[0].mean_fn, None);
    }

    #[test]
    fn csv_header_and_determinism() {
        let det = Method::Sign2 { alpha: 0.1 };
        let base = SimSpec::reference_design(10, 1.5, 11);
        let run = || {
            let mut buf = Vec::new();
            dimension_sweep(&det, &[10, 20], 3, &base)
                .unwrap()
                .write_csv(&mut buf)
                .unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = run();
        assert!(a.starts_with("p,alpha,detector,mean_fn,mean_fp,replications,seed\n"));
        assert_eq!(a.lines().count(), 3);
        assert_eq!(a, run());
    }

    #[test]
    fn timing_medians() {
        let det = Method::Prcmpout(DetectorConfig::default());
        let rows = time_detectors(&[&det], &SimSpec::reference_design(10, 1.0, 0), 3).unwrap();
        assert_eq!(rows[0].runs.len(), 3);
        assert!(rows[0].median_seconds.is_finite() && rows[0].median_seconds > 0.0);
        assert!(time_detectors(&[&det], &SimSpec::reference_design(10, 1.0, 0), 2).is_err());
    }

    #[test]
    fn confusion_partitions_n() {
        let det = Method::Prcmpout(DetectorConfig::default());
        let (x, truth) = generate_contaminated(&SimSpec::reference_design(10, 2.0, 5)).unwrap();
        let cc = evaluate_labeled(&det, &x, &truth).unwrap();
        assert_eq!(cc.total(), 100);
    }
}
