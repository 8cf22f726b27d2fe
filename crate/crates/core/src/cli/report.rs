//! Detection reports: resolved settings, per-row records and their serializations.

use std::io::Write;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::evalsim::{fmt_f64, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Prcmpout,
    Classical,
    Ogk,
    Sign2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Fully resolved detector choice; only fields relevant to the method are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub method: MethodName,
    pub alpha: Option<f64>,
    /// OGK reweighting quantile; absent means a single unweighted pass.
    pub beta: Option<f64>,
    pub detector: Option<DetectorConfig>,
}

impl MethodSettings {
    pub fn to_method(&self) -> Result<Method> {
        let alpha = || {
            self.alpha
                .ok_or_else(|| Error::Config(format!("{:?} needs alpha", self.method)))
        };
        Ok(match self.method {
            MethodName::Prcmpout => Method::Prcmpout(self.detector.unwrap_or_default()),
            MethodName::Classical => Method::Classical { alpha: alpha()? },
            MethodName::Ogk => Method::Ogk {
                alpha: alpha()?,
                beta: self.beta,
            },
            MethodName::Sign2 => Method::Sign2 { alpha: alpha()? },
        })
    }
}

/// Run header; enough to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub input: String,
    pub settings: MethodSettings,
    pub format: Format,
    pub n: usize,
    pub p: usize,
    pub p_star: Option<usize>,
    pub dropped_columns: Vec<String>,
    pub variance_fraction: Option<f64>,
    pub stage1_bounds: Option<(f64, f64)>,
    pub stage2_bounds: Option<(f64, f64)>,
    pub cutoff: Option<f64>,
    pub df: Option<usize>,
    pub n_flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutlierRecord {
    Weights {
        row_id: String,
        w1: f64,
        w2: f64,
        w_final: f64,
        stage1_distance: f64,
        stage2_distance: f64,
        flag: bool,
    },
    Cutoff {
        row_id: String,
        distance: f64,
        cutoff: f64,
        flag: bool,
    },
}

impl OutlierRecord {
    pub fn flag(&self) -> bool {
        match self {
            OutlierRecord::Weights { flag, .. } | OutlierRecord::Cutoff { flag, .. } => *flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub header: RunHeader,
    pub records: Vec<OutlierRecord>,
}

/// Runs the configured detector on `x`.
pub fn run_detection(
    x: &DataMatrix,
    input: &str,
    settings: &MethodSettings,
    format: Format,
) -> Result<DetectionReport> {
    let method = settings.to_method()?;
    let ids = x.row_ids();
    let mut header = RunHeader {
        input: input.to_string(),
        settings: *settings,
        format,
        n: x.nrows(),
        p: x.ncols(),
        p_star: None,
        dropped_columns: Vec::new(),
        variance_fraction: None,
        stage1_bounds: None,
        stage2_bounds: None,
        cutoff: None,
        df: None,
        n_flagged: 0,
    };
    let records: Vec<OutlierRecord> = match method {
        Method::Prcmpout(cfg) => {
            let rep = detect(x, &cfg)?;
            header.p_star = Some(rep.p_star);
            header.dropped_columns = rep
                .dropped_columns
                .iter()
                .map(|&j| x.col_names()[j].clone())
                .collect();
            header.variance_fraction = Some(rep.variance_fraction);
            header.stage1_bounds = Some(rep.stage1_bounds);
            header.stage2_bounds = Some(rep.stage2_bounds);
            (0..x.nrows())
                .map(|i| OutlierRecord::Weights {
                    row_id: ids[i].clone(),
                    w1: rep.w1[i],
                    w2: rep.w2[i],
                    w_final: rep.w_final[i],
                    stage1_distance: rep.stage1_distances.transformed[i],
                    stage2_distance: rep.stage2_distances.transformed[i],
                    flag: rep.flags[i],
                })
                .collect()
        }
        _ => {
            let res = method.cutoff_result(x).expect("cutoff method")?;
            header.cutoff = Some(res.cutoff);
            header.df = Some(res.df);
            (0..x.nrows())
                .map(|i| OutlierRecord::Cutoff {
                    row_id: ids[i].clone(),
                    distance: res.distances[i],
                    cutoff: res.cutoff,
                    flag: res.flags[i],
                })
                .collect()
        }
    };
    header.n_flagged = records.iter().filter(|r| r.flag()).count();
    Ok(DetectionReport { header, records })
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// CSV records preceded by a `#` line carrying the header as JSON.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", serde_json::to_string(&self.header)?)?;
        let mut w = csv::Writer::from_writer(out);
        let weights = matches!(self.records.first(), Some(OutlierRecord::Weights { .. }));
        if weights {
            w.write_record([
                "row_id",
                "w1",
                "w2",
                "w_final",
                "stage1_distance",
                "stage2_distance",
                "flag",
            ])?;
        } else {
            w.write_record(["row_id", "distance", "cutoff", "flag"])?;
        }
        for r in &self.records {
            match r {
                OutlierRecord::Weights {
                    row_id,
                    w1,
                    w2,
                    w_final,
                    stage1_distance,
                    stage2_distance,
                    flag,
                } => w.write_record([
                    row_id.clone(),
                    fmt_f64(*w1),
                    fmt_f64(*w2),
                    fmt_f64(*w_final),
                    fmt_f64(*stage1_distance),
                    fmt_f64(*stage2_distance),
                    flag.to_string(),
                ])?,
                OutlierRecord::Cutoff {
                    row_id,
                    distance,
                    cutoff,
                    flag,
                } => w.write_record([
                    row_id.clone(),
                    fmt_f64(*distance),
                    fmt_f64(*cutoff),
                    flag.to_string(),
                ])?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        match self.header.format {
            Format::Json => Ok(self.to_json()?.into_bytes()),
            Format::Csv => {
                let mut buf = Vec::new();
                self.write_csv(&mut buf)?;
                Ok(buf)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalsim::{generate_contaminated, SimSpec};

    fn settings(method: MethodName) -> MethodSettings {
        MethodSettings {
            method,
            alpha: (method != MethodName::Prcmpout).then_some(0.05),
            beta: None,
            detector: (method == MethodName::Prcmpout).then(DetectorConfig::default),
        }
    }

    #[test]
    fn one_record_per_row_in_order() {
        let (x, _) = generate_contaminated(&SimSpec::reference_design(6, 3.0, 2)).unwrap();
        for m in [
            MethodName::Prcmpout,
            MethodName::Classical,
            MethodName::Ogk,
            MethodName::Sign2,
        ] {
            let rep = run_detection(&x, "mem", &settings(m), Format::Json).unwrap();
            assert_eq!(rep.records.len(), 100);
            for (i, r) in rep.records.iter().enumerate() {
                let id = match r {
                    OutlierRecord::Weights { row_id, .. }
                    | OutlierRecord::Cutoff { row_id, .. } => row_id,
                };
                assert_eq!(id, &(i + 1).to_string());
            }
        }
    }

    #[test]
    fn json_round_trips() {
        let (x, _) = generate_contaminated(&SimSpec::reference_design(6, 3.0, 2)).unwrap();
        for m in [MethodName::Prcmpout, MethodName::Sign2] {
            let rep = run_detection(&x, "mem", &settings(m), Format::Json).unwrap();
            let back: DetectionReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
            assert_eq!(back, rep);
        }
    }

    #[test]
    fn csv_values_match_json() {
        let (x, _) = generate_contaminated(&SimSpec::reference_design(6, 3.0, 2)).unwrap();
        let rep = run_detection(&x, "mem", &settings(MethodName::Prcmpout), Format::Csv).unwrap();
        let bytes = rep.render().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for (rec, r) in rdr.records().zip(&rep.records) {
            let rec = rec.unwrap();
            let OutlierRecord::Weights {
                w_final,
                stage1_distance,
                ..
            } = r
            else {
                panic!()
            };
            assert_eq!(rec[3].parse::<f64>().unwrap(), *w_final);
            assert_eq!(rec[4].parse::<f64>().unwrap(), *stage1_distance);
        }
    }
}
