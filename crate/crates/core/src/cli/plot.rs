//! Long-format plot data: one `(panel, x, y, flag)` row per plotted point.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::report::{DetectionReport, OutlierRecord};
use crate::error::{Error, Result};
use crate::evalsim::{fmt_f64, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    DistanceIndex,
    WeightPanels,
    SweepCurves,
}

/// Anything plot data can be drawn from.
#[derive(Debug, Clone)]
pub enum PlotSource {
    Detection(Box<DetectionReport>),
    Sweep(SweepTable),
}

impl PlotSource {
    /// Parses a JSON detection report or sweep table.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        if v.get("records").is_some() {
            Ok(PlotSource::Detection(serde_json::from_value(v)?))
        } else if v.get("rows").is_some() {
            Ok(PlotSource::Sweep(serde_json::from_value(v)?))
        } else {
            Err(Error::Input("not a detection report or sweep table".into()))
        }
    }
}

/// `<stem>_boundaries.csv` next to `path`.
pub fn boundaries_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_boundaries.csv"))
}

type Row = (String, String, String, String);

fn row(panel: &str, x: impl ToString, y: String, flag: impl ToString) -> Row {
    (panel.to_string(), x.to_string(), y, flag.to_string())
}

fn flag01(f: bool) -> u8 {
    u8::from(f)
}

fn distance_index(rep: &DetectionReport) -> Result<Vec<Row>> {
    let cutoff = rep
        .header
        .cutoff
        .ok_or_else(|| Error::Config("distance_index needs a cutoff-based report".into()))?;
    let mut rows = Vec::with_capacity(rep.records.len() + 1);
    for (i, r) in rep.records.iter().enumerate() {
        let OutlierRecord::Cutoff { distance, flag, .. } = r else {
            return Err(Error::Config(
                "distance_index needs a cutoff-based report".into(),
            ));
        };
        rows.push(row("distance", i + 1, fmt_f64(*distance), flag01(*flag)));
    }
    rows.push(row("cutoff", "", fmt_f64(cutoff), ""));
    Ok(rows)
}

fn weight_panels(rep: &DetectionReport) -> Result<(Vec<Row>, Vec<Row>)> {
    let mismatch = || Error::Config("weight_panels needs a prcmpout report".into());
    let settings = &rep.header.settings;
    let (b1, b2) = rep
        .header
        .stage1_bounds
        .zip(rep.header.stage2_bounds)
        .ok_or_else(mismatch)?;
    let cut = settings.detector.ok_or_else(mismatch)?.outlier_cut;
    let panels = [
        "stage1_distance",
        "w1",
        "stage2_distance",
        "w2",
        "w_final",
        "flag",
    ];
    let mut per_panel: Vec<Vec<Row>> = vec![Vec::new(); panels.len()];
    for (i, r) in rep.records.iter().enumerate() {
        let OutlierRecord::Weights {
            w1,
            w2,
            w_final,
            stage1_distance,
            stage2_distance,
            flag,
            ..
        } = r
        else {
            return Err(mismatch());
        };
        let ys = [
            fmt_f64(*stage1_distance),
            fmt_f64(*w1),
            fmt_f64(*stage2_distance),
            fmt_f64(*w2),
            fmt_f64(*w_final),
            flag01(*flag).to_string(),
        ];
        for ((panel, y), out) in panels.iter().zip(ys).zip(per_panel.iter_mut()) {
            out.push(row(panel, i + 1, y, flag01(*flag)));
        }
    }
    let bounds = vec![
        row("stage1_distance", "M", fmt_f64(b1.0), ""),
        row("stage1_distance", "c", fmt_f64(b1.1), ""),
        row("stage2_distance", "M", fmt_f64(b2.0), ""),
        row("stage2_distance", "c", fmt_f64(b2.1), ""),
        row("w_final", "cut", fmt_f64(cut), ""),
    ];
    Ok((per_panel.concat(), bounds))
}

fn sweep_curves(t: &SweepTable) -> Vec<Row> {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut rows = Vec::with_capacity(2 * t.rows.len());
    for r in &t.rows {
        rows.push(row("mean_fn", r.p, opt(r.mean_fn), ""));
        rows.push(row("mean_fp", r.p, opt(r.mean_fp), ""));
    }
    rows
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["panel", "x", "y", "flag"])?;
    for r in rows {
        w.write_record([&r.0, &r.1, &r.2, &r.3])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes plot data of `kind` to `path`.
///
/// `weight_panels` also writes the stage boundaries and the weight cut to
/// [`boundaries_path`] so the main file keeps exactly six panels of n rows.
pub fn emit_plot_data(source: &PlotSource, kind: PlotKind, path: &Path) -> Result<()> {
    match (source, kind) {
        (PlotSource::Detection(rep), PlotKind::DistanceIndex) => {
            write_rows(path, &distance_index(rep)?)
        }
        (PlotSource::Detection(rep), PlotKind::WeightPanels) => {
            let (rows, bounds) = weight_panels(rep)?;
            write_rows(path, &rows)?;
            write_rows(&boundaries_path(path), &bounds)
        }
        (PlotSource::Sweep(t), PlotKind::SweepCurves) => write_rows(path, &sweep_curves(t)),
        (_, kind) => Err(Error::Config(format!(
            "plot kind {kind:?} does not match the report"
        ))),
    }
}

/// The plot kind a source naturally produces.
pub fn default_kind(source: &PlotSource) -> PlotKind {
    match source {
        PlotSource::Sweep(_) => PlotKind::SweepCurves,
        PlotSource::Detection(r) if r.header.cutoff.is_some() => PlotKind::DistanceIndex,
        PlotSource::Detection(_) => PlotKind::WeightPanels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::report::{run_detection, Format, MethodName, MethodSettings};
    use crate::detector::DetectorConfig;
    use crate::evalsim::{dimension_sweep, generate_contaminated, Method, SimSpec};

    fn report(method: MethodName) -> DetectionReport {
        let (x, _) = generate_contaminated(&SimSpec::reference_design(5, 4.0, 9)).unwrap();
        let s = MethodSettings {
            method,
            alpha: (method != MethodName::Prcmpout).then_some(0.05),
            beta: None,
            detector: (method == MethodName::Prcmpout).then(DetectorConfig::default),
        };
        run_detection(&x, "mem", &s, Format::Json).unwrap()
    }

    fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["panel", "x", "y", "flag"]);
        rdr.records().map(|r| r.unwrap()).collect()
    }

    #[test]
    fn distance_index_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        emit_plot_data(
            &PlotSource::Detection(Box::new(report(MethodName::Classical))),
            PlotKind::DistanceIndex,
            &path,
        )
        .unwrap();
        let rows = read_rows(&path);
        assert_eq!(rows.len(), 101);
        assert_eq!(rows.iter().filter(|r| &r[0] == "cutoff").count(), 1);
    }

    #[test]
    fn weight_panels_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        emit_plot_data(
            &PlotSource::Detection(Box::new(report(MethodName::Prcmpout))),
            PlotKind::WeightPanels,
            &path,
        )
        .unwrap();
        let rows = read_rows(&path);
        let mut panels: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
        panels.dedup();
        assert_eq!(panels.len(), 6);
        for p in panels {
            assert_eq!(rows.iter().filter(|r| &r[0] == p).count(), 100);
        }
        assert_eq!(read_rows(&dir.path().join("w_boundaries.csv")).len(), 5);
    }

    #[test]
    fn sweep_curves_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let t = dimension_sweep(
            &Method::Classical { alpha: 0.05 },
            &[5, 10, 15],
            2,
            &SimSpec::reference_design(5, 2.0, 0),
        )
        .unwrap();
        emit_plot_data(&PlotSource::Sweep(t), PlotKind::SweepCurves, &path).unwrap();
        assert_eq!(read_rows(&path).len(), 6);
    }

    #[test]
    fn mismatched_kind_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let pr = PlotSource::Detection(Box::new(report(MethodName::Prcmpout)));
        assert!(emit_plot_data(&pr, PlotKind::DistanceIndex, &path).is_err());
        assert!(emit_plot_data(&pr, PlotKind::SweepCurves, &path).is_err());
        let cl = PlotSource::Detection(Box::new(report(MethodName::Sign2)));
        assert!(emit_plot_data(&cl, PlotKind::WeightPanels, &path).is_err());
    }
}
