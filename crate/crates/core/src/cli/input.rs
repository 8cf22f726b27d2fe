//! CSV ingestion.

use std::path::Path;

use ndarray::Array2;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a CSV file with a mandatory header row.
///
/// The first column holds row identifiers when any of its cells is not a
/// number; otherwise every column is data. Constant columns are kept.
pub fn load_csv(path: &Path) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

/// [`load_csv`] on any reader.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Input(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Input("missing header row".into()));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("data row {}: {e}", i + 1)))?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: i + 1,
                col: rec.len().min(header.len()) + 1,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }

    let has_ids = rows.iter().any(|r| parse_number(&r[0]).is_none());
    let first = usize::from(has_ids);
    if first >= header.len() {
        return Err(Error::Input("no numeric columns".into()));
    }
    let (n, p) = (rows.len(), header.len() - first);
    let mut values = Array2::<f64>::zeros((n, p));
    for (i, r) in rows.iter().enumerate() {
        for j in 0..p {
            let cell = &r[first + j];
            values[[i, j]] = parse_number(cell).ok_or_else(|| Error::Parse {
                row: i + 1,
                col: first + j + 1,
                msg: format!(
                    "column '{}' holds non-numeric value {cell:?}",
                    header[first + j]
                ),
            })?;
        }
    }
    let row_ids = if has_ids {
        rows.iter().map(|r| r[0].trim().to_string()).collect()
    } else {
        (1..=n).map(|i| i.to_string()).collect()
    };
    DataMatrix::with_names(values, row_ids, header[first..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<DataMatrix> {
        read_csv(s.as_bytes())
    }

    #[test]
    fn plain_numeric() {
        let m = read("a,b\n1,2\n3,4.5\n-1e-3,6\n").unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        assert_eq!(m.col_names(), ["a", "b"]);
        assert_eq!(m.row_ids(), ["1", "2", "3"]);
        assert_eq!(m.values()[[2, 0]], -1e-3);
    }

    #[test]
    fn id_column_detected() {
        let m = read("name,x,y\noxazole,1,2\n\"thiazole, 2\",3,4\n").unwrap();
        assert_eq!(m.ncols(), 2);
        assert_eq!(m.row_ids(), ["oxazole", "thiazole, 2"]);
        assert_eq!(m.col_names(), ["x", "y"]);
    }

    #[test]
    fn na_cell_is_located() {
        let err = read("a,b\n1,2\n3,NA\n").unwrap_err();
        match err {
            Error::Parse { row, col, ref msg } => {
                assert_eq!((row, col), (2, 2));
                assert!(msg.contains("NA") && msg.contains("'b'"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            read("a,b\n1,2\n3\n"),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(read("a,b\n1,2,3\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn decimal_comma_is_not_a_number() {
        assert!(read("id,a\nr1,\"1,5\"\n").is_err());
    }

    #[test]
    fn constant_columns_kept() {
        let m = read("a,b\n1,7\n2,7\n3,7\n").unwrap();
        assert_eq!(m.ncols(), 2);
    }

    #[test]
    fn empty_inputs() {
        assert!(read("").is_err());
        assert!(read("a,b\n").is_err());
        assert!(read("id\nfoo\n").is_err());
    }
}
