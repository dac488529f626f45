use std::cmp::Ordering;
use std::fs::File;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reads a headed CSV file. `label_column` holds the class; every other
/// column must be numeric.
///
/// Labels map to dense indices by sorted distinct value: numerically when
/// every label parses as a number, lexicographically otherwise.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };

    let headers = reader.headers().map_err(csv_err)?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: label_column.to_string(),
        })?;
    let width = headers.len() - 1;
    if width == 0 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "no feature columns".into(),
        });
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(cell.trim().to_string());
                continue;
            }
            let value = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    path: path.to_path_buf(),
                    line,
                    column: headers[col].to_string(),
                    value: cell.to_string(),
                })?;
            features.push(T::lit(value));
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let distinct = sorted_distinct(&raw_labels);
    let labels = raw_labels
        .iter()
        .map(|l| distinct.binary_search_by(|d| label_order(d, l)).expect("label present"))
        .collect();
    Dataset::new(features, width, labels, distinct.len().max(2))
}

fn label_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

fn sorted_distinct(labels: &[String]) -> Vec<String> {
    let numeric = labels.iter().all(|l| l.parse::<f64>().is_ok());
    let mut d: Vec<String> = labels.to_vec();
    if numeric {
        d.sort_by(|a, b| label_order(a, b));
    } else {
        d.sort();
    }
    d.dedup();
    d
}

/// Writes `dataset` with feature columns `x0..x{d-1}` followed by
/// `label_column` holding the class index.
pub fn write_csv<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = (0..dataset.width()).map(|j| format!("x{j}")).collect();
    header.push(label_column.to_string());
    w.write_record(&header).map_err(io_err)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.label(i).to_string());
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn maps_labels_by_sorted_value() {
        let f = file("x,y,label\n1,2,a\n3,4,b\n5,6,a\n");
        let ds = load_csv::<f64>(f.path(), "label").unwrap();
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let f = file("label,x\n10,0\n2,1\n9,2\n");
        let ds = load_csv::<f64>(f.path(), "label").unwrap();
        assert_eq!(ds.labels(), &[2, 0, 1]);
    }

    #[test]
    fn non_numeric_cell_names_line_and_column() {
        let f = file("x,y,label\n1,2,a\n3,oops,b\n");
        match load_csv::<f64>(f.path(), "label") {
            Err(Error::NonNumeric { line, column, value, .. }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (3, "y", "oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            load_csv::<f64>("/nonexistent/file.csv", "label"),
            Err(Error::Io { .. })
        ));
        let f = file("x,y\n1,2\n");
        assert!(matches!(load_csv::<f64>(f.path(), "label"), Err(Error::MissingColumn { .. })));
        let f = file("x,label\n");
        assert!(matches!(load_csv::<f64>(f.path(), "label"), Err(Error::EmptyFile(_))));
        let f = file("x,label\n1,a\n2\n");
        assert!(matches!(load_csv::<f64>(f.path(), "label"), Err(Error::Csv { line: 3, .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let ds = Dataset::new(
            vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0, 7.0, f64::MAX],
            2,
            vec![1, 0, 2],
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&ds, &path, "class").unwrap();
        let back = load_csv::<f64>(&path, "class").unwrap();
        assert_eq!(back, ds);
    }
}
