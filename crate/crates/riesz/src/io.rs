//! CSV datasets and report files.

use std::io::Write;
use std::path::Path;

use riesz_core::{Dataset, Layout};
use serde::Serialize;

use crate::error::CliError;

/// Numeric table read from a headed CSV file.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let fail = |reason: String| CliError::DataLoad {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let header: Vec<String> = rdr.headers().map_err(|e| fail(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let row = rec
            .iter()
            .zip(&header)
            .map(|(v, h)| v.parse::<f64>().map_err(|_| fail(format!("row {}: column {h}: not a number: {v:?}", i + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fail("no data rows".into()));
    }
    Ok(Table { header, rows })
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

/// Reads observations from `path`: column `y` is the outcome, a column `d`
/// (if present) becomes the leading treatment coordinate, and every other
/// column is a regressor in file order. The optional `target` file must
/// carry the same regressor columns; its `y` column, if any, is ignored.
pub fn read_dataset(path: &Path, target: Option<&Path>) -> Result<Dataset, CliError> {
    let fail = |p: &Path, reason: String| CliError::DataLoad { path: p.to_path_buf(), reason };
    let t = read_table(path)?;
    let y_col = column(&t.header, "y").ok_or_else(|| fail(path, "missing outcome column `y`".into()))?;
    let d_col = column(&t.header, "d");
    let mut names: Vec<&str> = d_col.iter().map(|_| "d").collect();
    names.extend(t.header.iter().map(String::as_str).filter(|h| *h != "y" && *h != "d"));
    if names.is_empty() {
        return Err(fail(path, "no regressor columns".into()));
    }
    let pick = |table: &Table, p: &Path| -> Result<Vec<f64>, CliError> {
        let idx = names
            .iter()
            .map(|n| column(&table.header, n).ok_or_else(|| fail(p, format!("missing column `{n}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(table.rows.iter().flat_map(|r| idx.iter().map(move |&j| r[j])).collect())
    };
    let x = pick(&t, path)?;
    let y = t.rows.iter().map(|r| r[y_col]).collect();
    let layout = if d_col.is_some() { Layout::TreatmentFirst } else { Layout::Generic };
    let mut data = Dataset::new(x, y, names.len(), layout).map_err(|e| fail(path, e.to_string()))?;
    if let Some(tp) = target {
        let tt = read_table(tp)?;
        data = data.with_target(pick(&tt, tp)?).map_err(|e| fail(tp, e.to_string()))?;
    }
    Ok(data)
}

/// Serializes `rows` as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// CSV text of `rows`; a header-only string for an empty slice needs
/// `header`.
pub fn csv_string<T: Serialize>(rows: &[T], header: &str) -> String {
    if rows.is_empty() {
        return format!("{header}\n");
    }
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_column_moves_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "z1,y,d\n0.5,1.0,1\n-0.5,2.0,0\n").unwrap();
        let d = read_dataset(&p, None).unwrap();
        assert_eq!(d.layout(), Layout::TreatmentFirst);
        assert_eq!(d.x(0), &[1.0, 0.5]);
        assert_eq!(d.ys(), &[1.0, 2.0]);
    }

    #[test]
    fn bad_cells_are_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "x,y\n1,abc\n").unwrap();
        assert_eq!(read_dataset(&p, None).unwrap_err().exit_code(), 3);
        std::fs::write(&p, "x,w\n1,2\n").unwrap();
        assert_eq!(read_dataset(&p, None).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn target_sample_by_column_name() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s.csv"), dir.path().join("t.csv"));
        std::fs::write(&s, "x1,x2,y\n1,2,3\n4,5,6\n").unwrap();
        std::fs::write(&t, "x2,x1\n7,8\n").unwrap();
        let d = read_dataset(&s, Some(&t)).unwrap();
        assert_eq!(d.target(0).unwrap(), &[8.0, 7.0]);
    }
}
