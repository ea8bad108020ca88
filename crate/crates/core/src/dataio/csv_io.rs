use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DataError, TimeSeries};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a comma-separated file with a header row of variate names and one
/// row per timestamp. `label_path` points at a header-less single column of
/// 0/1 values.
pub fn load_csv(path: &Path, label_path: Option<&Path>) -> Result<TimeSeries, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::Empty(format!("{}: missing header", path.display())));
    }
    let n = names.len();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n {
            return Err(DataError::Ragged {
                row,
                expected: n,
                got: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                row,
                col,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    row,
                    col,
                    value: field.to_string(),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(DataError::Empty(format!("{}: no data rows", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ts = TimeSeries::new(name, values, n)?.with_variate_names(names)?;
    if let Some(lp) = label_path {
        ts.set_labels(load_labels(lp)?)?;
    }
    Ok(ts)
}

/// Reads a header-less single column of 0/1 labels.
pub fn load_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = record.get(0).unwrap_or("");
        let l = match field {
            "0" => 0,
            "1" => 1,
            _ => return Err(DataError::NonBinaryLabel { row }),
        };
        labels.push(l);
    }
    Ok(labels)
}

pub fn write_csv(ts: &TimeSeries, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(ts.variate_names())?;
    let mut buf = Vec::with_capacity(ts.n_variates());
    for t in 0..ts.len() {
        buf.clear();
        buf.extend(ts.row(t).iter().map(|v| v.to_string()));
        w.write_record(&buf)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_labels(labels: &[u8], path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parses_three_by_two() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x,y\n1,2\n3,4\n5,6\n");
        let ts = load_csv(&p, None).unwrap();
        assert_eq!((ts.len(), ts.n_variates()), (3, 2));
        assert_eq!(ts.variate_names(), &["x".to_string(), "y".to_string()]);
        assert_eq!(ts.value(2, 1), 6.0);
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x,y\n1,2\n3,4\n5,6\n");
        let l = write(dir.path(), "l.csv", "0\n1\n");
        assert!(matches!(
            load_csv(&p, Some(&l)),
            Err(DataError::LabelLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn nan_cell_names_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x,y\n1,2\n3,NaN\n");
        match load_csv(&p, None) {
            Err(DataError::Parse { row, col, .. }) => assert_eq!((row, col), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "x,y\n1,2\n3\n");
        assert!(matches!(load_csv(&p, None), Err(DataError::Ragged { row: 1, .. })));
        let p = write(dir.path(), "b.csv", "");
        assert!(matches!(load_csv(&p, None), Err(DataError::Empty(_))));
        let p = write(dir.path(), "c.csv", "x,y\n");
        assert!(matches!(load_csv(&p, None), Err(DataError::Empty(_))));
        let p = write(dir.path(), "d.csv", "x\nabc\n");
        assert!(matches!(load_csv(&p, None), Err(DataError::Parse { .. })));
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        let ts = TimeSeries::new("s", vals.clone(), 2)
            .unwrap()
            .with_labels(vec![0, 1])
            .unwrap();
        let p = dir.path().join("s.csv");
        let l = dir.path().join("s_labels.csv");
        write_csv(&ts, &p).unwrap();
        write_labels(ts.labels().unwrap(), &l).unwrap();
        let back = load_csv(&p, Some(&l)).unwrap();
        assert_eq!(back.values(), &vals[..]);
        assert_eq!(back.labels().unwrap(), &[0, 1]);
    }
}
