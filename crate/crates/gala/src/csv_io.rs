//! CSV formats: feature datasets, probability matrices, label lists and
//! class counts.
//!
//! Every file carries one header line. Floats are written in shortest
//! round-trip form, so finite values survive a write/read cycle bit-exactly.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use gala_core::{Dataset, Matrix, Role};

use crate::error::{Error, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new().has_headers(true).flexible(true).trim(Trim::All).from_reader(file))
}

fn header(path: &Path, rdr: &mut csv::Reader<File>) -> Result<StringRecord> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
        return Err(Error::Format { path: path.into(), message: "missing header line".into() });
    }
    Ok(h)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

fn records(path: &Path, rdr: &mut csv::Reader<File>, width: usize) -> Result<Vec<(u64, StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::parse(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::parse(path, line, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value: {field:?}")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: u64, field: &str) -> Result<usize> {
    field.parse().map_err(|_| Error::parse(path, line, format!("not a class index: {field:?}")))
}

/// Reads `label,f1,...,fd`. With `num_classes` unset, K is the largest label
/// plus one.
pub fn read_dataset(path: &Path, num_classes: Option<usize>, role: Role) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    if h.len() < 2 || &h[0] != "label" {
        return Err(Error::Format {
            path: path.into(),
            message: "header must be `label,f1,...,fd` with at least one feature".into(),
        });
    }
    let dim = h.len() - 1;
    let rows = records(path, &mut rdr, h.len())?;
    let mut labels = Vec::with_capacity(rows.len());
    let mut features = Vec::with_capacity(rows.len() * dim);
    for (line, rec) in &rows {
        let y = parse_usize(path, *line, &rec[0])?;
        if let Some(k) = num_classes {
            if y >= k {
                return Err(Error::parse(path, *line, format!("label {y} out of range for {k} classes")));
            }
        }
        labels.push(y);
        for field in rec.iter().skip(1) {
            features.push(parse_f64(path, *line, field)?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Format { path: path.into(), message: "no samples".into() });
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Matrix::from_vec(labels.len(), dim, features)?;
    Ok(Dataset::new(features, labels, k, role)?)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut rows = Vec::with_capacity(data.len() + 1);
    let mut h = vec!["label".to_string()];
    h.extend((1..=data.dim()).map(|i| format!("f{i}")));
    rows.push(h);
    for i in 0..data.len() {
        let (x, y) = data.sample(i);
        let mut r = vec![y.to_string()];
        r.extend(x.iter().map(|v| v.to_string()));
        rows.push(r);
    }
    write_rows(path, &rows)
}

/// B x K matrix with header `p0,...,p{K-1}`. Any header names are accepted.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    let rows = records(path, &mut rdr, h.len())?;
    let mut data = Vec::with_capacity(rows.len() * h.len());
    for (line, rec) in &rows {
        for field in rec.iter() {
            data.push(parse_f64(path, *line, field)?);
        }
    }
    Ok(Matrix::from_vec(rows.len(), h.len(), data)?)
}

pub fn write_matrix(path: &Path, m: &Matrix, prefix: &str) -> Result<()> {
    let mut rows = Vec::with_capacity(m.rows() + 1);
    rows.push((0..m.cols()).map(|k| format!("{prefix}{k}")).collect());
    rows.extend(m.iter_rows().map(|r| r.iter().map(|v| v.to_string()).collect()));
    write_rows(path, &rows)
}

/// One class index per line under a `label` header.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    let rows = records(path, &mut rdr, h.len())?;
    if h.len() != 1 {
        return Err(Error::Format { path: path.into(), message: "expected a single `label` column".into() });
    }
    rows.iter().map(|(line, rec)| parse_usize(path, *line, &rec[0])).collect()
}

pub fn write_labels(path: &Path, header_name: &str, labels: &[usize]) -> Result<()> {
    let mut rows = vec![vec![header_name.to_string()]];
    rows.extend(labels.iter().map(|l| vec![l.to_string()]));
    write_rows(path, &rows)
}

/// `class,count` rows, classes in order from 0.
pub fn read_counts(path: &Path) -> Result<Vec<usize>> {
    let mut rdr = reader(path)?;
    let h = header(path, &mut rdr)?;
    if h.len() != 2 {
        return Err(Error::Format { path: path.into(), message: "expected `class,count` columns".into() });
    }
    let rows = records(path, &mut rdr, 2)?;
    let mut counts = Vec::with_capacity(rows.len());
    for (i, (line, rec)) in rows.iter().enumerate() {
        let class = parse_usize(path, *line, &rec[0])?;
        if class != i {
            return Err(Error::parse(path, *line, format!("expected class {i}, found {class}")));
        }
        counts.push(parse_usize(path, *line, &rec[1])?);
    }
    Ok(counts)
}

pub fn write_counts(path: &Path, counts: &[usize]) -> Result<()> {
    let mut rows = vec![vec!["class".to_string(), "count".to_string()]];
    rows.extend(counts.iter().enumerate().map(|(c, n)| vec![c.to_string(), n.to_string()]));
    write_rows(path, &rows)
}

/// Writes string rows; `NaN` cells are expected to be pre-rendered as empty.
pub fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = WriterBuilder::new().flexible(true).from_writer(&mut buf);
        for r in rows {
            w.write_record(r).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Float cell, empty for NaN.
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gala_core::{synthesize, LongTailProfile};

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = LongTailProfile::new(3, 20, 4.0).unwrap();
        let (train, _) = synthesize(&p, 4, 2.0, 5, 11).unwrap();
        let path = dir.path().join("train.csv");
        write_dataset(&path, &train).unwrap();
        let back = read_dataset(&path, Some(3), Role::Train).unwrap();
        assert_eq!(back, train);
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn dataset_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write(dir.path(), "a.csv", "label,f1,f2\n0,1,2\n1,3\n");
        let err = read_dataset(&ragged, None, Role::Train).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        let nonnum = write(dir.path(), "b.csv", "label,f1\n0,1.5\n1,abc\n");
        let err = read_dataset(&nonnum, None, Role::Train).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("abc"), "{err}");

        let range = write(dir.path(), "c.csv", "label,f1\n0,1\n5,2\n");
        let err = read_dataset(&range, Some(2), Role::Train).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("out of range"), "{err}");

        let counts = read_dataset(&range, None, Role::Train).unwrap();
        assert_eq!(counts.class_counts(), &[1, 0, 0, 0, 0, 1]);

        let bad_header = write(dir.path(), "d.csv", "y,f1\n0,1\n");
        assert!(read_dataset(&bad_header, None, Role::Train).is_err());
    }

    #[test]
    fn matrix_and_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(&[vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let p = dir.path().join("m.csv");
        write_matrix(&p, &m, "p").unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);

        let l = dir.path().join("l.csv");
        write_labels(&l, "label", &[2, 0, 1]).unwrap();
        assert_eq!(read_labels(&l).unwrap(), vec![2, 0, 1]);

        let c = dir.path().join("c.csv");
        write_counts(&c, &[500, 30, 5]).unwrap();
        assert_eq!(read_counts(&c).unwrap(), vec![500, 30, 5]);
    }
}
