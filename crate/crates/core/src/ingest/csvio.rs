use std::io::{Read, Write};
use std::path::Path;

use super::{FeatureTable, Label, SpikeEvents};
use crate::error::{Error, Result};
use crate::graph::MetricMatrix;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_usize(field: &str, line: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("expected a non-negative integer, got {field:?}"),
    })
}

/// Reads `features.csv`: header `bin,f0,...,f{K-1}`, one row per bin.
pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureTable<T>> {
    read_features(std::fs::File::open(path)?)
}

pub fn read_features<T: Scalar, R: Read>(input: R) -> Result<FeatureTable<T>> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    if header.len() < 2 || &header[0] != "bin" {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "header must be bin,f0,...".into(),
        });
    }
    let k = header.len() - 1;
    let mut bins = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != k + 1 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} columns, got {}", k + 1, rec.len()),
            });
        }
        bins.push(parse_usize(&rec[0], line)?);
        for (c, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad float {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { line, column: c + 1 });
            }
            data.push(T::c(v));
        }
    }
    let rows = bins.len();
    FeatureTable::new(Matrix::from_vec(rows, k, data)?, bins)
}

pub fn write_features<T: Scalar>(path: impl AsRef<Path>, table: &FeatureTable<T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "bin")?;
    for j in 0..table.feature_dim() {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for r in 0..table.n_rows() {
        write!(w, "{}", table.bins[r])?;
        for &v in table.row(r) {
            write!(w, ",{}", v.to_f64_lossy())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `labels.csv`: header `bin,label`, label in {-1, 1}.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<(usize, Label)>> {
    read_labels(std::fs::File::open(path)?)
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<(usize, Label)>> {
    let mut rdr = reader(input);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if i == 0 {
            if rec.len() != 2 || &rec[0] != "bin" || &rec[1] != "label" {
                return Err(Error::MalformedRow {
                    line,
                    reason: "header must be bin,label".into(),
                });
            }
            saw_header = true;
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 2 columns, got {}", rec.len()),
            });
        }
        let bin = parse_usize(&rec[0], line)?;
        let label = rec[1]
            .parse::<i64>()
            .ok()
            .and_then(Label::from_i64)
            .ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("label must be -1 or 1, got {:?}", &rec[1]),
            })?;
        out.push((bin, label));
    }
    if !saw_header {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "empty file".into(),
        });
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[(usize, Label)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "bin,label")?;
    for (b, l) in labels {
        writeln!(w, "{b},{}", l.as_i8())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `spikes.csv` (`cell,repeat,bin`). Extents default to one past the
/// largest index seen in each column.
pub fn load_spikes(
    path: impl AsRef<Path>,
    extents: Option<(usize, usize, usize)>,
) -> Result<SpikeEvents> {
    read_spikes(std::fs::File::open(path)?, extents)
}

pub fn read_spikes<R: Read>(input: R, extents: Option<(usize, usize, usize)>) -> Result<SpikeEvents> {
    let mut rdr = reader(input);
    let mut events = Vec::new();
    let mut saw_header = false;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if i == 0 {
            if rec.len() != 3 || &rec[0] != "cell" || &rec[1] != "repeat" || &rec[2] != "bin" {
                return Err(Error::MalformedRow {
                    line,
                    reason: "header must be cell,repeat,bin".into(),
                });
            }
            saw_header = true;
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 columns, got {}", rec.len()),
            });
        }
        events.push((
            parse_usize(&rec[0], line)?,
            parse_usize(&rec[1], line)?,
            parse_usize(&rec[2], line)?,
        ));
    }
    if !saw_header {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "empty file".into(),
        });
    }
    let (c, r, b) = extents.unwrap_or_else(|| {
        events.iter().fold((0, 0, 0), |(c, r, b), &(ec, er, eb)| {
            (c.max(ec + 1), r.max(er + 1), b.max(eb + 1))
        })
    });
    SpikeEvents::new(events, c, r, b)
}

/// Writes `M` as `K` headerless rows of `K` comma-separated values.
pub fn write_metric<T: Scalar>(path: impl AsRef<Path>, m: &MetricMatrix<T>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let m = m.matrix();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_f64_lossy().to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_metric`] and validates it as a metric.
pub fn load_metric<T: Scalar>(path: impl AsRef<Path>) -> Result<MetricMatrix<T>> {
    read_metric(std::fs::File::open(path)?)
}

pub fn read_metric<T: Scalar, R: Read>(input: R) -> Result<MetricMatrix<T>> {
    let mut data = Vec::new();
    let mut k = None;
    for (i, rec) in reader(input).records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let width = *k.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {width} columns, got {}", rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad float {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { line, column: c });
            }
            data.push(T::c(v));
        }
    }
    let k = k.ok_or_else(|| Error::MalformedRow {
        line: 1,
        reason: "empty file".into(),
    })?;
    let rows = data.len() / k;
    MetricMatrix::new(Matrix::from_vec(rows, k, data)?)
}
