//! One CSV file per sample: a header row, then one row per time step with
//! the integer time index first and one column per channel.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::generator::SeriesTensor;

/// Reads one sample as `channels x len`.
pub fn read_csv_sample(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let width = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.len();
    if width < 2 {
        return Err(Error::format(path, "need a time column and at least one channel"));
    }
    let channels = width - 1;
    let mut values: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let row = line + 2;
        if record.len() != width {
            return Err(Error::format(path, format!("row {row} has {} fields, expected {width}", record.len())));
        }
        record[0]
            .parse::<i64>()
            .map_err(|_| Error::format(path, format!("row {row}: time index '{}' is not an integer", &record[0])))?;
        for field in record.iter().skip(1) {
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("row {row}: '{field}' is not a number")))?;
            values.push(v);
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    let by_time = Array2::from_shape_vec((steps, channels), values).expect("row widths checked");
    Ok(by_time.reversed_axes().as_standard_layout().into_owned())
}

/// Stacks equally shaped CSV samples in the given order.
pub fn read_csv_dataset(paths: &[PathBuf]) -> Result<SeriesTensor> {
    let samples: Vec<Array2<f64>> = paths.iter().map(read_csv_sample).collect::<Result<_>>()?;
    let first = samples.first().ok_or_else(|| Error::invalid("no CSV files given"))?;
    let (n, t) = first.dim();
    let mut data = Array3::zeros((samples.len(), n, t));
    for (k, (s, p)) in samples.iter().zip(paths).enumerate() {
        if s.dim() != (n, t) {
            return Err(Error::format(p, format!("shape {:?} differs from the first file's {:?}", s.dim(), (n, t))));
        }
        data.index_axis_mut(Axis(0), k).assign(s);
    }
    Ok(SeriesTensor::new(data))
}

/// `*.csv` files in a directory, sorted by name.
pub fn csv_files_in(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

/// Writes one sample with channel ids `c0, c1, ...`.
pub fn write_csv_sample(sample: ndarray::ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..sample.nrows()).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(|e| Error::format(path, e.to_string()))?;
    for (t, col) in sample.columns().into_iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(col.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
