//! Dataset files: the binary format, its JSON sidecar and CSV import.

mod binary;
mod csv;
mod sidecar;

use std::path::Path;

pub use binary::{
    read_binary, read_header, write_binary, DatasetHeader, DatasetWriter, FLAG_STANDARDIZED, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use csv::{csv_files_in, read_csv_dataset, read_csv_sample, write_csv_sample};
pub use sidecar::{sidecar_path, MetadataSidecar};

use crate::error::Result;
use crate::generator::SeriesTensor;

/// Writes the binary file and its sidecar.
pub fn write_dataset(tensor: &SeriesTensor, path: impl AsRef<Path>) -> Result<MetadataSidecar> {
    let path = path.as_ref();
    let sha = write_binary(tensor, path)?;
    let header = DatasetHeader::new(
        tensor.samples(),
        tensor.channels(),
        tensor.len(),
        binary::tensor_flags(tensor),
    );
    let meta = MetadataSidecar::new(header, sha, tensor.provenance.clone());
    meta.write(sidecar_path(path))?;
    Ok(meta)
}

/// Reads a binary file plus its sidecar when one exists.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<(SeriesTensor, Option<MetadataSidecar>)> {
    let path = path.as_ref();
    let (_, mut tensor) = read_binary(path)?;
    let meta_path = sidecar_path(path);
    let meta = if meta_path.exists() {
        Some(MetadataSidecar::read(&meta_path)?)
    } else {
        None
    };
    tensor.provenance = meta.as_ref().and_then(|m| m.provenance.clone());
    Ok((tensor, meta))
}

/// Loads a binary file, a CSV file, or a directory of CSV files.
pub fn load_any(path: impl AsRef<Path>) -> Result<SeriesTensor> {
    let path = path.as_ref();
    if path.is_dir() {
        return read_csv_dataset(&csv_files_in(path)?);
    }
    if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
        return read_csv_dataset(&[path.to_path_buf()]);
    }
    Ok(read_dataset(path)?.0)
}
