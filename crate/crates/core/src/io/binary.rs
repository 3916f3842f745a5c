//! Binary dataset layout, little-endian throughout:
//!
//! | offset | size | field                            |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `DLMC`                     |
//! | 4      | 4    | format version (u32, = 1)        |
//! | 8      | 8    | samples S (u64)                  |
//! | 16     | 8    | channels N (u64)                 |
//! | 24     | 8    | length T (u64)                   |
//! | 32     | 4    | flags (u32, bit 0: standardized) |
//! | 36     | 4STN | f32 payload, `[sample][channel][time]` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::SeriesTensor;

pub const MAGIC: [u8; 4] = *b"DLMC";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;
pub const FLAG_STANDARDIZED: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub samples: u64,
    pub channels: u64,
    pub len: u64,
    pub flags: u32,
}

impl DatasetHeader {
    pub fn new(samples: usize, channels: usize, len: usize, flags: u32) -> Self {
        Self {
            samples: samples as u64,
            channels: channels as u64,
            len: len as u64,
            flags,
        }
    }

    pub fn standardized(&self) -> bool {
        self.flags & FLAG_STANDARDIZED != 0
    }

    /// Values in the payload, if it fits in `u64` bytes.
    pub fn values(&self) -> Option<u64> {
        self.samples.checked_mul(self.channels)?.checked_mul(self.len)
    }

    pub fn payload_bytes(&self) -> Option<u64> {
        self.values()?.checked_mul(4)
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        b[8..16].copy_from_slice(&self.samples.to_le_bytes());
        b[16..24].copy_from_slice(&self.channels.to_le_bytes());
        b[24..32].copy_from_slice(&self.len.to_le_bytes());
        b[32..36].copy_from_slice(&self.flags.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; HEADER_LEN], path: &Path) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(Error::format(path, format!("bad magic {:02x?}", &b[0..4])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"));
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported format version {version}")));
        }
        let header = Self {
            samples: u64_at(8),
            channels: u64_at(16),
            len: u64_at(24),
            flags: u32_at(32),
        };
        if header.payload_bytes().is_none() {
            return Err(Error::format(path, "dimensions overflow"));
        }
        Ok(header)
    }
}

/// Streams samples into a dataset file, hashing the payload as it goes.
pub struct DatasetWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: DatasetHeader,
    written: u64,
    hasher: Sha256,
    buf: Vec<u8>,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, header: DatasetHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode()).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out,
            header,
            written: 0,
            hasher: Sha256::new(),
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    /// Appends one `channels x len` sample, cast to f32.
    pub fn write_sample(&mut self, sample: ArrayView2<f64>) -> Result<()> {
        let want = (self.header.channels as usize, self.header.len as usize);
        if sample.dim() != want {
            return Err(Error::invalid(format!(
                "sample shape {:?} does not match header {want:?}",
                sample.dim()
            )));
        }
        if self.written >= self.header.samples {
            return Err(Error::invalid(format!("header declares only {} samples", self.header.samples)));
        }
        self.buf.clear();
        for row in sample.rows() {
            for &v in row {
                self.buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        self.hasher.update(&self.buf);
        self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the hex SHA-256 of the payload.
    pub fn finish(mut self) -> Result<String> {
        if self.written != self.header.samples {
            return Err(Error::invalid(format!(
                "wrote {} of {} declared samples",
                self.written, self.header.samples
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(hex::encode(self.hasher.finalize()))
    }
}

pub(crate) fn tensor_flags(tensor: &SeriesTensor) -> u32 {
    match &tensor.provenance {
        Some(p) if p.config.latents.standardize => FLAG_STANDARDIZED,
        _ => 0,
    }
}

/// Writes the binary file only; returns the payload hash.
pub fn write_binary(tensor: &SeriesTensor, path: impl AsRef<Path>) -> Result<String> {
    let header = DatasetHeader::new(tensor.samples(), tensor.channels(), tensor.len(), tensor_flags(tensor));
    let mut w = DatasetWriter::create(path, header)?;
    for s in tensor.data.outer_iter() {
        w.write_sample(s)?;
    }
    w.finish()
}

pub fn read_header(path: impl AsRef<Path>) -> Result<DatasetHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_header_from(&mut file, path)
}

fn read_header_from(file: &mut File, path: &Path) -> Result<DatasetHeader> {
    let mut b = [0u8; HEADER_LEN];
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if actual < HEADER_LEN as u64 {
        return Err(Error::format(path, format!("file of {actual} bytes is shorter than the header")));
    }
    file.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    let header = DatasetHeader::decode(&b, path)?;
    let expected = HEADER_LEN as u64 + header.payload_bytes().expect("checked in decode");
    if actual != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    Ok(header)
}

/// Reads the binary file only. Header and size are checked before any
/// payload is allocated.
pub fn read_binary(path: impl AsRef<Path>) -> Result<(DatasetHeader, SeriesTensor)> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = read_header_from(&mut file, path)?;
    let shape = (header.samples as usize, header.channels as usize, header.len as usize);
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut data = Array3::<f64>::zeros(shape);
    let mut chunk = vec![0u8; 4 * 16384];
    let mut values = data.iter_mut();
    let mut remaining = header.values().expect("checked in decode") as usize;
    while remaining > 0 {
        let n = remaining.min(chunk.len() / 4);
        reader.read_exact(&mut chunk[..4 * n]).map_err(|e| Error::io(path, e))?;
        for (slot, b) in values.by_ref().zip(chunk[..4 * n].chunks_exact(4)) {
            *slot = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
        }
        remaining -= n;
    }
    Ok((header, SeriesTensor::new(data)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = DatasetHeader::new(1500, 160, 1024, FLAG_STANDARDIZED);
        let b = h.encode();
        assert_eq!(&b[0..4], b"DLMC");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1500);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 160);
        assert_eq!(u64::from_le_bytes(b[24..32].try_into().unwrap()), 1024);
        assert_eq!(DatasetHeader::decode(&b, Path::new("x")).unwrap(), h);
        assert!(h.standardized());
    }

    #[test]
    fn payload_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.dlmc");
        let t = SeriesTensor::new(Array3::from_shape_vec((1, 1, 2), vec![0.0, 1.0]).unwrap());
        write_binary(&t, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert_eq!(&bytes[HEADER_LEN..], &[0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn writer_checks_counts_and_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.dlmc");
        let mut w = DatasetWriter::create(&path, DatasetHeader::new(2, 1, 3, 0)).unwrap();
        assert!(w.write_sample(ndarray::Array2::zeros((1, 4)).view()).is_err());
        w.write_sample(ndarray::Array2::zeros((1, 3)).view()).unwrap();
        assert!(w.finish().is_err());
    }

    #[test]
    fn bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.dlmc");
        let t = SeriesTensor::new(Array3::from_elem((2, 2, 5), 1.5));
        write_binary(&t, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_binary(&path), Err(Error::Format { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_binary(&path), Err(Error::Format { .. })));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        match read_binary(&path) {
            Err(Error::SizeMismatch { expected, actual, .. }) => {
                assert_eq!((expected, actual), (36 + 80, 36 + 77));
            }
            other => panic!("unexpected {other:?}"),
        }

        std::fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(read_binary(&path), Err(Error::Format { .. })));

        let mut huge = good[..HEADER_LEN].to_vec();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&path, &huge).unwrap();
        assert!(matches!(read_binary(&path), Err(Error::Format { .. })));
    }
}
