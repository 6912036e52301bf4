//! Binary `NTF1` tensor files and atomic file writes.
//!
//! Layout: magic `NTF1`, `u32` LE order N, N × `u64` LE mode sizes, then the
//! f64 LE payload in storage order (first index fastest).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{checked_numel, DenseTensor, Matrix};

pub const NTF1_MAGIC: &[u8; 4] = b"NTF1";

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::arg(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn encode_ntf1(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(NTF1_MAGIC);
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_ntf1(bytes: &[u8], path: &Path) -> Result<DenseTensor> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 8 {
        return Err(fail(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != NTF1_MAGIC {
        return Err(fail(format!(
            "bad magic {:02x?}, expected \"NTF1\"",
            &bytes[..4]
        )));
    }
    let order = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if order == 0 {
        return Err(fail("tensor order is zero".into()));
    }
    let header_len = order
        .checked_mul(8)
        .and_then(|n| n.checked_add(8))
        .ok_or_else(|| fail("order overflows".into()))?;
    if bytes.len() < header_len {
        return Err(fail(format!("truncated header for order {order}")));
    }
    let shape: Vec<usize> = bytes[8..header_len]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .map(|d| usize::try_from(d).map_err(|_| fail(format!("mode size {d} too large"))))
        .collect::<Result<_>>()?;
    let numel = checked_numel(&shape).map_err(|e| fail(e.to_string()))?;
    let payload = &bytes[header_len..];
    let expected = numel
        .checked_mul(8)
        .ok_or_else(|| fail("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, shape {shape:?} needs {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseTensor::from_parts_unchecked(shape, data))
}

pub fn save_ntf1(t: &DenseTensor, path: &Path) -> Result<()> {
    write_atomic(path, &encode_ntf1(t))
}

pub fn load_ntf1(path: &Path) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_ntf1(&bytes, path)
}

/// Loads an order-2 NTF1 file as a matrix.
pub fn load_matrix_ntf1(path: &Path) -> Result<Matrix> {
    let t = load_ntf1(path)?;
    if t.order() != 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected a matrix, found order {}", t.order()),
        });
    }
    let (r, c) = (t.shape()[0], t.shape()[1]);
    Matrix::new(r, c, t.into_data())
}

pub fn save_matrix_ntf1(m: &Matrix, path: &Path) -> Result<()> {
    save_ntf1(&m.to_tensor(), path)
}
