//! On-disk formats: the binary tensor container and NetPBM images.
//!
//! Tensor files ("TRT1"): 4 magic bytes, one u8 order N, N little-endian u64
//! dims, then the values as little-endian f64 in first-index-fastest order.
//! Images are binary PGM (P5) / PPM (P6) with maxval 255; loading divides by
//! 255 into a rows x cols x channels tensor, saving clamps to [0,1] and
//! rounds half up.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TrcError};
use crate::tensor::DenseTensor;

const MAGIC: &[u8; 4] = b"TRT1";

fn format_err(offset: u64, message: impl Into<String>) -> TrcError {
    TrcError::Format {
        offset,
        message: message.into(),
    }
}

/// Serialize a tensor into the binary container format.
pub fn tensor_to_bytes(t: &DenseTensor) -> Result<Vec<u8>> {
    let n = t.order();
    if n > u8::MAX as usize {
        return Err(TrcError::InvalidArgument(format!(
            "tensor order {n} exceeds the format limit of 255"
        )));
    }
    let mut out = Vec::with_capacity(4 + 1 + 8 * n + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(n as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parse a tensor from the binary container format.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 4 {
        return Err(format_err(
            bytes.len() as u64,
            format!("file truncated: {} more bytes needed for the magic", 4 - bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected \"TRT1\""));
    }
    if bytes.len() < 5 {
        return Err(format_err(4, "file truncated: 1 more byte needed for the order"));
    }
    let n = bytes[4] as usize;
    if n == 0 {
        return Err(format_err(4, "tensor order must be at least 1"));
    }
    let dims_end = 5 + 8 * n;
    if bytes.len() < dims_end {
        return Err(format_err(
            bytes.len() as u64,
            format!(
                "file truncated: {} more bytes needed for {} dims",
                dims_end - bytes.len(),
                n
            ),
        ));
    }
    let mut dims = Vec::with_capacity(n);
    let mut total: u128 = 1;
    for i in 0..n {
        let start = 5 + 8 * i;
        let d = u64::from_le_bytes(bytes[start..start + 8].try_into().unwrap());
        if d == 0 {
            return Err(format_err(start as u64, "zero dimension"));
        }
        total = total.saturating_mul(d as u128);
        if total > (usize::MAX / 8) as u128 {
            return Err(format_err(start as u64, format!("dim overflow: product exceeds {}", usize::MAX / 8)));
        }
        dims.push(d as usize);
    }
    let count = total as usize;
    let expected = dims_end + 8 * count;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len() as u64,
            format!("file truncated: {} more bytes needed for {} values", expected - bytes.len(), count),
        ));
    }
    let values: Vec<f64> = bytes[dims_end..expected]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(dims, values)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let bytes = tensor_to_bytes(t)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    tensor_from_bytes(&bytes)
}

// ---------------------------------------------------------------------------
// NetPBM
// ---------------------------------------------------------------------------

/// Read the next header token, skipping whitespace and '#' comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(format_err(start as u64, "unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_usize(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let at = *pos as u64;
    next_token(bytes, pos)?
        .parse::<usize>()
        .map_err(|_| format_err(at, format!("cannot parse {what}")))
}

/// Load a binary PGM/PPM image as a rows x cols x channels tensor in [0,1].
pub fn image_from_bytes(bytes: &[u8]) -> Result<DenseTensor> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1usize,
        "P6" => 3usize,
        _ => return Err(format_err(0, format!("unsupported NetPBM magic '{magic}'"))),
    };
    let cols = header_usize(bytes, &mut pos, "width")?;
    let rows = header_usize(bytes, &mut pos, "height")?;
    let maxval = header_usize(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(format_err(pos as u64, format!("unsupported maxval {maxval}, need 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() {
        return Err(format_err(pos as u64, "missing raster"));
    }
    pos += 1;
    let expected = rows * cols * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(format_err(
            bytes.len() as u64,
            format!("raster truncated: {} more bytes needed", expected - raster.len()),
        ));
    }
    let mut t = DenseTensor::zeros(&[rows, cols, channels])?;
    for r in 0..rows {
        for c in 0..cols {
            for ch in 0..channels {
                let byte = raster[(r * cols + c) * channels + ch];
                t.set(&[r + 1, c + 1, ch + 1], byte as f64 / 255.0).unwrap();
            }
        }
    }
    Ok(t)
}

/// Encode a rows x cols x channels tensor (1 or 3 channels) as binary PGM/PPM.
pub fn image_to_bytes(t: &DenseTensor) -> Result<Vec<u8>> {
    let dims = t.dims();
    if dims.len() != 3 || (dims[2] != 1 && dims[2] != 3) {
        return Err(TrcError::InvalidArgument(format!(
            "image tensors must be rows x cols x (1|3), got {dims:?}"
        )));
    }
    let (rows, cols, channels) = (dims[0], dims[1], dims[2]);
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            for ch in 0..channels {
                let v = t.get(&[r + 1, c + 1, ch + 1]).unwrap().clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn write_image(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let bytes = image_to_bytes(t)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    image_from_bytes(&bytes)
}
