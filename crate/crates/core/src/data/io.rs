//! Native volume files and a minimal single-file NIfTI-1 reader.
//!
//! Native layout: a text header followed by little-endian voxels in
//! z-fastest order.
//!
//! ```text
//! strokeseg-volume 1
//! subject: sub-0001
//! extents: 197 233 189
//! spacing: 1 1 1
//! dtype: f32
//! end
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::volume::Volume;
use crate::error::{Error, IoContext, Result};

const NATIVE_MAGIC: &str = "strokeseg-volume 1";

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("unrecognised file signature")]
    BadMagic,
    #[error("unsupported voxel datatype {0}")]
    UnsupportedDatatype(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    BadHeader(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::U8 => "u8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

fn encode_native(subject: &str, extents: [usize; 3], spacing: [f64; 3], dtype: Dtype, values: &[f64]) -> Vec<u8> {
    let header = format!(
        "{NATIVE_MAGIC}\nsubject: {subject}\nextents: {} {} {}\nspacing: {} {} {}\ndtype: {}\nend\n",
        extents[0],
        extents[1],
        extents[2],
        spacing[0],
        spacing[1],
        spacing[2],
        dtype.name()
    );
    let mut out = header.into_bytes();
    out.reserve(values.len() * dtype.size());
    for &v in values {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::U8 => out.push(v as u8),
        }
    }
    out
}

/// Writes the intensities as `f32`. Values that are not exactly
/// representable in `f32` are rounded.
pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    v.validate()?;
    let bytes = encode_native(&v.subject_id, v.extents, v.spacing, Dtype::F32, &v.intensities);
    fs::write(path, bytes).at(path)
}

/// Writes the volume's mask as a `u8` native file.
pub fn write_mask(v: &Volume, path: &Path) -> Result<()> {
    let mask = v.mask.as_ref().ok_or_else(|| Error::Invalid(format!("{} has no mask", v.subject_id)))?;
    let values: Vec<f64> = mask.iter().map(|&m| m as f64).collect();
    fs::write(path, encode_native(&v.subject_id, v.extents, v.spacing, Dtype::U8, &values)).at(path)
}

/// Reads a native or NIfTI-1 file, chosen by signature.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).at(path)?;
    let wrap = |source| Error::Volume { path: path.to_path_buf(), source };
    if bytes.starts_with(NATIVE_MAGIC.as_bytes()) {
        decode_native(&bytes).map_err(wrap)
    } else {
        let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or("volume");
        let stem = stem.trim_end_matches(".nii").trim_end_matches(".vol");
        decode_nifti(&bytes, stem).map_err(wrap)
    }
}

/// Reads a volume whose voxels must all be 0 or 1.
pub fn read_mask(path: &Path) -> Result<(Volume, Vec<u8>)> {
    let v = read_volume(path)?;
    let mut mask = Vec::with_capacity(v.intensities.len());
    for &x in &v.intensities {
        if x == 0.0 {
            mask.push(0);
        } else if x == 1.0 {
            mask.push(1);
        } else {
            return Err(Error::Invalid(format!("{}: mask voxel value {x} is not binary", path.display())));
        }
    }
    Ok((v, mask))
}

fn decode_native(bytes: &[u8]) -> std::result::Result<Volume, VolumeError> {
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or(VolumeError::BadHeader("unterminated header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| VolumeError::BadHeader("non-UTF-8 header".into()))?;
        pos += end + 1;
        if line == "end" {
            break;
        }
        lines.push(line.to_string());
        if lines.len() > 16 {
            return Err(VolumeError::BadHeader("missing end line".into()));
        }
    }
    if lines.first().map(String::as_str) != Some(NATIVE_MAGIC) {
        return Err(VolumeError::BadMagic);
    }
    let field = |key: &str| -> std::result::Result<&str, VolumeError> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
            .ok_or_else(|| VolumeError::BadHeader(format!("missing {key}")))
    };
    let triple = |key: &str| -> std::result::Result<Vec<f64>, VolumeError> {
        let vals: Vec<f64> = field(key)?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| VolumeError::BadHeader(format!("bad {key}"))))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() != 3 {
            return Err(VolumeError::BadHeader(format!("{key} needs three values")));
        }
        Ok(vals)
    };
    let subject = field("subject")?.to_string();
    let e = triple("extents")?;
    if e.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
        return Err(VolumeError::BadHeader("extents must be positive integers".into()));
    }
    let extents = [e[0] as usize, e[1] as usize, e[2] as usize];
    let s = triple("spacing")?;
    let dtype = match field("dtype")? {
        "f32" => Dtype::F32,
        "u8" => Dtype::U8,
        other => return Err(VolumeError::UnsupportedDatatype(other.to_string())),
    };
    let n: usize = extents.iter().product();
    let payload = &bytes[pos..];
    let expected = n * dtype.size();
    if payload.len() < expected {
        return Err(VolumeError::Truncated { expected, found: payload.len() });
    }
    let intensities = match dtype {
        Dtype::F32 => payload[..expected]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::U8 => payload[..expected].iter().map(|&b| b as f64).collect(),
    };
    let v = Volume { subject_id: subject, extents, spacing: [s[0], s[1], s[2]], intensities, mask: None };
    v.validate().map_err(|e| VolumeError::BadHeader(e.to_string()))?;
    Ok(v)
}

const NIFTI_HEADER: usize = 348;

fn le_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn le_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Single-file little-endian NIfTI-1 (`n+1`) with uint8, int16 or float32
/// voxels. Stored x-fastest; converted to the z-fastest layout.
fn decode_nifti(b: &[u8], subject: &str) -> std::result::Result<Volume, VolumeError> {
    if b.len() < NIFTI_HEADER {
        if b.len() >= 4 && i32::from_le_bytes([b[0], b[1], b[2], b[3]]) == NIFTI_HEADER as i32 {
            return Err(VolumeError::Truncated { expected: NIFTI_HEADER, found: b.len() });
        }
        return Err(VolumeError::BadMagic);
    }
    if i32::from_le_bytes([b[0], b[1], b[2], b[3]]) != NIFTI_HEADER as i32 || &b[344..348] != b"n+1\0" {
        return Err(VolumeError::BadMagic);
    }
    let ndim = le_i16(b, 40);
    if !(1..=7).contains(&ndim) {
        return Err(VolumeError::BadHeader(format!("dim[0] = {ndim}")));
    }
    let mut extents = [1usize; 3];
    for (i, e) in extents.iter_mut().enumerate().take((ndim as usize).min(3)) {
        let d = le_i16(b, 42 + 2 * i);
        if d < 1 {
            return Err(VolumeError::BadHeader(format!("dim[{}] = {d}", i + 1)));
        }
        *e = d as usize;
    }
    for i in 3..ndim as usize {
        if le_i16(b, 42 + 2 * i) > 1 {
            return Err(VolumeError::BadHeader("only single 3D volumes are supported".into()));
        }
    }
    let datatype = le_i16(b, 70);
    let size = match datatype {
        2 => 1,
        4 => 2,
        16 => 4,
        other => return Err(VolumeError::UnsupportedDatatype(format!("NIfTI code {other}"))),
    };
    let mut spacing = [1.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let p = le_f32(b, 80 + 4 * i).abs() as f64;
        if p > 0.0 && p.is_finite() {
            *s = p;
        }
    }
    let offset = le_f32(b, 108).max(NIFTI_HEADER as f32) as usize;
    let slope = le_f32(b, 112) as f64;
    let inter = le_f32(b, 116) as f64;
    let (slope, inter) = if slope == 0.0 || !slope.is_finite() { (1.0, 0.0) } else { (slope, inter) };
    let n: usize = extents.iter().product();
    let expected = offset + n * size;
    if b.len() < expected {
        return Err(VolumeError::Truncated { expected, found: b.len() });
    }
    let raw = &b[offset..expected];
    let [nx, ny, nz] = extents;
    let mut intensities = vec![0.0; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = (x + nx * (y + ny * z)) * size;
                let v = match datatype {
                    2 => raw[i] as f64,
                    4 => i16::from_le_bytes([raw[i], raw[i + 1]]) as f64,
                    _ => f32::from_le_bytes([raw[i], raw[i + 1], raw[i + 2], raw[i + 3]]) as f64,
                };
                intensities[(x * ny + y) * nz + z] = v * slope + inter;
            }
        }
    }
    Ok(Volume { subject_id: subject.to_string(), extents, spacing, intensities, mask: None })
}
