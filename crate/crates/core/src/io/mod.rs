//! Reading and writing volumes in NIfTI-1 and MetaImage form.
//!
//! Both readers decode header geometry into the volume's voxel-to-world
//! map and convert samples to f32 in place. Header coordinates are taken
//! at face value as RAS+ millimeters; no axis reorientation is applied.

mod meta;
mod nifti;

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::volume::Volume;

pub use meta::{read_meta, write_meta};
pub use nifti::{read_nifti, write_nifti};

/// Limits applied while decoding untrusted files.
#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// Maximum decoded payload size in bytes; headers implying more are
    /// rejected before allocation.
    pub max_bytes: u64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            max_bytes: 4 << 30,
        }
    }
}

/// On-disk sample types shared by both formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    U8,
    I16,
    U16,
    I32,
    F32,
    F64,
}

impl ScalarType {
    pub fn byte_size(self) -> usize {
        match self {
            ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

/// Read a volume, dispatching on the file extension: .nii, .nii.gz,
/// .mha, or .mhd.
pub fn read_volume(path: &Path) -> Result<Volume> {
    read_volume_with(path, &ReadOptions::default())
}

pub fn read_volume_with(path: &Path, opts: &ReadOptions) -> Result<Volume> {
    match FileKind::of(path)? {
        FileKind::Nifti | FileKind::NiftiGz => nifti::read_nifti(path, opts),
        FileKind::MetaLocal | FileKind::MetaHeader => meta::read_meta(path, opts),
    }
}

/// Write a volume as 32-bit float samples; format chosen by extension.
pub fn write_volume(volume: &Volume, path: &Path) -> Result<()> {
    write_volume_as(volume, path, ScalarType::F32)
}

/// Write a volume with an explicit on-disk sample type. Values are
/// rounded to the nearest representable integer and saturated to the
/// type's range when the type is integral.
pub fn write_volume_as(volume: &Volume, path: &Path, scalar: ScalarType) -> Result<()> {
    match FileKind::of(path)? {
        FileKind::Nifti | FileKind::NiftiGz => nifti::write_nifti(volume, path, scalar),
        FileKind::MetaLocal | FileKind::MetaHeader => meta::write_meta(volume, path, scalar),
    }
}

enum FileKind {
    Nifti,
    NiftiGz,
    MetaLocal,
    MetaHeader,
}

impl FileKind {
    fn of(path: &Path) -> Result<FileKind> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii.gz") {
            Ok(FileKind::NiftiGz)
        } else if name.ends_with(".nii") {
            Ok(FileKind::Nifti)
        } else if name.ends_with(".mha") {
            Ok(FileKind::MetaLocal)
        } else if name.ends_with(".mhd") {
            Ok(FileKind::MetaHeader)
        } else {
            Err(Error::unsupported(
                path,
                "file extension (expected .nii, .nii.gz, .mha, or .mhd)",
            ))
        }
    }
}

/// Decoded payload size for `voxels` samples of `scalar`, checked against
/// the cap before any allocation happens.
fn checked_payload_size(
    path: &Path,
    dims: [usize; 3],
    scalar: ScalarType,
    opts: &ReadOptions,
) -> Result<usize> {
    let voxels = (dims[0] as u64)
        .checked_mul(dims[1] as u64)
        .and_then(|v| v.checked_mul(dims[2] as u64))
        .ok_or_else(|| Error::corrupt(path, format!("voxel count overflows: dims {dims:?}")))?;
    let bytes = voxels
        .checked_mul(scalar.byte_size() as u64)
        .ok_or_else(|| Error::corrupt(path, format!("payload size overflows: dims {dims:?}")))?;
    // f32 in memory can outgrow a narrow on-disk type; cap the larger.
    let in_memory = voxels.saturating_mul(4);
    let worst = bytes.max(in_memory);
    if worst > opts.max_bytes {
        return Err(Error::TooLarge {
            bytes: worst,
            cap: opts.max_bytes,
        });
    }
    Ok(bytes as usize)
}

fn decode_typed<E: ByteOrder>(bytes: &[u8], scalar: ScalarType) -> Vec<f32> {
    let n = bytes.len() / scalar.byte_size();
    let mut out = vec![0.0f32; n];
    match scalar {
        ScalarType::U8 => {
            for (o, &b) in out.iter_mut().zip(bytes) {
                *o = f32::from(b);
            }
        }
        ScalarType::I16 => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f32::from(E::read_i16(&bytes[i * 2..]));
            }
        }
        ScalarType::U16 => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f32::from(E::read_u16(&bytes[i * 2..]));
            }
        }
        ScalarType::I32 => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = E::read_i32(&bytes[i * 4..]) as f32;
            }
        }
        ScalarType::F32 => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = E::read_f32(&bytes[i * 4..]);
            }
        }
        ScalarType::F64 => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = E::read_f64(&bytes[i * 8..]) as f32;
            }
        }
    }
    out
}

/// Convert a raw payload to f32 samples.
fn decode_samples(bytes: &[u8], scalar: ScalarType, big_endian: bool) -> Vec<f32> {
    if big_endian {
        decode_typed::<BigEndian>(bytes, scalar)
    } else {
        decode_typed::<LittleEndian>(bytes, scalar)
    }
}

/// Encode f32 samples little-endian as `scalar`; integral types round to
/// nearest and saturate.
fn encode_samples(data: &[f32], scalar: ScalarType) -> Vec<u8> {
    let mut out = vec![0u8; data.len() * scalar.byte_size()];
    match scalar {
        ScalarType::U8 => {
            for (o, &v) in out.iter_mut().zip(data) {
                *o = v.round() as u8;
            }
        }
        ScalarType::I16 => {
            for (i, &v) in data.iter().enumerate() {
                LittleEndian::write_i16(&mut out[i * 2..], v.round() as i16);
            }
        }
        ScalarType::U16 => {
            for (i, &v) in data.iter().enumerate() {
                LittleEndian::write_u16(&mut out[i * 2..], v.round() as u16);
            }
        }
        ScalarType::I32 => {
            for (i, &v) in data.iter().enumerate() {
                LittleEndian::write_i32(&mut out[i * 4..], v.round() as i32);
            }
        }
        ScalarType::F32 => {
            for (i, &v) in data.iter().enumerate() {
                LittleEndian::write_f32(&mut out[i * 4..], v);
            }
        }
        ScalarType::F64 => {
            for (i, &v) in data.iter().enumerate() {
                LittleEndian::write_f64(&mut out[i * 8..], f64::from(v));
            }
        }
    }
    out
}
