//! NIfTI-1 single-file volumes (.nii, .nii.gz).

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::io::{checked_payload_size, decode_samples, encode_samples, ReadOptions, ScalarType};
use crate::spatial::transform::AffineTransform;
use crate::volume::{GridSpec, Volume};

pub const HEADER_SIZE: usize = 348;

/// Byte offsets of the header fields used here.
mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const CAL_MAX: usize = 124;
    pub const CAL_MIN: usize = 128;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

fn scalar_from_code(code: i16) -> Option<ScalarType> {
    match code {
        2 => Some(ScalarType::U8),
        4 => Some(ScalarType::I16),
        8 => Some(ScalarType::I32),
        16 => Some(ScalarType::F32),
        64 => Some(ScalarType::F64),
        512 => Some(ScalarType::U16),
        _ => None,
    }
}

fn code_from_scalar(scalar: ScalarType) -> i16 {
    match scalar {
        ScalarType::U8 => 2,
        ScalarType::I16 => 4,
        ScalarType::I32 => 8,
        ScalarType::F32 => 16,
        ScalarType::F64 => 64,
        ScalarType::U16 => 512,
    }
}

struct Header {
    dims: [usize; 3],
    scalar: ScalarType,
    spacing: [f64; 3],
    vox_offset: u64,
    scl_slope: f32,
    scl_inter: f32,
    cal_min: f32,
    cal_max: f32,
    affine: AffineTransform,
    big_endian: bool,
}

fn parse_header(path: &Path, h: &[u8]) -> Result<Header> {
    if h.len() < HEADER_SIZE {
        return Err(Error::corrupt(
            path,
            format!("file holds {} bytes, header needs {HEADER_SIZE}", h.len()),
        ));
    }
    let magic = &h[offsets::MAGIC..offsets::MAGIC + 4];
    match magic {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::unsupported(path, "two-file header+image pairs (magic ni1)"))
        }
        _ => {
            return Err(Error::format(
                path,
                format!("magic bytes {magic:02x?} are not a single-file image"),
            ))
        }
    }
    // sizeof_hdr doubles as the endianness probe.
    let big_endian = match (
        LittleEndian::read_i32(&h[offsets::SIZEOF_HDR..]),
        BigEndian::read_i32(&h[offsets::SIZEOF_HDR..]),
    ) {
        (348, _) => false,
        (_, 348) => true,
        (other, _) => {
            return Err(Error::format(
                path,
                format!("header size field {other} (expected 348)"),
            ))
        }
    };
    if big_endian {
        parse_header_fields::<BigEndian>(path, h, true)
    } else {
        parse_header_fields::<LittleEndian>(path, h, false)
    }
}

fn parse_header_fields<E: ByteOrder>(path: &Path, h: &[u8], big_endian: bool) -> Result<Header> {
    let dim_raw: Vec<i16> = (0..8)
        .map(|i| E::read_i16(&h[offsets::DIM + 2 * i..]))
        .collect();
    let ndim = dim_raw[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::corrupt(path, format!("dimension count {ndim}")));
    }
    // Accept extra axes only when they are degenerate.
    if dim_raw
        .iter()
        .take(ndim as usize + 1)
        .skip(4)
        .any(|&d| d > 1)
    {
        return Err(Error::unsupported(path, "volumes with a non-trivial 4th axis"));
    }
    let mut dims = [1usize; 3];
    for axis in 0..3 {
        let d = if (axis as i16) < ndim { dim_raw[axis + 1] } else { 1 };
        if d < 1 {
            return Err(Error::corrupt(path, format!("dim[{}] = {d}", axis + 1)));
        }
        dims[axis] = d as usize;
    }

    let datatype = E::read_i16(&h[offsets::DATATYPE..]);
    let scalar = scalar_from_code(datatype)
        .ok_or_else(|| Error::unsupported(path, format!("datatype code {datatype}")))?;
    let bitpix = E::read_i16(&h[offsets::BITPIX..]);
    if bitpix as usize != scalar.byte_size() * 8 {
        return Err(Error::corrupt(
            path,
            format!("bitpix {bitpix} disagrees with datatype code {datatype}"),
        ));
    }

    let pixdim: Vec<f32> = (0..8)
        .map(|i| E::read_f32(&h[offsets::PIXDIM + 4 * i..]))
        .collect();
    let mut spacing = [0.0f64; 3];
    for axis in 0..3 {
        let s = f64::from(pixdim[axis + 1]);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::corrupt(path, format!("pixdim[{}] = {s}", axis + 1)));
        }
        spacing[axis] = s;
    }

    let vox_offset = E::read_f32(&h[offsets::VOX_OFFSET..]);
    if !vox_offset.is_finite() || vox_offset < HEADER_SIZE as f32 {
        return Err(Error::corrupt(path, format!("vox_offset {vox_offset}")));
    }

    let sform_code = E::read_i16(&h[offsets::SFORM_CODE..]);
    let qform_code = E::read_i16(&h[offsets::QFORM_CODE..]);
    // sform takes priority over qform when both are present.
    let affine = if sform_code > 0 {
        let mut rows = [[0.0f64; 4]; 4];
        for r in 0..3 {
            for c in 0..4 {
                rows[r][c] = f64::from(E::read_f32(&h[offsets::SROW_X + 16 * r + 4 * c..]));
            }
        }
        rows[3] = [0.0, 0.0, 0.0, 1.0];
        AffineTransform::from_rows(rows)
            .map_err(|e| Error::format(path, format!("srow matrix: {e}")))?
    } else if qform_code > 0 {
        let b = f64::from(E::read_f32(&h[offsets::QUATERN_B..]));
        let c = f64::from(E::read_f32(&h[offsets::QUATERN_B + 4..]));
        let d = f64::from(E::read_f32(&h[offsets::QUATERN_B + 8..]));
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let r = quaternion_rotation(b, c, d);
        let mut rows = [[0.0f64; 4]; 4];
        for row in 0..3 {
            rows[row][0] = r[(row, 0)] * spacing[0];
            rows[row][1] = r[(row, 1)] * spacing[1];
            rows[row][2] = r[(row, 2)] * spacing[2] * qfac;
            rows[row][3] = f64::from(E::read_f32(&h[offsets::QOFFSET_X + 4 * row..]));
        }
        rows[3] = [0.0, 0.0, 0.0, 1.0];
        AffineTransform::from_rows(rows)
            .map_err(|e| Error::format(path, format!("quaternion orientation: {e}")))?
    } else {
        // Neither form given: spacing-scaled identity.
        AffineTransform::from_rows([
            [spacing[0], 0.0, 0.0, 0.0],
            [0.0, spacing[1], 0.0, 0.0],
            [0.0, 0.0, spacing[2], 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .expect("positive diagonal is invertible")
    };

    Ok(Header {
        dims,
        scalar,
        spacing,
        vox_offset: vox_offset as u64,
        scl_slope: E::read_f32(&h[offsets::SCL_SLOPE..]),
        scl_inter: E::read_f32(&h[offsets::SCL_INTER..]),
        cal_min: E::read_f32(&h[offsets::CAL_MIN..]),
        cal_max: E::read_f32(&h[offsets::CAL_MAX..]),
        affine,
        big_endian,
    })
}

/// Rotation matrix of the unit quaternion (a, b, c, d) with a recovered
/// from the unit norm.
fn quaternion_rotation(b: f64, c: f64, d: f64) -> Matrix3<f64> {
    let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
    Matrix3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a + c * c - b * b - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a + d * d - b * b - c * c,
    )
}

pub fn read_nifti(path: &Path, opts: &ReadOptions) -> Result<Volume> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.to_ascii_lowercase().ends_with(".gz"))
    {
        gunzip_capped(path, &raw, opts.max_bytes)?
    } else {
        raw
    };

    let header = parse_header(path, &bytes)?;
    let payload = checked_payload_size(path, header.dims, header.scalar, opts)?;
    let start = header.vox_offset as usize;
    let end = start
        .checked_add(payload)
        .ok_or_else(|| Error::corrupt(path, "data offset overflows".to_string()))?;
    if bytes.len() < end {
        return Err(Error::corrupt(
            path,
            format!(
                "payload needs {payload} bytes at offset {start}, file holds {}",
                bytes.len()
            ),
        ));
    }

    let mut data = decode_samples(&bytes[start..end], header.scalar, header.big_endian);
    // slope 0 means "no scaling stored".
    if header.scl_slope != 0.0 && (header.scl_slope != 1.0 || header.scl_inter != 0.0) {
        for v in &mut data {
            *v = header.scl_slope * *v + header.scl_inter;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite sample values".to_string()));
    }

    let grid = GridSpec::new(header.dims, header.spacing, header.affine)
        .map_err(|e| Error::format(path, format!("grid geometry: {e}")))?;
    let mut volume = Volume::new(grid, data)?;
    if header.cal_max > header.cal_min {
        volume.intensity_range_hint = Some((header.cal_min, header.cal_max));
    }
    Ok(volume)
}

fn gunzip_capped(path: &Path, raw: &[u8], cap: u64) -> Result<Vec<u8>> {
    let mut decoder = flate2::read::GzDecoder::new(raw);
    let mut out = Vec::new();
    let budget = cap.saturating_add(HEADER_SIZE as u64 + 8);
    let read = decoder
        .by_ref()
        .take(budget.saturating_add(1))
        .read_to_end(&mut out)
        .map_err(|e| Error::corrupt(path, format!("gzip stream: {e}")))?;
    if read as u64 > budget {
        return Err(Error::TooLarge {
            bytes: read as u64,
            cap,
        });
    }
    Ok(out)
}

pub fn write_nifti(volume: &Volume, path: &Path, scalar: ScalarType) -> Result<()> {
    let mut h = vec![0u8; HEADER_SIZE + 4];
    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    h[38] = b'r';

    let dims = volume.dims();
    let dim: [i16; 8] = [
        3,
        dims[0] as i16,
        dims[1] as i16,
        dims[2] as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * i..], *d);
    }
    for (axis, limit) in dims.iter().zip([dim[1], dim[2], dim[3]]) {
        if *axis > i16::MAX as usize || i64::from(limit) != *axis as i64 {
            return Err(Error::InvalidParameter(format!(
                "dims {dims:?} exceed the format's 16-bit axis limit"
            )));
        }
    }

    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], code_from_scalar(scalar));
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], (scalar.byte_size() * 8) as i16);

    let spacing = volume.spacing();
    let pixdim: [f32; 8] = [
        1.0,
        spacing[0] as f32,
        spacing[1] as f32,
        spacing[2] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * i..], *p);
    }

    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], (HEADER_SIZE + 4) as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 0.0);
    h[offsets::XYZT_UNITS] = 2; // millimeters
    if let Some((lo, hi)) = volume.intensity_range_hint {
        LittleEndian::write_f32(&mut h[offsets::CAL_MIN..], lo);
        LittleEndian::write_f32(&mut h[offsets::CAL_MAX..], hi);
    }

    LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], 0);
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], 1);
    let rows = volume.grid.voxel_to_world().to_rows();
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut h[offsets::SROW_X + 16 * r + 4 * c..], rows[r][c] as f32);
        }
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    let payload = encode_samples(&volume.data, scalar);
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.to_ascii_lowercase().ends_with(".gz"));
    if gz {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        std::io::Write::write_all(&mut enc, &h).map_err(|e| Error::io(path, e))?;
        std::io::Write::write_all(&mut enc, &payload).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?;
    } else {
        let mut bytes = h;
        bytes.extend_from_slice(&payload);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
