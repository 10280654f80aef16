//! MetaImage volumes: single-file .mha and .mhd header + raw pairs.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{checked_payload_size, decode_samples, encode_samples, ReadOptions, ScalarType};
use crate::spatial::transform::AffineTransform;
use crate::volume::{GridSpec, Volume};

fn scalar_from_element_type(name: &str) -> Option<ScalarType> {
    match name {
        "MET_UCHAR" => Some(ScalarType::U8),
        "MET_SHORT" => Some(ScalarType::I16),
        "MET_USHORT" => Some(ScalarType::U16),
        "MET_INT" => Some(ScalarType::I32),
        "MET_FLOAT" => Some(ScalarType::F32),
        "MET_DOUBLE" => Some(ScalarType::F64),
        _ => None,
    }
}

fn element_type_name(scalar: ScalarType) -> &'static str {
    match scalar {
        ScalarType::U8 => "MET_UCHAR",
        ScalarType::I16 => "MET_SHORT",
        ScalarType::U16 => "MET_USHORT",
        ScalarType::I32 => "MET_INT",
        ScalarType::F32 => "MET_FLOAT",
        ScalarType::F64 => "MET_DOUBLE",
    }
}

struct ParsedHeader {
    keys: HashMap<String, String>,
    data_file: String,
    /// Byte offset just past the ElementDataFile line, where LOCAL
    /// payloads begin.
    local_start: usize,
}

/// The header is ASCII `Key = Value` lines; ElementDataFile terminates it.
fn split_header(path: &Path, bytes: &[u8]) -> Result<ParsedHeader> {
    let mut keys = HashMap::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|n| pos + n)
            .unwrap_or(bytes.len());
        let line = std::str::from_utf8(&bytes[pos..line_end])
            .map_err(|_| Error::format(path, "non-ASCII bytes in header".to_string()))?
            .trim_end_matches('\r');
        let next = line_end.saturating_add(1).min(bytes.len());
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(path, format!("header line without '=': {line:?}")));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key == "ElementDataFile" {
            return Ok(ParsedHeader {
                keys,
                data_file: value,
                local_start: next,
            });
        }
        keys.insert(key, value);
        pos = next;
    }
    Err(Error::format(path, "missing ElementDataFile key".to_string()))
}

fn require<'a>(path: &Path, keys: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
    keys.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(path, format!("missing {key} key")))
}

fn parse_reals(path: &Path, key: &str, value: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = value
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, format!("{key}: {e}")))?;
    if vals.len() != n {
        return Err(Error::format(
            path,
            format!("{key} has {} values, expected {n}", vals.len()),
        ));
    }
    Ok(vals)
}

pub fn read_meta(path: &Path, opts: &ReadOptions) -> Result<Volume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = split_header(path, &bytes)?;
    let keys = &header.keys;

    if let Some(ndims) = keys.get("NDims") {
        if ndims.trim() != "3" {
            return Err(Error::unsupported(path, format!("NDims {ndims}")));
        }
    }
    if keys.get("BinaryData").is_some_and(|v| v != "True") {
        return Err(Error::unsupported(path, "non-binary element data"));
    }
    if keys.get("CompressedData").is_some_and(|v| v == "True") {
        return Err(Error::unsupported(path, "compressed element data"));
    }
    let big_endian = keys
        .get("BinaryDataByteOrderMSB")
        .is_some_and(|v| v == "True");

    let dim_vals = parse_reals(path, "DimSize", require(path, keys, "DimSize")?, 3)?;
    let mut dims = [0usize; 3];
    for (d, &v) in dims.iter_mut().zip(&dim_vals) {
        if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::corrupt(path, format!("DimSize component {v}")));
        }
        *d = v as usize;
    }

    let spacing_vals = parse_reals(path, "ElementSpacing", require(path, keys, "ElementSpacing")?, 3)?;
    let spacing = [spacing_vals[0], spacing_vals[1], spacing_vals[2]];

    let offset = match keys.get("Offset") {
        Some(v) => parse_reals(path, "Offset", v, 3)?,
        None => vec![0.0; 3],
    };
    let direction = match keys.get("TransformMatrix") {
        Some(v) => parse_reals(path, "TransformMatrix", v, 9)?,
        None => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };

    // world = direction * diag(spacing) * index + offset; TransformMatrix
    // is the row-major direction matrix.
    let mut rows = [[0.0f64; 4]; 4];
    for r in 0..3 {
        for c in 0..3 {
            rows[r][c] = direction[3 * r + c] * spacing[c];
        }
        rows[r][3] = offset[r];
    }
    rows[3] = [0.0, 0.0, 0.0, 1.0];
    let affine = AffineTransform::from_rows(rows)
        .map_err(|e| Error::format(path, format!("TransformMatrix: {e}")))?;

    let element_type = require(path, keys, "ElementType")?;
    let scalar = scalar_from_element_type(element_type)
        .ok_or_else(|| Error::unsupported(path, format!("ElementType {element_type}")))?;

    let payload = checked_payload_size(path, dims, scalar, opts)?;
    let raw = if header.data_file == "LOCAL" {
        let avail = bytes.len().saturating_sub(header.local_start);
        if avail < payload {
            return Err(Error::corrupt(
                path,
                format!("payload needs {payload} bytes, {avail} present after header"),
            ));
        }
        bytes[header.local_start..header.local_start + payload].to_vec()
    } else {
        let data_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.data_file);
        let raw = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        if raw.len() < payload {
            return Err(Error::corrupt(
                &data_path,
                format!("payload needs {payload} bytes, file holds {}", raw.len()),
            ));
        }
        raw
    };

    let data = decode_samples(&raw[..payload], scalar, big_endian);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite sample values".to_string()));
    }
    let grid = GridSpec::new(dims, spacing, affine)
        .map_err(|e| Error::format(path, format!("grid geometry: {e}")))?;
    Volume::new(grid, data)
}

pub fn write_meta(volume: &Volume, path: &Path, scalar: ScalarType) -> Result<()> {
    let dims = volume.dims();
    let spacing = volume.spacing();
    let rows = volume.grid.voxel_to_world().to_rows();
    // Factor spacing back out so reparsing direction * diag(spacing)
    // reproduces the affine exactly.
    let mut direction = [0.0f64; 9];
    for r in 0..3 {
        for c in 0..3 {
            direction[3 * r + c] = rows[r][c] / spacing[c];
        }
    }

    let local = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mha"));
    let data_file = if local {
        "LOCAL".to_string()
    } else {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidParameter(format!("unusable file name {path:?}")))?;
        format!("{stem}.raw")
    };

    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let header = format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         TransformMatrix = {}\n\
         Offset = {}\n\
         ElementSpacing = {}\n\
         DimSize = {} {} {}\n\
         ElementType = {}\n\
         ElementDataFile = {}\n",
        join(&direction),
        join(&[rows[0][3], rows[1][3], rows[2][3]]),
        join(&spacing),
        dims[0],
        dims[1],
        dims[2],
        element_type_name(scalar),
        data_file,
    );

    let payload = encode_samples(&volume.data, scalar);
    if local {
        let mut bytes = header.into_bytes();
        bytes.extend_from_slice(&payload);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    } else {
        std::fs::write(path, header).map_err(|e| Error::io(path, e))?;
        let raw_path = path.with_file_name(&data_file);
        std::fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))
    }
}
