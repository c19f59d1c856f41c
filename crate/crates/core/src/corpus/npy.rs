//! Minimal reader/writer for rank-2 little-endian float arrays in the npy format.
//!
//! Only `<f4` and `<f8` payloads in C order are accepted. Versions 1.0 and 2.0
//! of the header layout are read; files are always written as version 1.0.

use std::io::{Read, Write};

use super::IngestError;

pub(crate) const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    rows: usize,
    cols: usize,
}

/// Decoded array: row-major values widened to f64.
#[derive(Debug)]
pub(crate) struct RawArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn format_err(offset: usize, message: impl Into<String>) -> IngestError {
    IngestError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub(crate) fn read(bytes: &[u8]) -> Result<RawArray, IngestError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(format_err(0, "missing npy magic string"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(format_err(8, "truncated header length"));
            }
            let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
            (len, 12)
        }
        _ => return Err(format_err(6, format!("unsupported npy version {major}.{minor}"))),
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(format_err(bytes.len(), "file ends inside the header"));
    }
    let text = std::str::from_utf8(&bytes[header_start..payload_start])
        .map_err(|e| format_err(header_start + e.valid_up_to(), "header is not valid text"))?;
    let header = parse_header(text, header_start)?;

    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or_else(|| format_err(header_start, "shape overflows"))?;
    let need = count * header.dtype.size();
    let payload = &bytes[payload_start..];
    if payload.len() < need {
        return Err(format_err(
            bytes.len(),
            format!("payload holds {} bytes, shape requires {need}", payload.len()),
        ));
    }

    let mut data = Vec::with_capacity(count);
    let size = header.dtype.size();
    for (k, chunk) in payload[..need].chunks_exact(size).enumerate() {
        let v = match header.dtype {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(IngestError::NonFinite {
                row: k / header.cols,
                col: k % header.cols,
                offset: (payload_start + k * size) as u64,
            });
        }
        data.push(v);
    }
    Ok(RawArray {
        rows: header.rows,
        cols: header.cols,
        data,
    })
}

fn parse_header(text: &str, base: usize) -> Result<Header, IngestError> {
    let at = |key: &str| -> Result<(usize, &str), IngestError> {
        let quoted = format!("'{key}'");
        let pos = text
            .find(&quoted)
            .ok_or_else(|| format_err(base, format!("header lacks key {quoted}")))?;
        let rest = &text[pos + quoted.len()..];
        let colon = rest
            .find(':')
            .ok_or_else(|| format_err(base + pos, format!("no value for {quoted}")))?;
        let value_pos = pos + quoted.len() + colon + 1;
        Ok((base + value_pos, text[value_pos..].trim_start()))
    };

    let (off, descr) = at("descr")?;
    let dtype = if descr.starts_with("'<f8'") {
        Dtype::F64
    } else if descr.starts_with("'<f4'") {
        Dtype::F32
    } else {
        let shown: String = descr.chars().take(8).collect();
        return Err(format_err(
            off,
            format!("unsupported dtype {shown}; expected '<f4' or '<f8'"),
        ));
    };

    let (off, fortran) = at("fortran_order")?;
    if fortran.starts_with("True") {
        return Err(format_err(off, "Fortran-ordered arrays are not supported"));
    } else if !fortran.starts_with("False") {
        return Err(format_err(off, "malformed fortran_order value"));
    }

    let (off, shape) = at("shape")?;
    let close = shape
        .find(')')
        .filter(|_| shape.starts_with('('))
        .ok_or_else(|| format_err(off, "malformed shape tuple"))?;
    let dims: Vec<&str> = shape[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if dims.len() != 2 {
        return Err(format_err(
            off,
            format!("array has rank {}, expected rank 2", dims.len()),
        ));
    }
    let parse = |s: &str| {
        s.trim_end_matches('L')
            .parse::<usize>()
            .map_err(|_| format_err(off, format!("bad shape entry {s:?}")))
    };
    Ok(Header {
        dtype,
        rows: parse(dims[0])?,
        cols: parse(dims[1])?,
    })
}

/// Writes `rows x cols` f64 values as a version 1.0 npy stream.
pub(crate) fn write<W: Write>(
    out: &mut W,
    rows: usize,
    cols: usize,
    data: &[f64],
) -> std::io::Result<()> {
    debug_assert_eq!(data.len(), rows * cols);
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    out.write_all(MAGIC)?;
    out.write_all(&[1, 0])?;
    out.write_all(&(dict.len() as u16).to_le_bytes())?;
    out.write_all(dict.as_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub(crate) fn read_from<R: Read>(mut input: R) -> Result<RawArray, IngestError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|source| IngestError::Io {
            path: String::new(),
            source,
        })?;
    read(&bytes)
}
