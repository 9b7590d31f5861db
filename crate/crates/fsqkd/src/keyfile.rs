//! On-disk format for distilled key material.
//!
//! A key file is a short text provenance header — magic line, then
//! `key = value` lines, terminated by one blank line — followed by the raw
//! key bytes, packed most significant bit first. The header must carry a
//! `bits` field so the exact key length survives the padding of the final
//! byte; every other header field is free-form provenance (preset, seed,
//! session count) that readers preserve but do not interpret.

use std::io::Read;
use std::path::Path;

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// First line of every key file.
pub const KEY_MAGIC: &str = "fsqkd key v1";

/// A parsed key file: the key itself plus its provenance fields in file
/// order (excluding the mandatory `bits` field).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFile {
    pub bits: BitVec,
    pub provenance: Vec<(String, String)>,
}

/// Splits `magic line + header + blank line + body`, returning the header
/// fields in order and the raw body. Shared by key files and pad
/// ciphertexts.
pub(crate) fn split_header<'d>(
    data: &'d [u8],
    magic: &str,
    what: &str,
) -> Result<(Vec<(String, String)>, &'d [u8])> {
    let bad = |msg: String| Error::Wire(format!("{what}: {msg}"));
    let sep = data
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("missing blank line after header".into()))?;
    let header = std::str::from_utf8(&data[..sep])
        .map_err(|_| bad("header is not UTF-8".into()))?;
    let body = &data[sep + 2..];

    let mut lines = header.lines();
    match lines.next() {
        Some(first) if first == magic => {}
        other => {
            return Err(bad(format!(
                "expected magic line {magic:?}, found {other:?}"
            )))
        }
    }
    let mut fields = Vec::new();
    for line in lines {
        let (key, value) = line
            .split_once(" = ")
            .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
        fields.push((key.to_string(), value.to_string()));
    }
    Ok((fields, body))
}

/// Writes a key file: header (magic, `bits`, provenance), blank line, then
/// the packed key bytes.
pub fn write_key(out: &mut impl std::io::Write, bits: &BitVec, provenance: &[(&str, String)]) -> Result<()> {
    writeln!(out, "{KEY_MAGIC}")?;
    writeln!(out, "bits = {}", bits.len())?;
    for (key, value) in provenance {
        if key.contains(['\n', '=']) || value.contains('\n') {
            return Err(Error::InvalidParameter(format!(
                "key file provenance field {key:?} contains forbidden characters"
            )));
        }
        writeln!(out, "{key} = {value}")?;
    }
    writeln!(out)?;
    out.write_all(&bits.to_bytes_msb())?;
    Ok(())
}

/// Parses a key file produced by [`write_key`].
///
/// The body must hold exactly the number of bytes the `bits` field
/// implies; a truncated or padded file is rejected rather than silently
/// reinterpreted.
pub fn read_key(input: &mut impl Read) -> Result<KeyFile> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let (fields, body) = split_header(&data, KEY_MAGIC, "key file")?;

    let mut bit_len: Option<usize> = None;
    let mut provenance = Vec::new();
    for (key, value) in fields {
        if key == "bits" {
            if bit_len.is_some() {
                return Err(Error::Wire("key file: duplicate bits field".into()));
            }
            bit_len = Some(value.parse().map_err(|_| {
                Error::Wire(format!("key file: unparseable bits field {value:?}"))
            })?);
        } else {
            provenance.push((key, value));
        }
    }
    let bit_len =
        bit_len.ok_or_else(|| Error::Wire("key file: missing bits field".into()))?;
    let expected_bytes = bit_len.div_ceil(8);
    if body.len() != expected_bytes {
        return Err(Error::Wire(format!(
            "key file: {bit_len} bits need {expected_bytes} body bytes, found {}",
            body.len()
        )));
    }
    Ok(KeyFile {
        bits: BitVec::from_bytes_msb(body, bit_len),
        provenance,
    })
}

/// Writes a key file at `path`.
pub fn write_key_path(path: &Path, bits: &BitVec, provenance: &[(&str, String)]) -> Result<()> {
    let mut out = Vec::new();
    write_key(&mut out, bits, provenance)?;
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the key file at `path`.
pub fn read_key_path(path: &Path) -> Result<KeyFile> {
    let mut file = std::fs::File::open(path)?;
    read_key(&mut file)
}
