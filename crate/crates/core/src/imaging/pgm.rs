//! Binary PGM (P5) reading and writing.
//!
//! The pixel spacing is carried in a `# pixel_spacing <cm>` comment line.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn encode<T: Scalar>(frame: &Frame<T>) -> Vec<u8> {
    let mut out = format!(
        "P5\n# pixel_spacing {}\n{} {}\n255\n",
        frame.pixel_spacing(),
        frame.width(),
        frame.height()
    )
    .into_bytes();
    out.extend(frame.to_u8());
    out
}

pub fn write<T: Scalar>(frame: &Frame<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(frame)).map_err(|e| Error::io(path, e))
}

pub fn read<T: Scalar>(path: &Path) -> Result<Frame<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, None).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Decodes a P5 image; `default_spacing` is used when the file carries no
/// spacing comment.
pub fn decode<T: Scalar>(bytes: &[u8], default_spacing: Option<f64>) -> Result<Frame<T>> {
    let bad = |m: &str| Error::InvalidInput(format!("malformed PGM: {m}"));
    let mut pos = 0usize;
    let mut spacing = default_spacing;
    let mut fields: Vec<usize> = Vec::with_capacity(3);

    let next_token = |pos: &mut usize, spacing: &mut Option<f64>| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                let start = *pos;
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                let comment = String::from_utf8_lossy(&bytes[start + 1..*pos]);
                let mut parts = comment.split_whitespace();
                if parts.next() == Some("pixel_spacing") {
                    if let Some(v) = parts.next().and_then(|s| s.parse::<f64>().ok()) {
                        *spacing = Some(v);
                    }
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    if next_token(&mut pos, &mut spacing).as_deref() != Some("P5") {
        return Err(bad("missing P5 magic"));
    }
    while fields.len() < 3 {
        let tok = next_token(&mut pos, &mut spacing).ok_or_else(|| bad("truncated header"))?;
        fields.push(tok.parse().map_err(|_| bad("non-numeric header field"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated raster"))?;
    let spacing = spacing.ok_or_else(|| bad("no pixel spacing"))?;
    Frame::from_u8(w, h, spacing, data)
}
