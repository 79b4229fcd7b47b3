//! 16-bit binary PGM (P5, maxval 65535, big-endian samples).

use std::fs;
use std::path::Path;

use super::IoError;

pub fn write_pgm16(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    data: &[u16],
) -> Result<(), IoError> {
    let path = path.as_ref();
    assert_eq!(data.len(), width * height);
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, bytes).map_err(|e| IoError::file(path, e))
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>), IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::file(path, e))?;
    let bad = |m: &str| IoError::malformed(path, "pgm", m.to_string());

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, IoError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        // `#` comments run to end of line
        while pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::malformed(path, "pgm", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(bad("magic must be P5"));
    }
    let width: usize = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = token(&bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 65535 {
        return Err(bad("expected 16-bit maxval 65535"));
    }
    pos += 1;
    let count = width * height;
    if bytes.len() < pos + count * 2 {
        return Err(bad("truncated raster"));
    }
    let data = (0..count)
        .map(|i| u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]))
        .collect();
    Ok((width, height, data))
}
