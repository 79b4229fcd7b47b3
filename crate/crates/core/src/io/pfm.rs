//! Portable FloatMap reader/writer.
//!
//! `Pf` is one channel, `PF` is three interleaved channels. We always write
//! scale -1.0 (little-endian) and store scanlines bottom-to-top as the
//! format specifies; the in-memory layout is top-to-bottom row-major.

use std::fs;
use std::path::Path;

use super::IoError;

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top row first, channels interleaved.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn gray(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        PfmImage {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn color(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * 3);
        PfmImage {
            width,
            height,
            channels: 3,
            data,
        }
    }
}

pub fn write_pfm(path: impl AsRef<Path>, image: &PfmImage) -> Result<(), IoError> {
    let path = path.as_ref();
    let magic = match image.channels {
        1 => "Pf",
        3 => "PF",
        other => panic!("pfm supports 1 or 3 channels, got {other}"),
    };
    let mut bytes = format!("{magic}\n{} {}\n-1.0\n", image.width, image.height).into_bytes();
    let row_len = image.width * image.channels;
    for row in (0..image.height).rev() {
        let start = row * row_len;
        for &v in &image.data[start..start + row_len] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| IoError::file(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::file(path, e))?;
    let bad = |message: &str| IoError::malformed(path, "pfm", message.to_string());

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, IoError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::malformed(path, "pfm", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(&bytes)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("magic must be Pf or PF")),
    };
    let width: usize = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token(&bytes)?.parse().map_err(|_| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let little_endian = scale < 0.0;
    let count = width * height * channels;
    if bytes.len() < pos + count * 4 {
        return Err(bad("truncated raster"));
    }
    let mut data = vec![0.0f32; count];
    let row_len = width * channels;
    for file_row in 0..height {
        let mem_row = height - 1 - file_row;
        for i in 0..row_len {
            let off = pos + (file_row * row_len + i) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            data[mem_row * row_len + i] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}
