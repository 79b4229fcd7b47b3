//! Ascii PLY 1.0 point-cloud writer (x, y, z, red, green, blue).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::IoError;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyPoint {
    pub position: Vec3,
    pub rgb: [u8; 3],
}

pub fn write_ply_ascii(path: impl AsRef<Path>, points: &[PlyPoint]) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = String::with_capacity(64 + points.len() * 40);
    text.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(text, "element vertex {}", points.len());
    text.push_str(
        "property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n",
    );
    for p in points {
        let _ = writeln!(
            text,
            "{} {} {} {} {} {}",
            p.position.x as f32, p.position.y as f32, p.position.z as f32,
            p.rgb[0], p.rgb[1], p.rgb[2]
        );
    }
    fs::write(path, text).map_err(|e| IoError::file(path, e))
}
