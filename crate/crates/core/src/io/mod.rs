//! File formats used by the on-disk dataset layout.
//!
//! PFM carries float images (radiance, temperature, depth, HSV), 16-bit PGM
//! carries material masks, ascii PLY carries exported point clouds, and the
//! PNG writer emits 8-bit previews for humans. Evaluation never reads PNG.

mod pfm;
mod pgm;
mod png;
mod ply;

pub use pfm::{read_pfm, write_pfm, PfmImage};
pub use pgm::{read_pgm16, write_pgm16};
pub use png::write_png_rgb8;
pub use ply::{write_ply_ascii, PlyPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed {format}: {message}")]
    Malformed {
        path: String,
        format: &'static str,
        message: String,
    },
}

impl IoError {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn malformed(
        path: &std::path::Path,
        format: &'static str,
        message: impl Into<String>,
    ) -> Self {
        IoError::Malformed {
            path: path.display().to_string(),
            format,
            message: message.into(),
        }
    }
}
