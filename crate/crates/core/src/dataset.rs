//! On-disk dataset layout shared by synthesis, training, and evaluation.
//!
//! A dataset directory holds `transforms.json` (pose manifest, mirroring the
//! common synthetic-NeRF layout), `legend.json`, `library.csv`, and per
//! frame: a color-PFM Pseudo-TeX image with a `.meta.json` sidecar and a PNG
//! preview, plus the ground-truth temperature / texture / depth PFMs, the
//! 16-bit PGM material mask, and the multi-band radiance cube (a manifest
//! JSON plus one grayscale PFM per band).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{read_pfm, read_pgm16, write_pfm, write_png_rgb8, IoError, PfmImage};
use crate::math::Mat4;
use crate::pseudotex::{build_palette, hsv_to_rgb, HsvImage, MappingMetadata};
use crate::radiometry::{
    format_spectral_library, load_spectral_library, RadiometryError, SpectralLibrary,
};
use crate::scenesynth::{CameraModel, SceneError};
use crate::texdecomp::{DecompError, MaterialMask, ThermalCube};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad json: {message}")]
    Json { path: String, message: String },
    #[error("frame {frame}: {message}")]
    Frame { frame: String, message: String },
    #[error(transparent)]
    Radiometry(#[from] RadiometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::File {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> DatasetError + '_ {
    move |e| DatasetError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Pose manifest, one entry per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformsManifest {
    /// Horizontal field of view in radians.
    pub camera_angle_x: f64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    /// Frame path prefix relative to the dataset root, e.g. "./frame_000".
    pub file_path: String,
    /// Row-major camera-to-world matrix.
    pub transform_matrix: [[f64; 4]; 4],
}

/// Dataset-level facts that individual files do not carry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub ambient_temperature: f64,
    pub background_material: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LegendFile {
    legend: Vec<String>,
}

/// Sidecar schema for the HSV mapping metadata.
#[derive(Debug, Serialize, Deserialize)]
struct MetaSidecar {
    #[serde(rename = "t_min_K")]
    t_min_k: f64,
    #[serde(rename = "t_max_K")]
    t_max_k: f64,
    x_min: f64,
    x_max: f64,
    palette: BTreeMap<String, f64>,
}

impl MetaSidecar {
    fn from_meta(meta: &MappingMetadata) -> Self {
        MetaSidecar {
            t_min_k: meta.t_min_k,
            t_max_k: meta.t_max_k,
            x_min: meta.x_min,
            x_max: meta.x_max,
            palette: meta
                .palette
                .entries()
                .iter()
                .cloned()
                .collect(),
        }
    }

    fn into_meta(self, path: &Path) -> Result<MappingMetadata, DatasetError> {
        let materials: Vec<&str> = self.palette.keys().map(|s| s.as_str()).collect();
        let palette = build_palette(&materials).map_err(|e| DatasetError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        // the stored hues must match the canonical assignment
        for (material, &hue) in &self.palette {
            let canonical = palette.hue_of(material).unwrap();
            if (canonical - hue).abs() > 1e-12 {
                return Err(DatasetError::Json {
                    path: path.display().to_string(),
                    message: format!(
                        "palette hue for '{material}' is {hue}, expected {canonical}"
                    ),
                });
            }
        }
        MappingMetadata::new(self.t_min_k, self.t_max_k, self.x_min, self.x_max, palette)
            .map_err(|e| DatasetError::Json {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    }
}

/// Cube manifest: band list in cm^-1 plus one PFM per band.
#[derive(Debug, Serialize, Deserialize)]
pub struct CubeManifest {
    pub width: usize,
    pub height: usize,
    pub bands: Vec<f64>,
    pub files: Vec<String>,
}

/// Path helpers for one frame prefix.
#[derive(Debug, Clone)]
pub struct FramePaths {
    pub prefix: PathBuf,
}

impl FramePaths {
    pub fn new(root: &Path, file_path: &str) -> Self {
        let rel = file_path.strip_prefix("./").unwrap_or(file_path);
        FramePaths {
            prefix: root.join(rel),
        }
    }

    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut s = self.prefix.as_os_str().to_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }

    /// Sibling file `<prefix>.<name>` for artifacts beyond the standard
    /// layout (decomposition estimates, renders).
    pub fn with_extra(&self, name: &str) -> PathBuf {
        self.with_suffix(&format!(".{name}"))
    }

    pub fn hsv_pfm(&self) -> PathBuf {
        self.with_suffix(".hsv.pfm")
    }

    pub fn hsv_meta(&self) -> PathBuf {
        self.with_suffix(".hsv.meta.json")
    }

    pub fn hsv_png(&self) -> PathBuf {
        self.with_suffix(".hsv.png")
    }

    pub fn temperature_pfm(&self) -> PathBuf {
        self.with_suffix(".t.pfm")
    }

    pub fn texture_pfm(&self) -> PathBuf {
        self.with_suffix(".x.pfm")
    }

    pub fn depth_pfm(&self) -> PathBuf {
        self.with_suffix(".depth.pfm")
    }

    pub fn mask_pgm(&self) -> PathBuf {
        self.with_suffix(".mask.pgm")
    }

    pub fn cube_manifest(&self) -> PathBuf {
        self.with_suffix(".cube.json")
    }

    pub fn band_pfm(&self, band: usize) -> PathBuf {
        self.with_suffix(&format!(".band_{band:02}.pfm"))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(file_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_meta_sidecar(path: &Path, meta: &MappingMetadata) -> Result<(), DatasetError> {
    write_json(path, &MetaSidecar::from_meta(meta))
}

pub fn read_meta_sidecar(path: &Path) -> Result<MappingMetadata, DatasetError> {
    let sidecar: MetaSidecar = read_json(path)?;
    sidecar.into_meta(path)
}

pub fn write_hsv_image(paths: &FramePaths, hsv: &HsvImage) -> Result<(), DatasetError> {
    write_hsv_to(&paths.hsv_pfm(), &paths.hsv_png(), hsv)
}

/// Write an HSV image as a color PFM plus a PNG preview at explicit paths.
pub fn write_hsv_to(pfm: &Path, png: &Path, hsv: &HsvImage) -> Result<(), DatasetError> {
    let mut data = Vec::with_capacity(hsv.width * hsv.height * 3);
    for i in 0..hsv.width * hsv.height {
        data.push(hsv.h[i] as f32);
        data.push(hsv.s[i] as f32);
        data.push(hsv.v[i] as f32);
    }
    write_pfm(pfm, &PfmImage::color(hsv.width, hsv.height, data))?;
    let rgb = hsv_to_rgb(hsv);
    write_png_rgb8(png, hsv.width, hsv.height, &rgb.to_rgb8())?;
    Ok(())
}

pub fn read_hsv_image(path: &Path) -> Result<HsvImage, DatasetError> {
    let pfm = read_pfm(path)?;
    if pfm.channels != 3 {
        return Err(DatasetError::Frame {
            frame: path.display().to_string(),
            message: "expected a 3-channel PFM".into(),
        });
    }
    let n = pfm.width * pfm.height;
    let mut h = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        h[i] = (pfm.data[i * 3] as f64).clamp(0.0, 1.0);
        s[i] = (pfm.data[i * 3 + 1] as f64).clamp(0.0, 1.0);
        v[i] = (pfm.data[i * 3 + 2] as f64).clamp(0.0, 1.0);
    }
    Ok(HsvImage::new(pfm.width, pfm.height, h, s, v))
}

pub fn write_gray_f64(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<(), DatasetError> {
    let f32s: Vec<f32> = data.iter().map(|&v| v as f32).collect();
    write_pfm(path, &PfmImage::gray(width, height, f32s))?;
    Ok(())
}

pub fn read_gray_f64(path: &Path) -> Result<(usize, usize, Vec<f64>), DatasetError> {
    let pfm = read_pfm(path)?;
    if pfm.channels != 1 {
        return Err(DatasetError::Frame {
            frame: path.display().to_string(),
            message: "expected a 1-channel PFM".into(),
        });
    }
    Ok((
        pfm.width,
        pfm.height,
        pfm.data.iter().map(|&v| v as f64).collect(),
    ))
}

pub fn write_cube(paths: &FramePaths, cube: &ThermalCube) -> Result<(), DatasetError> {
    let bands_cm1: Vec<f64> = cube.grid().values().iter().map(|&nu| nu / 100.0).collect();
    let files: Vec<String> = (0..cube.bands())
        .map(|b| {
            paths
                .band_pfm(b)
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    write_json(
        &paths.cube_manifest(),
        &CubeManifest {
            width: cube.width(),
            height: cube.height(),
            bands: bands_cm1,
            files,
        },
    )?;
    let k = cube.bands();
    for b in 0..k {
        let plane: Vec<f32> = (0..cube.width() * cube.height())
            .map(|p| cube.radiance()[p * k + b] as f32)
            .collect();
        write_pfm(
            paths.band_pfm(b),
            &PfmImage::gray(cube.width(), cube.height(), plane),
        )?;
    }
    Ok(())
}

pub fn read_cube(root: &Path, paths: &FramePaths) -> Result<ThermalCube, DatasetError> {
    let manifest: CubeManifest = read_json(&paths.cube_manifest())?;
    let grid = crate::radiometry::WavenumberGrid::new(
        manifest.bands.iter().map(|&b| b * 100.0).collect(),
    )?;
    let k = grid.len();
    if manifest.files.len() != k {
        return Err(DatasetError::Frame {
            frame: paths.cube_manifest().display().to_string(),
            message: format!("{} band files for {k} bands", manifest.files.len()),
        });
    }
    let n = manifest.width * manifest.height;
    let mut radiance = vec![0.0; n * k];
    for (b, file) in manifest.files.iter().enumerate() {
        let dir = paths
            .prefix
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| root.to_path_buf());
        let pfm = read_pfm(dir.join(file))?;
        if pfm.width != manifest.width || pfm.height != manifest.height || pfm.channels != 1 {
            return Err(DatasetError::Frame {
                frame: file.clone(),
                message: "band plane shape mismatch".into(),
            });
        }
        for p in 0..n {
            radiance[p * k + b] = pfm.data[p] as f64;
        }
    }
    Ok(ThermalCube::new(manifest.width, manifest.height, grid, radiance)?)
}

pub fn write_mask(paths: &FramePaths, mask: &MaterialMask) -> Result<(), DatasetError> {
    crate::io::write_pgm16(paths.mask_pgm(), mask.width(), mask.height(), mask.labels())?;
    Ok(())
}

pub fn read_mask(paths: &FramePaths, legend: &[String]) -> Result<MaterialMask, DatasetError> {
    let (w, h, labels) = read_pgm16(paths.mask_pgm())?;
    Ok(MaterialMask::new(w, h, labels, legend.to_vec())?)
}

/// One loaded frame: everything training and evaluation need.
#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    pub camera: CameraModel,
    pub hsv: HsvImage,
    pub meta: MappingMetadata,
    pub gt_temperature: Option<Vec<f64>>,
    pub depth: Option<Vec<f64>>,
    pub labels: Option<Vec<u16>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<Frame>,
    pub legend: Vec<String>,
    pub meta: Option<DatasetMeta>,
}

impl Dataset {
    /// Load every frame listed in `transforms.json`. Ground truth files are
    /// optional; frames without them still train.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref();
        let manifest: TransformsManifest = read_json(&root.join("transforms.json"))?;
        let legend: Vec<String> = match read_json::<LegendFile>(&root.join("legend.json")) {
            Ok(l) => l.legend,
            Err(_) => Vec::new(),
        };
        let meta: Option<DatasetMeta> = read_json(&root.join("dataset_meta.json")).ok();

        let mut frames = Vec::with_capacity(manifest.frames.len());
        for entry in &manifest.frames {
            let paths = FramePaths::new(root, &entry.file_path);
            let hsv = read_hsv_image(&paths.hsv_pfm())?;
            let mapping = read_meta_sidecar(&paths.hsv_meta())?;
            let camera = CameraModel::from_fov_x(
                hsv.width,
                hsv.height,
                manifest.camera_angle_x,
                Mat4(entry.transform_matrix),
            )?;
            let gt_temperature = read_gray_f64(&paths.temperature_pfm())
                .ok()
                .map(|(_, _, d)| d);
            let depth = read_gray_f64(&paths.depth_pfm()).ok().map(|(_, _, d)| d);
            let labels = if legend.is_empty() {
                None
            } else {
                read_mask(&paths, &legend).ok().map(|m| m.labels().to_vec())
            };
            frames.push(Frame {
                name: entry.file_path.clone(),
                camera,
                hsv,
                meta: mapping,
                gt_temperature,
                depth,
                labels,
            });
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            frames,
            legend,
            meta,
        })
    }

    /// Training frames: every view except each 8th (1-based positions
    /// 8, 16, 24, ... are held out for evaluation).
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|i| (i + 1) % 8 != 0).collect()
    }

    pub fn holdout_indices(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|i| (i + 1) % 8 == 0).collect()
    }
}

pub fn write_legend(root: &Path, legend: &[String]) -> Result<(), DatasetError> {
    write_json(
        &root.join("legend.json"),
        &LegendFile {
            legend: legend.to_vec(),
        },
    )
}

pub fn write_library_csv(root: &Path, library: &SpectralLibrary) -> Result<(), DatasetError> {
    let path = root.join("library.csv");
    std::fs::write(&path, format_spectral_library(library)).map_err(file_err(&path))
}

pub fn read_library_csv(root: &Path) -> Result<SpectralLibrary, DatasetError> {
    Ok(load_spectral_library(root.join("library.csv"))?)
}
