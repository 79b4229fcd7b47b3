//! Map decomposed thermal quantities into the HSV cube and back.
//!
//! Material class drives hue, temperature drives saturation, texture drives
//! value. The normalization ranges and the material palette travel in a
//! [`MappingMetadata`] sidecar so the mapping stays invertible; without the
//! recorded ranges a saturation value cannot be turned back into kelvin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::texdecomp::TexImage;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("duplicate material id '{0}' in palette input")]
    DuplicateMaterial(String),
    #[error("palette input is empty")]
    EmptyPalette,
    #[error("material '{0}' missing from palette")]
    UnknownMaterial(String),
    #[error("invalid range: {name} min {min} must be below max {max}")]
    InvalidRange {
        name: &'static str,
        min: f64,
        max: f64,
    },
}

/// Ordered material -> hue assignment. Hues live on the half-open [0, 1)
/// circle at spacing exactly 1/M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    entries: Vec<(String, f64)>,
}

impl Palette {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hue_of(&self, material: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(m, _)| m == material)
            .map(|&(_, h)| h)
    }

    /// Index of the palette entry nearest to `hue` under cyclic distance.
    pub fn nearest(&self, hue: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &(_, h)) in self.entries.iter().enumerate() {
            let d = cyclic_distance(hue, h);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn material_at(&self, index: usize) -> &str {
        &self.entries[index].0
    }
}

/// Cyclic distance on the unit hue circle: min(|d|, 1 - |d|).
pub fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// Deterministic palette: ids sorted lexicographically, hue(i) = i / M.
pub fn build_palette<S: AsRef<str>>(materials: &[S]) -> Result<Palette, MappingError> {
    if materials.is_empty() {
        return Err(MappingError::EmptyPalette);
    }
    let mut ids: Vec<String> = materials.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(MappingError::DuplicateMaterial(w[0].clone()));
        }
    }
    let m = ids.len() as f64;
    Ok(Palette {
        entries: ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i as f64 / m))
            .collect(),
    })
}

/// Normalization ranges plus palette; the invertible half of the mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingMetadata {
    pub t_min_k: f64,
    pub t_max_k: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub palette: Palette,
}

impl MappingMetadata {
    pub fn new(
        t_min_k: f64,
        t_max_k: f64,
        x_min: f64,
        x_max: f64,
        palette: Palette,
    ) -> Result<Self, MappingError> {
        if !(t_min_k < t_max_k) {
            return Err(MappingError::InvalidRange {
                name: "temperature",
                min: t_min_k,
                max: t_max_k,
            });
        }
        if !(x_min < x_max) {
            return Err(MappingError::InvalidRange {
                name: "texture",
                min: x_min,
                max: x_max,
            });
        }
        Ok(MappingMetadata {
            t_min_k,
            t_max_k,
            x_min,
            x_max,
            palette,
        })
    }

    pub fn saturation_of(&self, t: f64) -> f64 {
        ((t - self.t_min_k) / (self.t_max_k - self.t_min_k)).clamp(0.0, 1.0)
    }

    pub fn temperature_of(&self, s: f64) -> f64 {
        self.t_min_k + s * (self.t_max_k - self.t_min_k)
    }

    pub fn value_of(&self, x: f64) -> f64 {
        ((x - self.x_min) / (self.x_max - self.x_min)).clamp(0.0, 1.0)
    }

    pub fn texture_of(&self, v: f64) -> f64 {
        self.x_min + v * (self.x_max - self.x_min)
    }
}

/// HSV image with every channel in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    pub width: usize,
    pub height: usize,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

impl HsvImage {
    pub fn new(width: usize, height: usize, h: Vec<f64>, s: Vec<f64>, v: Vec<f64>) -> Self {
        let n = width * height;
        assert!(h.len() == n && s.len() == n && v.len() == n);
        debug_assert!(h
            .iter()
            .chain(&s)
            .chain(&v)
            .all(|c| (0.0..=1.0).contains(c)));
        HsvImage {
            width,
            height,
            h,
            s,
            v,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        HsvImage {
            width,
            height,
            h: vec![0.0; width * height],
            s: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn pixel(&self, i: usize) -> (f64, f64, f64) {
        (self.h[i], self.s[i], self.v[i])
    }
}

/// Planar RGB image in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

impl RgbImage {
    /// Interleaved 8-bit rows for the PNG previewer.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.r.len() * 3);
        for i in 0..self.r.len() {
            out.push((self.r[i].clamp(0.0, 1.0) * 255.0).round() as u8);
            out.push((self.g[i].clamp(0.0, 1.0) * 255.0).round() as u8);
            out.push((self.b[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out
    }
}

/// Map a decomposed image into HSV. Returns the image and the count of NaN
/// temperature pixels (they map to saturation 0).
pub fn tex_to_hsv(
    tex: &TexImage,
    meta: &MappingMetadata,
) -> Result<(HsvImage, usize), MappingError> {
    let n = tex.width * tex.height;
    let mut h = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut nan_pixels = 0;

    // resolve each legend label once
    let hues: Vec<f64> = tex
        .material
        .legend()
        .iter()
        .map(|m| {
            meta.palette
                .hue_of(m)
                .ok_or_else(|| MappingError::UnknownMaterial(m.clone()))
        })
        .collect::<Result<_, _>>()?;

    for i in 0..n {
        h[i] = hues[tex.material.labels()[i] as usize];
        let t = tex.temperature[i];
        if t.is_nan() {
            nan_pixels += 1;
            s[i] = 0.0;
        } else {
            s[i] = meta.saturation_of(t);
        }
        let x = tex.texture[i];
        v[i] = if x.is_nan() { 0.0 } else { meta.value_of(x) };
    }
    Ok((HsvImage::new(tex.width, tex.height, h, s, v), nan_pixels))
}

/// Invert the HSV mapping: temperature and texture from the recorded
/// ranges, material by nearest palette hue under cyclic distance.
pub fn hsv_to_tex(
    img: &HsvImage,
    meta: &MappingMetadata,
) -> (Vec<f64>, Vec<usize>, Vec<f64>) {
    let n = img.width * img.height;
    let mut t = vec![0.0; n];
    let mut material = vec![0usize; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        t[i] = meta.temperature_of(img.s[i]);
        x[i] = meta.texture_of(img.v[i]);
        material[i] = meta.palette.nearest(img.h[i]);
    }
    (t, material, x)
}

/// Hexcone HSV -> RGB for one pixel; channels in [0, 1], hue cyclic.
pub fn hsv_pixel_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// RGB -> HSV for one pixel; the inverse of [`hsv_pixel_to_rgb`] wherever
/// s > 0 and v > 0.
pub fn rgb_pixel_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let range = max - min;
    let v = max;
    if max <= 0.0 || range <= 0.0 {
        return (0.0, 0.0, v);
    }
    let s = range / max;
    let h6 = if max == r {
        (g - b) / range
    } else if max == g {
        (b - r) / range + 2.0
    } else {
        (r - g) / range + 4.0
    };
    ((h6 / 6.0).rem_euclid(1.0), s, v)
}

pub fn hsv_to_rgb(img: &HsvImage) -> RgbImage {
    let n = img.width * img.height;
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let (rr, gg, bb) = hsv_pixel_to_rgb(img.h[i], img.s[i], img.v[i]);
        r[i] = rr;
        g[i] = gg;
        b[i] = bb;
    }
    RgbImage {
        width: img.width,
        height: img.height,
        r,
        g,
        b,
    }
}
