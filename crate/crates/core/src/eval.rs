//! Rendering of novel views and quantitative metrics.
//!
//! PSNR and SSIM are computed on the RGB conversion of the HSV images so
//! hue wraparound cannot manufacture pixel error; temperature error comes
//! from inverting the saturation channel through the recorded mapping
//! ranges. Rendering at inference time replaces stratified jitter with bin
//! midpoints, so a view renders bitwise identically every time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::io::{write_ply_ascii, IoError, PlyPoint};
use crate::math::Vec3;
use crate::nerf::{midpoint_sample, volume_render_hsv, RadianceField};
use crate::pseudotex::{hsv_pixel_to_rgb, hsv_to_rgb, HsvImage, MappingMetadata};
use crate::scenesynth::CameraModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {2}x{2} SSIM window")]
    TooSmallForWindow(usize, usize, usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask selects no unclipped pixels (all ground truth outside the mapping range)")]
    AllClipped,
    #[error("frame '{0}' is missing ground truth {1}")]
    MissingGroundTruth(String, &'static str),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Sampling geometry for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub near: f64,
    pub far: f64,
    pub samples_per_ray: usize,
}

/// Render a full view with deterministic midpoint sampling.
pub fn render_view(field: &RadianceField, camera: &CameraModel, params: &RenderParams) -> HsvImage {
    let (w, h) = (camera.width, camera.height);
    let n = params.samples_per_ray;
    let t_vals = midpoint_sample(params.near, params.far, n);
    let mut deltas = vec![0.0; n];
    for i in 0..n - 1 {
        deltas[i] = t_vals[i + 1] - t_vals[i];
    }
    deltas[n - 1] = params.far - t_vals[n - 1];

    let mut out = HsvImage::zeros(w, h);
    // row blocks keep the forward batches near a few tens of thousands of
    // points
    let rows_per_block = (32_768 / (w * n)).max(1);
    let mut row = 0;
    while row < h {
        let block_rows = rows_per_block.min(h - row);
        let pixels = block_rows * w;
        let mut positions = Vec::with_capacity(pixels * n);
        let mut dirs = Vec::with_capacity(pixels * n);
        for dy in 0..block_rows {
            for x in 0..w {
                let (origin, dir) = camera.pixel_ray(x as f64, (row + dy) as f64);
                for &t in &t_vals {
                    let p = origin + dir * t;
                    positions.push([p.x, p.y, p.z]);
                    dirs.push([dir.x, dir.y, dir.z]);
                }
            }
        }
        let cache = field.forward_batch(&positions, &dirs);
        for pix in 0..pixels {
            let lo = pix * n;
            let hi = lo + n;
            let hsv: Vec<(f64, f64, f64)> = (lo..hi)
                .map(|i| (cache.h_out[i], cache.s_out[i], cache.v_out[i]))
                .collect();
            let r = volume_render_hsv(&cache.sigma[lo..hi], &hsv, &deltas);
            let idx = row * w + pix;
            out.h[idx] = r.hsv.0;
            out.s[idx] = r.hsv.1;
            out.v[idx] = r.hsv.2;
        }
        row += block_rows;
    }
    out
}

/// Peak cap applied when the mean squared error underflows to zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// PSNR in dB over the RGB conversion of two HSV images.
pub fn psnr(a: &HsvImage, b: &HsvImage) -> Result<f64, EvalError> {
    if a.width != b.width || a.height != b.height {
        return Err(EvalError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let ra = hsv_to_rgb(a);
    let rb = hsv_to_rgb(b);
    let n = a.width * a.height;
    let mut se = 0.0;
    for i in 0..n {
        se += (ra.r[i] - rb.r[i]).powi(2)
            + (ra.g[i] - rb.g[i]).powi(2)
            + (ra.b[i] - rb.b[i]).powi(2);
    }
    let mse = se / (3 * n) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Rec. 601 luma of the RGB conversion.
fn luma(img: &HsvImage) -> Vec<f64> {
    let rgb = hsv_to_rgb(img);
    (0..img.width * img.height)
        .map(|i| 0.299 * rgb.r[i] + 0.587 * rgb.g[i] + 0.114 * rgb.b[i])
        .collect()
}

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Valid-mode separable Gaussian filter; output is (w-10) x (h-10).
fn gaussian_valid(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = ssim_kernel();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * img[y * w + x + i];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * horiz[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity over the luma channel: 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
pub fn ssim(a: &HsvImage, b: &HsvImage) -> Result<f64, EvalError> {
    if a.width != b.width || a.height != b.height {
        return Err(EvalError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(EvalError::TooSmallForWindow(a.width, a.height, SSIM_WINDOW));
    }
    let (w, h) = (a.width, a.height);
    let la = luma(a);
    let lb = luma(b);
    let laa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let lbb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let lab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();

    let mu_a = gaussian_valid(&la, w, h);
    let mu_b = gaussian_valid(&lb, w, h);
    let e_aa = gaussian_valid(&laa, w, h);
    let e_bb = gaussian_valid(&lbb, w, h);
    let e_ab = gaussian_valid(&lab, w, h);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae_kelvin: f64,
    pub evaluated_pixels: usize,
    pub clipped_pixels: usize,
}

impl MaeReport {
    pub fn clipped_fraction(&self) -> f64 {
        let total = self.evaluated_pixels + self.clipped_pixels;
        if total == 0 {
            0.0
        } else {
            self.clipped_pixels as f64 / total as f64
        }
    }
}

/// Mean absolute temperature error over masked pixels, inverting the
/// predicted saturation through the recorded mapping. Pixels whose ground
/// truth falls outside the invertible range are counted as clipped and
/// excluded.
pub fn temperature_mae(
    pred: &HsvImage,
    gt_temperature: &[f64],
    meta: &MappingMetadata,
    mask: &[bool],
) -> Result<MaeReport, EvalError> {
    assert_eq!(gt_temperature.len(), pred.width * pred.height);
    assert_eq!(mask.len(), gt_temperature.len());
    if !mask.iter().any(|&m| m) {
        return Err(EvalError::EmptyMask);
    }
    let mut total = 0.0;
    let mut evaluated = 0usize;
    let mut clipped = 0usize;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let t_gt = gt_temperature[i];
        if !(t_gt > meta.t_min_k && t_gt < meta.t_max_k) {
            clipped += 1;
            continue;
        }
        let t_pred = meta.temperature_of(pred.s[i]);
        total += (t_pred - t_gt).abs();
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(EvalError::AllClipped);
    }
    Ok(MaeReport {
        mae_kelvin: total / evaluated as f64,
        evaluated_pixels: evaluated,
        clipped_pixels: clipped,
    })
}

/// Fraction of masked pixels whose nearest-palette hue matches the ground
/// truth material.
pub fn material_accuracy(
    pred: &HsvImage,
    gt_labels: &[u16],
    legend: &[String],
    meta: &MappingMetadata,
    mask: &[bool],
) -> Result<f64, EvalError> {
    assert_eq!(gt_labels.len(), pred.width * pred.height);
    assert_eq!(mask.len(), gt_labels.len());
    // map legend index -> palette index once
    let palette_of_label: Vec<Option<usize>> = legend
        .iter()
        .map(|m| {
            meta.palette
                .entries()
                .iter()
                .position(|(name, _)| name == m)
        })
        .collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let Some(expect) = palette_of_label[gt_labels[i] as usize] else {
            continue;
        };
        total += 1;
        if meta.palette.nearest(pred.h[i]) == expect {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(EvalError::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub temperature_mae_k: Option<f64>,
    pub material_accuracy: Option<f64>,
    pub clipped_fraction: Option<f64>,
    pub foreground_pixels: usize,
}

/// Per-view metrics plus arithmetic means across views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_temperature_mae_k: Option<f64>,
    pub mean_material_accuracy: Option<f64>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = String::from(
            "view  name              psnr_db   ssim    mae_K   material  fg_px\n",
        );
        for v in &self.views {
            out.push_str(&format!(
                "{:<5} {:<16} {:>8.3} {:>7.4} {:>8} {:>9} {:>6}\n",
                v.view,
                v.name,
                v.psnr_db,
                v.ssim,
                v.temperature_mae_k
                    .map(|m| format!("{m:.3}"))
                    .unwrap_or_else(|| "-".into()),
                v.material_accuracy
                    .map(|m| format!("{m:.4}"))
                    .unwrap_or_else(|| "-".into()),
                v.foreground_pixels,
            ));
        }
        out.push_str(&format!(
            "mean                   {:>8.3} {:>7.4} {:>8} {:>9}\n",
            self.mean_psnr_db,
            self.mean_ssim,
            self.mean_temperature_mae_k
                .map(|m| format!("{m:.3}"))
                .unwrap_or_else(|| "-".into()),
            self.mean_material_accuracy
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into()),
        ));
        out
    }
}

/// Render and score the given dataset views. Foreground is the set of
/// pixels with finite ground-truth depth; temperature and material metrics
/// are skipped for frames without ground truth.
pub fn evaluate_views(
    field: &RadianceField,
    dataset: &Dataset,
    view_indices: &[usize],
    params: &RenderParams,
) -> Result<EvalReport, EvalError> {
    let mut views = Vec::with_capacity(view_indices.len());
    for &view in view_indices {
        let frame = &dataset.frames[view];
        let rendered = render_view(field, &frame.camera, params);
        let psnr_db = psnr(&rendered, &frame.hsv)?;
        let ssim_val = ssim(&rendered, &frame.hsv)?;

        let mask: Option<Vec<bool>> = frame
            .depth
            .as_ref()
            .map(|d| d.iter().map(|v| v.is_finite()).collect());
        let foreground_pixels = mask
            .as_ref()
            .map(|m| m.iter().filter(|&&b| b).count())
            .unwrap_or(0);

        let (mut mae, mut acc, mut clipped) = (None, None, None);
        if let (Some(mask), Some(gt_t)) = (&mask, &frame.gt_temperature) {
            let report = temperature_mae(&rendered, gt_t, &frame.meta, mask)?;
            mae = Some(report.mae_kelvin);
            clipped = Some(report.clipped_fraction());
            if let Some(labels) = &frame.labels {
                acc = Some(material_accuracy(
                    &rendered,
                    labels,
                    &dataset.legend,
                    &frame.meta,
                    mask,
                )?);
            }
        }
        views.push(ViewMetrics {
            view,
            name: frame.name.clone(),
            psnr_db,
            ssim: ssim_val,
            temperature_mae_k: mae,
            material_accuracy: acc,
            clipped_fraction: clipped,
            foreground_pixels,
        });
    }

    let mean = |sel: &dyn Fn(&ViewMetrics) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = views.iter().filter_map(sel).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(EvalReport {
        mean_psnr_db: views.iter().map(|v| v.psnr_db).sum::<f64>() / views.len().max(1) as f64,
        mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / views.len().max(1) as f64,
        mean_temperature_mae_k: mean(&|v| v.temperature_mae_k),
        mean_material_accuracy: mean(&|v| v.material_accuracy),
        views,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointCloudSummary {
    pub points: usize,
    pub resolution: usize,
    pub sigma_threshold: f64,
}

/// Sample density on a regular grid over `bbox` and write every point above
/// the threshold as an ascii PLY vertex colored by the field's HSV output
/// (viewed along -z).
pub fn export_point_cloud(
    field: &RadianceField,
    bbox_min: Vec3,
    bbox_max: Vec3,
    resolution: usize,
    sigma_threshold: f64,
    path: impl AsRef<Path>,
) -> Result<PointCloudSummary, EvalError> {
    assert!(resolution >= 2, "need at least 2 samples per axis");
    let canonical_dir = [0.0, 0.0, -1.0];
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;

    let mut points = Vec::new();
    // evaluate one z-slab at a time to bound the batch size
    for iz in 0..resolution {
        let z = step(bbox_min.z, bbox_max.z, iz);
        let mut positions = Vec::with_capacity(resolution * resolution);
        for iy in 0..resolution {
            for ix in 0..resolution {
                positions.push([
                    step(bbox_min.x, bbox_max.x, ix),
                    step(bbox_min.y, bbox_max.y, iy),
                    z,
                ]);
            }
        }
        let dirs = vec![canonical_dir; positions.len()];
        let cache = field.forward_batch(&positions, &dirs);
        for (i, pos) in positions.iter().enumerate() {
            if cache.sigma[i] > sigma_threshold {
                let (r, g, b) =
                    hsv_pixel_to_rgb(cache.h_out[i], cache.s_out[i], cache.v_out[i]);
                points.push(PlyPoint {
                    position: Vec3::new(pos[0], pos[1], pos[2]),
                    rgb: [
                        (r * 255.0).round() as u8,
                        (g * 255.0).round() as u8,
                        (b * 255.0).round() as u8,
                    ],
                });
            }
        }
    }
    write_ply_ascii(path, &points)?;
    Ok(PointCloudSummary {
        points: points.len(),
        resolution,
        sigma_threshold,
    })
}
