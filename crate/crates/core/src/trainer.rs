//! Ray generation, minibatch assembly, the optimizer, and the training
//! loop.
//!
//! A run is fully determined by its config: the field initializes from the
//! seed, batches come from a second seeded stream, and every reduction has
//! a fixed order, so rerunning a config reproduces checkpoints and the
//! metrics log byte for byte. Checkpoints carry the optimizer moments and
//! the batch stream state, so a resumed run walks the same trajectory as an
//! uninterrupted one.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::eval::{psnr, render_view, RenderParams};
use crate::math::Vec3;
use crate::nerf::{
    load_checkpoint, loss_and_gradients, save_checkpoint, CheckpointError, FieldConfig,
    FieldError, FieldGradients, LossBreakdown, RadianceField, RaySampleBatch,
};
use crate::rng::Rng;
use crate::scenesynth::CameraModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no training frames")]
    EmptyDataset,
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: u32,
        v: u32,
        width: usize,
        height: usize,
    },
    #[error("loss became non-finite at iteration {0}; last good checkpoint retained")]
    NonFiniteLoss(usize),
    #[error("non-finite optimizer update in tensor '{0}'")]
    NonFiniteUpdate(String),
    #[error("checkpoint step {step} is beyond the configured {iterations} iterations")]
    ResumeBeyondEnd { step: u64, iterations: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
    pub learning_rate: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_rays: 1024,
            samples_per_ray: 64,
            near: 0.5,
            far: 6.0,
            learning_rate: 5e-4,
            lr_final: 5e-5,
            seed: 0,
            checkpoint_every: 0,
            log_every: 100,
            field: FieldConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Exponentially decayed learning rate for 1-based iteration `i`.
    pub fn learning_rate_at(&self, i: usize) -> f64 {
        if self.iterations <= 1 {
            return self.learning_rate;
        }
        let frac = (i - 1) as f64 / (self.iterations - 1) as f64;
        self.learning_rate * (self.lr_final / self.learning_rate).powf(frac)
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            near: self.near,
            far: self.far,
            samples_per_ray: self.samples_per_ray,
        }
    }
}

/// Pinhole ray through the center of an integer pixel, with bounds checks.
pub fn generate_rays(
    camera: &CameraModel,
    pixel: (u32, u32),
) -> Result<(Vec3, Vec3), TrainError> {
    let (u, v) = pixel;
    if u as usize >= camera.width || v as usize >= camera.height {
        return Err(TrainError::PixelOutOfBounds {
            u,
            v,
            width: camera.width,
            height: camera.height,
        });
    }
    Ok(camera.pixel_ray(u as f64, v as f64))
}

/// Draw `batch_rays` distinct (view, pixel) pairs uniformly over the given
/// training views, attach ground truth, and stratify sample depths.
///
/// The generator is consumed in a fixed order: all pixel draws first, then
/// per-ray depth jitter in ray order.
pub fn sample_batch(
    dataset: &Dataset,
    train_views: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<RaySampleBatch, TrainError> {
    if train_views.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let per_view: Vec<usize> = train_views
        .iter()
        .map(|&v| dataset.frames[v].hsv.width * dataset.frames[v].hsv.height)
        .collect();
    let total: usize = per_view.iter().sum();
    let n_rays = cfg.batch_rays.min(total);

    // distinct (view, pixel) pairs, in draw order
    let mut chosen = Vec::with_capacity(n_rays);
    let mut seen = HashSet::with_capacity(n_rays * 2);
    while chosen.len() < n_rays {
        let flat = rng.below(total as u64) as usize;
        if seen.insert(flat) {
            chosen.push(flat);
        }
    }

    let mut origins = Vec::with_capacity(n_rays);
    let mut directions = Vec::with_capacity(n_rays);
    let mut t_vals = Vec::with_capacity(n_rays * cfg.samples_per_ray);
    let mut deltas = Vec::with_capacity(n_rays * cfg.samples_per_ray);
    let mut positions = Vec::with_capacity(n_rays * cfg.samples_per_ray);
    let mut gt = Vec::with_capacity(n_rays);

    for &flat in &chosen {
        let mut rest = flat;
        let mut view_slot = 0;
        while rest >= per_view[view_slot] {
            rest -= per_view[view_slot];
            view_slot += 1;
        }
        let frame = &dataset.frames[train_views[view_slot]];
        let (w, _) = (frame.hsv.width, frame.hsv.height);
        let (px, py) = (rest % w, rest / w);
        let (origin, dir) = frame.camera.pixel_ray(px as f64, py as f64);

        let t = crate::nerf::stratified_sample(cfg.near, cfg.far, cfg.samples_per_ray, rng);
        for (i, &ti) in t.iter().enumerate() {
            let p = origin + dir * ti;
            positions.push([p.x, p.y, p.z]);
            let next = if i + 1 < t.len() { t[i + 1] } else { cfg.far };
            deltas.push(next - ti);
        }
        t_vals.extend(t);
        origins.push(origin);
        directions.push(dir);
        gt.push(frame.hsv.pixel(rest));
    }

    Ok(RaySampleBatch::new(
        n_rays,
        cfg.samples_per_ray,
        origins,
        directions,
        t_vals,
        deltas,
        positions,
        gt,
    )
    .expect("constructed batch satisfies its invariants"))
}

/// Adam moment buffers, flat over the field's tensor visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(field: &RadianceField) -> Self {
        let n = field.parameter_count();
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Bias-corrected adaptive-moment update on flat slices.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
) -> Result<(), ()> {
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        let update = lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        if !update.is_finite() {
            return Err(());
        }
        params[i] -= update;
    }
    Ok(())
}

/// Apply one optimizer step to every field tensor.
pub fn adam_step(
    field: &mut RadianceField,
    grads: &FieldGradients,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), TrainError> {
    state.step += 1;
    let mut grad_slices: Vec<(String, Vec<f64>)> = Vec::new();
    grads.visit_tensors(|name, t| grad_slices.push((name, t.to_vec())));
    let mut cursor = 0usize;
    let mut slot = 0usize;
    let mut failed: Option<String> = None;
    let step = state.step;
    field.visit_tensors_mut(|name, params| {
        if failed.is_some() {
            return;
        }
        let (grad_name, grad) = &grad_slices[slot];
        debug_assert_eq!(grad_name, name);
        let m = &mut state.m[cursor..cursor + params.len()];
        let v = &mut state.v[cursor..cursor + params.len()];
        if adam_update(params, grad, m, v, step, lr).is_err() {
            failed = Some(name.to_string());
        }
        cursor += params.len();
        slot += 1;
    });
    match failed {
        Some(name) => Err(TrainError::NonFiniteUpdate(name)),
        None => Ok(()),
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub iteration: usize,
    pub loss: f64,
    pub loss_h: f64,
    pub loss_s: f64,
    pub loss_v: f64,
    pub psnr_holdout: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub final_checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub rows: Vec<MetricsRow>,
    /// Total loss of every iteration this call ran, in order.
    pub loss_history: Vec<f64>,
    pub final_loss: Option<LossBreakdown>,
}

/// Run the training loop and write checkpoints plus a metrics CSV under
/// `out_dir`. `resume` continues from a checkpoint written by a previous
/// run with the same config.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutput, TrainError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let train_views = dataset.train_indices();
    if train_views.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let holdout = dataset.holdout_indices();

    let (mut field, mut opt, mut rng, start_iter) = match resume {
        None => {
            let field = RadianceField::init(cfg.field, cfg.seed);
            let opt = OptimizerState::new(&field);
            // batch stream separated from the init stream
            let rng = Rng::seed_from(cfg.seed ^ 0x6a09_e667_f3bc_c909);
            (field, opt, rng, 0u64)
        }
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.step as usize > cfg.iterations {
                return Err(TrainError::ResumeBeyondEnd {
                    step: ckpt.step,
                    iterations: cfg.iterations,
                });
            }
            let mut opt = OptimizerState::new(&ckpt.field);
            if let Some(m) = ckpt.aux_tensor("adam.m") {
                opt.m.copy_from_slice(m);
            }
            if let Some(v) = ckpt.aux_tensor("adam.v") {
                opt.v.copy_from_slice(v);
            }
            opt.step = ckpt.step;
            let rng = Rng::from_state(ckpt.rng_state);
            let step = ckpt.step;
            (ckpt.field, opt, rng, step)
        }
    };

    field.check_finite()?;

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = if start_iter == 0 {
        let mut f = std::fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
        writeln!(f, "iter,loss,loss_h,loss_s,loss_v,psnr_holdout")
            .map_err(io_err(&metrics_path))?;
        f
    } else {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&metrics_path)
            .map_err(io_err(&metrics_path))?
    };

    let save = |field: &RadianceField, opt: &OptimizerState, rng: &Rng, path: &Path| {
        let aux: Vec<(String, &[f64])> = vec![
            ("adam.m".to_string(), opt.m.as_slice()),
            ("adam.v".to_string(), opt.v.as_slice()),
        ];
        save_checkpoint(path, field, rng.state(), opt.step, &aux)
    };

    let final_path = out_dir.join("final.ckpt");
    let mut rows = Vec::new();
    let mut loss_history = Vec::new();
    let mut final_loss = None;

    for i in (start_iter as usize + 1)..=cfg.iterations {
        let batch = sample_batch(dataset, &train_views, cfg, &mut rng)?;
        let (breakdown, grads) = loss_and_gradients(&field, &batch)?;
        let loss = breakdown.total();
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(i));
        }
        adam_step(&mut field, &grads, &mut opt, cfg.learning_rate_at(i))?;
        loss_history.push(loss);
        final_loss = Some(breakdown);

        let last = i == cfg.iterations;
        if (cfg.log_every > 0 && i % cfg.log_every == 0) || last {
            let psnr_holdout = match holdout.first() {
                Some(&view) => {
                    let frame = &dataset.frames[view];
                    let rendered = render_view(&field, &frame.camera, &cfg.render_params());
                    psnr(&rendered, &frame.hsv).unwrap_or(f64::NAN)
                }
                None => f64::NAN,
            };
            let row = MetricsRow {
                iteration: i,
                loss,
                loss_h: breakdown.hue,
                loss_s: breakdown.saturation,
                loss_v: breakdown.value,
                psnr_holdout,
            };
            writeln!(
                metrics,
                "{},{:e},{:e},{:e},{:e},{}",
                row.iteration, row.loss, row.loss_h, row.loss_s, row.loss_v, row.psnr_holdout
            )
            .map_err(io_err(&metrics_path))?;
            rows.push(row);
        }
        if cfg.checkpoint_every > 0 && i % cfg.checkpoint_every == 0 {
            let path = out_dir.join(format!("ckpt_{i:06}.ckpt"));
            save(&field, &opt, &rng, &path)?;
        }
    }

    save(&field, &opt, &rng, &final_path)?;
    Ok(TrainOutput {
        final_checkpoint: final_path,
        metrics_csv: metrics_path,
        rows,
        loss_history,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesynth::generate_orbit_poses;

    #[test]
    fn principal_pixel_looks_down_optical_axis() {
        // odd image size puts one pixel center exactly on the axis
        let poses = generate_orbit_poses(1, 2.0, 25.0, Vec3::ZERO, 65, 65, 0.9).unwrap();
        let cam = &poses[0];
        let (_, dir) = generate_rays(cam, (32, 32)).unwrap();
        let axis = -cam.c2w.basis_z();
        assert!((dir - axis).norm() < 1e-9);
    }

    #[test]
    fn ray_directions_are_unit() {
        let poses = generate_orbit_poses(2, 2.0, 40.0, Vec3::ZERO, 16, 12, 0.8).unwrap();
        for cam in &poses {
            for v in 0..12u32 {
                for u in 0..16u32 {
                    let (_, dir) = generate_rays(cam, (u, v)).unwrap();
                    assert!((dir.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn corner_pixel_angle_matches_fov_geometry() {
        let fov_x = 0.9f64;
        let poses = generate_orbit_poses(1, 2.0, 0.0, Vec3::ZERO, 64, 64, fov_x).unwrap();
        let cam = &poses[0];
        let (_, dir) = generate_rays(cam, (0, 32)).unwrap();
        // horizontal offset of the corner pixel center from the axis
        let axis = -cam.c2w.basis_z();
        let right = cam.c2w.basis_x();
        let tan_theta = dir.dot(right) / dir.dot(axis);
        // pixel 0 center sits at (0.5 - w/2) pixels from the center
        let expect = (0.5 - 32.0) / cam.focal;
        assert!((tan_theta - expect).abs() < 1e-9);
        // full half-fov at the image edge (x = -w/2 exactly)
        let focal_from_fov = 0.5 * 64.0 / (0.5 * fov_x).tan();
        assert!((cam.focal - focal_from_fov).abs() < 1e-12);
    }

    #[test]
    fn generate_rays_rejects_out_of_bounds() {
        let poses = generate_orbit_poses(1, 2.0, 0.0, Vec3::ZERO, 8, 8, 0.8).unwrap();
        assert!(matches!(
            generate_rays(&poses[0], (8, 0)),
            Err(TrainError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut params = vec![0.5, -0.25, 1.0];
        let grads = vec![0.0; 3];
        let mut m = vec![0.0; 3];
        let mut v = vec![0.0; 3];
        adam_update(&mut params, &grads, &mut m, &mut v, 1, 1e-3).unwrap();
        assert_eq!(params, vec![0.5, -0.25, 1.0]);
        assert_eq!(m, vec![0.0; 3]);
    }

    #[test]
    fn adam_first_step_is_bounded_by_lr() {
        let mut params = vec![0.0; 4];
        let grads = vec![3.0, -0.7, 1e-3, 100.0];
        let mut m = vec![0.0; 4];
        let mut v = vec![0.0; 4];
        let lr = 1e-2;
        adam_update(&mut params, &grads, &mut m, &mut v, 1, lr).unwrap();
        for (p, g) in params.iter().zip(&grads) {
            // bias-corrected first step is lr * g / (|g| + eps')
            assert!(p.abs() <= lr * 1.001, "{p}");
            assert!(p.signum() == -g.signum());
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut params = vec![0.0; 2];
        let grads = vec![f64::NAN, 1.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        assert!(adam_update(&mut params, &grads, &mut m, &mut v, 1, 1e-3).is_err());
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(p) = 0.5 * (p - a)^T diag(c) (p - a), minimizer a
        let a = [1.5, -2.0];
        let c = [2.0, 0.5];
        let mut params = vec![0.0, 0.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        for step in 1..=2000u64 {
            let grads: Vec<f64> = (0..2).map(|i| c[i] * (params[i] - a[i])).collect();
            adam_update(&mut params, &grads, &mut m, &mut v, step, 0.05).unwrap();
        }
        assert!((params[0] - a[0]).abs() < 1e-3, "{params:?}");
        assert!((params[1] - a[1]).abs() < 1e-3, "{params:?}");
    }

    #[test]
    fn learning_rate_schedule_endpoints() {
        let cfg = TrainConfig {
            iterations: 101,
            ..TrainConfig::default()
        };
        assert!((cfg.learning_rate_at(1) - 5e-4).abs() < 1e-18);
        assert!((cfg.learning_rate_at(101) - 5e-5).abs() < 1e-18);
        // halfway through an exponential schedule sits at the geometric mean
        let mid = cfg.learning_rate_at(51);
        assert!((mid - (5e-4f64 * 5e-5f64).sqrt()).abs() < 1e-12);
    }
}
