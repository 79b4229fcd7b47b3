//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde_json::Value;

use thermotex::dataset::{self, Dataset, FramePaths};
use thermotex::eval::{evaluate_views, render_view, RenderParams};
use thermotex::math::Vec3;
use thermotex::nerf::load_checkpoint;
use thermotex::pseudotex::tex_to_hsv;
use thermotex::radiometry::load_spectral_library;
use thermotex::scenesynth::{
    emit_dataset, generate_orbit_poses, reference_library, reference_scene, EmitOptions,
    SceneDescription,
};
use thermotex::texdecomp::{
    decompose_cube, DecompMode, DecompositionConfig, MaterialMask, TexImage,
};
use thermotex::trainer;

use crate::config::{
    self, DecomposeConfig, EvalConfig, MapConfig, PointCloudConfig, RenderConfig, SynthConfig,
    TrainCliConfig,
};
use crate::{CliError, Invocation};

pub fn synth(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(SynthConfig::default()).unwrap();
    // `--config ref_scene` selects the built-in scene without a file
    let mut invocation = invocation.clone();
    if invocation.config.as_deref() == Some("ref_scene") {
        invocation.config = None;
    }
    let invocation = &invocation;
    let (mut cfg, mut resolved) = config::resolve::<SynthConfig>(invocation, base)?;
    if let Some(seed) = invocation.seed {
        cfg.seed = seed;
        resolved["seed"] = Value::from(seed);
    }
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "synth", &resolved, cfg.seed)?;

    let scene: SceneDescription = match &cfg.scene {
        Value::String(s) if s == "reference" || s == "ref_scene" => reference_scene(),
        other => serde_json::from_value(other.clone())
            .map_err(|e| CliError::Validation(format!("scene: {e}")))?,
    };
    scene.validate().map_err(CliError::validation)?;
    let library = if cfg.library_csv.is_empty() {
        reference_library()
    } else {
        load_spectral_library(&cfg.library_csv).map_err(CliError::validation)?
    };
    let poses = generate_orbit_poses(
        cfg.views,
        cfg.orbit_radius,
        cfg.elevation_deg,
        Vec3::new(cfg.lookat[0], cfg.lookat[1], cfg.lookat[2]),
        cfg.width,
        cfg.height,
        cfg.fov_x_deg.to_radians(),
    )
    .map_err(CliError::validation)?;
    let options = EmitOptions {
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    };
    emit_dataset(&scene, &poses, &library, &out, &options).map_err(CliError::runtime)?;
    println!(
        "wrote {} views ({}x{}) to {}",
        cfg.views,
        cfg.width,
        cfg.height,
        out.display()
    );
    Ok(())
}

pub fn decompose(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(DecomposeConfig::default()).unwrap();
    let (cfg, resolved) = config::resolve::<DecomposeConfig>(invocation, base)?;
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "decompose", &resolved, invocation.seed.unwrap_or(0))?;

    let mode = match cfg.mode.as_str() {
        "exact" => DecompMode::Exact,
        "paper_verbatim" => DecompMode::PaperVerbatim,
        other => {
            return Err(CliError::Validation(format!(
                "mode must be 'exact' or 'paper_verbatim', got '{other}'"
            )))
        }
    };
    let root = PathBuf::from(&cfg.dataset);
    let dataset = Dataset::load(&root).map_err(CliError::validation)?;
    let library = dataset::read_library_csv(&root).map_err(CliError::validation)?;
    let t_ref = if cfg.t_ref > 0.0 {
        cfg.t_ref
    } else {
        dataset
            .meta
            .as_ref()
            .map(|m| m.ambient_temperature)
            .ok_or_else(|| {
                CliError::Validation(
                    "t_ref not given and the dataset has no metadata".to_string(),
                )
            })?
    };
    let dcfg = DecompositionConfig::new(t_ref, cfg.eps_e, mode, t_ref);

    let mut total_failed = 0usize;
    let mut summaries = Vec::new();
    for frame in &dataset.frames {
        let paths = FramePaths::new(&root, &frame.name);
        let cube = dataset::read_cube(&root, &paths).map_err(CliError::runtime)?;
        let mask = dataset::read_mask(&paths, &dataset.legend).map_err(CliError::runtime)?;
        let tex = decompose_cube(&cube, &mask, &library, &dcfg).map_err(CliError::runtime)?;

        let est = FramePaths::new(&out, &frame.name);
        std::fs::create_dir_all(est.prefix.parent().unwrap())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        dataset::write_gray_f64(
            &est.with_extra("t_est.pfm"),
            tex.width,
            tex.height,
            &tex.temperature,
        )
        .map_err(CliError::runtime)?;
        dataset::write_gray_f64(
            &est.with_extra("x_est.pfm"),
            tex.width,
            tex.height,
            &tex.texture,
        )
        .map_err(CliError::runtime)?;
        dataset::write_gray_f64(&est.with_extra("v0.pfm"), tex.width, tex.height, &tex.v0)
            .map_err(CliError::runtime)?;
        total_failed += tex.failed_pixels;
        summaries.push(serde_json::json!({
            "frame": frame.name,
            "failed_pixels": tex.failed_pixels,
            "clamped_v0_pixels": tex.clamped_v0_pixels,
        }));
    }
    dataset::write_json(
        &out.join("decompose_summary.json"),
        &serde_json::json!({ "frames": summaries, "total_failed_pixels": total_failed }),
    )
    .map_err(CliError::runtime)?;
    println!(
        "decomposed {} frames, {total_failed} unsolved pixels",
        dataset.frames.len()
    );
    Ok(())
}

pub fn map(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(MapConfig::default()).unwrap();
    let (cfg, resolved) = config::resolve::<MapConfig>(invocation, base)?;
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "map", &resolved, invocation.seed.unwrap_or(0))?;

    let root = PathBuf::from(&cfg.dataset);
    let dataset = Dataset::load(&root).map_err(CliError::validation)?;
    for frame in &dataset.frames {
        let src = FramePaths::new(&root, &frame.name);
        let (t, x) = match cfg.source.as_str() {
            "estimate" => {
                let (_, _, t) = dataset::read_gray_f64(&src.with_extra("t_est.pfm"))
                    .map_err(CliError::validation)?;
                let (_, _, x) = dataset::read_gray_f64(&src.with_extra("x_est.pfm"))
                    .map_err(CliError::validation)?;
                (t, x)
            }
            "ground_truth" => {
                let (_, _, t) = dataset::read_gray_f64(&src.temperature_pfm())
                    .map_err(CliError::validation)?;
                let (_, _, x) = dataset::read_gray_f64(&src.texture_pfm())
                    .map_err(CliError::validation)?;
                (t, x)
            }
            other => {
                return Err(CliError::Validation(format!(
                    "source must be 'estimate' or 'ground_truth', got '{other}'"
                )))
            }
        };
        let mask_labels = frame.labels.clone().ok_or_else(|| {
            CliError::Validation(format!("frame {} has no material mask", frame.name))
        })?;
        let mask = MaterialMask::new(
            frame.hsv.width,
            frame.hsv.height,
            mask_labels,
            dataset.legend.clone(),
        )
        .map_err(CliError::validation)?;
        let tex = TexImage {
            width: frame.hsv.width,
            height: frame.hsv.height,
            temperature: t,
            material: mask,
            texture: x,
            v0: vec![1.0; frame.hsv.width * frame.hsv.height],
            failed_pixels: 0,
            clamped_v0_pixels: 0,
        };
        let (hsv, nan_pixels) = tex_to_hsv(&tex, &frame.meta).map_err(CliError::runtime)?;
        let dst = FramePaths::new(&out, &frame.name);
        std::fs::create_dir_all(dst.prefix.parent().unwrap())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        dataset::write_hsv_to(&dst.with_extra("hsv_est.pfm"), &dst.with_extra("hsv_est.png"), &hsv)
            .map_err(CliError::runtime)?;
        dataset::write_meta_sidecar(&dst.with_extra("hsv_est.meta.json"), &frame.meta)
            .map_err(CliError::runtime)?;
        if nan_pixels > 0 {
            eprintln!("note: {} unsolved pixels in {}", nan_pixels, frame.name);
        }
    }
    println!("mapped {} frames to HSV", dataset.frames.len());
    Ok(())
}

pub fn train(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(TrainCliConfig::default()).unwrap();
    let (mut cfg, mut resolved) = config::resolve::<TrainCliConfig>(invocation, base)?;
    if let Some(seed) = invocation.seed {
        cfg.train.seed = seed;
        resolved["seed"] = Value::from(seed);
    }
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "train", &resolved, cfg.train.seed)?;

    let dataset = Dataset::load(&cfg.dataset).map_err(CliError::validation)?;
    let resume = (!cfg.resume.is_empty()).then(|| PathBuf::from(&cfg.resume));
    let result = trainer::train(&dataset, &cfg.train, &out, resume.as_deref())
        .map_err(CliError::runtime)?;
    if let Some(last) = result.rows.last() {
        println!(
            "finished at iter {}: loss {:.5}, holdout psnr {:.2} dB",
            last.iteration, last.loss, last.psnr_holdout
        );
    }
    println!("checkpoint: {}", result.final_checkpoint.display());
    Ok(())
}

fn resolve_views(dataset: &Dataset, views: &Value) -> Result<Vec<usize>, CliError> {
    match views {
        Value::String(s) if s == "holdout" => Ok(dataset.holdout_indices()),
        Value::String(s) if s == "all" => Ok((0..dataset.frames.len()).collect()),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|i| i as usize)
                    .filter(|&i| i < dataset.frames.len())
                    .ok_or_else(|| CliError::Validation(format!("bad view index {v}")))
            })
            .collect(),
        other => Err(CliError::Validation(format!(
            "views must be 'holdout', 'all', or an index array, got {other}"
        ))),
    }
}

fn load_field(path: &str) -> Result<thermotex::nerf::RadianceField, CliError> {
    Ok(load_checkpoint(Path::new(path))
        .map_err(CliError::validation)?
        .field)
}

pub fn render(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(RenderConfig::default()).unwrap();
    let (cfg, resolved) = config::resolve::<RenderConfig>(invocation, base)?;
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "render", &resolved, invocation.seed.unwrap_or(0))?;

    let dataset = Dataset::load(&cfg.dataset).map_err(CliError::validation)?;
    let field = load_field(&cfg.checkpoint)?;
    let params = RenderParams {
        near: cfg.near,
        far: cfg.far,
        samples_per_ray: cfg.samples_per_ray,
    };
    let views = resolve_views(&dataset, &cfg.views)?;
    for &view in &views {
        let frame = &dataset.frames[view];
        let hsv = render_view(&field, &frame.camera, &params);
        let dst = FramePaths::new(&out, &frame.name);
        std::fs::create_dir_all(dst.prefix.parent().unwrap())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        dataset::write_hsv_to(
            &dst.with_extra("render.pfm"),
            &dst.with_extra("render.png"),
            &hsv,
        )
        .map_err(CliError::runtime)?;
        dataset::write_meta_sidecar(&dst.with_extra("render.meta.json"), &frame.meta)
            .map_err(CliError::runtime)?;
    }
    println!("rendered {} views to {}", views.len(), out.display());
    Ok(())
}

pub fn eval(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(EvalConfig::default()).unwrap();
    let (cfg, resolved) = config::resolve::<EvalConfig>(invocation, base)?;
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "eval", &resolved, invocation.seed.unwrap_or(0))?;

    let dataset = Dataset::load(&cfg.dataset).map_err(CliError::validation)?;
    let field = load_field(&cfg.checkpoint)?;
    let params = RenderParams {
        near: cfg.near,
        far: cfg.far,
        samples_per_ray: cfg.samples_per_ray,
    };
    let views = resolve_views(&dataset, &cfg.views)?;
    let report = evaluate_views(&field, &dataset, &views, &params).map_err(CliError::runtime)?;
    dataset::write_json(&out.join("eval_report.json"), &report).map_err(CliError::runtime)?;
    print!("{}", report.table());
    Ok(())
}

pub fn pointcloud(invocation: &Invocation) -> Result<(), CliError> {
    let base = serde_json::to_value(PointCloudConfig::default()).unwrap();
    let (cfg, resolved) = config::resolve::<PointCloudConfig>(invocation, base)?;
    let out = config::out_dir(invocation);
    config::write_snapshot(&out, "pointcloud", &resolved, invocation.seed.unwrap_or(0))?;

    let field = load_field(&cfg.checkpoint)?;
    let summary = thermotex::eval::export_point_cloud(
        &field,
        Vec3::new(cfg.bbox_min[0], cfg.bbox_min[1], cfg.bbox_min[2]),
        Vec3::new(cfg.bbox_max[0], cfg.bbox_max[1], cfg.bbox_max[2]),
        cfg.resolution,
        cfg.sigma_threshold,
        out.join(&cfg.out_file),
    )
    .map_err(CliError::runtime)?;
    println!(
        "wrote {} points at resolution {} (threshold {})",
        summary.points, summary.resolution, summary.sigma_threshold
    );
    Ok(())
}
