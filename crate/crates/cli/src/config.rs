//! Config resolution: file, `--set` overrides, seed, snapshot.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, Invocation};

/// Load the config JSON (or `base` when none was given), apply `--set`
/// overrides, deserialize strictly, and return the resolved value alongside
/// the struct. Unknown keys fail.
pub fn resolve<T: DeserializeOwned + Serialize>(
    invocation: &Invocation,
    base: Value,
) -> Result<(T, Value), CliError> {
    let mut value = match &invocation.config {
        None => base,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{path}: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{path}: {e}")))?
        }
    };
    apply_overrides(&mut value, &invocation.overrides)?;
    let config: T = serde_json::from_value(value.clone()).map_err(CliError::validation)?;
    // re-serialize so the snapshot carries every field, defaults included
    let resolved = serde_json::to_value(&config).map_err(CliError::runtime)?;
    Ok((config, resolved))
}

/// Apply `--set key=value` pairs. Keys may be dotted paths; values parse as
/// JSON where possible and fall back to strings.
fn apply_overrides(value: &mut Value, overrides: &[(String, String)]) -> Result<(), CliError> {
    for (key, raw) in overrides {
        let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.clone()));
        let mut cursor = &mut *value;
        let parts: Vec<&str> = key.split('.').collect();
        for (depth, part) in parts.iter().enumerate() {
            if !cursor.is_object() {
                return Err(CliError::Validation(format!(
                    "--set {key}: '{part}' is not an object"
                )));
            }
            let obj = cursor.as_object_mut().unwrap();
            if depth + 1 == parts.len() {
                obj.insert(part.to_string(), parsed.clone());
                break;
            }
            cursor = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Write the resolved config (plus invocation seed) next to the outputs.
pub fn write_snapshot(
    out_dir: &Path,
    subcommand: &str,
    resolved: &Value,
    seed: u64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let snapshot = serde_json::json!({
        "subcommand": subcommand,
        "seed": seed,
        "config": resolved,
    });
    let path = out_dir.join("resolved_config.json");
    let mut text = serde_json::to_string_pretty(&snapshot).map_err(CliError::runtime)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn out_dir(invocation: &Invocation) -> PathBuf {
    PathBuf::from(invocation.out.as_deref().unwrap_or("."))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// "reference" for the built-in scene, or an inline scene description.
    pub scene: Value,
    /// Spectral library CSV path; empty uses the built-in reference curves.
    pub library_csv: String,
    pub views: usize,
    pub orbit_radius: f64,
    pub elevation_deg: f64,
    pub lookat: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scene: Value::String("reference".into()),
            library_csv: String::new(),
            views: 27,
            orbit_radius: 2.4,
            elevation_deg: 35.0,
            lookat: [0.0, 0.0, 0.1],
            width: 64,
            height: 64,
            fov_x_deg: 50.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    pub dataset: String,
    /// "exact" or "paper_verbatim".
    pub mode: String,
    pub eps_e: f64,
    /// Reference/ambient temperature; 0 reads the dataset metadata.
    pub t_ref: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            dataset: ".".into(),
            mode: "exact".into(),
            eps_e: 0.01,
            t_ref: 0.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub dataset: String,
    /// Map the decomposed estimates ("estimate") or the ground truth
    /// TeX images ("ground_truth").
    pub source: String,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            dataset: ".".into(),
            source: "estimate".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCliConfig {
    pub dataset: String,
    /// Resume from this checkpoint path when non-empty.
    pub resume: String,
    #[serde(flatten)]
    pub train: thermotex::trainer::TrainConfig,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        TrainCliConfig {
            dataset: ".".into(),
            resume: String::new(),
            train: thermotex::trainer::TrainConfig::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub checkpoint: String,
    pub dataset: String,
    /// "holdout", "all", or a JSON array of view indices.
    pub views: Value,
    pub near: f64,
    pub far: f64,
    pub samples_per_ray: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            checkpoint: "final.ckpt".into(),
            dataset: ".".into(),
            views: Value::String("holdout".into()),
            near: 1.5,
            far: 4.2,
            samples_per_ray: 48,
        }
    }
}

pub type EvalConfig = RenderConfig;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointCloudConfig {
    pub checkpoint: String,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub resolution: usize,
    pub sigma_threshold: f64,
    pub out_file: String,
}

impl Default for PointCloudConfig {
    fn default() -> Self {
        PointCloudConfig {
            checkpoint: "final.ckpt".into(),
            bbox_min: [-1.2, -1.2, -0.1],
            bbox_max: [1.2, 1.2, 0.8],
            resolution: 64,
            sigma_threshold: 20.0,
            out_file: "cloud.ply".into(),
        }
    }
}
