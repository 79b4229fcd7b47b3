//! Synthetic thermal scenes: analytic geometry, forward radiance rendering,
//! and dataset emission.
//!
//! A scene is a handful of primitives with per-object temperature and
//! material. The tracer renders multi-band radiance cubes through the
//! forward signal model (one ambient bounce: the reflected term is the
//! ambient blackbody, illumination factor 1), alongside exact ground-truth
//! decomposition images, masks, and depth. These are the oracle inputs for
//! everything downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Mat4, Vec3};
use crate::radiometry::{
    band_radiance, planck_radiance_unchecked, RadiometryError, SpectralLibrary, WavenumberGrid,
};
use crate::texdecomp::{DecompError, MaterialMask, TexImage, ThermalCube};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene has no primitives")]
    EmptyScene,
    #[error("temperature must be positive, got {0} K")]
    BadTemperature(f64),
    #[error("camera rotation block is not orthonormal (residual {0:e})")]
    BadRotation(f64),
    #[error("camera focal length must be positive, got {0}")]
    BadFocal(f64),
    #[error("pixel ({0}, {1}) outside {2}x{3} image")]
    PixelOutOfBounds(u32, u32, usize, usize),
    #[error("material '{0}' not present in the spectral library")]
    MissingMaterial(String),
    #[error(transparent)]
    Radiometry(#[from] RadiometryError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
    Plane { point: Vec3, normal: Vec3 },
}

impl Shape {
    /// Nearest positive hit distance along the ray, if any.
    fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        const T_MIN: f64 = 1e-9;
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = -b - sq;
                if t0 > T_MIN {
                    return Some(t0);
                }
                let t1 = -b + sq;
                (t1 > T_MIN).then_some(t1)
            }
            Shape::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for axis in 0..3 {
                    let (o, d, lo, hi) = match axis {
                        0 => (origin.x, dir.x, min.x, max.x),
                        1 => (origin.y, dir.y, min.y, max.y),
                        _ => (origin.z, dir.z, min.z, max.z),
                    };
                    if d.abs() < 1e-15 {
                        if o < lo || o > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut t0, mut t1) = ((lo - o) / d, (hi - o) / d);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                    if t_near > t_far {
                        return None;
                    }
                }
                if t_near > T_MIN {
                    Some(t_near)
                } else {
                    (t_far > T_MIN).then_some(t_far)
                }
            }
            Shape::Plane { point, normal } => {
                let denom = dir.dot(normal);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (point - origin).dot(normal) / denom;
                (t > T_MIN).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub temperature: f64,
    pub material_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub primitives: Vec<Primitive>,
    pub ambient_temperature: f64,
    pub background_material: String,
    pub background_temperature: f64,
    /// Sensor band in cm^-1: (low, high, sample count).
    pub band_cm1: (f64, f64, usize),
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.primitives.is_empty() {
            return Err(SceneError::EmptyScene);
        }
        for p in &self.primitives {
            if !(p.temperature > 0.0) {
                return Err(SceneError::BadTemperature(p.temperature));
            }
        }
        if !(self.ambient_temperature > 0.0) {
            return Err(SceneError::BadTemperature(self.ambient_temperature));
        }
        if !(self.background_temperature > 0.0) {
            return Err(SceneError::BadTemperature(self.background_temperature));
        }
        Ok(())
    }

    pub fn band(&self) -> Result<WavenumberGrid, RadiometryError> {
        let (lo, hi, k) = self.band_cm1;
        WavenumberGrid::uniform(lo * 100.0, hi * 100.0, k)
    }

    /// Sorted unique material ids: every primitive plus the background.
    pub fn legend(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .primitives
            .iter()
            .map(|p| p.material_id.clone())
            .chain(std::iter::once(self.background_material.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Min/max object temperature, background included.
    pub fn temperature_range(&self) -> (f64, f64) {
        let mut lo = self.background_temperature;
        let mut hi = self.background_temperature;
        for p in &self.primitives {
            lo = lo.min(p.temperature);
            hi = hi.max(p.temperature);
        }
        (lo, hi)
    }
}

/// Pinhole camera: right-handed, looks down its local -z axis, y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
    /// Camera-to-world transform.
    pub c2w: Mat4,
}

impl CameraModel {
    pub fn new(width: usize, height: usize, focal: f64, c2w: Mat4) -> Result<Self, SceneError> {
        if !(focal > 0.0) {
            return Err(SceneError::BadFocal(focal));
        }
        let residual = c2w.orthonormality_residual();
        if residual >= 1e-9 {
            return Err(SceneError::BadRotation(residual));
        }
        Ok(CameraModel {
            width,
            height,
            focal,
            c2w,
        })
    }

    pub fn from_fov_x(
        width: usize,
        height: usize,
        fov_x_radians: f64,
        c2w: Mat4,
    ) -> Result<Self, SceneError> {
        let focal = 0.5 * width as f64 / (0.5 * fov_x_radians).tan();
        Self::new(width, height, focal, c2w)
    }

    pub fn fov_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.focal).atan()
    }

    pub fn position(&self) -> Vec3 {
        self.c2w.translation()
    }

    /// World-space ray through the center of pixel (u, v); v grows downward.
    pub fn pixel_ray(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        let x = (u + 0.5 - 0.5 * self.width as f64) / self.focal;
        let y = -(v + 0.5 - 0.5 * self.height as f64) / self.focal;
        let dir_cam = Vec3::new(x, y, -1.0);
        let dir = self.c2w.rotate(dir_cam).normalized();
        (self.position(), dir)
    }
}

/// Cameras evenly spaced in azimuth on a circle, all aimed at `lookat`.
pub fn generate_orbit_poses(
    n: usize,
    radius: f64,
    elevation_degrees: f64,
    lookat: Vec3,
    width: usize,
    height: usize,
    fov_x_radians: f64,
) -> Result<Vec<CameraModel>, SceneError> {
    assert!(n >= 1, "orbit needs at least one pose");
    assert!(radius > 0.0, "orbit radius must be positive");
    let elev = elevation_degrees.to_radians();
    let mut cameras = Vec::with_capacity(n);
    for i in 0..n {
        let azimuth = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let offset = Vec3::new(
            radius * elev.cos() * azimuth.cos(),
            radius * elev.cos() * azimuth.sin(),
            radius * elev.sin(),
        );
        let position = lookat + offset;
        let forward = (lookat - position).normalized();
        let mut up = Vec3::new(0.0, 0.0, 1.0);
        if forward.dot(up).abs() > 0.999 {
            up = Vec3::new(1.0, 0.0, 0.0);
        }
        let z = -forward;
        let x = up.cross(z).normalized();
        let y = z.cross(x);
        let c2w = Mat4::from_basis(x, y, z, position);
        cameras.push(CameraModel::from_fov_x(width, height, fov_x_radians, c2w)?);
    }
    Ok(cameras)
}

/// One rendered view: the radiance cube, exact decomposition ground truth,
/// and per-pixel hit distance (+inf where the ray escapes).
pub struct TracedView {
    pub cube: ThermalCube,
    pub ground_truth: TexImage,
    pub depth: Vec<f64>,
}

/// Render one view of the scene.
///
/// Per hit pixel and band: `S = e * B(nu, T_object) + (1 - e) * B(nu,
/// T_ambient)`. Miss pixels get the background material and temperature.
/// The ground-truth texture is the band-integrated ambient radiance
/// (illumination factor 1 everywhere).
pub fn raytrace_thermal(
    scene: &SceneDescription,
    camera: &CameraModel,
    library: &SpectralLibrary,
) -> Result<TracedView, SceneError> {
    scene.validate()?;
    let grid = scene.band()?;
    let k = grid.len();
    let nus = grid.values();
    let legend = scene.legend();

    // per-legend-entry emissivity sampled on the band
    let mut emissivities: Vec<Vec<f64>> = Vec::with_capacity(legend.len());
    for id in &legend {
        let curve = library
            .get(id)
            .ok_or_else(|| SceneError::MissingMaterial(id.clone()))?;
        emissivities.push(curve.sample_on(&grid)?);
    }
    let legend_index = |id: &str| legend.iter().position(|m| m == id).unwrap() as u16;
    let primitive_labels: Vec<u16> = scene
        .primitives
        .iter()
        .map(|p| legend_index(&p.material_id))
        .collect();
    let background_label = legend_index(&scene.background_material);

    let ambient_spectral: Vec<f64> = nus
        .iter()
        .map(|&nu| planck_radiance_unchecked(nu, scene.ambient_temperature))
        .collect();
    let x_ambient = band_radiance(scene.ambient_temperature, &grid)?;

    let n_pixels = camera.width * camera.height;
    let mut radiance = vec![0.0; n_pixels * k];
    let mut temperature = vec![0.0; n_pixels];
    let mut labels = vec![0u16; n_pixels];
    let mut depth = vec![f64::INFINITY; n_pixels];

    for v in 0..camera.height {
        for u in 0..camera.width {
            let pixel = v * camera.width + u;
            let (origin, dir) = camera.pixel_ray(u as f64, v as f64);
            let mut best: Option<(f64, usize)> = None;
            for (i, prim) in scene.primitives.iter().enumerate() {
                if let Some(t) = prim.shape.intersect(origin, dir) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, i));
                    }
                }
            }
            let (t_obj, label) = match best {
                Some((t_hit, i)) => {
                    depth[pixel] = t_hit;
                    (scene.primitives[i].temperature, primitive_labels[i])
                }
                None => (scene.background_temperature, background_label),
            };
            temperature[pixel] = t_obj;
            labels[pixel] = label;
            let e = &emissivities[label as usize];
            let out = &mut radiance[pixel * k..(pixel + 1) * k];
            for (b, s) in out.iter_mut().enumerate() {
                let b_obj = planck_radiance_unchecked(nus[b], t_obj);
                *s = e[b] * b_obj + (1.0 - e[b]) * ambient_spectral[b];
            }
        }
    }

    let mask = MaterialMask::new(camera.width, camera.height, labels, legend)?;
    let cube = ThermalCube::new(camera.width, camera.height, grid, radiance)?;
    let ground_truth = TexImage {
        width: camera.width,
        height: camera.height,
        temperature,
        material: mask,
        texture: vec![x_ambient; n_pixels],
        v0: vec![1.0; n_pixels],
        failed_pixels: 0,
        clamped_v0_pixels: 0,
    };
    Ok(TracedView {
        cube,
        ground_truth,
        depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    /// Standard deviation of additive Gaussian radiance noise applied to
    /// the cube planes (spectral radiance units). Zero disables it.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Temperature margin added around the scene's range when building the
/// saturation mapping, so every object sits strictly inside the invertible
/// interval.
pub const T_RANGE_MARGIN: f64 = 5.0;

/// Mapping metadata for a synthetic scene: temperature range from ground
/// truth with a margin, texture range [0, 2 * ambient band radiance]
/// (ground-truth texture sits at its midpoint), palette over the legend.
pub fn scene_mapping_metadata(
    scene: &SceneDescription,
) -> Result<crate::pseudotex::MappingMetadata, SceneError> {
    let (t_lo, t_hi) = scene.temperature_range();
    let x_ambient = band_radiance(scene.ambient_temperature, &scene.band()?)
        .map_err(SceneError::Radiometry)?;
    let palette = crate::pseudotex::build_palette(&scene.legend())
        .expect("scene legend is non-empty and unique");
    // margins keep the ranges strictly ordered, so this cannot fail
    Ok(crate::pseudotex::MappingMetadata::new(
        t_lo - T_RANGE_MARGIN,
        t_hi + T_RANGE_MARGIN,
        0.0,
        2.0 * x_ambient,
        palette,
    )
    .expect("margined ranges are strictly ordered"))
}

/// Render every pose and write the full dataset to `out_dir`.
///
/// Emits per view: the radiance cube (manifest + band PFMs), ground-truth
/// temperature/texture/depth PFMs, the material mask, and the Pseudo-TeX
/// HSV image (PFM + metadata sidecar + PNG preview), plus the shared pose
/// manifest, legend, library CSV, and dataset metadata. Fully deterministic
/// given the options' seed: noise draws consume one stream in view, pixel,
/// band order. Miss pixels render as HSV (0, 0, 0), matching the zero
/// composite of escaped rays.
pub fn emit_dataset(
    scene: &SceneDescription,
    poses: &[CameraModel],
    library: &SpectralLibrary,
    out_dir: &std::path::Path,
    options: &EmitOptions,
) -> Result<crate::dataset::TransformsManifest, crate::dataset::DatasetError> {
    use crate::dataset as ds;

    std::fs::create_dir_all(out_dir).map_err(|source| ds::DatasetError::File {
        path: out_dir.display().to_string(),
        source,
    })?;
    scene.validate()?;
    let meta = scene_mapping_metadata(scene)?;
    let legend = scene.legend();
    let mut rng = crate::rng::Rng::seed_from(options.seed);

    let mut frames = Vec::with_capacity(poses.len());
    for (view, camera) in poses.iter().enumerate() {
        let traced = raytrace_thermal(scene, camera, library)?;
        let file_path = format!("./frame_{view:03}");
        let paths = ds::FramePaths::new(out_dir, &file_path);

        let cube = if options.noise_sigma > 0.0 {
            let k = traced.cube.bands();
            let n = traced.cube.width() * traced.cube.height();
            let mut noisy = traced.cube.radiance().to_vec();
            for pixel in 0..n {
                for band in 0..k {
                    let v = &mut noisy[pixel * k + band];
                    *v = (*v + options.noise_sigma * rng.normal()).max(0.0);
                }
            }
            ThermalCube::new(
                traced.cube.width(),
                traced.cube.height(),
                traced.cube.grid().clone(),
                noisy,
            )?
        } else {
            traced.cube.clone()
        };

        let (mut hsv, _nan) = crate::pseudotex::tex_to_hsv(&traced.ground_truth, &meta)
            .expect("scene materials are all in the palette");
        for (i, &d) in traced.depth.iter().enumerate() {
            if d.is_infinite() {
                hsv.h[i] = 0.0;
                hsv.s[i] = 0.0;
                hsv.v[i] = 0.0;
            }
        }

        ds::write_cube(&paths, &cube)?;
        ds::write_hsv_image(&paths, &hsv)?;
        ds::write_meta_sidecar(&paths.hsv_meta(), &meta)?;
        ds::write_gray_f64(
            &paths.temperature_pfm(),
            traced.ground_truth.width,
            traced.ground_truth.height,
            &traced.ground_truth.temperature,
        )?;
        ds::write_gray_f64(
            &paths.texture_pfm(),
            traced.ground_truth.width,
            traced.ground_truth.height,
            &traced.ground_truth.texture,
        )?;
        ds::write_gray_f64(
            &paths.depth_pfm(),
            traced.ground_truth.width,
            traced.ground_truth.height,
            &traced.depth,
        )?;
        ds::write_mask(&paths, &traced.ground_truth.material)?;

        frames.push(ds::FrameEntry {
            file_path,
            transform_matrix: camera.c2w.0,
        });
    }

    let manifest = ds::TransformsManifest {
        camera_angle_x: poses
            .first()
            .map(|c| c.fov_x())
            .unwrap_or(0.0),
        frames,
    };
    ds::write_json(&out_dir.join("transforms.json"), &manifest)?;
    ds::write_legend(out_dir, &legend)?;
    ds::write_library_csv(out_dir, library)?;
    ds::write_json(
        &out_dir.join("dataset_meta.json"),
        &ds::DatasetMeta {
            ambient_temperature: scene.ambient_temperature,
            background_material: scene.background_material.clone(),
        },
    )?;
    Ok(manifest)
}

/// The in-repo toy scene: a plaster sphere and a brushed-metal sphere on a
/// thin laminate slab, ambient at room temperature. Desk scale, LWIR band.
pub fn reference_scene() -> SceneDescription {
    SceneDescription {
        primitives: vec![
            Primitive {
                shape: Shape::Sphere {
                    center: Vec3::new(-0.35, -0.25, 0.22),
                    radius: 0.22,
                },
                temperature: 310.0,
                material_id: "plaster".into(),
            },
            Primitive {
                shape: Shape::Sphere {
                    center: Vec3::new(0.40, 0.30, 0.18),
                    radius: 0.18,
                },
                temperature: 330.0,
                material_id: "brushed_metal".into(),
            },
            Primitive {
                shape: Shape::Box {
                    min: Vec3::new(-1.1, -1.1, -0.05),
                    max: Vec3::new(1.1, 1.1, 0.0),
                },
                temperature: 295.0,
                material_id: "laminate".into(),
            },
        ],
        ambient_temperature: 295.0,
        background_material: "open_air".into(),
        background_temperature: 295.0,
        band_cm1: (800.0, 1400.0, 16),
    }
}

/// Spectral curves for the reference materials. Every opaque material has a
/// sloped profile so the spectral solve is well conditioned; the open-air
/// background is an ambient blackbody (flat e = 1), which the decomposer
/// deliberately reports as unsolvable.
pub fn reference_library() -> SpectralLibrary {
    let grid = || WavenumberGrid::uniform(7.5e4, 1.45e5, 15).unwrap();
    let ramp = |lo: f64, hi: f64| -> Vec<f64> {
        (0..15)
            .map(|i| lo + (hi - lo) * i as f64 / 14.0)
            .collect()
    };
    let mut lib = SpectralLibrary::new();
    for (name, e) in [
        ("plaster", ramp(0.955, 0.885)),
        ("brushed_metal", ramp(0.215, 0.285)),
        ("laminate", ramp(0.980, 0.910)),
        ("open_air", vec![1.0; 15]),
    ] {
        lib.insert(
            name.to_string(),
            crate::radiometry::SpectralCurve::new(name, grid(), e).unwrap(),
        );
    }
    lib
}
