//! Recover temperature, emissivity class, and texture from thermal signals.
//!
//! The measured signal at wavenumber nu is
//!
//! ```text
//! S(nu) = e(nu) * B(nu, T) + (1 - e(nu)) * X(nu)
//! ```
//!
//! with `B` the blackbody radiance, `e` the material emissivity, and `X` the
//! reflected environment radiance. With a known spectral `e`, dividing by
//! `1 - e` and differentiating in nu reduces the unknown reflection to its
//! spectral slope:
//!
//! ```text
//! [S / (1-e)]' = [ (e/(1-e)) * B(nu, T) ]' + [X]'
//! ```
//!
//! The exact solver fits `T` to this discrete identity while modeling the
//! reflection as `X(nu) = v0 * B(nu, T0)` with the ambient-temperature
//! Planck shape at reference temperature T0 and a free per-pixel scale
//! `v0` (solved in closed form per candidate T). A wavenumber-independent
//! `X` is the special case where the data's residual already vanishes and
//! the fitted slope term is zero. The single-band pseudo path instead
//! removes a band-integrated ambient reflection and inverts the band
//! radiance ("blackbody correction").

use rayon::prelude::*;
use thiserror::Error;

use crate::radiometry::{
    band_inverse, band_radiance, planck_inverse, planck_radiance_unchecked, RadiometryError,
    SpectralLibrary, WavenumberGrid, TEMPERATURE_BRACKET,
};

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("need at least 3 bands for the spectral solve, got {0}")]
    TooFewBands(usize),
    #[error("emissivity {emissivity} at band {band} exceeds ceiling 1 - eps_e = {ceiling}")]
    EmissivityCeiling {
        emissivity: f64,
        band: usize,
        ceiling: f64,
    },
    #[error("emissivity profile is spectrally flat; the derivative identity is degenerate")]
    DegenerateEmissivity,
    #[error("temperature solve found no minimum inside the bracket {0:?} K")]
    NoSolution((f64, f64)),
    #[error("band radiance {signal} does not exceed the reflected ambient part {reflected}")]
    NegativeEmission { signal: f64, reflected: f64 },
    #[error("band emissivity must lie in (0, 1], got {0}")]
    BadBandEmissivity(f64),
    #[error("material '{0}' not present in the spectral library")]
    MissingMaterial(String),
    #[error("mask label {label} at pixel {pixel} missing from legend of {legend} entries")]
    LabelOutsideLegend {
        label: usize,
        pixel: usize,
        legend: usize,
    },
    #[error("dimension mismatch: {context} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        context: &'static str,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("radiance must be finite and non-negative at pixel {pixel}, band {band}: {value}")]
    BadRadiance {
        pixel: usize,
        band: usize,
        value: f64,
    },
    #[error(transparent)]
    Radiometry(#[from] RadiometryError),
}

/// Per-pixel multi-band radiance stack, H x W x K with K = grid length.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalCube {
    width: usize,
    height: usize,
    grid: WavenumberGrid,
    radiance: Vec<f64>,
}

impl ThermalCube {
    pub fn new(
        width: usize,
        height: usize,
        grid: WavenumberGrid,
        radiance: Vec<f64>,
    ) -> Result<Self, DecompError> {
        assert_eq!(radiance.len(), width * height * grid.len());
        for (i, &v) in radiance.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(DecompError::BadRadiance {
                    pixel: i / grid.len(),
                    band: i % grid.len(),
                    value: v,
                });
            }
        }
        Ok(ThermalCube {
            width,
            height,
            grid,
            radiance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn grid(&self) -> &WavenumberGrid {
        &self.grid
    }

    pub fn bands(&self) -> usize {
        self.grid.len()
    }

    /// Spectrum of one pixel (row-major pixel index).
    pub fn pixel(&self, index: usize) -> &[f64] {
        let k = self.grid.len();
        &self.radiance[index * k..(index + 1) * k]
    }

    pub fn radiance(&self) -> &[f64] {
        &self.radiance
    }
}

/// Material label per pixel plus the label -> material id legend.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMask {
    width: usize,
    height: usize,
    labels: Vec<u16>,
    legend: Vec<String>,
}

impl MaterialMask {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u16>,
        legend: Vec<String>,
    ) -> Result<Self, DecompError> {
        assert_eq!(labels.len(), width * height);
        for (pixel, &label) in labels.iter().enumerate() {
            if label as usize >= legend.len() {
                return Err(DecompError::LabelOutsideLegend {
                    label: label as usize,
                    pixel,
                    legend: legend.len(),
                });
            }
        }
        Ok(MaterialMask {
            width,
            height,
            labels,
            legend,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn legend(&self) -> &[String] {
        &self.legend
    }

    pub fn material_of(&self, pixel: usize) -> &str {
        &self.legend[self.labels[pixel] as usize]
    }
}

/// Decomposition output: per-pixel temperature, material, texture.
///
/// NaN temperature marks pixels the solver could not invert; they are
/// counted rather than aborting the image.
#[derive(Debug, Clone)]
pub struct TexImage {
    pub width: usize,
    pub height: usize,
    /// Kelvin; NaN where unsolved.
    pub temperature: Vec<f64>,
    pub material: MaterialMask,
    /// Band-integrated reflected radiance (W sr^-1 m^-2); NaN where unsolved.
    pub texture: Vec<f64>,
    /// Diagnostic band-mean illumination factor.
    pub v0: Vec<f64>,
    pub failed_pixels: usize,
    pub clamped_v0_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompMode {
    /// Fit the full differentiated identity (product rule retained),
    /// assuming the texture term is wavenumber-independent.
    Exact,
    /// Per-point ratio of data and emissivity derivatives inverted through
    /// the Planck formula, median across interior points. Drops the
    /// `(e/(1-e)) * dB/dnu` product-rule term, so the estimate is biased.
    PaperVerbatim,
}

#[derive(Debug, Clone, Copy)]
pub struct DecompositionConfig {
    /// Reference (ambient) temperature T0 used for the texture integral.
    pub t_ref: f64,
    /// Emissivity ceiling guard: e must stay below 1 - eps_e.
    pub eps_e: f64,
    pub mode: DecompMode,
    /// Ambient temperature for the single-band pseudo path.
    pub t_ambient: f64,
}

impl DecompositionConfig {
    pub fn new(t_ref: f64, eps_e: f64, mode: DecompMode, t_ambient: f64) -> Self {
        assert!(t_ref > 0.0 && t_ambient > 0.0);
        assert!(eps_e > 0.0 && eps_e < 0.5);
        DecompositionConfig {
            t_ref,
            eps_e,
            mode,
            t_ambient,
        }
    }

    pub fn exact(t_ambient: f64) -> Self {
        Self::new(t_ambient, 0.01, DecompMode::Exact, t_ambient)
    }
}

fn check_ceiling(e: &[f64], eps_e: f64) -> Result<(), DecompError> {
    let ceiling = 1.0 - eps_e;
    for (band, &value) in e.iter().enumerate() {
        if value >= ceiling {
            return Err(DecompError::EmissivityCeiling {
                emissivity: value,
                band,
                ceiling,
            });
        }
    }
    Ok(())
}

/// Central difference of `values` over `grid` at interior index `k`.
#[inline]
fn central_diff(values: &[f64], grid: &[f64], k: usize) -> f64 {
    (values[k + 1] - values[k - 1]) / (grid[k + 1] - grid[k - 1])
}

/// Solve for the pixel temperature from one multi-band spectrum.
pub fn solve_temperature_spectral(
    signal: &[f64],
    emissivity: &[f64],
    grid: &WavenumberGrid,
    cfg: &DecompositionConfig,
) -> Result<f64, DecompError> {
    let k = grid.len();
    assert_eq!(signal.len(), k);
    assert_eq!(emissivity.len(), k);
    if k < 3 {
        return Err(DecompError::TooFewBands(k));
    }
    check_ceiling(emissivity, cfg.eps_e)?;

    let nus = grid.values();
    let f: Vec<f64> = signal
        .iter()
        .zip(emissivity)
        .map(|(&s, &e)| s / (1.0 - e))
        .collect();
    let g: Vec<f64> = emissivity.iter().map(|&e| e / (1.0 - e)).collect();

    // Degeneracy guard: the identity carries no information when the
    // emissivity ratio has (numerically) zero slope everywhere.
    let span = nus[k - 1] - nus[0];
    let g_scale = g.iter().fold(0.0f64, |m, &v| m.max(v.abs())) / span;
    let max_gp = (1..k - 1)
        .map(|i| central_diff(&g, nus, i).abs())
        .fold(0.0f64, f64::max);
    if max_gp < 1e-12 * g_scale.max(f64::MIN_POSITIVE) {
        return Err(DecompError::DegenerateEmissivity);
    }

    let fp: Vec<f64> = (1..k - 1).map(|i| central_diff(&f, nus, i)).collect();

    match cfg.mode {
        DecompMode::Exact => {
            // Reflection basis: the ambient Planck shape at T0 and a
            // constant. Normal equations of the 2-column least squares are
            // precomputed once.
            let b_ref: Vec<f64> = (0..k)
                .map(|i| planck_radiance_unchecked(nus[i], cfg.t_ref))
                .collect();
            let s_bb: f64 = b_ref.iter().map(|b| b * b).sum();
            let s_b: f64 = b_ref.iter().sum();
            let s_n = k as f64;
            let det = s_bb * s_n - s_b * s_b;

            // R(T): squared residual of f - g*B(T) after fitting
            // v0 * B(T0) + c in closed form.
            let model = |t: f64| -> f64 {
                let y: Vec<f64> = (0..k)
                    .map(|i| f[i] - g[i] * planck_radiance_unchecked(nus[i], t))
                    .collect();
                let s_yb: f64 = y.iter().zip(&b_ref).map(|(&y, &b)| y * b).sum();
                let s_y: f64 = y.iter().sum();
                let (v0, c) = if det > 0.0 {
                    (
                        (s_yb * s_n - s_y * s_b) / det,
                        (s_bb * s_y - s_b * s_yb) / det,
                    )
                } else {
                    (0.0, s_y / s_n)
                };
                y.iter()
                    .zip(&b_ref)
                    .map(|(&y, &b)| {
                        let r = y - v0 * b - c;
                        r * r
                    })
                    .sum()
            };

            // The residual is not unimodal over the full bracket: shallow
            // secondary basins appear away from the true temperature. Scan
            // coarsely, then refine around every discrete local minimum
            // and keep the best.
            const SCAN_POINTS: usize = 256;
            const INV_PHI: f64 = 0.618_033_988_749_894_9;
            let (bracket_lo, bracket_hi) = TEMPERATURE_BRACKET;
            let step = (bracket_hi - bracket_lo) / (SCAN_POINTS - 1) as f64;
            let scan: Vec<f64> = (0..SCAN_POINTS)
                .map(|i| model(bracket_lo + step * i as f64))
                .collect();

            let mut best: Option<(f64, f64)> = None; // (residual, T)
            for i in 1..SCAN_POINTS - 1 {
                if scan[i] > scan[i - 1] || scan[i] > scan[i + 1] {
                    continue;
                }
                let mut a = bracket_lo + step * (i - 1) as f64;
                let mut b = bracket_lo + step * (i + 1) as f64;
                let mut c = b - (b - a) * INV_PHI;
                let mut d = a + (b - a) * INV_PHI;
                let mut rc = model(c);
                let mut rd = model(d);
                while b - a > 1e-8 {
                    if rc < rd {
                        b = d;
                        d = c;
                        rd = rc;
                        c = b - (b - a) * INV_PHI;
                        rc = model(c);
                    } else {
                        a = c;
                        c = d;
                        rc = rd;
                        d = a + (b - a) * INV_PHI;
                        rd = model(d);
                    }
                }
                let t = 0.5 * (a + b);
                let r = model(t);
                if best.map_or(true, |(br, _)| r < br) {
                    best = Some((r, t));
                }
            }
            match best {
                Some((_, t))
                    if t > bracket_lo + 0.5 * step && t < bracket_hi - 0.5 * step =>
                {
                    Ok(t)
                }
                _ => Err(DecompError::NoSolution(TEMPERATURE_BRACKET)),
            }
        }
        DecompMode::PaperVerbatim => {
            let mut estimates: Vec<f64> = Vec::with_capacity(k - 2);
            for i in 1..k - 1 {
                let gp = central_diff(&g, nus, i);
                if gp.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let b_hat = fp[i - 1] / gp;
                if b_hat > 0.0 {
                    if let Ok(t) = planck_inverse(nus[i], b_hat) {
                        estimates.push(t);
                    }
                }
            }
            if estimates.is_empty() {
                return Err(DecompError::NoSolution(TEMPERATURE_BRACKET));
            }
            estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = estimates.len();
            Ok(if n % 2 == 1 {
                estimates[n / 2]
            } else {
                0.5 * (estimates[n / 2 - 1] + estimates[n / 2])
            })
        }
    }
}

/// Fraction of ambient radiance reflected toward the sensor at one band.
pub fn illumination_factor(
    signal: f64,
    emissivity: f64,
    temperature: f64,
    nu: f64,
    cfg: &DecompositionConfig,
) -> Result<f64, DecompError> {
    if emissivity >= 1.0 - cfg.eps_e {
        return Err(DecompError::EmissivityCeiling {
            emissivity,
            band: 0,
            ceiling: 1.0 - cfg.eps_e,
        });
    }
    let emitted = emissivity * planck_radiance_unchecked(nu, temperature);
    let denom = (1.0 - emissivity) * planck_radiance_unchecked(nu, cfg.t_ref);
    Ok((signal - emitted) / denom)
}

/// Band-integrate the reflected radiance: X = integral of v0 * B(nu, T0).
pub fn texture_integral(v0: &[f64], t_ref: f64, grid: &WavenumberGrid) -> f64 {
    assert_eq!(v0.len(), grid.len());
    let samples: Vec<f64> = grid
        .values()
        .iter()
        .zip(v0)
        .map(|(&nu, &v)| v * planck_radiance_unchecked(nu, t_ref))
        .collect();
    grid.trapezoid(&samples)
}

/// Run the full spectral decomposition over a cube.
///
/// Pixels whose solve fails carry NaN temperature/texture and are counted;
/// the pass never aborts mid-image. Pixel loops run in parallel with
/// per-pixel outputs, so results do not depend on the schedule.
pub fn decompose_cube(
    cube: &ThermalCube,
    mask: &MaterialMask,
    library: &SpectralLibrary,
    cfg: &DecompositionConfig,
) -> Result<TexImage, DecompError> {
    if mask.width() != cube.width() || mask.height() != cube.height() {
        return Err(DecompError::DimensionMismatch {
            context: "material mask",
            got_w: mask.width(),
            got_h: mask.height(),
            want_w: cube.width(),
            want_h: cube.height(),
        });
    }
    // resolve every legend material once, sampled onto the cube grid
    let mut sampled: Vec<Vec<f64>> = Vec::with_capacity(mask.legend().len());
    for material in mask.legend() {
        let curve = library
            .get(material)
            .ok_or_else(|| DecompError::MissingMaterial(material.clone()))?;
        sampled.push(curve.sample_on(cube.grid())?);
    }

    let k = cube.bands();
    let nus = cube.grid().values();
    let n_pixels = cube.width() * cube.height();

    struct PixelOut {
        t: f64,
        x: f64,
        v0: f64,
        failed: bool,
        clamped: bool,
    }

    let outputs: Vec<PixelOut> = (0..n_pixels)
        .into_par_iter()
        .map(|p| {
            let spectrum = cube.pixel(p);
            let e = &sampled[mask.labels()[p] as usize];
            match solve_temperature_spectral(spectrum, e, cube.grid(), cfg) {
                Ok(t) => {
                    let mut v0 = vec![0.0; k];
                    let mut clamped = false;
                    for i in 0..k {
                        match illumination_factor(spectrum[i], e[i], t, nus[i], cfg) {
                            Ok(v) if v >= 0.0 => v0[i] = v,
                            Ok(_) => {
                                v0[i] = 0.0;
                                clamped = true;
                            }
                            Err(_) => {
                                return PixelOut {
                                    t: f64::NAN,
                                    x: f64::NAN,
                                    v0: f64::NAN,
                                    failed: true,
                                    clamped: false,
                                }
                            }
                        }
                    }
                    let x = texture_integral(&v0, cfg.t_ref, cube.grid());
                    let v0_mean = v0.iter().sum::<f64>() / k as f64;
                    PixelOut {
                        t,
                        x,
                        v0: v0_mean,
                        failed: false,
                        clamped,
                    }
                }
                Err(_) => PixelOut {
                    t: f64::NAN,
                    x: f64::NAN,
                    v0: f64::NAN,
                    failed: true,
                    clamped: false,
                },
            }
        })
        .collect();

    let failed_pixels = outputs.iter().filter(|o| o.failed).count();
    let clamped_v0_pixels = outputs.iter().filter(|o| o.clamped).count();
    Ok(TexImage {
        width: cube.width(),
        height: cube.height(),
        temperature: outputs.iter().map(|o| o.t).collect(),
        material: mask.clone(),
        texture: outputs.iter().map(|o| o.x).collect(),
        v0: outputs.iter().map(|o| o.v0).collect(),
        failed_pixels,
        clamped_v0_pixels,
    })
}

/// Single-band blackbody correction: strip the reflected ambient term and
/// invert the band radiance.
pub fn solve_temperature_pseudo(
    s_band: f64,
    e_band: f64,
    grid: &WavenumberGrid,
    cfg: &DecompositionConfig,
) -> Result<f64, DecompError> {
    if !(e_band > 0.0 && e_band <= 1.0) {
        return Err(DecompError::BadBandEmissivity(e_band));
    }
    let reflected = (1.0 - e_band) * band_radiance(cfg.t_ambient, grid)?;
    if s_band <= reflected {
        return Err(DecompError::NegativeEmission {
            signal: s_band,
            reflected,
        });
    }
    Ok(band_inverse((s_band - reflected) / e_band, grid)?)
}

/// Texture extraction for the single-band path: percentile stretch followed
/// by an unsharp mask. Emulates a thermal camera's gain control and detail
/// enhancement, deterministically.
///
/// Stretch maps [p2, p98] to [0, 1] (linear-interpolated percentiles) with
/// clamping; the unsharp step adds half the difference to a 7x7 Gaussian
/// blur (sigma 1.5, replicated borders) and clamps again. A constant image
/// maps to all 0.5.
pub fn extract_texture_pseudo(image: &[f64], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(image.len(), width * height);
    assert!(image.iter().all(|v| v.is_finite()));

    let p2 = percentile(image, 2.0);
    let p98 = percentile(image, 98.0);
    if p98 - p2 < 1e-300 {
        return vec![0.5; image.len()];
    }
    let stretched: Vec<f64> = image
        .iter()
        .map(|&v| ((v - p2) / (p98 - p2)).clamp(0.0, 1.0))
        .collect();

    let blurred = gaussian_blur_7x7(&stretched, width, height, 1.5);
    stretched
        .iter()
        .zip(&blurred)
        .map(|(&s, &b)| (s + 0.5 * (s - b)).clamp(0.0, 1.0))
        .collect()
}

/// Linear-interpolated percentile (p in [0, 100]) of a finite sample set.
pub(crate) fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Separable 7x7 Gaussian blur with clamp-to-edge borders.
pub(crate) fn gaussian_blur_7x7(image: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let mut kernel = [0.0f64; 7];
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - 3.0;
        *k = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let clamp_x = |x: isize| -> usize { x.clamp(0, width as isize - 1) as usize };
    let clamp_y = |y: isize| -> usize { y.clamp(0, height as isize - 1) as usize };

    let mut horizontal = vec![0.0; image.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let sx = clamp_x(x as isize + i as isize - 3);
                acc += k * image[y * width + sx];
            }
            horizontal[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; image.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let sy = clamp_y(y as isize + i as isize - 3);
                acc += k * horizontal[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
