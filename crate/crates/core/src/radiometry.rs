//! Planck blackbody evaluation, wavenumber grids, and emissivity curves.
//!
//! All wavenumbers are SI (m^-1) internally; spectral library files and CLI
//! flags use cm^-1 and are converted at the boundary. Spectral radiance is
//! W sr^-1 m^-2 (m^-1)^-1, band-integrated radiance W sr^-1 m^-2.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Planck constant (J s), CODATA 2018 exact.
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum (m/s), exact.
pub const LIGHT_SPEED: f64 = 2.997_924_58e8;
/// Boltzmann constant (J/K), CODATA 2018 exact.
pub const BOLTZMANN_KB: f64 = 1.380_649e-23;

/// Wavenumbers in cm^-1 convert to m^-1 by this factor.
pub const CM1_TO_M1: f64 = 100.0;

/// Bisection bracket for radiance-to-temperature inversions (kelvin).
pub const TEMPERATURE_BRACKET: (f64, f64) = (1.0, 5000.0);

#[derive(Debug, Error)]
pub enum RadiometryError {
    #[error("wavenumber must be positive, got {0}")]
    NonPositiveWavenumber(f64),
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("radiance must be positive, got {0}")]
    NonPositiveRadiance(f64),
    #[error("wavenumber grid needs at least 2 samples, got {0}")]
    GridTooShort(usize),
    #[error("wavenumber grid must be strictly increasing and positive at index {0}")]
    GridNotIncreasing(usize),
    #[error(
        "band radiance {radiance} outside invertible range [{min_radiance}, {max_radiance}] \
         for bracket {bracket:?} K"
    )]
    OutOfBracket {
        radiance: f64,
        min_radiance: f64,
        max_radiance: f64,
        bracket: (f64, f64),
    },
    #[error("emissivity for material '{material}' out of [0,1] at sample {index}: {value}")]
    EmissivityOutOfRange {
        material: String,
        index: usize,
        value: f64,
    },
    #[error("curve for material '{material}' has {emissivity} emissivity samples for {grid} grid points")]
    CurveLengthMismatch {
        material: String,
        emissivity: usize,
        grid: usize,
    },
    #[error("spectral library parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("spectral library is empty")]
    EmptyLibrary,
    #[error(
        "band [{band_lo}, {band_hi}] m^-1 extends outside curve span [{curve_lo}, {curve_hi}] \
         m^-1 for material '{material}'"
    )]
    BandOutsideCurve {
        material: String,
        band_lo: f64,
        band_hi: f64,
        curve_lo: f64,
        curve_hi: f64,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Strictly increasing positive wavenumbers (m^-1), at least two of them.
#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberGrid {
    values: Vec<f64>,
}

impl WavenumberGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, RadiometryError> {
        if values.len() < 2 {
            return Err(RadiometryError::GridTooShort(values.len()));
        }
        for (i, w) in values.windows(2).enumerate() {
            if !(w[0] > 0.0) || !w[0].is_finite() {
                return Err(RadiometryError::GridNotIncreasing(i));
            }
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(RadiometryError::GridNotIncreasing(i + 1));
            }
        }
        Ok(WavenumberGrid { values })
    }

    /// K evenly spaced samples over [lo, hi] (m^-1).
    pub fn uniform(lo: f64, hi: f64, k: usize) -> Result<Self, RadiometryError> {
        if k < 2 {
            return Err(RadiometryError::GridTooShort(k));
        }
        let step = (hi - lo) / (k - 1) as f64;
        Self::new((0..k).map(|i| lo + step * i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Trapezoid quadrature of samples given on this grid.
    pub fn trapezoid(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.values.len());
        let mut acc = 0.0;
        for i in 0..self.values.len() - 1 {
            let width = self.values[i + 1] - self.values[i];
            acc += 0.5 * (samples[i] + samples[i + 1]) * width;
        }
        acc
    }
}

/// One material's emissivity samples e(nu) on a wavenumber grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCurve {
    material_id: String,
    grid: WavenumberGrid,
    emissivity: Vec<f64>,
}

impl SpectralCurve {
    pub fn new(
        material_id: impl Into<String>,
        grid: WavenumberGrid,
        emissivity: Vec<f64>,
    ) -> Result<Self, RadiometryError> {
        let material_id = material_id.into();
        if emissivity.len() != grid.len() {
            return Err(RadiometryError::CurveLengthMismatch {
                material: material_id,
                emissivity: emissivity.len(),
                grid: grid.len(),
            });
        }
        for (index, &value) in emissivity.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(RadiometryError::EmissivityOutOfRange {
                    material: material_id,
                    index,
                    value,
                });
            }
        }
        Ok(SpectralCurve {
            material_id,
            grid,
            emissivity,
        })
    }

    pub fn material_id(&self) -> &str {
        &self.material_id
    }

    pub fn grid(&self) -> &WavenumberGrid {
        &self.grid
    }

    pub fn emissivity(&self) -> &[f64] {
        &self.emissivity
    }

    pub fn spans(&self, band: &WavenumberGrid) -> bool {
        band.min() >= self.grid.min() && band.max() <= self.grid.max()
    }

    /// Linear interpolation of e at `nu`; caller must keep `nu` in span.
    pub fn interpolate(&self, nu: f64) -> f64 {
        let xs = self.grid.values();
        let pos = xs.partition_point(|&x| x < nu);
        if pos == 0 {
            return self.emissivity[0];
        }
        if pos == xs.len() {
            return *self.emissivity.last().unwrap();
        }
        let (x0, x1) = (xs[pos - 1], xs[pos]);
        let t = (nu - x0) / (x1 - x0);
        self.emissivity[pos - 1] * (1.0 - t) + self.emissivity[pos] * t
    }

    /// Emissivity sampled at every point of `band` (linear interpolation).
    pub fn sample_on(&self, band: &WavenumberGrid) -> Result<Vec<f64>, RadiometryError> {
        if !self.spans(band) {
            return Err(RadiometryError::BandOutsideCurve {
                material: self.material_id.clone(),
                band_lo: band.min(),
                band_hi: band.max(),
                curve_lo: self.grid.min(),
                curve_hi: self.grid.max(),
            });
        }
        Ok(band.values().iter().map(|&nu| self.interpolate(nu)).collect())
    }
}

pub type SpectralLibrary = BTreeMap<String, SpectralCurve>;

/// Spectral blackbody radiance at wavenumber `nu` (m^-1), temperature `t` (K).
///
/// B = 2 h c^2 nu^3 / (exp(h c nu / (k_B t)) - 1)
pub fn planck_radiance(nu: f64, t: f64) -> Result<f64, RadiometryError> {
    if !(nu > 0.0) {
        return Err(RadiometryError::NonPositiveWavenumber(nu));
    }
    if !(t > 0.0) {
        return Err(RadiometryError::NonPositiveTemperature(t));
    }
    Ok(planck_radiance_unchecked(nu, t))
}

#[inline]
pub(crate) fn planck_radiance_unchecked(nu: f64, t: f64) -> f64 {
    let x = PLANCK_H * LIGHT_SPEED * nu / (BOLTZMANN_KB * t);
    2.0 * PLANCK_H * LIGHT_SPEED * LIGHT_SPEED * nu * nu * nu / x.exp_m1()
}

/// Closed-form inverse of `planck_radiance` in temperature.
pub fn planck_inverse(nu: f64, radiance: f64) -> Result<f64, RadiometryError> {
    if !(nu > 0.0) {
        return Err(RadiometryError::NonPositiveWavenumber(nu));
    }
    if !(radiance > 0.0) {
        return Err(RadiometryError::NonPositiveRadiance(radiance));
    }
    let hcnu = PLANCK_H * LIGHT_SPEED * nu;
    let ratio = 2.0 * PLANCK_H * LIGHT_SPEED * LIGHT_SPEED * nu * nu * nu / radiance;
    Ok(hcnu / (BOLTZMANN_KB * ratio.ln_1p()))
}

/// Trapezoid integral of Planck radiance over the grid: the single-band
/// sensor model.
pub fn band_radiance(t: f64, grid: &WavenumberGrid) -> Result<f64, RadiometryError> {
    if !(t > 0.0) {
        return Err(RadiometryError::NonPositiveTemperature(t));
    }
    let samples: Vec<f64> = grid
        .values()
        .iter()
        .map(|&nu| planck_radiance_unchecked(nu, t))
        .collect();
    Ok(grid.trapezoid(&samples))
}

/// Invert `band_radiance` by bisection over the temperature bracket.
pub fn band_inverse(radiance: f64, grid: &WavenumberGrid) -> Result<f64, RadiometryError> {
    if !(radiance > 0.0) {
        return Err(RadiometryError::NonPositiveRadiance(radiance));
    }
    let (mut lo, mut hi) = TEMPERATURE_BRACKET;
    let l_lo = band_radiance(lo, grid)?;
    let l_hi = band_radiance(hi, grid)?;
    if radiance < l_lo || radiance > l_hi {
        return Err(RadiometryError::OutOfBracket {
            radiance,
            min_radiance: l_lo,
            max_radiance: l_hi,
            bracket: TEMPERATURE_BRACKET,
        });
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if band_radiance(mid, grid)? < radiance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Trapezoid-weighted mean of the (piecewise-linear) emissivity over the
/// band span. Exact for the interpolant: the quadrature partition is the
/// union of band points and curve knots inside the span.
pub fn band_average_emissivity(
    curve: &SpectralCurve,
    band: &WavenumberGrid,
) -> Result<f64, RadiometryError> {
    if !curve.spans(band) {
        return Err(RadiometryError::BandOutsideCurve {
            material: curve.material_id().to_string(),
            band_lo: band.min(),
            band_hi: band.max(),
            curve_lo: curve.grid().min(),
            curve_hi: curve.grid().max(),
        });
    }
    let mut knots: Vec<f64> = band.values().to_vec();
    knots.extend(
        curve
            .grid()
            .values()
            .iter()
            .copied()
            .filter(|&nu| nu > band.min() && nu < band.max()),
    );
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let mut integral = 0.0;
    for w in knots.windows(2) {
        integral += 0.5 * (curve.interpolate(w[0]) + curve.interpolate(w[1])) * (w[1] - w[0]);
    }
    Ok(integral / (band.max() - band.min()))
}

/// Parse a spectral library CSV.
///
/// Schema: header `material,wavenumber_cm1,emissivity`, UTF-8, `#` comment
/// lines ignored, rows per material ascending in wavenumber. Rows for the
/// same material merge into one curve.
pub fn load_spectral_library(path: impl AsRef<Path>) -> Result<SpectralLibrary, RadiometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RadiometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spectral_library(&text)
}

pub fn parse_spectral_library(text: &str) -> Result<SpectralLibrary, RadiometryError> {
    let mut rows: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["material", "wavenumber_cm1", "emissivity"] {
                return Err(RadiometryError::Parse {
                    line: line_no,
                    message: format!(
                        "expected header 'material,wavenumber_cm1,emissivity', got '{line}'"
                    ),
                });
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(RadiometryError::Parse {
                line: line_no,
                message: format!("expected 3 columns, got {}", cols.len()),
            });
        }
        let material = cols[0].to_string();
        if material.is_empty() {
            return Err(RadiometryError::Parse {
                line: line_no,
                message: "empty material id".to_string(),
            });
        }
        let wavenumber_cm1: f64 = cols[1].parse().map_err(|_| RadiometryError::Parse {
            line: line_no,
            message: format!("bad wavenumber '{}'", cols[1]),
        })?;
        let emissivity: f64 = cols[2].parse().map_err(|_| RadiometryError::Parse {
            line: line_no,
            message: format!("bad emissivity '{}'", cols[2]),
        })?;
        if !(0.0..=1.0).contains(&emissivity) {
            return Err(RadiometryError::Parse {
                line: line_no,
                message: format!(
                    "emissivity {emissivity} out of [0,1] for material '{material}'"
                ),
            });
        }
        rows.entry(material)
            .or_default()
            .push((wavenumber_cm1 * CM1_TO_M1, emissivity, line_no));
    }
    if rows.is_empty() {
        return Err(RadiometryError::EmptyLibrary);
    }
    let mut library = SpectralLibrary::new();
    for (material, mut samples) in rows {
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(RadiometryError::Parse {
                    line: w[1].2,
                    message: format!(
                        "duplicate or non-increasing wavenumber for material '{material}'"
                    ),
                });
            }
        }
        let grid = WavenumberGrid::new(samples.iter().map(|s| s.0).collect())?;
        let emissivity = samples.iter().map(|s| s.1).collect();
        let curve = SpectralCurve::new(material.clone(), grid, emissivity)?;
        library.insert(material, curve);
    }
    Ok(library)
}

/// Serialize a library back to the CSV schema (cm^-1 wavenumbers).
pub fn format_spectral_library(library: &SpectralLibrary) -> String {
    let mut out = String::from("material,wavenumber_cm1,emissivity\n");
    for (material, curve) in library {
        for (&nu, &e) in curve.grid().values().iter().zip(curve.emissivity()) {
            let _ = writeln!(out, "{material},{},{e}", nu / CM1_TO_M1);
        }
    }
    out
}
