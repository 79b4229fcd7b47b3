//! Thermal-radiometry and neural-rendering toolkit.
//!
//! The crate covers three stages of a pipeline:
//!
//! 1. **Radiometry / decomposition** ([`radiometry`], [`texdecomp`]): Planck
//!    blackbody evaluation and inversion, spectral emissivity libraries, and
//!    recovery of per-pixel temperature, material emissivity, and texture
//!    (reflected radiance) from multi-band or single-band thermal images.
//! 2. **HSV mapping** ([`pseudotex`]): invertible mapping of the recovered
//!    quantities into the HSV color cube — material class to hue,
//!    temperature to saturation, texture to value.
//! 3. **Neural rendering** ([`nerf`], [`trainer`], [`eval`]): a radiance
//!    field with HSV output heads, a hue-periodic loss, hand-rolled exact
//!    gradients, an Adam training loop, and image/temperature metrics.
//!
//! [`scenesynth`] generates synthetic thermal scenes that exercise the whole
//! pipeline end to end, and [`io`] holds the PFM/PGM/PLY/PNG codecs used by
//! the on-disk dataset layout in [`dataset`].

pub mod dataset;
pub mod eval;
pub mod io;
pub mod math;
pub mod nerf;
pub mod pseudotex;
pub mod radiometry;
pub mod rng;
pub mod scenesynth;
pub mod texdecomp;
pub mod trainer;
