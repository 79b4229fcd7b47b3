//! Stratified ray sampling and HSV volume rendering.

use thiserror::Error;

use crate::math::Vec3;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("ray {0} direction is not unit length (|d| = {1})")]
    NotUnit(usize, f64),
    #[error("ray {ray} sample depths not strictly increasing at sample {sample}")]
    NotIncreasing { ray: usize, sample: usize },
    #[error("ray {ray} spacing not positive at sample {sample}: {delta}")]
    BadDelta {
        ray: usize,
        sample: usize,
        delta: f64,
    },
}

/// A minibatch of rays with their sample points and ground-truth HSV.
#[derive(Debug, Clone)]
pub struct RaySampleBatch {
    pub n_rays: usize,
    pub n_samples: usize,
    pub origins: Vec<Vec3>,
    /// Unit directions, one per ray.
    pub directions: Vec<Vec3>,
    /// Per-ray strictly increasing sample depths, n_rays * n_samples.
    pub t_vals: Vec<f64>,
    /// Spacing per sample; the last entry of each ray is the far residual.
    pub deltas: Vec<f64>,
    /// Sample positions, n_rays * n_samples.
    pub positions: Vec<[f64; 3]>,
    /// Ground-truth HSV per ray.
    pub gt_hsv: Vec<(f64, f64, f64)>,
}

impl RaySampleBatch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_rays: usize,
        n_samples: usize,
        origins: Vec<Vec3>,
        directions: Vec<Vec3>,
        t_vals: Vec<f64>,
        deltas: Vec<f64>,
        positions: Vec<[f64; 3]>,
        gt_hsv: Vec<(f64, f64, f64)>,
    ) -> Result<Self, BatchError> {
        assert_eq!(origins.len(), n_rays);
        assert_eq!(directions.len(), n_rays);
        assert_eq!(t_vals.len(), n_rays * n_samples);
        assert_eq!(deltas.len(), n_rays * n_samples);
        assert_eq!(positions.len(), n_rays * n_samples);
        assert_eq!(gt_hsv.len(), n_rays);
        for (ray, d) in directions.iter().enumerate() {
            let n = d.norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(BatchError::NotUnit(ray, n));
            }
        }
        for ray in 0..n_rays {
            for sample in 1..n_samples {
                let i = ray * n_samples + sample;
                if t_vals[i] <= t_vals[i - 1] {
                    return Err(BatchError::NotIncreasing { ray, sample });
                }
            }
            for sample in 0..n_samples {
                let delta = deltas[ray * n_samples + sample];
                if !(delta > 0.0) {
                    return Err(BatchError::BadDelta { ray, sample, delta });
                }
            }
        }
        Ok(RaySampleBatch {
            n_rays,
            n_samples,
            origins,
            directions,
            t_vals,
            deltas,
            positions,
            gt_hsv,
        })
    }
}

/// One uniform draw per bin of [near, far); strictly increasing.
pub fn stratified_sample(near: f64, far: f64, n: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(n >= 1);
    assert!(near >= 0.0 && near < far);
    let width = (far - near) / n as f64;
    (0..n)
        .map(|i| near + (i as f64 + rng.next_f64()) * width)
        .collect()
}

/// Deterministic bin midpoints, used for inference.
pub fn midpoint_sample(near: f64, far: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let width = (far - near) / n as f64;
    (0..n).map(|i| near + (i as f64 + 0.5) * width).collect()
}

/// Composited color plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct RenderResult {
    pub hsv: (f64, f64, f64),
    /// w_i = T_i (1 - exp(-sigma_i delta_i))
    pub weights: Vec<f64>,
    /// T_i before each sample, plus the escape probability at the end
    /// (length n + 1).
    pub transmittance: Vec<f64>,
    /// 1 - T_{n+1}: fraction of the ray absorbed by the samples.
    pub opacity: f64,
}

/// Composite HSV samples along one ray. No background term: an escaped ray
/// contributes zero.
pub fn volume_render_hsv(
    sigma: &[f64],
    hsv: &[(f64, f64, f64)],
    deltas: &[f64],
) -> RenderResult {
    let n = sigma.len();
    assert_eq!(hsv.len(), n);
    assert_eq!(deltas.len(), n);
    let mut weights = vec![0.0; n];
    let mut transmittance = vec![0.0; n + 1];
    let mut optical_depth = 0.0f64;
    let mut color = (0.0, 0.0, 0.0);
    for i in 0..n {
        let t_i = (-optical_depth).exp();
        transmittance[i] = t_i;
        let alpha = -(-sigma[i] * deltas[i]).exp_m1(); // 1 - e^{-sigma delta}
        let w = t_i * alpha;
        weights[i] = w;
        color.0 += w * hsv[i].0;
        color.1 += w * hsv[i].1;
        color.2 += w * hsv[i].2;
        optical_depth += sigma[i] * deltas[i];
    }
    transmittance[n] = (-optical_depth).exp();
    RenderResult {
        hsv: color,
        opacity: 1.0 - transmittance[n],
        weights,
        transmittance,
    }
}

/// Gradients of a scalar loss through [`volume_render_hsv`].
///
/// `d_color` is dL/dC. Adds into `d_sigma` and writes the per-sample HSV
/// gradients. Cost is O(n) via a suffix accumulator.
#[allow(clippy::too_many_arguments)]
pub fn render_backward(
    sigma: &[f64],
    hsv: &[(f64, f64, f64)],
    deltas: &[f64],
    result: &RenderResult,
    d_color: (f64, f64, f64),
    d_sigma: &mut [f64],
    d_h: &mut [f64],
    d_s: &mut [f64],
    d_v: &mut [f64],
) {
    let n = sigma.len();
    // dL/d(hsv_i) = w_i * dL/dC
    for i in 0..n {
        let w = result.weights[i];
        d_h[i] = w * d_color.0;
        d_s[i] = w * d_color.1;
        d_v[i] = w * d_color.2;
    }
    // dL/d(sigma_i): direct term through alpha_i, and the attenuation of
    // every later sample. suffix[i] = sum_{j>i} (dC . c_j) w_j.
    let dot = |i: usize| -> f64 {
        d_color.0 * hsv[i].0 + d_color.1 * hsv[i].1 + d_color.2 * hsv[i].2
    };
    let mut suffix = 0.0;
    for i in (0..n).rev() {
        let t_i = result.transmittance[i];
        let direct = dot(i) * t_i * deltas[i] * (-sigma[i] * deltas[i]).exp();
        d_sigma[i] += direct - deltas[i] * suffix;
        suffix += dot(i) * result.weights[i];
    }
}
