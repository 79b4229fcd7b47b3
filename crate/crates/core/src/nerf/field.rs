//! Field parameters, batched forward pass, and hand-rolled reverse mode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encoding::{encode_into, encoded_len, EncodingConfig};
use super::loss::{hue_loss_grad, LossBreakdown};
use super::render::{render_backward, volume_render_hsv, RaySampleBatch};
use crate::math::{matmul, matmul_at, matmul_bt};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("non-finite value in parameter tensor '{0}'")]
    NonFiniteParameter(&'static str),
    #[error("non-finite gradient for parameter tensor '{0}'")]
    NonFiniteGradient(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub encoding: EncodingConfig,
    pub trunk_layers: usize,
    pub trunk_width: usize,
    pub sv_hidden: usize,
    /// Trunk layer (1-based) whose output feeds the hue head; clamped to
    /// the trunk depth.
    pub hue_tap: usize,
    /// Units conversion applied after the softplus density activation
    /// (1/m). Desk-scale scenes in meters need opaque surfaces near
    /// sigma ~ 100/m, far beyond where a unit-scale softplus can march
    /// within a short optimization budget.
    #[serde(default = "default_density_scale")]
    pub density_scale: f64,
}

fn default_density_scale() -> f64 {
    1.0
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            encoding: EncodingConfig::default(),
            trunk_layers: 4,
            trunk_width: 128,
            sv_hidden: 64,
            hue_tap: 2,
            density_scale: 1.0,
        }
    }
}

impl FieldConfig {
    pub fn tiny_for_tests() -> Self {
        FieldConfig {
            encoding: EncodingConfig {
                l_pos: 2,
                l_dir: 1,
                include_input: true,
            },
            trunk_layers: 2,
            trunk_width: 8,
            sv_hidden: 4,
            hue_tap: 2,
            density_scale: 1.0,
        }
    }

    pub fn pos_dim(&self) -> usize {
        encoded_len(self.encoding.l_pos, self.encoding.include_input)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_len(self.encoding.l_dir, self.encoding.include_input)
    }

    fn tap_index(&self) -> usize {
        self.hue_tap.clamp(1, self.trunk_layers) - 1
    }
}

/// One dense layer , weights stored row-major [fan_in x fan_out].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
            fan_in,
            fan_out,
        }
    }

    /// Uniform init in +-sqrt(6 / fan_in), weights then biases. Nonzero
    /// biases keep dead inputs off the exact ReLU kink, which matters for
    /// finite-difference verification.
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        Dense {
            weight: (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect(),
            bias: (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect(),
            fan_in,
            fan_out,
        }
    }

    /// y[p x out] = x[p x in] * W + b
    fn forward(&self, x: &[f64], p: usize, y: &mut [f64]) {
        matmul(x, p, self.fan_in, &self.weight, self.fan_out, y);
        for row in y.chunks_exact_mut(self.fan_out) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
    }
}

/// The radiance field: trunk, hue head, density head, saturation/value head.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    pub config: FieldConfig,
    pub trunk: Vec<Dense>,
    pub hue: Dense,
    pub density: Dense,
    pub sv_hidden: Dense,
    pub sv_out: Dense,
}

impl RadianceField {
    /// Seeded initialization; layer draws happen in declaration order.
    pub fn init(config: FieldConfig, seed: u64) -> Self {
        let mut rng = Rng::seed_from(seed);
        let mut trunk = Vec::with_capacity(config.trunk_layers);
        let mut fan_in = config.pos_dim();
        for _ in 0..config.trunk_layers {
            trunk.push(Dense::init(fan_in, config.trunk_width, &mut rng));
            fan_in = config.trunk_width;
        }
        RadianceField {
            hue: Dense::init(config.trunk_width, 1, &mut rng),
            density: Dense::init(config.trunk_width, 1, &mut rng),
            sv_hidden: Dense::init(
                config.trunk_width + config.dir_dim(),
                config.sv_hidden,
                &mut rng,
            ),
            sv_out: Dense::init(config.sv_hidden, 2, &mut rng),
            config,
            trunk,
        }
    }

    /// All-zero parameters (deterministic heads: H = S = V = 0.5,
    /// sigma = ln 2).
    pub fn zeros(config: FieldConfig) -> Self {
        let mut trunk = Vec::with_capacity(config.trunk_layers);
        let mut fan_in = config.pos_dim();
        for _ in 0..config.trunk_layers {
            trunk.push(Dense::zeros(fan_in, config.trunk_width));
            fan_in = config.trunk_width;
        }
        RadianceField {
            hue: Dense::zeros(config.trunk_width, 1),
            density: Dense::zeros(config.trunk_width, 1),
            sv_hidden: Dense::zeros(config.trunk_width + config.dir_dim(), config.sv_hidden),
            sv_out: Dense::zeros(config.sv_hidden, 2),
            config,
            trunk,
        }
    }

    /// Visit every parameter tensor in a fixed order. The optimizer and the
    /// checkpoint format both rely on this ordering.
    pub fn visit_tensors<'a>(&'a self, mut f: impl FnMut(String, &'a [f64])) {
        for (i, layer) in self.trunk.iter().enumerate() {
            f(format!("trunk.{i}.weight"), &layer.weight);
            f(format!("trunk.{i}.bias"), &layer.bias);
        }
        f("hue.weight".into(), &self.hue.weight);
        f("hue.bias".into(), &self.hue.bias);
        f("density.weight".into(), &self.density.weight);
        f("density.bias".into(), &self.density.bias);
        f("sv_hidden.weight".into(), &self.sv_hidden.weight);
        f("sv_hidden.bias".into(), &self.sv_hidden.bias);
        f("sv_out.weight".into(), &self.sv_out.weight);
        f("sv_out.bias".into(), &self.sv_out.bias);
    }

    pub fn visit_tensors_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (i, layer) in self.trunk.iter_mut().enumerate() {
            f(&format!("trunk.{i}.weight"), &mut layer.weight);
            f(&format!("trunk.{i}.bias"), &mut layer.bias);
        }
        f("hue.weight", &mut self.hue.weight);
        f("hue.bias", &mut self.hue.bias);
        f("density.weight", &mut self.density.weight);
        f("density.bias", &mut self.density.bias);
        f("sv_hidden.weight", &mut self.sv_hidden.weight);
        f("sv_hidden.bias", &mut self.sv_hidden.bias);
        f("sv_out.weight", &mut self.sv_out.weight);
        f("sv_out.bias", &mut self.sv_out.bias);
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit_tensors(|_, t| n += t.len());
        n
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        let mut bad: Option<&'static str> = None;
        self.visit_tensors(|name, t| {
            if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
                // leak-free static mapping of the few tensor names
                bad = Some(match name.as_str() {
                    s if s.starts_with("trunk") => "trunk",
                    s if s.starts_with("hue") => "hue",
                    s if s.starts_with("density") => "density",
                    s if s.starts_with("sv_hidden") => "sv_hidden",
                    _ => "sv_out",
                });
            }
        });
        match bad {
            Some(name) => Err(FieldError::NonFiniteParameter(name)),
            None => Ok(()),
        }
    }

    /// Evaluate one point. Convenience wrapper over the batched path.
    pub fn forward_point(&self, position: [f64; 3], direction: [f64; 3]) -> PointOutput {
        let cache = self.forward_batch(&[position], &[direction]);
        PointOutput {
            sigma: cache.sigma[0],
            h: cache.h_out[0],
            s: cache.s_out[0],
            v: cache.v_out[0],
        }
    }

    /// Batched forward pass; keeps every activation for the backward pass.
    pub fn forward_batch(&self, positions: &[[f64; 3]], directions: &[[f64; 3]]) -> ForwardCache {
        let p = positions.len();
        assert_eq!(directions.len(), p);
        let cfg = &self.config;
        let (pos_dim, dir_dim) = (cfg.pos_dim(), cfg.dir_dim());

        let mut enc_x = vec![0.0; p * pos_dim];
        for (i, &pos) in positions.iter().enumerate() {
            encode_into(
                pos,
                cfg.encoding.l_pos,
                cfg.encoding.include_input,
                &mut enc_x[i * pos_dim..(i + 1) * pos_dim],
            );
        }
        let mut enc_d = vec![0.0; p * dir_dim];
        for (i, &dir) in directions.iter().enumerate() {
            encode_into(
                dir,
                cfg.encoding.l_dir,
                cfg.encoding.include_input,
                &mut enc_d[i * dir_dim..(i + 1) * dir_dim],
            );
        }

        // trunk with ReLU
        let width = cfg.trunk_width;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(cfg.trunk_layers);
        let mut input: &[f64] = &enc_x;
        let mut in_dim = pos_dim;
        for layer in &self.trunk {
            let mut h = vec![0.0; p * width];
            debug_assert_eq!(layer.fan_in, in_dim);
            layer.forward(input, p, &mut h);
            for v in h.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            hidden.push(h);
            input = hidden.last().unwrap();
            in_dim = width;
        }
        let _ = in_dim;

        // hue head from the tapped layer
        let tap = &hidden[cfg.tap_index()];
        let mut hue_lin = vec![0.0; p];
        self.hue.forward(tap, p, &mut hue_lin);
        let h_out: Vec<f64> = hue_lin.iter().map(|&z| sigmoid(z)).collect();

        // density head from the last layer
        let last = hidden.last().unwrap();
        let mut sigma_lin = vec![0.0; p];
        self.density.forward(last, p, &mut sigma_lin);
        let scale = cfg.density_scale;
        let sigma: Vec<f64> = sigma_lin.iter().map(|&z| scale * softplus(z)).collect();

        // saturation/value head on [trunk_out, enc_d]
        let sv_in_dim = width + dir_dim;
        let mut sv_in = vec![0.0; p * sv_in_dim];
        for i in 0..p {
            sv_in[i * sv_in_dim..i * sv_in_dim + width]
                .copy_from_slice(&last[i * width..(i + 1) * width]);
            sv_in[i * sv_in_dim + width..(i + 1) * sv_in_dim]
                .copy_from_slice(&enc_d[i * dir_dim..(i + 1) * dir_dim]);
        }
        let mut svh = vec![0.0; p * cfg.sv_hidden];
        self.sv_hidden.forward(&sv_in, p, &mut svh);
        for v in svh.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut sv_lin = vec![0.0; p * 2];
        self.sv_out.forward(&svh, p, &mut sv_lin);
        let s_out: Vec<f64> = (0..p).map(|i| sigmoid(sv_lin[i * 2])).collect();
        let v_out: Vec<f64> = (0..p).map(|i| sigmoid(sv_lin[i * 2 + 1])).collect();

        ForwardCache {
            points: p,
            enc_x,
            hidden,
            sigma_lin,
            sv_in,
            svh,
            h_out,
            s_out,
            v_out,
            sigma,
        }
    }

    /// Reverse pass: per-point output gradients to parameter gradients.
    ///
    /// `d_sigma`, `d_h`, `d_s`, `d_v` are dL/d(output) per point. Every
    /// reduction is an ordered matrix product, so the result is independent
    /// of thread count.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        d_sigma: &[f64],
        d_h: &[f64],
        d_s: &[f64],
        d_v: &[f64],
    ) -> FieldGradients {
        let p = cache.points;
        let cfg = &self.config;
        let width = cfg.trunk_width;
        let (pos_dim, dir_dim) = (cfg.pos_dim(), cfg.dir_dim());
        let mut grads = FieldGradients::zeros_like(self);

        // head pre-activation gradients
        let d_sigma_lin: Vec<f64> = (0..p)
            .map(|i| d_sigma[i] * cfg.density_scale * sigmoid(cache.sigma_lin[i]))
            .collect();
        let d_hue_lin: Vec<f64> = (0..p)
            .map(|i| d_h[i] * cache.h_out[i] * (1.0 - cache.h_out[i]))
            .collect();
        let mut d_sv_lin = vec![0.0; p * 2];
        for i in 0..p {
            d_sv_lin[i * 2] = d_s[i] * cache.s_out[i] * (1.0 - cache.s_out[i]);
            d_sv_lin[i * 2 + 1] = d_v[i] * cache.v_out[i] * (1.0 - cache.v_out[i]);
        }

        // sv_out: svh^T * d_sv_lin
        matmul_at(&cache.svh, p, cfg.sv_hidden, &d_sv_lin, 2, &mut grads.sv_out.weight);
        column_sums(&d_sv_lin, 2, &mut grads.sv_out.bias);
        let mut d_svh = vec![0.0; p * cfg.sv_hidden];
        matmul_bt(&d_sv_lin, p, 2, &self.sv_out.weight, cfg.sv_hidden, &mut d_svh);
        relu_mask(&mut d_svh, &cache.svh);

        // sv_hidden
        let sv_in_dim = width + dir_dim;
        matmul_at(
            &cache.sv_in,
            p,
            sv_in_dim,
            &d_svh,
            cfg.sv_hidden,
            &mut grads.sv_hidden.weight,
        );
        column_sums(&d_svh, cfg.sv_hidden, &mut grads.sv_hidden.bias);
        let mut d_sv_in = vec![0.0; p * sv_in_dim];
        matmul_bt(
            &d_svh,
            p,
            cfg.sv_hidden,
            &self.sv_hidden.weight,
            sv_in_dim,
            &mut d_sv_in,
        );

        // density head
        let last = cache.hidden.last().unwrap();
        matmul_at(last, p, width, &d_sigma_lin, 1, &mut grads.density.weight);
        column_sums(&d_sigma_lin, 1, &mut grads.density.bias);

        // hue head (gradients only; routed into the trunk at the tap below)
        let tap_index = cfg.tap_index();
        matmul_at(
            &cache.hidden[tap_index],
            p,
            width,
            &d_hue_lin,
            1,
            &mut grads.hue.weight,
        );
        column_sums(&d_hue_lin, 1, &mut grads.hue.bias);

        // gradient flowing into the last trunk layer: sv branch + density
        let mut d_hidden = vec![0.0; p * width];
        for i in 0..p {
            let src = &d_sv_in[i * sv_in_dim..i * sv_in_dim + width];
            let dst = &mut d_hidden[i * width..(i + 1) * width];
            dst.copy_from_slice(src);
            let ds = d_sigma_lin[i];
            for (o, &w) in dst.iter_mut().zip(self.density.weight.iter()) {
                *o += ds * w;
            }
        }

        // trunk, top down
        for layer_idx in (0..cfg.trunk_layers).rev() {
            if layer_idx == tap_index {
                for i in 0..p {
                    let dh = d_hue_lin[i];
                    let dst = &mut d_hidden[i * width..(i + 1) * width];
                    for (o, &w) in dst.iter_mut().zip(self.hue.weight.iter()) {
                        *o += dh * w;
                    }
                }
            }
            relu_mask(&mut d_hidden, &cache.hidden[layer_idx]);

            let (below, below_dim): (&[f64], usize) = if layer_idx == 0 {
                (&cache.enc_x, pos_dim)
            } else {
                (&cache.hidden[layer_idx - 1], width)
            };
            matmul_at(
                below,
                p,
                below_dim,
                &d_hidden,
                width,
                &mut grads.trunk[layer_idx].weight,
            );
            column_sums(&d_hidden, width, &mut grads.trunk[layer_idx].bias);
            if layer_idx > 0 {
                let mut d_below = vec![0.0; p * width];
                matmul_bt(
                    &d_hidden,
                    p,
                    width,
                    &self.trunk[layer_idx].weight,
                    width,
                    &mut d_below,
                );
                d_hidden = d_below;
            }
        }
        grads
    }
}

/// Outputs of the field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOutput {
    pub sigma: f64,
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Activations retained by [`RadianceField::forward_batch`].
pub struct ForwardCache {
    pub points: usize,
    enc_x: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    sigma_lin: Vec<f64>,
    sv_in: Vec<f64>,
    svh: Vec<f64>,
    pub h_out: Vec<f64>,
    pub s_out: Vec<f64>,
    pub v_out: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Parameter gradients, mirroring [`RadianceField`] shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradients {
    pub trunk: Vec<Dense>,
    pub hue: Dense,
    pub density: Dense,
    pub sv_hidden: Dense,
    pub sv_out: Dense,
}

impl FieldGradients {
    pub fn zeros_like(field: &RadianceField) -> Self {
        FieldGradients {
            trunk: field
                .trunk
                .iter()
                .map(|l| Dense::zeros(l.fan_in, l.fan_out))
                .collect(),
            hue: Dense::zeros(field.hue.fan_in, field.hue.fan_out),
            density: Dense::zeros(field.density.fan_in, field.density.fan_out),
            sv_hidden: Dense::zeros(field.sv_hidden.fan_in, field.sv_hidden.fan_out),
            sv_out: Dense::zeros(field.sv_out.fan_in, field.sv_out.fan_out),
        }
    }

    pub fn visit_tensors(&self, mut f: impl FnMut(String, &[f64])) {
        for (i, layer) in self.trunk.iter().enumerate() {
            f(format!("trunk.{i}.weight"), &layer.weight);
            f(format!("trunk.{i}.bias"), &layer.bias);
        }
        f("hue.weight".into(), &self.hue.weight);
        f("hue.bias".into(), &self.hue.bias);
        f("density.weight".into(), &self.density.weight);
        f("density.bias".into(), &self.density.bias);
        f("sv_hidden.weight".into(), &self.sv_hidden.weight);
        f("sv_hidden.bias".into(), &self.sv_hidden.bias);
        f("sv_out.weight".into(), &self.sv_out.weight);
        f("sv_out.bias".into(), &self.sv_out.bias);
    }

    pub fn visit_tensors_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (i, layer) in self.trunk.iter_mut().enumerate() {
            f(&format!("trunk.{i}.weight"), &mut layer.weight);
            f(&format!("trunk.{i}.bias"), &mut layer.bias);
        }
        f("hue.weight", &mut self.hue.weight);
        f("hue.bias", &mut self.hue.bias);
        f("density.weight", &mut self.density.weight);
        f("density.bias", &mut self.density.bias);
        f("sv_hidden.weight", &mut self.sv_hidden.weight);
        f("sv_hidden.bias", &mut self.sv_hidden.bias);
        f("sv_out.weight", &mut self.sv_out.weight);
        f("sv_out.bias", &mut self.sv_out.bias);
    }

    pub fn check_finite(&self) -> Result<(), FieldError> {
        let mut bad: Option<&'static str> = None;
        self.visit_tensors(|name, t| {
            if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
                bad = Some(match name.as_str() {
                    s if s.starts_with("trunk") => "trunk",
                    s if s.starts_with("hue") => "hue",
                    s if s.starts_with("density") => "density",
                    s if s.starts_with("sv_hidden") => "sv_hidden",
                    _ => "sv_out",
                });
            }
        });
        match bad {
            Some(name) => Err(FieldError::NonFiniteGradient(name)),
            None => Ok(()),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Zero gradient where the forward activation was clipped at zero.
fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// out[j] = sum_i values[i * cols + j], batch order fixed.
fn column_sums(values: &[f64], cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for row in values.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Full pipeline for one ray batch: forward every sample, composite each
/// ray, take the loss against the batch ground truth, and push gradients
/// back to the parameters. Returns the loss breakdown and the gradients.
pub fn loss_and_gradients(
    field: &RadianceField,
    batch: &RaySampleBatch,
) -> Result<(LossBreakdown, FieldGradients), FieldError> {
    let n_rays = batch.n_rays;
    let n_samples = batch.n_samples;
    let total = n_rays * n_samples;
    debug_assert_eq!(batch.positions.len(), total);

    // directions repeat per sample
    let mut dirs = Vec::with_capacity(total);
    for ray in 0..n_rays {
        let d = batch.directions[ray];
        dirs.extend(std::iter::repeat([d.x, d.y, d.z]).take(n_samples));
    }
    let cache = field.forward_batch(&batch.positions, &dirs);

    let mut d_sigma = vec![0.0; total];
    let mut d_h = vec![0.0; total];
    let mut d_s = vec![0.0; total];
    let mut d_v = vec![0.0; total];
    let mut breakdown = LossBreakdown::default();
    let inv_n = 1.0 / n_rays as f64;

    for ray in 0..n_rays {
        let lo = ray * n_samples;
        let hi = lo + n_samples;
        let sigma = &cache.sigma[lo..hi];
        let deltas = &batch.deltas[lo..hi];
        let hsv: Vec<(f64, f64, f64)> = (lo..hi)
            .map(|i| (cache.h_out[i], cache.s_out[i], cache.v_out[i]))
            .collect();
        let result = volume_render_hsv(sigma, &hsv, deltas);
        let (pred_h, pred_s, pred_v) = result.hsv;
        let (gt_h, gt_s, gt_v) = batch.gt_hsv[ray];

        breakdown.hue += super::loss::hue_loss(pred_h, gt_h) * inv_n;
        breakdown.saturation += (pred_s - gt_s).powi(2) * inv_n;
        breakdown.value += (pred_v - gt_v).powi(2) * inv_n;

        // dL/dC for this ray
        let dc = (
            hue_loss_grad(pred_h, gt_h) * inv_n,
            2.0 * (pred_s - gt_s) * inv_n,
            2.0 * (pred_v - gt_v) * inv_n,
        );
        render_backward(
            sigma,
            &hsv,
            deltas,
            &result,
            dc,
            &mut d_sigma[lo..hi],
            &mut d_h[lo..hi],
            &mut d_s[lo..hi],
            &mut d_v[lo..hi],
        );
    }

    let grads = field.backward_batch(&cache, &d_sigma, &d_h, &d_s, &d_v);
    grads.check_finite()?;
    Ok((breakdown, grads))
}
