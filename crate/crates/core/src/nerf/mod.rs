//! The HSV radiance field.
//!
//! A position/direction MLP with a density head, a shallow hue head tapped
//! early in the trunk (hue varies smoothly and needs little capacity, and it
//! must not depend on view direction), and a view-conditioned
//! saturation/value head. All three color channels are sigmoid-bounded to
//! (0, 1); density goes through softplus. Volume rendering composites HSV
//! triples with the usual transmittance weights and no background term, the
//! hue loss is the cyclic distance on the hue circle, and every gradient is
//! hand-rolled reverse mode, checked against finite differences.

mod checkpoint;
mod encoding;
mod field;
mod loss;
mod render;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use encoding::{encode, encode_into, encode_jacobian, encoded_len, EncodingConfig};
pub use field::{
    loss_and_gradients, FieldConfig, FieldError, FieldGradients, ForwardCache, PointOutput,
    RadianceField,
};
pub use loss::{hue_loss, hue_loss_grad, total_loss, LossBreakdown};
pub use render::{
    midpoint_sample, render_backward, stratified_sample, volume_render_hsv, RaySampleBatch,
    RenderResult,
};
