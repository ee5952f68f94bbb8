//! Multi-branch U-Net.
//!
//! Every input representation gets its own encoder: at each of `depth`
//! scales a block of 3×3 conv + ReLU layers of width `base_width · 2^s`
//! followed by 2×2 max pooling, then one more block after the last pool.
//! The deepest features of all branches are concatenated to form the
//! bottleneck. Each decoder stage upsamples with a 2×2 transposed
//! convolution, concatenates the skip features of *every* branch at that
//! scale, and applies a conv block. A 1×1 convolution produces two logits
//! (background, glare).
//!
//! Parameters are stored as a flat list of layers in a fixed order:
//! branch encoders (branch-major, shallow to deep), decoder stages (deep to
//! shallow, transposed conv first), then the head.

mod model;

pub use model::{build_model, BranchSpec, Gradients, LayerGrad, Model, UNetConfig};
