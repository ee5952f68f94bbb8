//! Glare segmentation toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`imgrep`] computes image representations from an RGB raster: HSV
//!    planes, a luminance-based local contrast map and a photometric map
//!    that highlights bright, desaturated, low-contrast regions.
//! 2. [`nncore`] is a small differentiable tensor core (convolutions,
//!    pooling, transposed convolutions, weighted cross-entropy, optimizers,
//!    finite-difference gradient checks and a binary checkpoint format).
//! 3. [`unet`] builds a multi-branch encoder/decoder network where every
//!    representation gets its own encoder and all branches meet at the
//!    bottleneck and in every skip connection.
//! 4. [`threshold`] binarizes probability maps with Otsu's method.
//! 5. [`dataset`] loads image/mask pairs and synthesizes a controlled glare
//!    corpus.
//! 6. [`evalkit`] trains, cross-validates and produces the representation
//!    ablation report.
//!
//! Runnable walkthroughs for every stage live in `examples/`; the
//! `glareseg` binary is a thin command-line front end over [`cli`].

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evalkit;
pub mod imgrep;
pub mod nncore;
pub mod threshold;
pub mod unet;

pub use error::{Error, Result};
