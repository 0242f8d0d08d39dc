//! Continuous object pose transformation for recognition datasets.
//!
//! `posegen` trains a pose transformation GAN on turntable-style imagery:
//! the generator strips viewpoint from an input image into a canonical
//! feature map, then injects an arbitrary target yaw/pitch to synthesize
//! that viewpoint. Trained models fill pose gaps in unbalanced datasets,
//! and the crate ships the full measurement loop: a procedural turntable
//! renderer with exact ground truth, foreground-masked MSE/PSNR scoring,
//! and a classifier benchmark harness that quantifies how synthesized
//! poses change recognition accuracy.
//!
//! The guide under `book/` walks through every concept; its code blocks
//! compile and run as doc-tests of this crate.

pub mod dataset;
pub mod error;
pub mod imageio;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod pose;
pub mod rng;
pub mod tensor;
pub mod turntable;

pub use error::{Error, Result};
pub use tensor::Tensor;

// The book's code blocks are doc-tested here so the guide cannot drift
// from the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(intro, "../../../book/src/intro.md");
}
