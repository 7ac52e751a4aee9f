//! Recognition of face-related transitive actions in still images.
//!
//! The pipeline scores an image for each action class by combining four
//! signals around a detected face: appearance of the face crop, appearance
//! of the mouth crop, geometric interaction features between a candidate
//! action-object region and the facial landmarks, and intrinsic shape and
//! appearance features of that region. The per-class score is
//!
//! ```text
//! S_c = eta_F + eta_M + gamma * max_r (eta_Int(r) + eta_Obj(r))
//! ```
//!
//! with the max taken over a pool of candidate regions inside the face crop.
//!
//! Building blocks, bottom to top:
//!
//! - [`imaging`]: grayscale buffers, gradients, dense descriptors, block
//!   gradient histograms, masks and resampling.
//! - [`star_vote`]: the exemplar star model that localizes a target point by
//!   nearest-neighbor offset voting over dense descriptors.
//! - [`landmarks`]: seven facial landmarks per face crop, fusing a
//!   neighbor-set density estimate with a per-test-image star refinement.
//! - [`regions`]: candidate action-object regions from a pluggable
//!   segmenter plus a parallel-contour proposer, and per-region object
//!   features.
//! - [`interaction`]: features describing how a region relates to the face:
//!   predicted-location mass, saliency mass, landmark distances, log-polar
//!   coverage, and face-box overlaps.
//! - [`learning`]: training-set assembly, linear SVM training, and the
//!   action-object-center star model with leave-one-image-out priors.
//! - [`pipeline`]: end-to-end classification and per-image explanation.
//! - [`cli_io`]: dataset schema, average-precision evaluation, a synthetic
//!   dataset generator, overlay rendering and the CLI commands.
//!
//! See the crate's `examples/` directory for one runnable example per major
//! capability, and the `faceact` binary for the command-line interface.

pub mod cli_io;
pub mod error;
pub mod imaging;
pub mod interaction;
pub mod landmarks;
pub mod learning;
pub mod pipeline;
pub mod regions;
pub mod star_vote;

pub use error::{Error, Result};
