//! Rotation registration of noisy grayscale micrographs by normalized
//! cross-correlation in polar coordinates, and ordering of registered images
//! into a frame sequence from their pairwise correlations.
//!
//! Pipeline: [`image::circular_crop`] → [`image::normalize`] →
//! [`polar::to_polar`] → [`correlation::estimate_rotation`] (or the pruned
//! [`correlation::estimate_rotation_pruned`]) → [`image::rotate`] back onto the
//! reference → [`sequencer::correlation_matrix`] →
//! [`sequencer::to_probability`] → [`sequencer::greedy_sequence`].

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod cli;
pub mod correlation;
pub mod error;
pub mod image;
pub mod pgm;
pub mod polar;
pub mod sequencer;
mod sum;
pub mod synth;

pub use align::{align, AlignConfig, Alignment};
pub use correlation::{
    estimate_rotation, estimate_rotation_pruned, ncc, rotation_score_curve, NccCurve, PruneStats, PrunedEstimate,
    RotationEstimate,
};
pub use error::{Error, Result};
pub use image::{center_crop, circular_crop, normalize, rotate, warp_affine, AffineMatrix, Image};
pub use pgm::{load_pgm, save_pgm};
pub use polar::{cyclic_shift, to_polar, PolarImage};
pub use sequencer::{
    chain_probability, check_monotonicity, correlation_matrix, greedy_sequence, to_probability, CorrelationMatrix,
    MonotonicityViolation, ProbabilityTable, SequencePlan,
};
pub use synth::{synth_filament, FilamentSpec};
