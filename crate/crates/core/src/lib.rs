//! Cross-sensor periocular verification toolkit.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`dataset`]: manifests, circle annotations and the genuine/impostor trial
//!   protocol for same-sensor and cross-sensor comparisons.
//! - [`preproc`]: grayscale conversion, sclera-based geometric normalization
//!   to an 871×871 frame, and CLAHE.
//! - [`features`]: Gabor, LBP and HOG templates over a block grid with corner
//!   and center blocks discarded.
//! - [`matching`]: per-comparator similarity scores and the score file format
//!   used to bring in external comparators.
//! - [`fusion`]: linear logistic-regression fusion whose output approximates a
//!   log-likelihood ratio, sensor-dependent and sensor-independent training,
//!   and exhaustive comparator subset search.
//! - [`eval`]: FA/FR curves, EER, DET points, Cllr, synthetic score sets and
//!   report tables.
//! - [`cli`]: configuration and the subcommands behind the `perifuse` binary.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod matching;
pub mod preproc;

pub use error::{Error, Result};
