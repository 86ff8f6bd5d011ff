//! # mixtag
//!
//! Multi-label audio tagging with sample-mixed data augmentation.
//!
//! The crate covers the whole pipeline:
//!
//! - [`dataset`]: 16 kHz mono WAV ingestion, `c m f v p b o` multi-hot labels,
//!   manifests, cross-validation folds and a synthetic stand-in dataset.
//! - [`features`]: Hamming-windowed STFT and HTK mel filterbank giving a
//!   124x128 log-mel matrix per 4 s clip; [`container`] stores feature sets.
//! - [`augment`]: mixup, SamplePairing, mixup with preserved labels and
//!   extrapolation on minibatches, with a Beta(alpha, alpha) sampler.
//! - [`nn`]: a conv-block network with attention pooling, hand-written
//!   backpropagation, Adam and finite-difference checks.
//! - [`metrics`]: ROC points, equal error rate and per-class reports.
//! - [`harness`]: training with early stopping, k-fold cross-validation,
//!   alpha sweeps and the key-value config format.
//!
//! ```no_run
//! use mixtag::augment::{apply_policy, MixPolicy};
//! # fn demo(batch: mixtag::augment::Batch) -> mixtag::Result<()> {
//! use rand::SeedableRng;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let mixed = apply_policy(&batch, MixPolicy::Mixup(1.5), &mut rng)?;
//! # Ok(()) }
//! ```

pub mod augment;
pub mod container;
pub mod dataset;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
