//! Hash function learning through codewords.
//!
//! Each of the `B` hash bits is a kernel SVM whose kernel is a learned
//! `lp`-constrained combination of a fixed kernel bank. Training pulls the
//! codes of each class towards a small set of learned codewords and works in
//! supervised, unsupervised, semi-supervised and transductive settings from a
//! single objective. The pieces are:
//!
//! - [`kernels`]: kernel functions, Gram matrix bank and per-bit combinations
//! - [`svm`]: SMO solver for the per-bit weighted binary SVM dual
//! - [`mkl`]: RKHS norms and the closed-form `lp` kernel weight update
//! - [`codebook`]: codewords, assignments, hinge surrogate and proximal updates
//! - [`trainer`]: the majorization-minimization / block coordinate descent loop
//! - [`evalkit`]: Hamming ranking metrics and the LSH baseline
//! - [`dataio`]: CSV, idx, netpbm and model file I/O
//! - [`cli`]: the `shl` command line front end
//!
//! Codes are stored as `i8` vectors with entries in `{-1, +1}`; `sign(0)` is
//! taken to be `+1` everywhere.

pub mod cli;
pub mod codebook;
pub mod dataio;
mod error;
pub mod evalkit;
pub mod kernels;
pub mod mkl;
pub mod svm;
pub mod trainer;

pub use codebook::{Assignment, Codebook, DecisionMatrix};
pub use dataio::LabeledDataset;
pub use error::{Error, Result};
pub use evalkit::{CodeDatabase, LshModel, PrPoint};
pub use kernels::{KernelBank, KernelSpec};
pub use mkl::MklWeights;
pub use svm::{SvmProblem, SvmSolution};
pub use trainer::{HashModel, TrainConfig};

/// Sign with the `sign(0) = +1` convention used for every quantization.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}
