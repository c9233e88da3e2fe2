//! Alternating projections for low-rank matrix completion and sparse
//! recovery.
//!
//! The completion solver alternates between the rank-`r` matrices (SVD
//! truncation) and the matrices that agree with the observed entries:
//!
//! ```
//! use apkit::{ap_complete, CompletionConfig, Matrix, ObservationMask};
//!
//! let truth = Matrix::from_fn(6, 6, |i, j| (i + 1) as f64 * (j + 2) as f64);
//! let mask = ObservationMask::from_predicate(6, 6, |i, j| (i + j) % 3 != 0).unwrap();
//! let observed = apkit::linalg::project_mask(&truth, &mask).unwrap();
//!
//! let result = ap_complete(&observed, &mask, &CompletionConfig::new(1)).unwrap();
//! assert!(result.converged);
//! assert!(result.x_star.sub(&truth).unwrap().max_abs() < 1e-4);
//! ```
//!
//! Alongside the solvers are certificates for local linear convergence
//! ([`tangent::transversality_report`], [`sparse::check_null_intersection`]),
//! the differential of SVD truncation, an exact bound on the number of
//! completions ([`existence`]) and the experiment harness in [`bench`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod completion;
pub mod error;
pub mod existence;
pub mod linalg;
pub mod sparse;
pub mod tangent;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/completion.md")]
    mod completion {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/differential.md")]
    mod differential {}
    #[doc = include_str!("../../../book/src/sparse.md")]
    mod sparse {}
    #[doc = include_str!("../../../book/src/existence.md")]
    mod existence {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}

pub use completion::{ap_complete, CompletionConfig, CompletionResult, CompletionTrace, Init};
pub use error::{Error, Result};
pub use linalg::{Matrix, ObservationMask};
pub use sparse::{ap_sparse, SparseConfig, SparseInit, SparseProblem, SparseResult};
pub use tangent::{transversality_report, TransversalityReport};
