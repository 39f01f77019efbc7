//! Reconstruction of locally sparse coefficient matrices.
//!
//! Given data `W ≈ A U Bᵀ` with a spatial operator `A` and a temporal
//! dictionary `B`, the solver computes a nonnegative `U` whose rows are sparse
//! by minimizing
//!
//! ```text
//! 1/2 ||A U Bᵀ - W||_F^2 + beta * sum_ij u_ij   s.t.  u >= 0,  sum_j u_ij <= v_cap
//! ```
//!
//! with a double-split ADMM. Around the solver sit the row projection it
//! relies on, kinetic dictionaries, recovery-condition checks and a synthetic
//! phantom harness.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod admm;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod model;
pub mod projection;
pub mod recovery;

pub use error::{Error, Result};
pub use model::{
    add_gaussian_noise, apply_forward, norm_inf_1, norm_l0_inf, norm_l1_inf, CoefficientMatrix,
    Conv2dOperator, DataMatrix, DictionaryMatrix, ForwardOperator, Mat, Normalization,
    SpatialShape,
};
