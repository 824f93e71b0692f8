//! Universal source encryption over Z_q: a type-class fixed-length source
//! code combined with a random affine key encoder, together with exact and
//! Monte-Carlo tools for checking its finite-length reliability and
//! security bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cipher;
pub mod code;
pub mod error;
pub mod exponents;
pub mod field;
pub mod leakage;
pub mod simplex;
pub mod types;

pub use cipher::{AffineEncoder, CipherSystem, OmegaDist};
pub use code::{Codebook, RatePlan};
pub use error::{Error, Result};
pub use field::{FieldMatrix, FieldSpec, FieldVector, Residue};
pub use simplex::Distribution;
pub use types::TypeComposition;
