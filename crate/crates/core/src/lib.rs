#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod effective;
pub mod ergodic;
pub mod error;
pub mod field;
pub mod fluxgeom;
pub mod mde;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{FieldKind, FieldModel, FieldSpec, FluxPoint};
pub use fluxgeom::{FluxGrid, GridDims, ScalarField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
