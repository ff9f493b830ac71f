//! Numerical laboratory for the spherical Sherrington–Kirkpatrick model whose
//! disorder is a Wigner matrix deformed by a random diagonal with a Jacobi law.

pub mod error;
pub mod experiments;
pub mod freeconv;
pub mod linalg;
pub mod measure;
pub mod quad;
pub mod saddle;
pub mod scalar;
pub mod spectra;

pub use error::{Error, Result};
pub use measure::{BaseMeasure, EdgeConstants, JacobiMeasure, MeasureSpec, WeightSpec};
pub use scalar::Real;

pub type GaussRule64 = quad::GaussRule<f64>;
pub type SymmetricEigen64 = linalg::SymmetricEigen<f64>;
