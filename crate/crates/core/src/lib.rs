//! Stability analysis of Kalman-Bucy filters and their ensemble (EnKF-type) diffusions.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases below fix it to
//! `f64`, which is what the stochastic layer and the command-line tool use.

// `!(a <= b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod check;
pub mod error;
pub mod flow;
pub mod gramian;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod scalar;
pub mod semigroup;
pub mod stochastic;
pub mod suite;

pub use error::{Error, Result};
pub use linalg::{Matrix, SpdMat, SymMat};
pub use scalar::Real;

pub type Mat = Matrix<f64>;
pub type Sym = SymMat<f64>;
pub type Spd = SpdMat<f64>;
pub type Model = model::SignalModel<f64>;
pub type Flow = flow::MatrixFlow<f64>;
pub type Mat32 = Matrix<f32>;
pub type Model32 = model::SignalModel<f32>;
