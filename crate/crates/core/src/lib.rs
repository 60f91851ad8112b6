//! Structural analysis and regularization of differential-algebraic systems.

pub mod assignment;
pub mod augmentation;
pub mod benchmarks;
pub mod dae;
pub mod error;
pub mod expr;
pub mod format;
pub mod jacobian;
pub mod matrix;
pub mod pivot;
pub mod point;
pub mod relax;
pub mod report;
pub mod substitution;

pub use error::{Error, Result};
pub use expr::{Expr, Symbol, VarKey};
pub use matrix::Matrix;
pub use point::Point;

pub type NumericMatrix = Matrix<f64>;
pub type SymbolicMatrix = Matrix<Expr>;
pub type RationalMatrix = Matrix<expr::Rational>;
