//! Symbolic-numeric toolkit for rigid polynomial model domains
//! `{Re z_n + P(z', z̄') < 0}`: derivative-list weights, extremal frames,
//! adapted coordinates and pseudo-balls, plurisubharmonic weights,
//! localization, and Bergman-kernel diagonal asymptotics.

pub mod appendix;
pub mod bergman;
pub mod coords;
pub mod cpoly;
pub mod domains;
pub mod error;
pub mod expr;
pub mod field;
pub mod fit;
pub mod homog;
pub mod jet;
pub mod jetfield;
pub mod linalg;
pub mod list;
pub mod localization;
pub mod parse;
pub mod psh;
pub mod quad;
pub mod weights;

pub use cpoly::CPoly;
pub use domains::{Frame, ModelDomain, Point};
pub use error::{FtlError, Result};
pub use expr::SmoothExpr;
pub use field::Field;
pub use jet::{Jet, JetSpace};
pub use num_complex::Complex64 as C64;
