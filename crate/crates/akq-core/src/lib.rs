//! Geometry engine for nonholonomic 2+2 spacetimes and their deformation
//! quantization.
//!
//! The pipeline starts from either a generating function `L(x,y)` (Lagrange or
//! Finsler mode) or an explicit N-adapted block metric, builds the canonical
//! objects of the almost Kahler model (Hessian metric, semispray, nonlinear
//! connection, adapted frames, almost complex and almost symplectic
//! structures), continues with N-adapted linear connections (normal
//! d-connection, Levi-Civita oracle, distortion, torsion and curvature) and
//! ends with the formal Wick algebra machinery: Fedosov operators, the flat
//! connection recursion, star products and the Chern-Weyl / Karabegov forms
//! that encode Einstein-equation data.
//!
//! Everything is exact-symbolic first: tensor components are expression trees
//! differentiated symbolically, then evaluated either to `f64` at a point or
//! to truncated Taylor series when higher jets are required.  Finite
//! differences appear only in test oracles.

pub mod connection;
pub mod expr;
pub mod fedosov;
pub mod forms;
pub mod frames;
pub mod geometry;
pub mod linalg;
pub mod multi_index;
pub mod taylor;

pub use expr::{Expr, Func, Point};
