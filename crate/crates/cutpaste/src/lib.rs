//! Computational verification of a cut-and-paste identity for pencils of
//! cubic surfaces.
//!
//! The library builds seeded, certified pencils `X: alpha G + beta F = 0`
//! in P^3 x P^1 over prime fields, mechanizes the Grothendieck-ring
//! cancellation argument that forces `[X] = [X-tilde]` for two pencils
//! sharing `(G, F)`, and confirms the conclusion numerically by exact point
//! counting over extensions F_{q^k}.
//!
//! Module layout:
//! - [`field`]: arithmetic in F_{q^k} with deterministic moduli and lookup
//!   tables for the hot kernels;
//! - [`poly`]: sparse multivariate polynomials over those fields;
//! - [`seed`]: labelled seed derivation for reproducible randomness;
//! - [`kvar`]: Grothendieck-ring classes, relations, the cancellation
//!   derivation and its independent replayer;
//! - [`pencil`]: certified pencil construction and the chart-level maps;
//! - [`count`]: exact enumeration, fiberwise counting and singularity scans.

pub mod count;
pub mod field;
pub mod kvar;
pub mod pencil;
pub mod poly;
pub mod seed;

pub use count::{Budget, CountError, CountResult, Verdict, DEFAULT_BUDGET};
pub use field::{Field, FieldElem, FieldError};
pub use kvar::{KClass, LPoly, Measure};
pub use pencil::{Pencil, PencilError};
pub use poly::{MPoly, PolyError};
