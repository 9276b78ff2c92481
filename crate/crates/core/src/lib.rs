//! Azimuthal Fourier modes of the 3-D Helmholtz Green's function.
//!
//! The modal Green's function
//!
//! ```text
//! G_m = ∫₀^π e^{−iκ√(1−α cos φ)} / √(1−α cos φ) · cos(mφ) dφ
//! ```
//!
//! is evaluated in O(m) work, independent of the wavenumber κ and of the
//! proximity parameter β₋ = √(1/α − 1). The integral over `[-1, 1]` in
//! `z = cos φ` is deformed onto two steepest-descent contours starting at
//! the foci ±1 and closed by an arc of a Bernstein ellipse on which `T_m` is
//! bounded; the arc contribution is a single Gauss-Legendre sum.
//!
//! [`oracle`] provides a slow adaptive-quadrature reference used for
//! validation.

pub mod chebyshev;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod oracle;
pub mod quadrature;

pub use error::{MgfError, Result};
pub use evaluator::{
    cutoff_mode, decay_bound, eval_batch, eval_modal_green, eval_modal_green_with, modes_needed,
    params_from_geometry, Branch, EvalConfig, EvalParams, GeometricInput, ModalResult, NodesUsed, Scaling,
};
pub use num_complex::Complex64;
pub use oracle::{eval_reference, OracleConfig};
