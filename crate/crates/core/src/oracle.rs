//! Reference values by adaptive quadrature of the defining integral.
//!
//! Slow and independent of the contour machinery. The substitution `φ = x³`
//! flattens the near-singular peak at `φ = 0` for close interactions.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{MgfError, Result};
use crate::evaluator::EvalParams;
use crate::quadrature::{integrate_adaptive_with, AdaptiveOptions};

/// Largest `κ` the reference evaluator accepts.
pub const KAPPA_LIMIT: f64 = 1e5;

/// Below this `β₋` the untransformed integrand is too peaked to trust.
pub const UNTRANSFORMED_MIN_BETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Absolute tolerance per adaptive panel.
    pub tol: f64,
    pub max_depth: usize,
    /// Use `e^{+iκ√·}` instead of `e^{−iκ√·}`.
    pub flip_exponent: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { tol: 1e-13, max_depth: 60, flip_exponent: false }
    }
}

/// `e^{∓iκ√q}/√q · cos(mφ)` with `q = 1 − α cos φ = α(β₋² + 2 sin²(φ/2))`.
fn kernel(params: &EvalParams, cfg: &OracleConfig, phi: f64) -> Complex64 {
    let s = (0.5 * phi).sin();
    let root = params.sqrt_alpha() * (params.beta_minus * params.beta_minus + 2.0 * s * s).sqrt();
    let sign = if cfg.flip_exponent { 1.0 } else { -1.0 };
    let wave = Complex64::new(0.0, sign * params.kappa * root).exp();
    wave * ((params.m as f64 * phi).cos() / root)
}

fn check(params: &EvalParams, cfg: &OracleConfig) -> Result<()> {
    params.validate()?;
    if params.kappa > KAPPA_LIMIT {
        return Err(MgfError::OracleLimit { kappa: params.kappa, limit: KAPPA_LIMIT });
    }
    if !(cfg.tol > 0.0) {
        return Err(MgfError::InvalidParameter(format!("oracle tolerance must be > 0, got {}", cfg.tol)));
    }
    Ok(())
}

/// `G_m` by adaptive quadrature in `x` with `φ = x³`, in the scaling requested
/// by `params`.
pub fn eval_reference(params: &EvalParams, cfg: &OracleConfig) -> Result<Complex64> {
    check(params, cfg)?;
    let opts = AdaptiveOptions { rel_tol: 0.0, abs_tol: cfg.tol, max_depth: cfg.max_depth };
    let f = |x: f64| kernel(params, cfg, x * x * x) * (3.0 * x * x);
    let out = integrate_adaptive_with(f, 0.0, PI.cbrt(), &opts)?;
    Ok(params.prefactor() * out.value)
}

/// The same integral directly in `φ`, or `None` when `β₋` is below
/// [`UNTRANSFORMED_MIN_BETA`].
pub fn eval_reference_untransformed(params: &EvalParams, cfg: &OracleConfig) -> Result<Option<Complex64>> {
    check(params, cfg)?;
    if params.beta_minus < UNTRANSFORMED_MIN_BETA {
        return Ok(None);
    }
    let opts = AdaptiveOptions { rel_tol: 0.0, abs_tol: cfg.tol, max_depth: cfg.max_depth };
    let out = integrate_adaptive_with(|phi| kernel(params, cfg, phi), 0.0, PI, &opts)?;
    Ok(Some(params.prefactor() * out.value))
}
