//! O(m) evaluation of the modal Green's function.
//!
//! With `z = cos φ` the mode is `G_m = ∫₋₁¹ h(z) T_m(z) / (√(1−z)√(1+z)) dz`,
//! `h(z) = e^{−iκ√(1−αz)}/√(1−αz)`. The interval is deformed onto the
//! steepest-descent contours γ₁, γ₂ leaving the foci `±1` and the upper arc of
//! the Bernstein ellipse on which `|T_m| ≤ M_bound`:
//!
//! ```text
//! G_m = (4/√α) ∫ F₁/√(τ²+2iβ₋) dτ + (4i/√α) ∫ F₂/√(τ²+2iβ₊) dτ − Σ H(v_i) T_m(v_i) v_i' w_i
//! ```
//!
//! The contour integrands are smooth apart from the `√(τ²+2iβ₋)` factor, which
//! becomes nearly singular at close range and is then integrated exactly
//! against a Taylor expansion of `F₁`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;

use crate::chebyshev::{cheb_eval_near_focus, cheb_fit, cheb_on_ellipse_log, cheb_to_taylor, Side, MAX_TAYLOR_DEGREE};
use crate::error::{MgfError, Result};
use crate::geometry::{intersect, make_ellipse, tau_cutoff, BernsteinEllipse, GustafssonContour};
use crate::quadrature::{gl_rule, integrate_adaptive_with, monomial_sqrt_integrals, AdaptiveOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// The bare integral over `[0, π]`.
    #[default]
    Raw,
    /// The integral times `1/(4π²R₀)`.
    Physical,
}

/// Dimensionless inputs. `β₋` rather than `α` is primary so close interactions
/// keep full relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub m: u64,
    /// `κ = kR₀`.
    pub kappa: f64,
    pub beta_minus: f64,
    /// Physical length scale `R₀`, used only by [`Scaling::Physical`].
    pub r0: f64,
    pub scaling: Scaling,
}

impl EvalParams {
    /// Raw-scaled parameters with `R₀ = 1`. The kernel is even in `φ`, so a
    /// negative mode is replaced by `|m|`.
    pub fn new(m: i64, kappa: f64, beta_minus: f64) -> Self {
        EvalParams { m: m.unsigned_abs(), kappa, beta_minus, r0: 1.0, scaling: Scaling::Raw }
    }

    pub fn with_scaling(self, scaling: Scaling, r0: f64) -> Self {
        EvalParams { scaling, r0, ..self }
    }

    /// `α = 1/(β₋² + 1)`.
    pub fn alpha(&self) -> f64 {
        let s = self.sqrt_alpha();
        s * s
    }

    pub fn sqrt_alpha(&self) -> f64 {
        1.0 / self.beta_minus.hypot(1.0)
    }

    /// `β₊ = √(β₋² + 2)`.
    pub fn beta_plus(&self) -> f64 {
        self.beta_minus.hypot(SQRT_2)
    }

    pub fn prefactor(&self) -> f64 {
        match self.scaling {
            Scaling::Raw => 1.0,
            Scaling::Physical => 1.0 / (4.0 * PI * PI * self.r0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(MgfError::InvalidParameter(format!("kappa must be finite and ≥ 0, got {}", self.kappa)));
        }
        if !(self.beta_minus > 0.0 && self.beta_minus.is_finite()) {
            return Err(MgfError::InvalidParameter(format!(
                "beta_minus must be finite and > 0, got {}",
                self.beta_minus
            )));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(MgfError::InvalidParameter(format!("r0 must be finite and > 0, got {}", self.r0)));
        }
        Ok(())
    }
}

/// Source and target in cylindrical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricInput {
    pub r: f64,
    pub r_prime: f64,
    pub z: f64,
    pub z_prime: f64,
    /// Wavenumber, inverse length.
    pub k: f64,
}

/// `κ = kR₀`, `β₋ = Δ/√ρ₀` with `Δ` the meridian-plane distance, `ρ₀ = 2rr′`
/// and `R₀² = r² + r′² + (z − z′)²`.
pub fn params_from_geometry(g: &GeometricInput) -> Result<EvalParams> {
    let vals = [g.r, g.r_prime, g.z, g.z_prime, g.k];
    if vals.iter().any(|v| !v.is_finite()) || g.r < 0.0 || g.r_prime < 0.0 || g.k < 0.0 {
        return Err(MgfError::InvalidParameter(format!("invalid geometry {g:?}")));
    }
    let rho0 = 2.0 * g.r * g.r_prime;
    if rho0 == 0.0 {
        return Err(MgfError::InvalidParameter("source or target on the axis: rho0 = 0".into()));
    }
    let dz = g.z - g.z_prime;
    let delta = (g.r - g.r_prime).hypot(dz);
    if delta == 0.0 {
        return Err(MgfError::InvalidParameter("coincident source and target: delta = 0".into()));
    }
    let r0 = g.r.hypot(g.r_prime).hypot(dz);
    Ok(EvalParams { m: 0, kappa: g.k * r0, beta_minus: delta / rho0.sqrt(), r0, scaling: Scaling::Raw })
}

/// Numerical knobs. Internal tolerances default to `M_bound·ε`, the
/// cancellation floor of the arc sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Bound on `|T_m|` over the ellipse; fixes `ρ = M_bound^(1/m)`.
    pub m_bound: f64,
    /// Arc nodes per unit of `m`.
    pub node_factor: f64,
    /// Contour truncation level: the wave factor is below `eps` past `τ_c`.
    pub eps: f64,
    /// Relative tolerance of the contour integrals and the Taylor fit.
    pub tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { m_bound: 100.0, node_factor: 5.0, eps: f64::EPSILON, tol: 100.0 * f64::EPSILON }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m_bound > 1.0
            && self.m_bound.is_finite()
            && self.node_factor > 0.0
            && self.node_factor.is_finite()
            && self.eps > 0.0
            && self.eps < 1.0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MgfError::InvalidParameter(format!("invalid configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// γ₁ integrated adaptively over its whole range.
    Smooth,
    /// γ₁ split at `τ₀`, with exact monomial integrals below it.
    NearSingular,
}

/// Integrand evaluations (contours) or nodes (arc) per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodesUsed {
    pub gamma1: usize,
    pub gamma2: usize,
    pub arc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalResult {
    /// `prefactor · (gamma1_part + gamma2_part + arc_part)`.
    pub value: Complex64,
    pub gamma1_part: Complex64,
    pub gamma2_part: Complex64,
    pub arc_part: Complex64,
    pub nodes_used: NodesUsed,
    pub branch: Branch,
}

/// `r₊ = (κ/√2)√(1 + √(1 − α²))`; modes above it decay geometrically.
pub fn cutoff_mode(kappa: f64, alpha: f64) -> f64 {
    let s = ((1.0 - alpha) * (1.0 + alpha)).sqrt();
    kappa / SQRT_2 * (1.0 + s).sqrt()
}

/// `ln ρ` for `ρ = 1 + β₋² + β₋√(β₋² + 2)`, the Bernstein parameter of the
/// kernel singularity `z = 1/α`. `|G_m|` falls by `1/ρ` per mode above `r₊`.
fn ln_decay_rate(beta_minus: f64) -> f64 {
    (beta_minus * (beta_minus + beta_minus.hypot(SQRT_2))).ln_1p()
}

/// First mode at or above `⌊r₊⌋` where the decay bound from
/// `|G_{⌊r₊⌋}| = g_at_rplus` falls to `eps`. Below `β₋ = 1/(2√2)` the rate is the first-order
/// form `ln(1 − 2√2β₋)/2`; above it that logarithm is undefined and the exact
/// rate `ln ρ` is used.
pub fn modes_needed(eps: f64, params: &EvalParams, g_at_rplus: f64) -> u64 {
    let floor_r = cutoff_mode(params.kappa, params.alpha()).floor();
    let b = params.beta_minus;
    let num = eps.ln() - g_at_rplus.ln();
    let rate = if 2.0 * SQRT_2 * b < 1.0 { 0.5 * (-2.0 * SQRT_2 * b).ln_1p() } else { -ln_decay_rate(b) };
    let extra = (num / rate).ceil();
    (floor_r + extra.max(0.0)) as u64
}

/// `g_at_rplus · ρ^{−(m − ⌊r₊⌋)}`, written equivalently as
/// `g·((1 − s)/(1 + s))^{(m−⌊r₊⌋)/2}` with `s = β₋√(β₋²+2)/(1+β₋²)`.
pub fn decay_bound(g_at_rplus: f64, beta_minus: f64, m: u64, r_plus: f64) -> f64 {
    let d = m as f64 - r_plus.floor();
    g_at_rplus * (-d * ln_decay_rate(beta_minus)).exp()
}

/// Gauss-Legendre rule on the upper arc of `E_ρ` between the contour
/// intersections, traversed with increasing `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcQuadrature {
    pub ellipse: BernsteinEllipse,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub thetas: Vec<f64>,
    pub nodes: Vec<Complex64>,
    pub derivs: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub n: usize,
}

/// Ellipse for mode `m`; mode 0 borrows the `m = 1` ellipse since `T_0` is
/// bounded everywhere.
fn ellipse_for(m: u64, m_bound: f64) -> BernsteinEllipse {
    make_ellipse(m.max(1), m_bound)
}

/// `n` rounded up to one of 32 sizes per octave, at most `n/32` more nodes.
/// Neighbouring modes then share cached rules.
pub fn arc_rule_size(n: usize) -> usize {
    let step = 1usize << (usize::BITS - n.leading_zeros()).saturating_sub(6);
    n.div_ceil(step) * step
}

/// Arc rule with `arc_rule_size(max(⌈node_factor·m⌉, 16))` nodes.
pub fn build_arc_quadrature(params: &EvalParams, m_bound: f64, node_factor: f64) -> ArcQuadrature {
    let e = ellipse_for(params.m, m_bound);
    let p1 = intersect(&GustafssonContour::gamma1(params.beta_minus), &e);
    let p2 = intersect(&GustafssonContour::gamma2(params.beta_minus), &e);
    let n = arc_rule_size(((node_factor * params.m as f64).ceil() as usize).max(16));
    let rule = gl_rule(n);
    let half = 0.5 * (p2.theta - p1.theta);
    let mut thetas = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for ((x, off), w) in rule.nodes.iter().zip(&rule.offsets).zip(&rule.weights) {
        // Measured from the nearer endpoint, so nodes beside the large
        // endpoint values of the integrand carry absolute error far below ε.
        let theta = if *x < 0.0 {
            p1.theta + half * ((1.0 + x) + off)
        } else {
            p2.theta - half * ((1.0 - x) - off)
        };
        let (v, dv) = e.point(theta);
        thetas.push(theta);
        nodes.push(v);
        derivs.push(dv);
        weights.push(half * w);
    }
    ArcQuadrature { ellipse: e, theta_lo: p1.theta, theta_hi: p2.theta, thetas, nodes, derivs, weights, n }
}

/// The phase `e^{−iκ√α β₋}` shared by every component. The components carry
/// only the remaining phase, which is small and cancellation-free, so phase
/// rounding does not grow with `κ` inside the cancelling sum.
fn common_phase(params: &EvalParams) -> Complex64 {
    Complex64::from_polar(1.0, -params.kappa * params.beta_minus * params.sqrt_alpha())
}

/// `Σ H(v_i) T_m(v_i) v_i' w_i` with
/// `H(v) = e^{−iκ√(1−αv)}/(√(1−αv)√(1−v)√(1+v))`. On the upper arc
/// `Im(1 − v) < 0` and `Im(1 + v) > 0`, so the principal roots are continuous.
pub fn arc_sum(params: &EvalParams, arc: &ArcQuadrature) -> Result<Complex64> {
    let e = &arc.ellipse;
    let sa = params.sqrt_alpha();
    let b = params.beta_minus;
    let beta2 = Complex64::new(b * b, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..arc.n {
        let theta = arc.thetas[i];
        let om = e.one_minus(theta);
        let op = e.one_plus(theta);
        // 1 − αv = α(β₋² + 1 − v)
        let s = (beta2 + om).sqrt();
        let root = sa * s;
        // √(1 − αv) − √α β₋ without cancellation
        let excess = sa * om / (s + b);
        let wave = (-I * params.kappa * excess).exp();
        let t = cheb_on_ellipse_log(params.m, e.ln_rho, theta);
        let term = wave * t * arc.derivs[i] * arc.weights[i] / (root * om.sqrt() * op.sqrt());
        if !(term.re.is_finite() && term.im.is_finite()) {
            return Err(MgfError::NonFinite { location: format!("arc node {i} (theta = {theta:e})") });
        }
        sum += term;
    }
    Ok(common_phase(params) * sum)
}

fn adaptive_opts(cfg: &EvalConfig) -> AdaptiveOptions {
    AdaptiveOptions { rel_tol: cfg.tol, abs_tol: 0.0, max_depth: 60 }
}

/// `F₁(τ) = e^{−iκ√(1−αγ₁(τ))} T_m(γ₁(τ)) / √(1 + γ₁(τ))`, using
/// `γ₁(τ) = 1 + w` with `w = τ⁴ + 2iβ₋τ²`.
/// The common phase is left out.
fn f1(params: &EvalParams, c: &GustafssonContour, tau: f64) -> Complex64 {
    let t2 = tau * tau;
    let w = Complex64::new(t2 * t2, 2.0 * c.beta * t2);
    let wave = (-params.kappa * c.sqrt_alpha * t2).exp();
    wave * cheb_eval_near_focus(params.m, w, Side::PlusOne) / (w + 2.0).sqrt()
}

/// `F₂(τ) = e^{−iκ√(1−αγ₂(τ))} T_m(γ₂(τ)) / √(1 − γ₂(τ))`, using
/// `γ₂(τ) = −1 − w` with `w = −(τ⁴ + 2iβ₊τ²)`.
/// The common phase is left out, leaving `κ√α(β₊ − β₋) = 2κ√α/(β₊ + β₋)`.
fn f2(params: &EvalParams, c: &GustafssonContour, tau: f64) -> Complex64 {
    let t2 = tau * tau;
    let w = -Complex64::new(t2 * t2, 2.0 * c.beta * t2);
    let k = params.kappa * c.sqrt_alpha;
    let wave = Complex64::new(-k * t2, -2.0 * k / (c.beta + params.beta_minus)).exp();
    wave * cheb_eval_near_focus(params.m, w, Side::MinusOne) / (w + 2.0).sqrt()
}

/// `(4i/√α) ∫₀^{τ_end} F₂/√(τ² + 2iβ₊) dτ` with `τ_end = min(τ₂, τ_c)`.
/// `β₊ > √2` keeps the integrand smooth.
pub fn gamma2_integral(params: &EvalParams, tau2: f64, tau_c: f64, cfg: &EvalConfig) -> Result<(Complex64, usize)> {
    let c = GustafssonContour::gamma2(params.beta_minus);
    let shift = Complex64::new(0.0, 2.0 * c.beta);
    let g = |tau: f64| f2(params, &c, tau) / (shift + tau * tau).sqrt();
    let out = integrate_adaptive_with(g, 0.0, tau2.min(tau_c), &adaptive_opts(cfg))?;
    Ok((4.0 * I * params.beta_minus.hypot(1.0) * common_phase(params) * out.value, out.evaluations))
}

/// Halvings tried when looking for an interval `[0, τ₀]` on which `F₁` is
/// resolved by a degree-16 Chebyshev fit.
const MAX_HALVINGS: usize = 40;

/// `(4/√α) ∫₀^{τ_end} F₁/√(τ² + 2iβ₋) dτ` with `τ_end = min(τ₁, τ_c)`.
///
/// When `2β₋ < τ_end²/16` the denominator nearly vanishes at `τ = 0`. The
/// integral over `[0, τ₀]` then uses a Taylor expansion of `F₁` against the
/// exact moments `∫ τⁿ/√(τ² + 2iβ₋)`, where `τ₀` is the largest `τ_end/2^j`
/// on which the fit is resolved. The moment recurrence is stable only while
/// `2β₋ < τ₀²/4`; if halving breaks that first, `F₁` varies on the scale of
/// `√β₋` and the adaptive rule handles the whole range.
pub fn gamma1_integral(
    params: &EvalParams,
    tau1: f64,
    tau_c: f64,
    cfg: &EvalConfig,
) -> Result<(Complex64, Branch, usize)> {
    let tau_end = tau1.min(tau_c);
    let scale = 4.0 * params.beta_minus.hypot(1.0) * common_phase(params);
    if 2.0 * params.beta_minus < tau_end * tau_end / 16.0 {
        if let Some((v, n)) = gamma1_split(params, tau_end, cfg)? {
            return Ok((scale * v, Branch::NearSingular, n));
        }
    }
    let (v, n) = gamma1_smooth(params, tau_end, cfg)?;
    Ok((scale * v, Branch::Smooth, n))
}

/// `∫₀^{τ_end} F₁/√(τ² + 2iβ₋) dτ` adaptively, without the common prefactor.
fn gamma1_smooth(params: &EvalParams, tau_end: f64, cfg: &EvalConfig) -> Result<(Complex64, usize)> {
    let c = GustafssonContour::gamma1(params.beta_minus);
    let shift = Complex64::new(0.0, 2.0 * c.beta);
    let g = |tau: f64| f1(params, &c, tau) / (shift + tau * tau).sqrt();
    let out = integrate_adaptive_with(g, 0.0, tau_end, &adaptive_opts(cfg))?;
    Ok((out.value, out.evaluations))
}

/// The same integral split at `τ₀`, or `None` if no admissible `τ₀` resolves
/// `F₁`.
fn gamma1_split(params: &EvalParams, tau_end: f64, cfg: &EvalConfig) -> Result<Option<(Complex64, usize)>> {
    let c = GustafssonContour::gamma1(params.beta_minus);
    let two_beta = 2.0 * c.beta;
    let shift = Complex64::new(0.0, two_beta);
    let f = |tau: f64| f1(params, &c, tau);
    let g = |tau: f64| f(tau) / (shift + tau * tau).sqrt();
    let mut tau0 = tau_end;
    let mut evals = 0;
    for _ in 0..=MAX_HALVINGS {
        if !(two_beta < tau0 * tau0 / 4.0) {
            return Ok(None);
        }
        let fit = cheb_fit(f, 0.0, tau0, MAX_TAYLOR_DEGREE)?;
        evals += MAX_TAYLOR_DEGREE + 1;
        let max = fit.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let trailing = fit.coeffs[MAX_TAYLOR_DEGREE].norm().max(fit.coeffs[MAX_TAYLOR_DEGREE - 1].norm());
        if trailing < cfg.tol * max {
            let taylor = cheb_to_taylor(&fit)?;
            let moments = monomial_sqrt_integrals(Complex64::new(1.0, 0.0), shift, tau0, MAX_TAYLOR_DEGREE)?;
            let inner: Complex64 = taylor.coeffs.iter().zip(&moments.values).map(|(a, m)| a * m).sum();
            let outer = integrate_adaptive_with(g, tau0, tau_end, &adaptive_opts(cfg))?;
            return Ok(Some((inner + outer.value, evals + outer.evaluations)));
        }
        tau0 *= 0.5;
    }
    Err(MgfError::TauSearchExhausted(MAX_HALVINGS))
}

/// [`eval_modal_green_with`] under the default configuration.
pub fn eval_modal_green(params: &EvalParams) -> Result<ModalResult> {
    eval_modal_green_with(params, &EvalConfig::default())
}

/// `G_m` in the scaling requested by `params`. Deterministic: equal inputs
/// give bitwise equal outputs.
pub fn eval_modal_green_with(params: &EvalParams, cfg: &EvalConfig) -> Result<ModalResult> {
    params.validate()?;
    cfg.validate()?;
    let e = ellipse_for(params.m, cfg.m_bound);
    let p1 = intersect(&GustafssonContour::gamma1(params.beta_minus), &e);
    let p2 = intersect(&GustafssonContour::gamma2(params.beta_minus), &e);
    let tau_c = tau_cutoff(params.kappa, params.sqrt_alpha(), cfg.eps);

    let (gamma1_part, branch, n1) = gamma1_integral(params, p1.tau, tau_c, cfg).map_err(|e| e.within("gamma1"))?;
    let (gamma2_part, n2) = gamma2_integral(params, p2.tau, tau_c, cfg).map_err(|e| e.within("gamma2"))?;
    let arc = build_arc_quadrature(params, cfg.m_bound, cfg.node_factor);
    let arc_part = -arc_sum(params, &arc).map_err(|e| e.within("arc"))?;

    let value = params.prefactor() * (gamma1_part + gamma2_part + arc_part);
    Ok(ModalResult {
        value,
        gamma1_part,
        gamma2_part,
        arc_part,
        nodes_used: NodesUsed { gamma1: n1, gamma2: n2, arc: arc.n },
        branch,
    })
}

/// Evaluates every entry on up to `workers` threads. Results are in input
/// order and identical to sequential evaluation; a failure affects only its
/// own entry.
pub fn eval_batch(params: &[EvalParams], cfg: &EvalConfig, workers: usize) -> Vec<Result<ModalResult>> {
    let workers = workers.max(1).min(params.len());
    if workers <= 1 {
        return params.iter().map(|p| eval_modal_green_with(p, cfg)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ModalResult>>>> = params.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= params.len() {
                    break;
                }
                let r = eval_modal_green_with(&params[i], cfg);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every index is claimed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::intersect;
    use crate::oracle::{eval_reference, OracleConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn oracle(p: &EvalParams) -> Complex64 {
        eval_reference(p, &OracleConfig::default()).unwrap()
    }

    #[test]
    fn geometry_parameters() {
        let g = GeometricInput { r: 1.0, r_prime: 1.0, z: 0.0, z_prime: 0.0, k: 1.0 };
        assert!(params_from_geometry(&g).is_err());
        let g = GeometricInput { r: 0.0, r_prime: 1.0, z: 0.0, z_prime: 1.0, k: 1.0 };
        assert!(params_from_geometry(&g).is_err());
        let g = GeometricInput { r: 1.0, r_prime: 1.0, z: 0.0, z_prime: 1.0, k: 0.0 };
        let p = params_from_geometry(&g).unwrap();
        assert!((p.r0 - 3f64.sqrt()).abs() <= 1e-15);
        assert!((p.beta_minus - 0.5f64.sqrt()).abs() <= 2e-16);
        assert_eq!(p.kappa, 0.0);
        let g = GeometricInput { r: 2.0, r_prime: 0.5, z: 1.0, z_prime: -1.0, k: 3.0 };
        let p = params_from_geometry(&g).unwrap();
        assert!((p.kappa - 3.0 * 8.25f64.sqrt()).abs() <= 1e-14);
    }

    #[test]
    fn cutoff_mode_cases() {
        assert!((cutoff_mode(100.0, 1.0 - 1e-15) - 100.0 / SQRT_2).abs() <= 1e-4);
        assert!((cutoff_mode(100.0, 1.0 - 1e-15) - 70.71).abs() <= 0.01);
        assert!((cutoff_mode(7.0, 0.0) - 7.0).abs() <= 1e-14);
        assert_eq!(cutoff_mode(0.0, 0.3), 0.0);
    }

    #[test]
    fn modes_needed_cases() {
        let p = EvalParams::new(0, 100.0, 1e-3);
        let floor_r = cutoff_mode(100.0, p.alpha()).floor() as u64;
        assert_eq!(modes_needed(1e-9, &p, 1e-9), floor_r);
        assert_eq!(modes_needed(1e-9, &p, 1e-12), floor_r);
        // Growth like 1/β₋ at close range.
        let m3 = modes_needed(1e-12, &EvalParams::new(0, 0.0, 1e-3), 1.0) as f64;
        let m4 = modes_needed(1e-12, &EvalParams::new(0, 0.0, 1e-4), 1.0) as f64;
        assert!((m4 / m3 - 10.0).abs() <= 0.1, "{m3} {m4}");
        // Past the first-order range the exact rate takes over.
        let p = EvalParams::new(0, 10.0, 2.0);
        let m = modes_needed(1e-12, &p, 1.0);
        let floor_r = cutoff_mode(10.0, p.alpha()).floor();
        let bound = decay_bound(1.0, 2.0, m, floor_r);
        assert!(bound <= 1e-12 && decay_bound(1.0, 2.0, m - 1, floor_r) > 1e-12);
    }

    /// First `m ≥ lo` with `|G_m| < eps`, by bisection on oracle values.
    fn first_below(kappa: f64, beta: f64, eps: f64, mut lo: u64, mut hi: u64) -> u64 {
        assert!(oracle(&EvalParams::new(hi as i64, kappa, beta)).norm() < eps);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if oracle(&EvalParams::new(mid as i64, kappa, beta)).norm() < eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn modes_needed_matches_oracle_scan() {
        let (kappa, beta, eps) = (100.0, 1e-3, 1e-12);
        let p = EvalParams::new(0, kappa, beta);
        let r_plus = cutoff_mode(kappa, p.alpha());
        let g = oracle(&EvalParams::new(r_plus.floor() as i64, kappa, beta)).norm();
        let m = modes_needed(eps, &p, g);
        let truth = first_below(kappa, beta, eps, r_plus.floor() as u64, 2 * m);
        let ratio = (m as f64 - r_plus) / (truth as f64 - r_plus);
        assert!((0.5..=2.0).contains(&ratio), "estimate {m}, oracle {truth}");
    }

    #[test]
    fn decay_bound_cases() {
        assert_eq!(decay_bound(0.7, 0.3, 12, 12.4), 0.7);
        assert!(decay_bound(1.0, 1e8, 13, 12.4) < 1e-15);
        assert!(decay_bound(1.0, 1e8, 40, 12.4) < 1e-300);
        // ((1 − s)/(1 + s))^{d/2} written out
        let (b, d) = (0.37f64, 9u64);
        let s = b * (b * b + 2.0).sqrt() / (1.0 + b * b);
        let direct = ((1.0 - s) / (1.0 + s)).powf(d as f64 / 2.0);
        assert!((decay_bound(1.0, b, 20 + d, 20.5) - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn decay_bound_holds_on_oracle_spectrum() {
        let (kappa, beta) = (50.0, 0.1);
        let p = EvalParams::new(0, kappa, beta);
        let r_plus = cutoff_mode(kappa, p.alpha());
        let g = oracle(&EvalParams::new(r_plus.floor() as i64, kappa, beta)).norm();
        for m in (r_plus.floor() as u64 + 1)..=(r_plus.floor() as u64 + 60) {
            let gm = oracle(&EvalParams::new(m as i64, kappa, beta)).norm();
            assert!(gm <= decay_bound(g, beta, m, r_plus) * (1.0 + 1e-6), "m={m}");
        }
    }

    #[test]
    fn arc_rule_sizes_and_nodes() {
        let p = EvalParams::new(1000, 3.0, 0.01);
        let arc = build_arc_quadrature(&p, 100.0, 5.0);
        assert_eq!(arc.n, 5120);
        for v in &arc.nodes {
            assert!(arc.ellipse.residual(*v).abs() <= 1e-12);
            assert!(v.im > 0.0);
        }
        assert!(arc.theta_lo < arc.theta_hi);
        assert!(arc.thetas.windows(2).all(|w| w[0] < w[1]));
        let wsum: f64 = arc.weights.iter().sum();
        assert!((wsum - (arc.theta_hi - arc.theta_lo)).abs() <= 1e-13);
        assert_eq!(build_arc_quadrature(&EvalParams::new(1, 3.0, 0.01), 100.0, 5.0).n, 16);
        assert_eq!(build_arc_quadrature(&EvalParams::new(0, 3.0, 0.01), 100.0, 5.0).n, 16);
    }

    #[test]
    fn arc_sizes_round_up_slightly() {
        for n in 1..=64 {
            assert_eq!(arc_rule_size(n), n);
        }
        assert_eq!(arc_rule_size(65), 66);
        assert_eq!(arc_rule_size(5000), 5120);
        assert_eq!(arc_rule_size(5120), 5120);
        let mut prev = 0;
        let mut distinct = 0;
        for n in 1..=100_000usize {
            let s = arc_rule_size(n);
            assert!(s >= n && 32 * (s - n) <= n, "{n} -> {s}");
            assert!(s >= prev);
            distinct += usize::from(s != prev);
            prev = s;
        }
        assert!(distinct <= 64 + 32 * 11, "{distinct}");
    }

    #[test]
    fn arc_square_roots_are_continuous() {
        for (m, beta) in [(10u64, 1e-6), (300, 0.5), (1, 40.0)] {
            let p = EvalParams::new(m as i64, 1.0, beta);
            let arc = build_arc_quadrature(&p, 100.0, 5.0);
            let e = arc.ellipse;
            let steps = 10 * arc.n;
            let mut prev: Option<[Complex64; 3]> = None;
            for j in 0..=steps {
                let theta = arc.theta_lo + (arc.theta_hi - arc.theta_lo) * j as f64 / steps as f64;
                let om = e.one_minus(theta);
                let roots = [om.sqrt(), e.one_plus(theta).sqrt(), (om + beta * beta).sqrt()];
                if let Some(q) = prev {
                    for k in 0..3 {
                        // A branch flip would give a relative jump near 2.
                        assert!((roots[k] - q[k]).norm() <= 0.5 * roots[k].norm().max(q[k].norm()), "m={m} k={k}");
                    }
                }
                prev = Some(roots);
            }
        }
    }

    #[test]
    fn arc_vanishes_for_huge_wavenumber() {
        let p = EvalParams::new(10, 1e12, 1.0);
        let r = eval_modal_green(&p).unwrap();
        assert!(r.arc_part.norm() <= 1e-300);
        assert!(r.value.norm() > 0.0);
    }

    #[test]
    fn totals_match_oracle() {
        for (m, kappa, beta, tol) in [(10, 1e4, 1.0, 1e-12), (10, 1e4, 1e-21, 1e-10), (1000, 1e4, 1e-12, 1e-10)] {
            let p = EvalParams::new(m, kappa, beta);
            let r = eval_modal_green(&p).unwrap();
            let o = oracle(&p);
            assert!((r.value - o).norm() <= tol, "m={m} beta={beta}: {} vs {o}", r.value);
        }
    }

    #[test]
    fn branch_selection() {
        assert_eq!(eval_modal_green(&EvalParams::new(10, 5.0, 1.0)).unwrap().branch, Branch::Smooth);
        assert_eq!(eval_modal_green(&EvalParams::new(1000, 1e4, 1e-12)).unwrap().branch, Branch::NearSingular);
    }

    #[test]
    fn branches_agree_where_split_engages() {
        let cfg = EvalConfig::default();
        let mut compared = 0;
        for m in [1u64, 10, 100, 1000] {
            for kappa in [0.0, 10.0, 1e3] {
                let e = make_ellipse(m, cfg.m_bound);
                let tau_end = |p: &EvalParams| {
                    let tau1 = intersect(&GustafssonContour::gamma1(p.beta_minus), &e).tau;
                    tau1.min(tau_cutoff(kappa, p.sqrt_alpha(), cfg.eps))
                };
                let probe = EvalParams::new(m as i64, kappa, 1e-9);
                let t = tau_end(&probe);
                // Largest β₋ on a ×0.5 ladder from the selection threshold
                // at which the split path resolves its fit.
                let mut beta = t * t / 32.0;
                for _ in 0..60 {
                    let p = EvalParams::new(m as i64, kappa, beta);
                    let t = tau_end(&p);
                    if let Some((split, _)) = gamma1_split(&p, t, &cfg).unwrap() {
                        let (smooth, _) = gamma1_smooth(&p, t, &cfg).unwrap();
                        assert!((smooth - split).norm() <= 1e-11 * smooth.norm(), "m={m} kappa={kappa} beta={beta:e}");
                        compared += 1;
                        break;
                    }
                    beta *= 0.5;
                }
            }
        }
        assert_eq!(compared, 12);
    }

    #[test]
    fn far_field_limits() {
        let r = eval_modal_green(&EvalParams::new(0, 0.0, 1e8)).unwrap();
        assert!((r.value - PI).norm() <= 1e-12);
        let p = EvalParams::new(0, 0.0, 1e8).with_scaling(Scaling::Physical, 0.25);
        let r = eval_modal_green(&p).unwrap();
        assert!((r.value - 1.0 / (4.0 * PI * 0.25)).norm() <= 1e-12);
        for m in [1, 3, 50, 1000] {
            for kappa in [0.0, 2.0, 1e3] {
                let r = eval_modal_green(&EvalParams::new(m, kappa, 1e8)).unwrap();
                assert!(r.value.norm() <= 1e-12, "m={m} kappa={kappa}: {}", r.value);
            }
        }
    }

    #[test]
    fn parts_assemble_to_value() {
        let p = EvalParams::new(7, 12.0, 0.2).with_scaling(Scaling::Physical, 3.0);
        let r = eval_modal_green(&p).unwrap();
        assert_eq!(r.value, p.prefactor() * (r.gamma1_part + r.gamma2_part + r.arc_part));
        let raw = eval_modal_green(&EvalParams::new(7, 12.0, 0.2)).unwrap();
        assert_eq!(raw.arc_part, r.arc_part);
        assert!(r.nodes_used.gamma1 > 0 && r.nodes_used.gamma2 > 0 && r.nodes_used.arc == 35);
    }

    #[test]
    fn negative_modes_fold() {
        let a = eval_modal_green(&EvalParams::new(-17, 3.0, 0.1)).unwrap();
        let b = eval_modal_green(&EvalParams::new(17, 3.0, 0.1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(eval_modal_green(&EvalParams::new(1, -1.0, 0.1)).is_err());
        assert!(eval_modal_green(&EvalParams::new(1, 1.0, 0.0)).is_err());
        assert!(eval_modal_green(&EvalParams::new(1, f64::NAN, 0.1)).is_err());
        let cfg = EvalConfig { m_bound: 1.0, ..EvalConfig::default() };
        assert!(eval_modal_green_with(&EvalParams::new(1, 1.0, 0.1), &cfg).is_err());
    }

    fn random_params(n: usize, seed: u64) -> Vec<EvalParams> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                EvalParams::new(rng.gen_range(0..300), 10f64.powf(rng.gen_range(-3.0..4.0)), 10f64.powf(rng.gen_range(-12.0..3.0)))
            })
            .collect()
    }

    #[test]
    fn batch_is_deterministic() {
        let params = random_params(100, 7);
        let cfg = EvalConfig::default();
        let one = eval_batch(&params, &cfg, 1);
        let eight = eval_batch(&params, &cfg, 8);
        assert_eq!(one.len(), 100);
        for (a, b) in one.iter().zip(&eight) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert_eq!(a.value.re.to_bits(), b.value.re.to_bits());
            assert_eq!(a.value.im.to_bits(), b.value.im.to_bits());
        }
        assert!(eval_batch(&[], &cfg, 8).is_empty());
    }

    #[test]
    fn batch_reports_errors_per_item() {
        let params = [EvalParams::new(3, 1.0, 0.1), EvalParams::new(3, 1.0, -1.0), EvalParams::new(4, 1.0, 0.1)];
        let out = eval_batch(&params, &EvalConfig::default(), 2);
        assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
        assert_eq!(*out[2].as_ref().unwrap(), eval_modal_green(&params[2]).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn geometry_identities(r in 1e-3f64..10.0, rp in 1e-3f64..10.0, z in -5.0f64..5.0, zp in -5.0f64..5.0) {
            prop_assume!(r != rp || z != zp);
            let p = params_from_geometry(&GeometricInput { r, r_prime: rp, z, z_prime: zp, k: 1.0 }).unwrap();
            let rho0 = 2.0 * r * rp;
            let delta2 = (r - rp).powi(2) + (z - zp).powi(2);
            prop_assert!((p.beta_minus * p.beta_minus * rho0 - delta2).abs() <= 1e-13 * delta2);
            let r02 = p.r0 * p.r0;
            if delta2 / r02 > 1e-8 {
                prop_assert!((delta2 - (r02 - rho0)).abs() <= 1e-12 * delta2.max(f64::EPSILON * r02 / 1e-4));
            }
        }

        #[test]
        fn laplace_kernel_is_real(m in 0i64..=1000, log_b in -12.0f64..6.0) {
            let r = eval_modal_green(&EvalParams::new(m, 0.0, 10f64.powf(log_b))).unwrap();
            // Decayed modes sit at the absolute floor, so the bound is relative
            // only once |G| exceeds 1.
            prop_assert!(r.value.im.abs() <= 1e-12 * r.value.norm().max(1.0));
        }

        #[test]
        fn conjugation_matches_flipped_oracle(m in 0i64..200, kappa in 0.0f64..300.0, log_b in -6.0f64..2.0) {
            let p = EvalParams::new(m, kappa, 10f64.powf(log_b));
            let r = eval_modal_green(&p).unwrap();
            let flipped = eval_reference(&p, &OracleConfig { flip_exponent: true, ..OracleConfig::default() }).unwrap();
            prop_assert!((r.value.conj() - flipped).norm() <= 1e-10);
        }

        #[test]
        fn evaluation_is_bitwise_repeatable(m in 0i64..2000, log_k in -3.0f64..6.0, log_b in -15.0f64..6.0) {
            let p = EvalParams::new(m, 10f64.powf(log_k), 10f64.powf(log_b));
            let a = eval_modal_green(&p).unwrap();
            let b = eval_modal_green(&p).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
