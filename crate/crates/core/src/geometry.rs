//! Bernstein ellipses, steepest-descent contours from the foci `±1`, and
//! their intersections.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{MgfError, Result};

/// The ellipse `E_ρ = {a cos θ + i b sin θ}` with foci `±1` on which
/// `|T_m| ≤ M_bound`, i.e. `ρ = M_bound^(1/m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinEllipse {
    pub m: u64,
    pub m_bound: f64,
    /// `ln ρ = ln(M_bound)/m`.
    pub ln_rho: f64,
    pub a: f64,
    pub b: f64,
    /// `a − 1`, formed without subtraction.
    pub a_minus_1: f64,
}

/// Ellipse on which `|T_m|` stays below `m_bound`.
pub fn make_ellipse(m: u64, m_bound: f64) -> BernsteinEllipse {
    assert!(m >= 1 && m_bound > 1.0, "ellipse needs m ≥ 1 and M_bound > 1");
    let ln_rho = m_bound.ln() / m as f64;
    let b = ln_rho.sinh();
    let a = b.hypot(1.0);
    BernsteinEllipse { m, m_bound, ln_rho, a, b, a_minus_1: b * b / (a + 1.0) }
}

impl BernsteinEllipse {
    /// `(z, dz/dθ)` at parameter `θ`.
    pub fn point(&self, theta: f64) -> (Complex64, Complex64) {
        let (s, c) = theta.sin_cos();
        (Complex64::new(self.a * c, self.b * s), Complex64::new(-self.a * s, self.b * c))
    }

    /// `1 − z(θ)` without cancellation near `θ = 0`.
    pub fn one_minus(&self, theta: f64) -> Complex64 {
        let h = (0.5 * theta).sin();
        Complex64::new(2.0 * self.a * h * h - self.a_minus_1, -self.b * theta.sin())
    }

    /// `1 + z(θ)` without cancellation near `θ = π`.
    pub fn one_plus(&self, theta: f64) -> Complex64 {
        let h = (0.5 * theta).cos();
        Complex64::new(2.0 * self.a * h * h - self.a_minus_1, self.b * theta.sin())
    }

    /// `(Re z/a)² + (Im z/b)² − 1`.
    pub fn residual(&self, z: Complex64) -> f64 {
        let (x, y) = (z.re / self.a, z.im / self.b);
        x * x + y * y - 1.0
    }
}

/// Free function form of [`BernsteinEllipse::point`].
pub fn ellipse_point(e: &BernsteinEllipse, theta: f64) -> (Complex64, Complex64) {
    e.point(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourKind {
    /// Leaves the focus `z = 1`.
    Gamma1,
    /// Leaves the focus `z = −1`.
    Gamma2,
}

/// The contour `z(τ) = τ⁴ + 2iβτ² ± 1` along which `√(1 − αz)` has constant
/// real part, so the wave factor decays like `e^{−κ√α τ²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GustafssonContour {
    pub kind: ContourKind,
    /// `β₋` for γ₁, `β₊ = √(β₋² + 2)` for γ₂.
    pub beta: f64,
    pub alpha: f64,
    pub sqrt_alpha: f64,
}

impl GustafssonContour {
    pub fn gamma1(beta_minus: f64) -> Self {
        let sqrt_alpha = 1.0 / beta_minus.hypot(1.0);
        Self { kind: ContourKind::Gamma1, beta: beta_minus, alpha: sqrt_alpha * sqrt_alpha, sqrt_alpha }
    }

    pub fn gamma2(beta_minus: f64) -> Self {
        let sqrt_alpha = 1.0 / beta_minus.hypot(1.0);
        Self {
            kind: ContourKind::Gamma2,
            beta: beta_minus.hypot(std::f64::consts::SQRT_2),
            alpha: sqrt_alpha * sqrt_alpha,
            sqrt_alpha,
        }
    }

    /// The focus the contour starts from.
    pub fn focus_sign(&self) -> f64 {
        match self.kind {
            ContourKind::Gamma1 => 1.0,
            ContourKind::Gamma2 => -1.0,
        }
    }

    /// `(z(τ), √(1 − α z(τ)))`, the root as `√α β − i √α τ²`.
    pub fn point(&self, tau: f64) -> (Complex64, Complex64) {
        let t2 = tau * tau;
        let z = Complex64::new(t2 * t2 + self.focus_sign(), 2.0 * self.beta * t2);
        let root = Complex64::new(self.sqrt_alpha * self.beta, -self.sqrt_alpha * t2);
        (z, root)
    }
}

/// Free function form of [`GustafssonContour::point`].
pub fn contour_point(c: &GustafssonContour, tau: f64) -> (Complex64, Complex64) {
    c.point(tau)
}

/// Where a contour leaves the ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionPoint {
    pub tau: f64,
    pub theta: f64,
    pub z: Complex64,
}

/// Substituting `z(τ)` into the ellipse equation gives, for `s = τ⁴`,
/// `s² + (4a²β²/b² ± 2)s − b² = 0` with `+` for γ₁. The constant term is
/// negative so exactly one root is positive.
pub fn intersect(c: &GustafssonContour, e: &BernsteinEllipse) -> IntersectionPoint {
    let r = c.beta * e.a / e.b;
    let lin = 4.0 * r * r + 2.0 * c.focus_sign();
    let s = 2.0 * e.b * e.b / (lin + lin.hypot(2.0 * e.b));
    let u = s.sqrt();
    let z = Complex64::new(s + c.focus_sign(), 2.0 * c.beta * u);
    // Both components are exact to rounding, so atan2 loses nothing.
    let theta = (z.im / e.b).atan2(z.re / e.a);
    IntersectionPoint { tau: u.sqrt(), theta, z }
}

/// The same intersection parameter solved directly in `θ`. With `k = b²/(4β²)`,
/// γ₁ gives `k d² + (2k + a)d + (a − 1) = 0` for `d = cos θ − 1 ∈ (−2, 0)`,
/// and γ₂ gives `k e² + (a − 2k)e − (a − 1) = 0` for `e = cos θ + 1 > 0`.
pub fn intersect_theta(c: &GustafssonContour, e: &BernsteinEllipse) -> f64 {
    let k = e.b * e.b / (4.0 * c.beta * c.beta);
    match c.kind {
        ContourKind::Gamma1 => {
            let (r1, r2) = quadratic_roots_stable(k, 2.0 * k + e.a, e.a_minus_1)
                .expect("discriminant 4k² + 4k + a² is positive");
            let d = if r1.abs() < r2.abs() { r1 } else { r2 };
            2.0 * (-0.5 * d).sqrt().asin()
        }
        ContourKind::Gamma2 => {
            let (r1, r2) = quadratic_roots_stable(k, e.a - 2.0 * k, -e.a_minus_1)
                .expect("roots of opposite sign");
            let ep = r1.max(r2);
            PI - 2.0 * (0.5 * ep).sqrt().asin()
        }
    }
}

/// Contour parameter beyond which `|e^{−κ√α τ²}| < eps`; infinite when
/// `κ√α = 0`.
pub fn tau_cutoff(kappa: f64, sqrt_alpha: f64, eps: f64) -> f64 {
    let rate = kappa * sqrt_alpha;
    if rate == 0.0 {
        f64::INFINITY
    } else {
        (-eps.ln() / rate).sqrt()
    }
}

/// Real roots of `ax² + bx + c`, larger magnitude first. Each root comes from
/// the formula variant that adds quantities of equal sign.
pub fn quadratic_roots_stable(a: f64, b: f64, c: f64) -> Result<(f64, f64)> {
    if a == 0.0 {
        return Err(MgfError::InvalidParameter("quadratic with zero leading coefficient".into()));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(MgfError::NegativeDiscriminant(disc));
    }
    let sign = if b > 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    if q == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((q / a, c / q))
}
