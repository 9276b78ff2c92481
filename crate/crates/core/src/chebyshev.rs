//! Chebyshev polynomials of complex argument and Chebyshev/Taylor conversion.
//!
//! `T_m` is evaluated through the Joukowski map `z = (w + 1/w)/2`, so that
//! `T_m(z) = (wᵐ + w⁻ᵐ)/2` with `|w| ≥ 1`. Inside the Bernstein ellipse
//! `E_ρ` this never overflows. Near the foci `z = ±1` the offset `z ∓ 1` is
//! passed explicitly so that no relative precision is lost.

use crate::error::{MgfError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest degree accepted by [`cheb_to_taylor`].
pub const MAX_TAYLOR_DEGREE: usize = 16;

/// Which focus an offset `w` is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `w = z − 1`.
    PlusOne,
    /// `w = −z − 1`.
    MinusOne,
}

/// A Chebyshev expansion `Σ c_k T_k(t)` on `[lo, hi]`, with `t` the affine
/// image of `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebExpansion {
    pub coeffs: Vec<Complex64>,
    pub lo: f64,
    pub hi: f64,
}

/// A polynomial `Σ a_k (x − center)^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPoly {
    pub coeffs: Vec<Complex64>,
    pub center: Complex64,
}

/// `T_m(z)` for arbitrary finite complex `z`.
pub fn cheb_eval_complex(m: u64, z: Complex64) -> Complex64 {
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    // √(z−1)·√(z+1) maps the slit plane onto the exterior branch directly.
    let s = (z - 1.0).sqrt() * (z + 1.0).sqrt();
    let mut w = z + s;
    if w.norm() < 1.0 {
        w = z - s;
    }
    (w.ln() * m as f64).cosh()
}

/// `arccos(1 + w)` without cancellation for small `w`.
pub fn arccos_1p(w: Complex64) -> Complex64 {
    if w.norm() < 0.5 {
        // arccos(1+w) = √(−2w) Σ c_k (−w/2)^k, c_k the arcsine series.
        let x = -w * 0.5;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        let mut k = 0.0;
        loop {
            term *= x * ((2.0 * k + 1.0) * (2.0 * k + 1.0) / ((2.0 * k + 2.0) * (2.0 * k + 3.0)));
            sum += term;
            k += 1.0;
            if term.norm() <= f64::EPSILON * 0.25 * sum.norm() || k > 80.0 {
                break;
            }
        }
        (-2.0 * w).sqrt() * sum
    } else {
        let s = w.sqrt() * (w + 2.0).sqrt();
        let mut zeta = 1.0 + w + s;
        if zeta.norm() < 1.0 {
            zeta = 1.0 + w - s;
        }
        // ζ = e^{iθ}
        Complex64::new(0.0, -1.0) * zeta.ln()
    }
}

/// `T_m(±(1 + w))`: `w = z − 1` for [`Side::PlusOne`], `w = −z − 1` for
/// [`Side::MinusOne`].
pub fn cheb_eval_near_focus(m: u64, w: Complex64, side: Side) -> Complex64 {
    let t = (arccos_1p(w) * m as f64).cos();
    match side {
        Side::MinusOne if m % 2 == 1 => -t,
        _ => t,
    }
}

/// `T_m(E_ρ(θ)) = (ρᵐ e^{imθ} + ρ⁻ᵐ e^{−imθ})/2`.
pub fn cheb_on_ellipse(m: u64, rho: f64, theta: f64) -> Complex64 {
    cheb_on_ellipse_log(m, rho.ln(), theta)
}

/// As [`cheb_on_ellipse`] with `ln ρ` supplied, so that `m·ln ρ` can equal
/// `ln M` to rounding.
pub fn cheb_on_ellipse_log(m: u64, ln_rho: f64, theta: f64) -> Complex64 {
    let mf = m as f64;
    let x = mf * ln_rho;
    // mθ = y + dy exactly; dy matters once mθ is large.
    let y = mf * theta;
    let dy = mf.mul_add(theta, -y);
    let (sin, cos) = y.sin_cos();
    let (sin, cos) = (sin + dy * cos, cos - dy * sin);
    Complex64::new(x.cosh() * cos, x.sinh() * sin)
}

/// Interpolate `f` at `degree + 1` Chebyshev points of the first kind on
/// `[lo, hi]`.
pub fn cheb_fit<F>(f: F, lo: f64, hi: f64, degree: usize) -> Result<ChebExpansion>
where
    F: Fn(f64) -> Complex64,
{
    if !(lo < hi) {
        return Err(MgfError::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
    }
    let n = degree + 1;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut samples = Vec::with_capacity(n);
    for j in 0..n {
        let t = (PI * (j as f64 + 0.5) / n as f64).cos();
        let x = mid + half * t;
        let v = f(x);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(MgfError::NonFinite { location: format!("Chebyshev sample x = {x:e}") });
        }
        samples.push(v);
    }
    let coeffs = (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, s) in samples.iter().enumerate() {
                acc += s * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
            }
            let scale = if k == 0 { 1.0 } else { 2.0 } / n as f64;
            acc * scale
        })
        .collect();
    Ok(ChebExpansion { coeffs, lo, hi })
}

impl ChebExpansion {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Clenshaw summation at a physical point `x`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let t = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let mut b1 = Complex64::new(0.0, 0.0);
        let mut b2 = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + b1 * (2.0 * t) - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + b1 * t - b2
    }
}

impl TaylorPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        let h = x - self.center;
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * h + c)
    }
}

/// Monomial coefficients `a_i` with `Σ a_i xⁱ = Σ c_i T_i(x)` on `[-1, 1]`.
///
/// `a_0 = Σ_j (−1)^j c_{2j}` and for `i ≥ 1`
/// `a_i = Σ_j c_{i+2j} (i+2j) (−1)^j 2^{i−1} (i+j−1)_j / (i · j!)`
/// with `(x)_j` the falling factorial.
pub fn chebyshev_to_monomial(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let mut a = vec![Complex64::new(0.0, 0.0); n + 1];
    for j in 0..=n / 2 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        a[0] += c[2 * j] * sign;
    }
    for i in 1..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..=(n - i) / 2 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut falling = 1.0;
            let mut jfact = 1.0;
            for l in 0..j {
                falling *= (i + j - 1 - l) as f64;
                jfact *= (l + 1) as f64;
            }
            let k = (i + 2 * j) as f64;
            acc += c[i + 2 * j] * (k * sign * 2f64.powi(i as i32 - 1) * falling / (i as f64 * jfact));
        }
        a[i] = acc;
    }
    a
}

/// Re-expand `Σ a_j xʲ` about `x0`: `b_i = Σ_{j≥i} a_j C(j,i) x0^{j−i}`.
pub fn recenter(a: &[Complex64], x0: Complex64) -> Vec<Complex64> {
    let n = a.len();
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for (i, bi) in b.iter_mut().enumerate() {
        let mut binom = 1.0;
        let mut pow = Complex64::new(1.0, 0.0);
        for j in i..n {
            if j > i {
                binom = binom * j as f64 / (j - i) as f64;
                pow *= x0;
            }
            *bi += a[j] * binom * pow;
        }
    }
    b
}

/// Taylor form of a Chebyshev expansion, centred at the left endpoint of its
/// interval.
pub fn cheb_to_taylor(exp: &ChebExpansion) -> Result<TaylorPoly> {
    let degree = exp.degree();
    if degree > MAX_TAYLOR_DEGREE {
        return Err(MgfError::DegreeTooHigh { degree, max: MAX_TAYLOR_DEGREE });
    }
    let mono = chebyshev_to_monomial(&exp.coeffs);
    let shifted = recenter(&mono, Complex64::new(-1.0, 0.0));
    // t + 1 = 2(x − lo)/(hi − lo)
    let scale = 2.0 / (exp.hi - exp.lo);
    let mut s = 1.0;
    let coeffs = shifted
        .into_iter()
        .map(|b| {
            let out = b * s;
            s *= scale;
            out
        })
        .collect();
    Ok(TaylorPoly { coeffs, center: Complex64::new(exp.lo, 0.0) })
}

/// Chebyshev terms needed to resolve an analytic function bounded by `L` on
/// `E_ρ`, `ρ = M^{1/m}`, to accuracy `eps`: `m (log 2L − log ε)/log M`.
pub fn corollary_term_count(m_bound: f64, l_bound: f64, m: u64, eps: f64) -> f64 {
    m as f64 * ((2.0 * l_bound).ln() - eps.ln()) / m_bound.ln()
}

/// Chebyshev terms `k₀` needed on the arc in working precision `eps`, with
/// the integrand bounded by `10 M` and the accuracy floor raised to `M ε`:
/// `(m/0.9)(log 20M − log Mε)/log M`. A Gauss-Legendre rule with `k₀/2`
/// nodes integrates such a term count exactly.
pub fn analytic_node_count(m_bound: f64, m: u64, eps: f64) -> u64 {
    let k0 = m as f64 / 0.9 * ((20.0 * m_bound).ln() - (m_bound * eps).ln()) / m_bound.ln();
    k0.ceil() as u64
}
