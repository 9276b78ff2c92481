//! Gauss-Legendre rules, an adaptive integrator for complex integrands, and
//! the upward recurrence for `∫ τⁿ/√(aτ²+b) dτ`.

use crate::error::{MgfError, Result};
use num_complex::Complex64;
use once_cell::sync::{Lazy, OnceCell};
use parking_lot::Mutex;
use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GLRule {
    pub nodes: Vec<f64>,
    /// `nodes[i] + offsets[i]` is the exact root to about `ε²`.
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GLRule {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// `Σ w_i f(x_i)` after mapping to `[lo, hi]`.
    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F, lo: f64, hi: f64) -> Complex64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += f(mid + half * x) * *w;
        }
        acc * half
    }
}

/// Below this size nodes are found by Newton iteration on the three-term
/// recurrence; above it by marching between roots with local Taylor series.
const DIRECT_LIMIT: usize = 128;

/// Total nodes held by the rule cache before the oldest sizes are evicted.
const CACHE_NODE_BUDGET: usize = 4_000_000;

type RuleCell = Arc<OnceCell<Arc<GLRule>>>;

/// Sizes in insertion order; `nodes` is the sum of the cached sizes.
#[derive(Default)]
struct RuleCache {
    cells: HashMap<usize, RuleCell>,
    order: VecDeque<usize>,
    nodes: usize,
}

impl RuleCache {
    fn cell(&mut self, n: usize) -> RuleCell {
        if let Some(c) = self.cells.get(&n) {
            return c.clone();
        }
        while self.nodes + n > CACHE_NODE_BUDGET {
            let Some(old) = self.order.pop_front() else { break };
            self.cells.remove(&old);
            self.nodes -= old;
        }
        let c = RuleCell::default();
        self.cells.insert(n, c.clone());
        self.order.push_back(n);
        self.nodes += n;
        c
    }
}

static GL_CACHE: Lazy<Mutex<RuleCache>> = Lazy::new(|| Mutex::new(RuleCache::default()));

/// Gauss-Legendre rule of size `n`, built once while it stays in a cache of
/// bounded total size. Evicted rules live on while referenced.
pub fn gl_rule(n: usize) -> Arc<GLRule> {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let cell = GL_CACHE.lock().cell(n);
    cell.get_or_init(|| Arc::new(build_gl_rule(n))).clone()
}

/// Gauss-Legendre rule of size `n` without caching.
pub fn build_gl_rule(n: usize) -> GLRule {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let upper = if n <= DIRECT_LIMIT { newton_upper(n) } else { march_upper(n) };
    let c_n = stieltjes_constant(n);
    let upper_weights: Vec<f64> = upper.iter().map(|r| weight_at(n, c_n, r)).collect();
    let mut nodes = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (r, w) in upper.iter().zip(&upper_weights).rev() {
        if r.x > 0.0 {
            nodes.push(-r.x);
            offsets.push(-r.e);
            weights.push(*w);
        }
    }
    for (r, w) in upper.iter().zip(&upper_weights) {
        nodes.push(r.x);
        offsets.push(r.e);
        weights.push(*w);
    }
    debug_assert_eq!(nodes.len(), n);
    GLRule { nodes, offsets, weights }
}

/// A nonnegative root of `P_n`: rounded position `x`, the sub-ulp offset
/// `e` of the exact root from `x`, and `P_n'` at the exact root. `dp` is
/// accurate enough to step between roots but drifts by up to ~1e-12
/// relative along a march, so weights are computed separately.
#[derive(Debug, Clone, Copy)]
struct Root {
    x: f64,
    e: f64,
    dp: f64,
}

/// Double-double value `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let b = s - self.hi;
        let err = (self.hi - (s - b)) + (o.hi - b);
        Dd::new(s, err + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        Dd::new(p, err)
    }

    fn scale(self, f: f64) -> Dd {
        self.mul(Dd { hi: f, lo: 0.0 })
    }

    fn div(self, o: Dd) -> Dd {
        let q = self.hi / o.hi;
        let r = self.add(o.scale(-q));
        Dd::new(q, r.hi / o.hi)
    }
}

/// `C_n = (4/π) Π_{j=1..n} j/(j + 1/2)`, the amplitude of the Stieltjes
/// series.
fn stieltjes_constant(n: usize) -> f64 {
    let mut c = Dd { hi: 1.0, lo: 0.0 };
    for j in 1..=n {
        let two_j = 2.0 * j as f64;
        c = c.mul(Dd { hi: two_j, lo: 0.0 }.div(Dd { hi: two_j + 1.0, lo: 0.0 }));
    }
    // 4/π to double-double
    let four_over_pi = Dd { hi: 1.2732395447351628, lo: -7.871470670072994e-17 };
    c.mul(four_over_pi).hi
}

/// `dP_n(cos θ)/dθ / C_n` at `θ = 2 asin(√(t/2))` from the Stieltjes series,
/// or `None` where it cannot reach double precision (within a few roots of
/// `x = 1`).
fn stieltjes_derivative(n: usize, t: f64) -> Option<f64> {
    let theta = 2.0 * (0.5 * t).sqrt().asin();
    let two_sin = 2.0 * (t * (2.0 - t)).sqrt();
    let cos = 1.0 - t;
    let nf = n as f64;
    // h·amp is h_{n,m}/(2 sin θ)^{m+1/2}
    let mut h_amp = 1.0 / two_sin.sqrt();
    let first = h_amp * (nf + 0.5);
    let mut sum = 0.0;
    for m in 0..64usize {
        let mh = m as f64 + 0.5;
        let alpha = (nf + mh) * theta - mh * FRAC_PI_2;
        let (sin_a, cos_a) = alpha.sin_cos();
        sum += h_amp * (-(nf + mh) * sin_a - mh * 2.0 * cos * cos_a / two_sin);
        let ratio = (mh * mh) / ((m as f64 + 1.0) * (nf + mh + 1.0) * two_sin);
        h_amp *= ratio;
        if h_amp * (nf + mh + 2.0) < 1e-17 * first {
            return Some(sum);
        }
        if ratio > 0.5 {
            return None;
        }
    }
    None
}

/// `2/((1−x²) P_n'(x)²)` by the three-term recurrence in double-double
/// arithmetic at `x + e`.
fn recurrence_weight(n: usize, x: f64, e: f64) -> f64 {
    let xd = Dd::new(x, e);
    let (mut p0, mut p1) = (Dd { hi: 1.0, lo: 0.0 }, xd);
    for k in 1..n {
        let kf = k as f64;
        let t = xd.scale(2.0 * kf + 1.0).mul(p1).add(p0.scale(-kf));
        p0 = p1;
        p1 = t.div(Dd { hi: kf + 1.0, lo: 0.0 });
    }
    let one_minus_sq = Dd { hi: 1.0, lo: 0.0 }.add(xd.mul(xd).scale(-1.0));
    let dp = p0.add(xd.mul(p1).scale(-1.0)).scale(n as f64).div(one_minus_sq);
    2.0 / one_minus_sq.mul(dp).mul(dp).hi
}

/// Weight of a nonnegative root: `2/(dP_n(cos θ)/dθ)²`.
fn weight_at(n: usize, c_n: f64, r: &Root) -> f64 {
    if n > DIRECT_LIMIT {
        if let Some(d) = stieltjes_derivative(n, (1.0 - r.x) - r.e) {
            let d = c_n * d;
            return 2.0 / (d * d);
        }
    }
    recurrence_weight(n, r.x, r.e)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / ((x - 1.0) * (x + 1.0));
    (p1, dp)
}

/// Asymptotic position of the `j`-th largest root (`j = 1..=n`).
fn tricomi_guess(n: usize, j: usize) -> f64 {
    let nf = n as f64;
    let theta = PI * (4.0 * j as f64 - 1.0) / (4.0 * nf + 2.0);
    (1.0 - 1.0 / (8.0 * nf * nf) + 1.0 / (8.0 * nf * nf * nf)) * theta.cos()
}

/// `(P_n, P_n')` at `x = 1 − t` by the recurrence on differences
/// `P_k − P_{k−1}`, which stays accurate as `t → 0`.
fn legendre_near_one(n: usize, t: f64) -> (f64, f64) {
    // s = k (P_k − P_{k−1}), which keeps the division off the dependency chain
    let (mut p, mut s) = (1.0 - t, -t);
    for k in 1..n {
        let kf = k as f64;
        s -= (2.0 * kf + 1.0) * t * p;
        p += s * (1.0 / (kf + 1.0));
    }
    // x P_n − P_{n−1} = (P_n − P_{n−1}) − t P_n
    let dp = -(n as f64) * (s / n as f64 - t * p) / (t * (2.0 - t));
    (p, dp)
}

/// Root of `P_n` near `x + e` after at most `iters` Newton steps, stopping
/// early at convergence or once steps stop halving (recurrence noise). A
/// final first-order correction resolves the sub-ulp offset and `P_n'`.
fn refine(n: usize, x: f64, e: f64, iters: usize) -> Root {
    let nn = (n * (n + 1)) as f64;
    if x > 0.5 {
        let mut t = (1.0 - x) - e;
        let mut it = 0;
        let mut last = f64::INFINITY;
        loop {
            let (p, dp) = legendre_near_one(n, t);
            let dx = -p / dp;
            if it == iters || dx.abs() <= 4e-16 * t || (dx.abs() < 1e-10 * t && dx.abs() > 0.5 * last) {
                let x = 1.0 - t;
                let d2p = (2.0 * x * dp - nn * p) / (t * (2.0 - t));
                let t_exact = t - dx;
                let xr = 1.0 - t_exact;
                return Root { x: xr, e: (1.0 - xr) - t_exact, dp: dp + d2p * dx };
            }
            t -= dx;
            last = dx.abs();
            it += 1;
        }
    }
    let mut x = x;
    let mut it = 0;
    let mut last = f64::INFINITY;
    loop {
        let (p, dp) = legendre(n, x);
        let dx = -p / dp;
        if it == iters || dx.abs() <= 4e-16 * x.abs() || (dx.abs() < 1e-10 * x.abs() && dx.abs() > 0.5 * last) {
            let d2p = (2.0 * x * dp - nn * p) / ((1.0 - x) * (1.0 + x));
            let xr = x + dx;
            return Root { x: xr, e: dx - (xr - x), dp: dp + d2p * dx };
        }
        x += dx;
        last = dx.abs();
        it += 1;
    }
}

fn newton_root(n: usize, j: usize) -> Root {
    if 2 * j == n + 1 {
        let (_, dp) = legendre(n, 0.0);
        return Root { x: 0.0, e: 0.0, dp };
    }
    refine(n, tricomi_guess(n, j), 0.0, 100)
}

fn newton_upper(n: usize) -> Vec<Root> {
    (1..=n.div_ceil(2)).rev().map(|j| newton_root(n, j)).collect()
}

/// Roots are found in ascending order starting from `x = 0`. From each root
/// the Legendre equation `(1−x²)y'' − 2xy' + n(n+1)y = 0` yields the Taylor
/// coefficients of `P_n` there; Newton on that series locates the next root
/// and gives `P_n'` at it. Step-to-step drift in `P_n'` grows near `x = 1`:
/// once a step exceeds 1% of the distance to `x = 1` (roughly the last 200
/// roots) each marched root is refined by one recurrence evaluation. Past
/// 0.3 the series radius is too small and plain Newton takes over.
fn march_upper(n: usize) -> Vec<Root> {
    let half = n / 2;
    let mut out = Vec::with_capacity(half + 1);
    // P_n(0) and P_n'(0) = n P_{n−1}(0).
    let mut p_prev = 1.0;
    let mut p_cur = 0.0;
    for k in 1..n {
        let p_next = -(k as f64) * p_prev / (k as f64 + 1.0);
        p_prev = p_cur;
        p_cur = p_next;
    }
    let (mut xc, mut pc, mut dpc) = if n % 2 == 1 {
        let dp0 = n as f64 * p_prev;
        out.push(Root { x: 0.0, e: 0.0, dp: dp0 });
        (0.0, 0.0, dp0)
    } else {
        (0.0, p_cur, 0.0)
    };
    let nn = (n * (n + 1)) as f64;
    let mut coeffs = [0.0f64; 96];
    // Also reset from the recurrence at 64 evenly spaced roots.
    let anchor_every = (half / 64).max(64);
    let mut steps = 0usize;
    let mut j = half;
    while j >= 1 {
        let guess = tricomi_guess(n, j);
        let h = guess - xc;
        if h > 0.3 * (1.0 - xc) {
            break;
        }
        let denom = (1.0 - xc) * (1.0 + xc);
        coeffs[0] = pc;
        coeffs[1] = dpc * h;
        let scale = coeffs[0].abs().max(coeffs[1].abs());
        let mut len = 2;
        for k in 0..coeffs.len() - 2 {
            let kf = k as f64;
            let next = (2.0 * xc * (kf + 1.0) * (kf + 1.0) * coeffs[k + 1] * h
                + (kf * (kf + 1.0) - nn) * coeffs[k] * h * h)
                / (denom * (kf + 1.0) * (kf + 2.0));
            coeffs[k + 2] = next;
            len = k + 3;
            if k > 8 && next.abs() + coeffs[k + 1].abs() < 1e-20 * scale {
                break;
            }
        }
        let series = &coeffs[..len];
        let eval = |s: f64| {
            let (mut p, mut dp) = (0.0, 0.0);
            for c in series.iter().rev() {
                dp = dp * s + p;
                p = p * s + c;
            }
            (p, dp)
        };
        let mut s = 1.0;
        for _ in 0..50 {
            let (p, dp) = eval(s);
            let ds = p / dp;
            s -= ds;
            if ds.abs() <= 4e-16 {
                break;
            }
        }
        let (_, dp) = eval(s);
        let step = s * h;
        let x_next = xc + step;
        // Exact root sits at x_next + e; the next series starts from the
        // rounded point, where P_n = −P_n'·e.
        let e = step - (x_next - xc);
        dpc = dp / h;
        steps += 1;
        if steps.is_multiple_of(anchor_every) || h > 0.01 * (1.0 - xc) {
            let r = refine(n, x_next, e, 0);
            out.push(r);
            xc = r.x;
            pc = -r.dp * r.e;
            dpc = r.dp;
        } else {
            out.push(Root { x: x_next, e, dp: dpc });
            xc = x_next;
            pc = -dpc * e;
        }
        j -= 1;
    }
    while j >= 1 {
        out.push(newton_root(n, j));
        j -= 1;
    }
    out
}

/// Options for [`integrate_adaptive_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Tolerance relative to the global magnitude estimate `∫|f|`.
    pub rel_tol: f64,
    /// Absolute per-panel tolerance.
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rel_tol: 1e-13, abs_tol: 0.0, max_depth: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOutcome {
    pub value: Complex64,
    /// Sum of the per-panel 15/30-point discrepancies.
    pub est_error: f64,
    pub panels: usize,
    pub evaluations: usize,
}

/// Adaptive 15/30-point Gauss-Legendre integration of `f` over `[lo, hi]`
/// with relative tolerance `tol`.
pub fn integrate_adaptive<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(Complex64, f64)>
where
    F: Fn(f64) -> Complex64,
{
    let opts = AdaptiveOptions { rel_tol: tol, ..AdaptiveOptions::default() };
    integrate_adaptive_with(f, lo, hi, &opts).map(|o| (o.value, o.est_error))
}

struct Panel {
    coarse: Complex64,
    fine: Complex64,
    abs: f64,
}

fn panel<F: Fn(f64) -> Complex64>(
    f: &F,
    lo: f64,
    hi: f64,
    g15: &GLRule,
    g30: &GLRule,
) -> Result<Panel> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut fine = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for (x, w) in g30.nodes.iter().zip(&g30.weights) {
        let t = mid + half * x;
        let v = f(t);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(MgfError::NonFinite { location: format!("t = {t:e}") });
        }
        fine += v * *w;
        abs += v.norm() * w;
    }
    let mut coarse = Complex64::new(0.0, 0.0);
    for (x, w) in g15.nodes.iter().zip(&g15.weights) {
        let t = mid + half * x;
        let v = f(t);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(MgfError::NonFinite { location: format!("t = {t:e}") });
        }
        coarse += v * *w;
    }
    Ok(Panel { coarse: coarse * half, fine: fine * half, abs: abs * half.abs() })
}

/// Recursive bisection; a panel is accepted once its 15/30 discrepancy is at
/// most `rel_tol·∫|f|` (estimated on the whole interval), `abs_tol`, or the
/// roundoff level of the panel itself.
pub fn integrate_adaptive_with<F>(f: F, lo: f64, hi: f64, opts: &AdaptiveOptions) -> Result<AdaptiveOutcome>
where
    F: Fn(f64) -> Complex64,
{
    let g15 = gl_rule(15);
    let g30 = gl_rule(30);
    let mut out = AdaptiveOutcome {
        value: Complex64::new(0.0, 0.0),
        est_error: 0.0,
        panels: 0,
        evaluations: 0,
    };
    if lo == hi {
        return Ok(out);
    }
    let first = panel(&f, lo, hi, &g15, &g30)?;
    out.evaluations += 45;
    let threshold = (opts.rel_tol * first.abs).max(opts.abs_tol);
    let mut stack = vec![(lo, hi, 0usize, first)];
    while let Some((a, b, depth, p)) = stack.pop() {
        let err = (p.fine - p.coarse).norm();
        if err <= threshold || err <= 50.0 * f64::EPSILON * p.abs {
            out.value += p.fine;
            out.est_error += err;
            out.panels += 1;
            continue;
        }
        if depth >= opts.max_depth {
            let mut partial = out.value + p.fine;
            for (_, _, _, q) in &stack {
                partial += q.fine;
            }
            return Err(MgfError::DepthExceeded { partial, depth });
        }
        let m = 0.5 * (a + b);
        let left = panel(&f, a, m, &g15, &g30)?;
        let right = panel(&f, m, b, &g15, &g30)?;
        out.evaluations += 90;
        // Right pushed first so panels are summed left to right.
        stack.push((m, b, depth + 1, right));
        stack.push((a, m, depth + 1, left));
    }
    Ok(out)
}

/// `I_n = ∫₀^{τ₀} τⁿ/√(aτ²+b) dτ` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialSqrtTable {
    pub a: Complex64,
    pub b: Complex64,
    pub tau0: f64,
    pub values: Vec<Complex64>,
}

/// Upward recurrence
/// `n a I_n = τ₀^{n−1}√(aτ₀²+b) − (n−1) b I_{n−2}`, started from
/// `I_0 = ln((τ₀√a + √(aτ₀²+b))/√b)/√a` and `I_1 = (√(aτ₀²+b) − √b)/a`.
/// The recurrence (`N ≥ 2`) requires `|b/(aτ₀²)| < 1/4`.
pub fn monomial_sqrt_integrals(a: Complex64, b: Complex64, tau0: f64, n_max: usize) -> Result<MonomialSqrtTable> {
    if a.norm() == 0.0 || !(tau0 > 0.0) || n_max > 64 {
        return Err(MgfError::InvalidParameter(format!(
            "monomial integrals need a ≠ 0, tau0 > 0, N ≤ 64 (a = {a}, tau0 = {tau0}, N = {n_max})"
        )));
    }
    // Scaled variable σ = τ/τ₀: I_n = τ₀ⁿ J_n with J_n = ∫₀¹ σⁿ/√(aσ²+b') dσ.
    let bs = b / (tau0 * tau0);
    let ratio = (bs / a).norm();
    if n_max >= 2 && !(ratio < 0.25) {
        return Err(MgfError::UnstableRecurrence { ratio });
    }
    let root_end = (a + bs).sqrt();
    let root_b = bs.sqrt();
    let sa = a.sqrt();
    let mut j = Vec::with_capacity(n_max + 1);
    j.push(((sa + root_end).ln() - root_b.ln()) / sa);
    if n_max >= 1 {
        // (√(a+b') − √b')/a without cancellation.
        j.push(1.0 / (root_end + root_b));
    }
    for n in 2..=n_max {
        let nf = n as f64;
        let v = (root_end - bs * (nf - 1.0) * j[n - 2]) / (a * nf);
        j.push(v);
    }
    let mut scale = 1.0;
    let values = j
        .into_iter()
        .map(|v| {
            let out = v * scale;
            scale *= tau0;
            out
        })
        .collect();
    Ok(MonomialSqrtTable { a, b, tau0, values })
}
