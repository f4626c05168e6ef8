//! Gauss-Laguerre quadrature and Lagrange-Laguerre cardinal functions.
//!
//! The rule integrates `e^{-u} p(u)` exactly for polynomials of degree
//! `2n - 1`. The regularized weights `reg_weights[i] = w_i e^{u_i}` are the
//! ones used on the mesh, where every integrand already carries its own
//! exponential decay.
//!
//! Two families of cardinal functions are provided (1-based `i`):
//!
//! ```text
//! standard:     f_i(u) = (-1)^i u_i^{1/2}      L_n(u) e^{-u/2} / (u - u_i)
//! regularized:  f_i(u) = (-1)^i u_i^{-1/2}  u  L_n(u) e^{-u/2} / (u - u_i)
//! ```
//!
//! both normalized so that `f_i(u_j) = δ_ij reg_weights[j]^{-1/2}`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported rule size.
pub const MAX_POINTS: usize = 200;

const MAX_NEWTON_STEPS: usize = 100;

/// Evaluates `L_n(u)` and `L_{n-1}(u)` by the three-term recurrence with
/// running rescaling. Returns `(p_n, p_{n-1}, ln_scale)` where the true
/// values are `p * exp(ln_scale)`.
fn laguerre_pair<T: Real>(n: usize, u: T) -> (T, T, T) {
    let big = T::lit(1e100);
    let ln_big = big.ln();
    let mut ln_scale = T::zero();
    let mut prev = T::zero();
    let mut cur = T::one();
    for k in 0..n {
        let kf = T::from_index(k);
        let next = ((T::lit(2.0) * kf + T::one() - u) * cur - kf * prev) / (kf + T::one());
        prev = cur;
        cur = next;
        if cur.abs() > big {
            cur /= big;
            prev /= big;
            ln_scale += ln_big;
        }
    }
    (cur, prev, ln_scale)
}

/// `L_n(u) e^{-u/2}`, evaluated without forming either factor on its own.
pub fn laguerre_damped<T: Real>(n: usize, u: T) -> T {
    let (p, _, ln_scale) = laguerre_pair(n, u);
    p * (ln_scale - u / T::lit(2.0)).exp()
}

/// N-point Gauss-Laguerre rule for the weight `e^{-u}` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerreRule<T> {
    nodes: Vec<T>,
    raw_weights: Vec<T>,
    reg_weights: Vec<T>,
}

impl<T: Real> GaussLaguerreRule<T> {
    pub fn new(n: usize) -> Result<Self> {
        gauss_laguerre_rule(n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Roots of `L_n`, strictly increasing.
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Weights for `∫ e^{-u} g(u) du`. Underflow to zero for far nodes of
    /// large rules.
    pub fn raw_weights(&self) -> &[T] {
        &self.raw_weights
    }

    /// Weights `w_i e^{u_i}` for `∫ g(u) du` with `g` decaying like `e^{-u}`.
    pub fn reg_weights(&self) -> &[T] {
        &self.reg_weights
    }

    /// `Σ w_i g(u_i)`.
    pub fn integrate_weighted<F: Fn(T) -> T>(&self, g: F) -> T {
        self.nodes
            .iter()
            .zip(&self.raw_weights)
            .fold(T::zero(), |acc, (&u, &w)| acc + w * g(u))
    }

    /// `Σ λ̂_i g(u_i)`.
    pub fn integrate(&self, g: impl Fn(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.reg_weights)
            .fold(T::zero(), |acc, (&u, &w)| acc + w * g(u))
    }

    /// Multiplies weight `i` by `1 + rel`. Only used to check that the
    /// self-test suites are sensitive to corrupted weights.
    #[doc(hidden)]
    pub fn perturb_weight(&mut self, i: usize, rel: T) {
        self.raw_weights[i] *= T::one() + rel;
        self.reg_weights[i] *= T::one() + rel;
    }
}

/// Builds the `n`-point Gauss-Laguerre rule.
///
/// Nodes come from Newton iteration on the three-term recurrence, started
/// from the classical asymptotic guesses; weights from
/// `w_i = u_i / ((n+1)^2 L_{n+1}(u_i)^2)` evaluated in log space. The
/// recurrence runs in compensated double-word arithmetic: in plain arithmetic
/// it loses about `n^2` ulps near the small nodes, which shows up directly in
/// the weights.
pub fn gauss_laguerre_rule<T: Real>(n: usize) -> Result<GaussLaguerreRule<T>> {
    if n == 0 || n > MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Laguerre rule size must be in 1..={MAX_POINTS}, got {n}"
        )));
    }
    let roots = laguerre_roots::<T>(n)?;
    let np1 = T::from_index(n + 1);
    let mut nodes = Vec::with_capacity(n);
    let mut raw_weights = Vec::with_capacity(n);
    let mut reg_weights = Vec::with_capacity(n);
    for &u in &roots {
        let (p, _, ln_scale) = dd_laguerre_pair(n + 1, u);
        let ln_reg = u.hi.ln() + u.lo / u.hi
            - T::lit(2.0) * np1.ln()
            - T::lit(2.0) * (p.hi.abs().ln() + ln_scale)
            + u.hi
            + u.lo;
        nodes.push(u.hi);
        reg_weights.push(ln_reg.exp());
        raw_weights.push((ln_reg - u.hi - u.lo).exp());
    }
    Ok(GaussLaguerreRule {
        nodes,
        raw_weights,
        reg_weights,
    })
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct Dd<T> {
    hi: T,
    lo: T,
}

impl<T: Real> Dd<T> {
    fn new(hi: T) -> Self {
        Self { hi, lo: T::zero() }
    }

    fn quick_two_sum(a: T, b: T) -> Self {
        let s = a + b;
        Self {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn two_sum(a: T, b: T) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn two_prod(a: T, b: T) -> Self {
        let p = a * b;
        Self {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let r = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(r.hi, r.lo + t.lo)
    }

    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::two_prod(self.hi, o.hi);
        Self::quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_scalar(self, k: T) -> Self {
        let p = Self::two_prod(self.hi, k);
        Self::quick_two_sum(p.hi, p.lo + self.lo * k)
    }

    /// Exact only for powers of two.
    fn scale_pow2(self, k: T) -> Self {
        Self {
            hi: self.hi * k,
            lo: self.lo * k,
        }
    }

    fn div_scalar(self, d: T) -> Self {
        let q1 = self.hi / d;
        let r = self.sub(Self::two_prod(q1, d));
        Self::quick_two_sum(q1, r.hi / d)
    }

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Self::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Self::new(q2)));
        Self::quick_two_sum(q1, q2).add(Self::new(r.hi / o.hi))
    }
}

/// [`laguerre_pair`] in double-word arithmetic. Rescaling uses a power of two
/// so it is exact.
fn dd_laguerre_pair<T: Real>(n: usize, u: Dd<T>) -> (Dd<T>, Dd<T>, T) {
    let big = T::lit(2f64.powi(300));
    let inv_big = T::lit(2f64.powi(-300));
    let ln_big = big.ln();
    let mut ln_scale = T::zero();
    let mut prev = Dd::new(T::zero());
    let mut cur = Dd::new(T::one());
    for k in 0..n {
        let kf = T::from_index(k);
        let a = Dd::new(T::lit(2.0) * kf + T::one()).sub(u);
        let next = a
            .mul(cur)
            .sub(prev.mul_scalar(kf))
            .div_scalar(kf + T::one());
        prev = cur;
        cur = next;
        if cur.hi.abs() > big {
            cur = cur.scale_pow2(inv_big);
            prev = prev.scale_pow2(inv_big);
            ln_scale += ln_big;
        }
    }
    (cur, prev, ln_scale)
}

fn laguerre_roots<T: Real>(n: usize) -> Result<Vec<Dd<T>>> {
    let nf = T::from_index(n);
    let tol = T::lit(1e-15).max(T::eps());
    let mut roots: Vec<Dd<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let guess = match i {
            0 => T::lit(3.0) / (T::one() + T::lit(2.4) * nf),
            1 => roots[0].hi + T::lit(15.0) / (T::one() + T::lit(2.5) * nf),
            _ => {
                let ai = T::from_index(i - 1);
                let (a, b) = (roots[i - 1].hi, roots[i - 2].hi);
                a + (T::one() + T::lit(2.55) * ai) / (T::lit(1.9) * ai) * (a - b)
            }
        };
        let mut z = Dd::new(guess);
        let mut polish = 0;
        for _ in 0..MAX_NEWTON_STEPS {
            let (p, pm1, _) = dd_laguerre_pair(n, z);
            // L_n' = n (L_n - L_{n-1}) / u; the common scale cancels.
            let dp = p.sub(pm1).mul_scalar(nf).div(z);
            let step = p.div(dp);
            z = z.sub(step);
            if step.hi.abs() <= tol * z.hi.abs() {
                // two extra steps settle the low word
                polish += 1;
                if polish > 2 {
                    break;
                }
            }
        }
        if polish == 0 || !z.hi.is_finite() || z.hi <= T::zero() {
            return Err(Error::Numeric(format!(
                "Newton iteration for root {i} of L_{n} failed"
            )));
        }
        roots.push(z);
    }
    if roots.windows(2).any(|w| w[1].hi <= w[0].hi) {
        return Err(Error::Numeric(format!(
            "roots of L_{n} are not strictly increasing"
        )));
    }
    Ok(roots)
}

/// Which family of cardinal functions a basis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    /// `f_i(u) = (-1)^i u_i^{1/2} L_n(u) e^{-u/2} / (u - u_i)`; nonzero at `u = 0`.
    #[default]
    Standard,
    /// `f_i(u) = (-1)^i u_i^{-1/2} u L_n(u) e^{-u/2} / (u - u_i)`; vanishes at `u = 0`.
    Regularized,
}

/// Lagrange-Laguerre cardinal functions on a Gauss-Laguerre rule, together
/// with their derivatives at the mesh points.
///
/// Both families share the normalization `f_i(u_j) = δ_ij λ̂_j^{-1/2}`; the
/// regularized functions are `u / u_i` times the standard ones. The mesh
/// Hamiltonian uses [`BasisKind::Standard`]: the perimetric wave function
/// does not vanish on the faces of the octant.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis<T> {
    kind: BasisKind,
    rule: GaussLaguerreRule<T>,
    deriv: Vec<T>,
}

impl<T: Real> LagrangeBasis<T> {
    pub fn new(rule: GaussLaguerreRule<T>, kind: BasisKind) -> Self {
        let deriv = derivative_matrix_of(&rule, kind);
        Self { kind, rule, deriv }
    }

    pub fn standard(n: usize) -> Result<Self> {
        Ok(Self::new(gauss_laguerre_rule(n)?, BasisKind::Standard))
    }

    pub fn regularized(n: usize) -> Result<Self> {
        Ok(Self::new(gauss_laguerre_rule(n)?, BasisKind::Regularized))
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn rule(&self) -> &GaussLaguerreRule<T> {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// `D[i][p] = f_i'(u_p)`, row-major, 0-based.
    pub fn deriv_matrix(&self) -> &[T] {
        &self.deriv
    }

    pub fn deriv(&self, i: usize, p: usize) -> T {
        self.deriv[i * self.len() + p]
    }

    /// `f_i(u_i) = λ̂_i^{-1/2}`.
    pub fn node_value(&self, i: usize) -> T {
        self.rule.reg_weights[i].sqrt().recip()
    }

    /// Value of the 0-based cardinal function `i` at `u`.
    pub fn eval(&self, i: usize, u: T) -> Result<T> {
        lagrange_eval(self, i, u)
    }

    /// `D[i][p] λ̂_p^{1/2}`, the derivatives of the functions normalized to
    /// unit quadrature norm. No weights survive:
    ///
    /// * standard: off-diagonal `(-1)^{i+p} sqrt(u_i/u_p) / (u_p - u_i)`,
    ///   diagonal `-1/(2 u_i)`;
    /// * regularized: off-diagonal `(-1)^{i+p} sqrt(u_p/u_i) / (u_p - u_i)`,
    ///   diagonal `1/(2 u_i)`.
    pub fn normalized_deriv_matrix(&self) -> Vec<T> {
        let n = self.len();
        let u = self.rule.nodes();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for p in 0..n {
                out[i * n + p] = if i == p {
                    let d = (T::lit(2.0) * u[i]).recip();
                    match self.kind {
                        BasisKind::Standard => -d,
                        BasisKind::Regularized => d,
                    }
                } else {
                    let ratio = match self.kind {
                        BasisKind::Standard => u[i] / u[p],
                        BasisKind::Regularized => u[p] / u[i],
                    };
                    sign::<T>(i) * sign::<T>(p) * ratio.sqrt() / (u[p] - u[i])
                };
            }
        }
        out
    }
}

#[inline]
fn sign<T: Real>(i: usize) -> T {
    // 0-based i corresponds to the 1-based factor (-1)^{i+1}.
    if i % 2 == 0 {
        -T::one()
    } else {
        T::one()
    }
}

/// Evaluates the 0-based cardinal function `i` at `u > 0`.
///
/// At mesh points the exact cardinal values are returned. Close to the own
/// node `u_i` the removable singularity is bridged by the first-order Taylor
/// expansion about `u_i`.
pub fn lagrange_eval<T: Real>(basis: &LagrangeBasis<T>, i: usize, u: T) -> Result<T> {
    let n = basis.len();
    if i >= n {
        return Err(Error::InvalidArgument(format!(
            "cardinal index {i} out of range for {n} mesh points"
        )));
    }
    if !(u > T::zero()) || !u.is_finite() {
        return Err(Error::Domain(format!(
            "Lagrange-Laguerre functions are defined for u > 0, got {u}"
        )));
    }
    let nodes = basis.rule.nodes();
    if let Ok(j) = nodes.binary_search_by(|x| x.partial_cmp(&u).expect("finite nodes")) {
        return Ok(if j == i {
            basis.node_value(i)
        } else {
            T::zero()
        });
    }
    let ui = nodes[i];
    let delta = u - ui;
    if delta.abs() <= T::eps().cbrt() * ui {
        return Ok(basis.node_value(i) + basis.deriv(i, i) * delta);
    }
    let damped = laguerre_damped(n, u);
    let prefactor = match basis.kind {
        BasisKind::Standard => ui.sqrt(),
        BasisKind::Regularized => u / ui.sqrt(),
    };
    Ok(sign::<T>(i) * prefactor * damped / delta)
}

/// Derivative matrix `D[i][p] = f_i'(u_p)` of a basis.
pub fn derivative_matrix<T: Real>(basis: &LagrangeBasis<T>) -> Vec<T> {
    basis.deriv.clone()
}

/// At a node `u_p` of `L_n`, `L_n'(u_p) e^{-u_p/2} = (-1)^p u_p^{-1/2} λ̂_p^{-1/2}`
/// (1-based sign), which gives the off-diagonal entries in closed form. The
/// diagonal follows from the Laguerre equation, `u L_n'' = (u - 1) L_n'` at a root.
fn derivative_matrix_of<T: Real>(rule: &GaussLaguerreRule<T>, kind: BasisKind) -> Vec<T> {
    let n = rule.len();
    let u = rule.nodes();
    let inv_sqrt_w: Vec<T> = rule
        .reg_weights()
        .iter()
        .map(|w| w.sqrt().recip())
        .collect();
    let mut d = vec![T::zero(); n * n];
    for i in 0..n {
        for p in 0..n {
            d[i * n + p] = if i == p {
                let diag = inv_sqrt_w[i] / (T::lit(2.0) * u[i]);
                match kind {
                    BasisKind::Standard => -diag,
                    BasisKind::Regularized => diag,
                }
            } else {
                let ratio = match kind {
                    BasisKind::Standard => u[i] / u[p],
                    BasisKind::Regularized => u[p] / u[i],
                };
                sign::<T>(i) * sign::<T>(p) * ratio.sqrt() * inv_sqrt_w[p] / (u[p] - u[i])
            };
        }
    }
    d
}
