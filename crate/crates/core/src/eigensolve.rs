//! Lowest eigenpair of a symmetric operator.
//!
//! The iterative solver is a generalized Davidson method: the search space is
//! expanded with preconditioned residuals and restarted from the current and
//! previous Ritz vectors when it fills up. Only operator applications are
//! needed. The preconditioner is the operator diagonal unless the operator
//! supplies something better.
//!
//! All reductions run over fixed-size chunks combined in a fixed order, so a
//! solve is bit-reproducible regardless of the number of worker threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianOperator, StateVector, DENSE_LIMIT};
use crate::precond::{Preconditioned, Preconditioner};
use crate::scalar::Real;

/// Access to a real symmetric operator.
pub trait SymmetricOperator<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &[T], y: &mut [T]);

    fn diagonal(&self) -> Vec<T>;

    /// Projection onto an invariant subspace the solver should stay in.
    fn project(&self, _v: &mut [T]) {}

    /// Writes an approximation of `(A - θ)^{-1} r` into `out`. Returning
    /// `false` selects the diagonal preconditioner.
    fn precondition(&self, _theta: T, _r: &[T], _out: &mut [T]) -> bool {
        false
    }
}

impl<T: Real> SymmetricOperator<T> for HamiltonianOperator<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        HamiltonianOperator::apply_into(self, x, y)
    }

    fn diagonal(&self) -> Vec<T> {
        HamiltonianOperator::diagonal(self).to_vec()
    }

    fn project(&self, v: &mut [T]) {
        HamiltonianOperator::project(self, v)
    }
}

impl<T: Real> SymmetricOperator<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        let n = self.nrows();
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            *yr = (0..n).fold(T::zero(), |s, c| s + self[(r, c)] * x[c]);
        }
    }

    fn diagonal(&self) -> Vec<T> {
        (0..self.nrows()).map(|i| self[(i, i)]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions<T> {
    /// Converged when `‖Hv - Ev‖ <= tol · max(1, |E|)`.
    pub tol: T,
    pub maxiter: usize,
    /// Largest search space before a restart.
    pub max_subspace: usize,
    /// Ritz vectors kept, lowest first, when the search space restarts.
    pub keep: usize,
    /// Used by [`lowest_eigenpair`]; other operators always use their diagonal.
    pub preconditioner: Preconditioner,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            maxiter: 5000,
            max_subspace: 40,
            keep: 20,
            preconditioner: Preconditioner::default(),
        }
    }
}

impl<T: Real> EigenOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Lowest eigenpair found by [`davidson`].
#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub value: T,
    pub vector: Vec<T>,
    /// `‖Hv - Ev‖₂`, recomputed from a fresh product at the end.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient of the starting vector.
    pub initial_rayleigh: T,
}

/// Lowest eigenpair of the mesh Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    pub energy: T,
    pub vector: StateVector<T>,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

const CHUNK: usize = 4096;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let parts: Vec<T> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).fold(T::zero(), |s, (&p, &q)| s + p * q))
        .collect();
    parts.into_iter().fold(T::zero(), |s, p| s + p)
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    y.par_iter_mut()
        .zip(x.par_iter())
        .for_each(|(y, &x)| *y += alpha * x);
}

fn scale<T: Real>(alpha: T, x: &mut [T]) {
    x.par_iter_mut().for_each(|v| *v *= alpha);
}

/// `Σ_k coef[k] basis[k]`.
fn combine<T: Real>(basis: &[Vec<T>], coef: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, dst)| {
        let off = c * CHUNK;
        let len = dst.len();
        for (k, v) in basis.iter().enumerate() {
            let a = coef[k];
            dst.iter_mut()
                .zip(&v[off..off + len])
                .for_each(|(d, &s)| *d += a * s);
        }
    });
    out
}

/// Orthogonalizes `t` against the orthonormal `basis` (two passes of
/// classical Gram-Schmidt) and normalizes. Returns the norm before
/// normalization relative to the input norm.
fn orthonormalize<T: Real>(basis: &[Vec<T>], t: &mut [T]) -> T {
    let start = norm(t);
    if start == T::zero() {
        return T::zero();
    }
    for _ in 0..2 {
        let coef: Vec<T> = basis.iter().map(|v| dot(v, t)).collect();
        for (v, c) in basis.iter().zip(coef) {
            axpy(-c, v, t);
        }
    }
    let nrm = norm(t);
    if nrm > T::zero() {
        scale(nrm.recip(), t);
    }
    nrm / start
}

/// Generalized Davidson iteration for the smallest eigenvalue of `op`.
pub fn davidson<T: Real, Op: SymmetricOperator<T> + ?Sized>(
    op: &Op,
    init: &[T],
    opts: &EigenOptions<T>,
) -> Result<EigenPair<T>> {
    let n = op.dim();
    if init.len() != n {
        return Err(Error::InvalidArgument(format!(
            "initial vector has length {}, operator dimension is {n}",
            init.len()
        )));
    }
    if opts.maxiter == 0 || !(opts.tol > T::zero()) {
        return Err(Error::InvalidArgument(
            "eigensolver needs tol > 0 and maxiter >= 1".into(),
        ));
    }
    let diag = op.diagonal();
    let mut x0 = init.to_vec();
    op.project(&mut x0);
    let nrm = norm(&x0);
    if !(nrm > T::zero()) || !nrm.is_finite() {
        return Err(Error::InvalidArgument(
            "initial vector is zero or not finite".into(),
        ));
    }
    scale(nrm.recip(), &mut x0);

    let mut basis: Vec<Vec<T>> = vec![x0];
    let mut images: Vec<Vec<T>> = Vec::new();
    let mut small = DMatrix::<T>::zeros(0, 0);
    let max_sub = opts.max_subspace.max(3).min(n).max(1);
    let keep = opts.keep.min(max_sub.saturating_sub(2)).max(1);
    // coefficients of the previous Ritz vector in the current basis
    let mut prev_coef: Option<DVector<T>> = None;
    let mut prev_value: Option<T> = None;
    let mut initial_rayleigh = None;
    let mut last = None;

    for iter in 1..=opts.maxiter {
        // images of the new basis vectors, and the projected matrix
        while images.len() < basis.len() {
            let k = images.len();
            let mut w = vec![T::zero(); n];
            op.apply_into(&basis[k], &mut w);
            images.push(w);
        }
        let m = basis.len();
        let mut next = DMatrix::<T>::zeros(m, m);
        let old = small.nrows().min(m);
        next.view_mut((0, 0), (old, old))
            .copy_from(&small.view((0, 0), (old, old)));
        for r in 0..m {
            for c in old.max(r)..m {
                let v = dot(&basis[r], &images[c]);
                next[(r, c)] = v;
                next[(c, r)] = v;
            }
        }
        small = next;
        let (values, vectors) = sorted_eigen(&small)?;
        let theta = values[0];
        let coef = vectors.column(0).into_owned();
        if initial_rayleigh.is_none() {
            initial_rayleigh = Some(theta);
        }

        let x = combine(&basis, coef.as_slice(), n);
        let mut r = combine(&images, coef.as_slice(), n);
        axpy(-theta, &x, &mut r);
        let rnorm = norm(&r);
        if !theta.is_finite() || !rnorm.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite Rayleigh quotient or residual at iteration {iter}"
            )));
        }
        log::trace!("davidson iter {iter}: theta = {theta}, residual = {rnorm:e}, m = {m}");

        let target = opts.tol * T::one().max(theta.abs());
        let settled = prev_value
            .map(|p| (theta - p).abs() <= T::lit(0.1) * opts.tol * theta.abs().max(T::eps()))
            .unwrap_or(n == 1);
        if rnorm <= target && settled || n == 1 {
            let pair = finalize(op, x.clone(), iter, initial_rayleigh.unwrap_or(theta))?;
            if pair.residual <= target || n == 1 {
                return Ok(EigenPair {
                    converged: true,
                    ..pair
                });
            }
        }
        prev_value = Some(theta);

        // correction: approximately (A - theta)^{-1} r
        let mut t = vec![T::zero(); n];
        if !op.precondition(theta, &r, &mut t) {
            let floor = T::lit(1e-8) * T::one().max(theta.abs());
            t.par_iter_mut()
                .zip(r.par_iter().zip(diag.par_iter()))
                .for_each(|(ti, (&ri, &di))| {
                    let mut d = di - theta;
                    if d.abs() < floor {
                        d = if d < T::zero() { -floor } else { floor };
                    }
                    *ti = ri / d;
                });
        }
        op.project(&mut t);

        let mut current = coef;
        if m >= max_sub {
            // thick restart: the lowest Ritz vectors plus the previous one,
            // all combined inside the small space
            let mut cols: Vec<DVector<T>> = (0..keep.min(m))
                .map(|k| vectors.column(k).into_owned())
                .collect();
            if let Some(mut p) = prev_coef.take() {
                for _ in 0..2 {
                    for c in &cols {
                        let d = c.dot(&p);
                        p.axpy(-d, c, T::one());
                    }
                }
                let nrm = p.norm();
                if nrm > T::lit(1e-8) {
                    cols.push(p / nrm);
                }
            }
            let q = DMatrix::from_columns(&cols);
            let qt = q.transpose();
            basis = cols
                .iter()
                .map(|c| combine(&basis, c.as_slice(), n))
                .collect();
            images = cols
                .iter()
                .map(|c| combine(&images, c.as_slice(), n))
                .collect();
            let s = &qt * &small * &q;
            small = (&s + s.transpose()) * T::lit(0.5);
            current = &qt * &current;
        }

        let rel = orthonormalize(&basis, &mut t);
        if rel < T::lit(1e-10) || !rel.is_finite() {
            // preconditioned residual already spanned; fall back to the raw one
            let mut rr = r;
            op.project(&mut rr);
            let rel = orthonormalize(&basis, &mut rr);
            if rel < T::lit(1e-12) || !rel.is_finite() {
                let pair = finalize(op, x, iter, initial_rayleigh.unwrap_or(theta))?;
                let converged = pair.residual <= target;
                return Ok(EigenPair { converged, ..pair });
            }
            t = rr;
        }
        basis.push(t);
        let len = current.len();
        prev_coef = Some(current.resize_vertically(len + 1, T::zero()));
        last = Some((x, iter));
    }

    let (x, iter) = last.expect("maxiter >= 1");
    let pair = finalize(op, x, iter, initial_rayleigh.unwrap_or_else(T::zero))?;
    let converged = pair.residual <= opts.tol * T::one().max(pair.value.abs());
    Ok(EigenPair { converged, ..pair })
}

/// Normalizes `x`, recomputes its Rayleigh quotient and residual from a fresh
/// operator application.
fn finalize<T: Real, Op: SymmetricOperator<T> + ?Sized>(
    op: &Op,
    mut x: Vec<T>,
    iterations: usize,
    initial_rayleigh: T,
) -> Result<EigenPair<T>> {
    let nrm = norm(&x);
    scale(nrm.recip(), &mut x);
    let mut ax = vec![T::zero(); x.len()];
    op.apply_into(&x, &mut ax);
    let value = dot(&x, &ax);
    axpy(-value, &x, &mut ax);
    let residual = norm(&ax);
    if !value.is_finite() || !residual.is_finite() {
        return Err(Error::Numeric("non-finite eigenpair".into()));
    }
    Ok(EigenPair {
        value,
        vector: x,
        residual,
        iterations,
        converged: false,
        initial_rayleigh,
    })
}

/// Eigenvalues in ascending order with matching eigenvector columns.
fn sorted_eigen<T: Real>(m: &DMatrix<T>) -> Result<(Vec<T>, DMatrix<T>)> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite projected eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite")
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let cols: Vec<DVector<T>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    Ok((values, DMatrix::from_columns(&cols)))
}

fn lowest_of<T: Real>(m: &DMatrix<T>) -> Result<(T, DVector<T>)> {
    let eig = SymmetricEigen::new(m.clone());
    let (k, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::Numeric("empty projected matrix".into()))?;
    if !val.is_finite() {
        return Err(Error::Numeric("non-finite projected eigenvalue".into()));
    }
    Ok((val, eig.eigenvectors.column(k).into_owned()))
}

/// Cold-start vector `exp(-(x + y + z)/4)` at the mesh points.
pub fn cold_start<T: Real>(h: &HamiltonianOperator<T>) -> StateVector<T> {
    let g = h.grid();
    let [nx, ny, nz] = g.dims();
    let quarter = T::lit(0.25);
    let mut data = Vec::with_capacity(h.len());
    for p in 0..nx {
        for q in 0..ny {
            for r in 0..nz {
                let pt = g.point(p, q, r);
                data.push((-(pt.x + pt.y + pt.z) * quarter).exp());
            }
        }
    }
    StateVector::from_vec(h.dims(), data).expect("dims match")
}

/// Lowest eigenpair of the mesh Hamiltonian, warm-started from `init` when
/// given. The start vector is exchange-projected in symmetric mode.
pub fn lowest_eigenpair<T: Real>(
    h: &HamiltonianOperator<T>,
    init: Option<&StateVector<T>>,
    opts: &EigenOptions<T>,
) -> Result<EigenResult<T>> {
    let start = match init {
        Some(v) if v.dims() != h.dims() => {
            return Err(Error::InvalidArgument(format!(
                "warm-start vector dims {:?} do not match mesh dims {:?}",
                v.dims(),
                h.dims()
            )))
        }
        Some(v) => v.clone(),
        None => cold_start(h),
    };
    let pair = match opts.preconditioner {
        Preconditioner::Diagonal => davidson(h, start.as_slice(), opts)?,
        Preconditioner::ZLines => davidson(&Preconditioned::new(h), start.as_slice(), opts)?,
    };
    Ok(EigenResult {
        energy: pair.value,
        vector: StateVector::from_vec(h.dims(), pair.vector)?,
        residual: pair.residual,
        iterations: pair.iterations,
        converged: pair.converged,
    })
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn dense_lowest<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(dense_lowest_pair(m)?.0)
}

/// Smallest eigenvalue and its unit eigenvector.
pub fn dense_lowest_pair<T: Real>(m: &DMatrix<T>) -> Result<(T, DVector<T>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if m.nrows() > DENSE_LIMIT {
        return Err(Error::Resource(format!(
            "dense eigensolver limited to dimension {DENSE_LIMIT}, got {}",
            m.nrows()
        )));
    }
    lowest_of(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dense_examples() {
        assert_relative_eq!(dense_lowest(&DMatrix::<f64>::identity(4, 4)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0, 5.0]));
        assert_relative_eq!(dense_lowest(&d).unwrap(), -2.0);
        assert!(matches!(
            dense_lowest(&DMatrix::<f64>::zeros(4097, 1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dense_pair_is_self_consistent() {
        let n = 50;
        let mut seed = 3u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| next());
        let m = &a + a.transpose();
        let (val, vec) = dense_lowest_pair(&m).unwrap();
        let rq = vec.dot(&(&m * &vec)) / vec.dot(&vec);
        assert!((rq - val).abs() <= 1e-12);
    }

    #[test]
    fn davidson_on_dense_matrix() {
        let n = 60;
        let m = DMatrix::<f64>::from_fn(n, n, |r, c| {
            if r == c {
                (r + 1) as f64
            } else {
                0.3 / (1.0 + (r as f64 - c as f64).abs())
            }
        });
        let exact = dense_lowest(&m).unwrap();
        let init = vec![1.0; n];
        let pair = davidson(&m, &init, &EigenOptions::with_tol(1e-12)).unwrap();
        assert!(pair.converged);
        assert!((pair.value - exact).abs() <= 1e-12);
        assert!(pair.residual <= 1e-12 * pair.value.abs().max(1.0));
        assert!(pair.value <= pair.initial_rayleigh);
        assert!((norm(&pair.vector) - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn davidson_flags_non_convergence() {
        let n = 200;
        let m = DMatrix::<f64>::from_fn(n, n, |r, c| {
            if r == c {
                2.0
            } else if r.abs_diff(c) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let init = vec![1.0; n];
        let opts = EigenOptions {
            tol: 1e-14,
            maxiter: 3,
            max_subspace: 40,
            keep: 20,
            preconditioner: Preconditioner::default(),
        };
        let pair = davidson(&m, &init, &opts).unwrap();
        assert!(!pair.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(davidson(&m, &[1.0, 0.0], &EigenOptions::default()).is_err());
        assert!(davidson(&m, &[0.0, 0.0, 0.0], &EigenOptions::default()).is_err());
        let opts = EigenOptions {
            maxiter: 0,
            ..EigenOptions::default()
        };
        assert!(davidson(&m, &[1.0, 0.0, 0.0], &opts).is_err());
    }

    #[test]
    fn nan_is_reported() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(
            davidson(&m, &[1.0, 1.0, 1.0], &EigenOptions::default()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn reductions_are_order_stable() {
        let v: Vec<f64> = (0..20000)
            .map(|i| ((i * 7919) % 1000) as f64 * 1e-3)
            .collect();
        let a = dot(&v, &v);
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| dot(&v, &v));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
