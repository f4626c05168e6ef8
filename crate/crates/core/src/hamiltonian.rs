//! Mesh Hamiltonian for the two-electron ion in the Gauss approximation.
//!
//! The kinetic form `½ ∫ J Σ_ab G^{ab} ∂_a φ ∂_b ψ` and the overlap `∫ J φ ψ`
//! are both evaluated with the mesh quadrature. The overlap is then diagonal
//! (`J` at each point) and is removed by the similarity `J^{-1/2} · J^{-1/2}`,
//! leaving a standard symmetric eigenproblem.
//!
//! Application never forms the matrix. With `c = v / sqrt(J)` the product is
//! computed as: gradients of `c` at all mesh points (one 1D contraction per
//! axis), pointwise fluxes `½ J G · ∇c`, then the transposed contractions.
//! Cost is `O(N (Nx + Ny + Nz))` for `N = Nx Ny Nz` points.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::perimetric::{build_grid, MeshSpec, Pair, PerimetricGrid};
use crate::scalar::Real;

/// Largest mesh the dense oracle will assemble.
pub const DENSE_LIMIT: usize = 4096;

/// Coefficients of the Coulomb terms: `V = -nuclear (1/r1 + 1/r2) + electron / r12`.
///
/// The scaled problem uses `(1, λ)` with `λ = 1/Z`; the original one `(Z, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling<T> {
    pub nuclear: T,
    pub electron: T,
}

impl<T: Real> Coupling<T> {
    pub fn scaled(lambda: T) -> Self {
        Self {
            nuclear: T::one(),
            electron: lambda,
        }
    }

    pub fn unscaled(z: T) -> Self {
        Self {
            nuclear: z,
            electron: T::one(),
        }
    }
}

/// Expansion coefficients over the product basis, `(i, j, k)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> StateVector<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::InvalidArgument(format!(
                "state of length {} does not fit a {}x{}x{} mesh",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> T {
        self.data.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

/// Symmetrizes a state under electron exchange, `(v + Pv) / 2` with
/// `P: (i, j, k) -> (j, i, k)`.
pub fn exchange_project<T: Real>(v: &StateVector<T>) -> Result<StateVector<T>> {
    let mut out = v.clone();
    exchange_project_in_place(v.dims, &mut out.data)?;
    Ok(out)
}

pub(crate) fn exchange_project_in_place<T: Real>(dims: [usize; 3], v: &mut [T]) -> Result<()> {
    let [nx, ny, nz] = dims;
    if nx != ny {
        return Err(Error::Configuration(format!(
            "exchange projection needs Nx = Ny, got {nx} and {ny}"
        )));
    }
    let half = T::lit(0.5);
    for i in 0..nx {
        for j in (i + 1)..ny {
            for k in 0..nz {
                let a = (i * ny + j) * nz + k;
                let b = (j * ny + i) * nz + k;
                let m = half * (v[a] + v[b]);
                v[a] = m;
                v[b] = m;
            }
        }
    }
    Ok(())
}

/// Applies the exchange permutation `P`.
pub fn exchange_permute<T: Real>(v: &StateVector<T>) -> Result<StateVector<T>> {
    let [nx, ny, nz] = v.dims;
    if nx != ny {
        return Err(Error::Configuration(format!(
            "exchange permutation needs Nx = Ny, got {nx} and {ny}"
        )));
    }
    let mut out = v.clone();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                out.data[(i * ny + j) * nz + k] = v.data[(j * ny + i) * nz + k];
            }
        }
    }
    Ok(out)
}

/// Diagonal Coulomb potential on the mesh,
/// `-2 nuclear / (x+z) - 2 nuclear / (y+z) + 2 electron / (x+y)`.
pub fn build_potential<T: Real>(grid: &PerimetricGrid<T>, coupling: Coupling<T>) -> Vec<T> {
    let (nuclear, repulsion) = coulomb_tables(grid);
    nuclear
        .iter()
        .zip(&repulsion)
        .map(|(&n, &e)| coupling.nuclear * n + coupling.electron * e)
        .collect()
}

/// `-(1/r1 + 1/r2)` and `1/r12` at every mesh point.
fn coulomb_tables<T: Real>(grid: &PerimetricGrid<T>) -> (Vec<T>, Vec<T>) {
    let [nx, ny, nz] = grid.dims();
    let mut nuclear = Vec::with_capacity(grid.len());
    let mut repulsion = Vec::with_capacity(grid.len());
    let two = T::lit(2.0);
    let (xs, ys, zs) = (
        &grid.axis(0).points,
        &grid.axis(1).points,
        &grid.axis(2).points,
    );
    for &x in xs.iter().take(nx) {
        for &y in ys.iter().take(ny) {
            for &z in zs.iter().take(nz) {
                nuclear.push(-(two / (x + z)) - two / (y + z));
                repulsion.push(two / (x + y));
            }
        }
    }
    (nuclear, repulsion)
}

/// The mesh Hamiltonian after the overlap similarity.
#[derive(Debug, Clone)]
pub struct HamiltonianOperator<T> {
    grid: PerimetricGrid<T>,
    coupling: Coupling<T>,
    symmetric: bool,
    /// Per axis, `D[i][p] sqrt(λ̂_p) / h`, row-major.
    derivs: [Vec<T>; 3],
    inv_sqrt_volume: Vec<T>,
    repulsion: Vec<T>,
    potential: Vec<T>,
    diagonal: Vec<T>,
}

/// Builds the scaled Hamiltonian `-½(Δ1+Δ2) - 1/r1 - 1/r2 + λ/r12`.
///
/// With `symmetric` the operator is restricted to exchange-symmetric states,
/// which requires `Nx = Ny` and `hx = hy`.
pub fn build_hamiltonian<T: Real>(
    spec: &MeshSpec,
    lambda: T,
    symmetric: bool,
) -> Result<HamiltonianOperator<T>> {
    HamiltonianOperator::new(spec, Coupling::scaled(lambda), symmetric)
}

/// Builds the original Hamiltonian `-½(Δ1+Δ2) - Z/r1 - Z/r2 + 1/r12`.
pub fn build_unscaled_hamiltonian<T: Real>(
    spec: &MeshSpec,
    z: T,
    symmetric: bool,
) -> Result<HamiltonianOperator<T>> {
    HamiltonianOperator::new(spec, Coupling::unscaled(z), symmetric)
}

impl<T: Real> HamiltonianOperator<T> {
    pub fn new(spec: &MeshSpec, coupling: Coupling<T>, symmetric: bool) -> Result<Self> {
        if symmetric && !spec.is_exchange_symmetric() {
            return Err(Error::Configuration(format!(
                "exchange-symmetric mode needs Nx = Ny and hx = hy, got {spec}"
            )));
        }
        let grid = build_grid::<T>(spec)?;
        Ok(Self::from_grid(grid, coupling, symmetric))
    }

    fn from_grid(grid: PerimetricGrid<T>, coupling: Coupling<T>, symmetric: bool) -> Self {
        let derivs = [0, 1, 2].map(|a| {
            let axis = grid.axis(a);
            axis.basis
                .normalized_deriv_matrix()
                .into_iter()
                .map(|d| d / axis.scale)
                .collect::<Vec<T>>()
        });
        let inv_sqrt_volume = grid.volume().iter().map(|j| j.sqrt().recip()).collect();
        let (nuclear, repulsion) = coulomb_tables(&grid);
        let potential = nuclear
            .iter()
            .zip(&repulsion)
            .map(|(&n, &e)| coupling.nuclear * n + coupling.electron * e)
            .collect();
        let mut op = Self {
            grid,
            coupling,
            symmetric,
            derivs,
            inv_sqrt_volume,
            repulsion,
            potential,
            diagonal: Vec::new(),
        };
        op.diagonal = op.compute_diagonal();
        op
    }

    /// Same mesh, different Coulomb couplings. Reuses every kinetic table.
    pub fn with_coupling(&self, coupling: Coupling<T>) -> Self {
        let mut op = self.clone();
        op.coupling = coupling;
        let (nuclear, _) = coulomb_tables(&op.grid);
        op.potential = nuclear
            .iter()
            .zip(&op.repulsion)
            .map(|(&n, &e)| coupling.nuclear * n + coupling.electron * e)
            .collect();
        op.diagonal = op.compute_diagonal();
        op
    }

    /// Scaled operator at another `λ`.
    pub fn with_lambda(&self, lambda: T) -> Self {
        self.with_coupling(Coupling::scaled(lambda))
    }

    pub fn grid(&self) -> &PerimetricGrid<T> {
        &self.grid
    }

    pub fn spec(&self) -> &MeshSpec {
        self.grid.spec()
    }

    pub fn coupling(&self) -> Coupling<T> {
        self.coupling
    }

    /// Interelectron coupling relative to the nuclear one.
    pub fn lambda(&self) -> T {
        self.coupling.electron / self.coupling.nuclear
    }

    pub fn is_symmetric_mode(&self) -> bool {
        self.symmetric
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// `1/r12` at every mesh point; `dH/dλ` of the scaled operator.
    pub fn repulsion(&self) -> &[T] {
        &self.repulsion
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    /// `w = H v`.
    pub fn apply(&self, v: &StateVector<T>) -> Result<StateVector<T>> {
        if v.dims != self.dims() {
            return Err(Error::InvalidArgument(format!(
                "state dims {:?} do not match mesh dims {:?}",
                v.dims,
                self.dims()
            )));
        }
        let mut out = StateVector::zeros(v.dims);
        self.apply_into(&v.data, &mut out.data);
        Ok(out)
    }

    /// `y = H x` on raw slices of length `N`.
    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        let n = self.len();
        assert_eq!(x.len(), n, "input length");
        assert_eq!(y.len(), n, "output length");
        let dims = self.dims();
        let c: Vec<T> = x
            .par_iter()
            .zip(self.inv_sqrt_volume.par_iter())
            .map(|(&xi, &s)| xi * s)
            .collect();

        let mut grads: [Vec<T>; 3] = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
        for (a, g) in grads.iter_mut().enumerate() {
            contract(dims, a, &self.derivs[a], true, &c, g, false);
        }

        let half = T::lit(0.5);
        let tables = Pair::ALL.map(|p| self.grid.weighted_metric(p));
        let [gx, gy, gz] = &mut grads;
        gx.par_iter_mut()
            .zip(gy.par_iter_mut())
            .zip(gz.par_iter_mut())
            .enumerate()
            .for_each(|(m, ((x, y), z))| {
                let [wxx, wyy, wzz, wxy, wxz, wyz] = tables.map(|t| t[m]);
                let (a, b, c) = (*x, *y, *z);
                *x = half * (wxx * a + wxy * b + wxz * c);
                *y = half * (wxy * a + wyy * b + wyz * c);
                *z = half * (wxz * a + wyz * b + wzz * c);
            });

        y.iter_mut().for_each(|v| *v = T::zero());
        for (a, f) in grads.iter().enumerate() {
            contract(dims, a, &self.derivs[a], false, f, y, true);
        }

        y.par_iter_mut()
            .zip(x.par_iter())
            .zip(self.inv_sqrt_volume.par_iter())
            .zip(self.potential.par_iter())
            .for_each(|(((yi, &xi), &s), &v)| *yi = *yi * s + v * xi);
    }

    fn compute_diagonal(&self) -> Vec<T> {
        let [nx, ny, nz] = self.dims();
        let d = &self.derivs;
        let w = Pair::ALL.map(|p| self.grid.weighted_metric(p));
        let half = T::lit(0.5);
        let idx = |p: usize, q: usize, r: usize| (p * ny + q) * nz + r;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let m = idx(i, j, k);
                    let mut s = T::zero();
                    for p in 0..nx {
                        s += half * d[0][i * nx + p].powi(2) * w[0][idx(p, j, k)];
                    }
                    for q in 0..ny {
                        s += half * d[1][j * ny + q].powi(2) * w[1][idx(i, q, k)];
                    }
                    for r in 0..nz {
                        s += half * d[2][k * nz + r].powi(2) * w[2][idx(i, j, r)];
                    }
                    let (dx, dy, dz) = (d[0][i * nx + i], d[1][j * ny + j], d[2][k * nz + k]);
                    s += dx * dy * w[3][m] + dx * dz * w[4][m] + dy * dz * w[5][m];
                    out.push(s / self.grid.volume()[m] + self.potential[m]);
                }
            }
        }
        out
    }

    /// Flat indices of the points on one line along `axis`; `line` numbers
    /// the lines in row-major order of the two remaining indices.
    pub fn line_indices(&self, axis: usize, line: usize) -> Vec<usize> {
        let [nx, ny, nz] = self.dims();
        let idx = |p: usize, q: usize, r: usize| (p * ny + q) * nz + r;
        match axis {
            0 => (0..nx).map(|p| idx(p, line / nz, line % nz)).collect(),
            1 => (0..ny).map(|q| idx(line / nz, q, line % nz)).collect(),
            _ => (0..nz).map(|r| idx(line / ny, line % ny, r)).collect(),
        }
    }

    /// Block of the operator coupling the points of one line along `axis`.
    pub fn line_block(&self, axis: usize, line: usize) -> DMatrix<T> {
        let dims = self.dims();
        let n = dims[axis];
        let pts = self.line_indices(axis, line);
        let d = &self.derivs;
        let w = |a: usize, b: usize| self.grid.weighted_metric(Pair::of(a, b));
        let half = T::lit(0.5);
        // fixed indices of the line along the other two axes
        let m0 = pts[0];
        let coords = [
            m0 / (dims[1] * dims[2]),
            (m0 / dims[2]) % dims[1],
            m0 % dims[2],
        ];
        let others: Vec<usize> = (0..3).filter(|&b| b != axis).collect();
        let dd = |b: usize| {
            let o = coords[b];
            d[b][o * dims[b] + o]
        };
        let da = &d[axis];
        let waa = w(axis, axis);
        let mut k = DMatrix::<T>::zeros(n, n);
        for i in 0..n {
            for ip in i..n {
                let mut s = T::zero();
                for p in 0..n {
                    s += da[i * n + p] * da[ip * n + p] * waa[pts[p]];
                }
                s *= half;
                for &b in &others {
                    let wab = w(axis, b);
                    s += half
                        * dd(b)
                        * (da[i * n + ip] * wab[pts[ip]] + da[ip * n + i] * wab[pts[i]]);
                }
                k[(i, ip)] = s;
                k[(ip, i)] = s;
            }
        }
        let (b, c) = (others[0], others[1]);
        for i in 0..n {
            let m = pts[i];
            let mut s = dd(b) * dd(c) * w(b, c)[m];
            for &e in &others {
                let ne = dims[e];
                let o = coords[e];
                let stride = match e {
                    0 => dims[1] * dims[2],
                    1 => dims[2],
                    _ => 1,
                };
                let base = m - o * stride;
                let wee = w(e, e);
                for q in 0..ne {
                    s += half * d[e][o * ne + q].powi(2) * wee[base + q * stride];
                }
            }
            k[(i, i)] += s;
        }
        for i in 0..n {
            for ip in 0..n {
                k[(i, ip)] *= self.inv_sqrt_volume[pts[i]] * self.inv_sqrt_volume[pts[ip]];
            }
            k[(i, i)] += self.potential[pts[i]];
        }
        k
    }

    /// Projects onto exchange-symmetric states when the operator is in
    /// symmetric mode; otherwise leaves `v` untouched.
    pub fn project(&self, v: &mut [T]) {
        if self.symmetric {
            exchange_project_in_place(self.dims(), v).expect("symmetric mode implies Nx = Ny");
        }
    }
}

/// One-axis contraction on a row-major `(n0, n1, n2)` array.
///
/// `transpose = true`: `out[.., p, ..] = Σ_i m[i][p] input[.., i, ..]`;
/// otherwise `out[.., i, ..] = Σ_p m[i][p] input[.., p, ..]`.
/// With `accumulate` the result is added to `out`.
fn contract<T: Real>(
    dims: [usize; 3],
    axis: usize,
    m: &[T],
    transpose: bool,
    input: &[T],
    out: &mut [T],
    accumulate: bool,
) {
    let [n0, n1, n2] = dims;
    let n = dims[axis];
    let coef = |row: usize, col: usize| {
        if transpose {
            m[col * n + row]
        } else {
            m[row * n + col]
        }
    };
    match axis {
        0 => {
            let stride = n1 * n2;
            out.par_chunks_mut(stride)
                .enumerate()
                .for_each(|(row, dst)| {
                    if !accumulate {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                    }
                    for col in 0..n0 {
                        let a = coef(row, col);
                        let src = &input[col * stride..(col + 1) * stride];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += a * s);
                    }
                });
        }
        1 => {
            let slab = n1 * n2;
            out.par_chunks_mut(slab)
                .zip(input.par_chunks(slab))
                .for_each(|(dst, src)| {
                    if !accumulate {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                    }
                    for row in 0..n1 {
                        let d = &mut dst[row * n2..(row + 1) * n2];
                        for col in 0..n1 {
                            let a = coef(row, col);
                            let s = &src[col * n2..(col + 1) * n2];
                            d.iter_mut().zip(s).for_each(|(d, &s)| *d += a * s);
                        }
                    }
                });
        }
        _ => {
            let slab = n1 * n2;
            out.par_chunks_mut(slab)
                .zip(input.par_chunks(slab))
                .for_each(|(dst, src)| {
                    for (d, s) in dst.chunks_mut(n2).zip(src.chunks(n2)) {
                        for (row, dv) in d.iter_mut().enumerate() {
                            let acc = s
                                .iter()
                                .enumerate()
                                .fold(T::zero(), |acc, (col, &sv)| acc + coef(row, col) * sv);
                            if accumulate {
                                *dv += acc;
                            } else {
                                *dv = acc;
                            }
                        }
                    }
                });
        }
    }
}

/// Explicit matrix of the operator, built element by element from the
/// collapsed Gauss-approximation formulas (no use of [`HamiltonianOperator::apply_into`]).
pub fn assemble_dense<T: Real>(h: &HamiltonianOperator<T>) -> Result<DMatrix<T>> {
    let n = h.len();
    if n > DENSE_LIMIT {
        return Err(Error::Resource(format!(
            "dense assembly limited to {DENSE_LIMIT} points, mesh has {n}"
        )));
    }
    let grid = h.grid();
    let [nx, ny, nz] = grid.dims();
    let idx = |p: usize, q: usize, r: usize| (p * ny + q) * nz + r;
    let ax = grid.axes();
    let dm = |a: usize, i: usize, p: usize| ax[a].basis.deriv(i, p);
    let lam = |a: usize, i: usize| ax[a].basis.rule().reg_weights()[i];
    let sq = |a: usize, i: usize| lam(a, i).sqrt();
    let hs = [ax[0].scale, ax[1].scale, ax[2].scale];
    let jv = grid.volume();
    let wt = Pair::ALL.map(|p| grid.weighted_metric(p));
    let two = T::lit(2.0);

    let mut m = DMatrix::<T>::zeros(n, n);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let row = idx(i, j, k);
                // (x, x)
                for i2 in 0..nx {
                    let s = (0..nx).fold(T::zero(), |s, p| {
                        s + lam(0, p) * dm(0, i, p) * dm(0, i2, p) * wt[0][idx(p, j, k)]
                    });
                    m[(row, idx(i2, j, k))] += s / (two * hs[0] * hs[0]);
                }
                // (y, y)
                for j2 in 0..ny {
                    let s = (0..ny).fold(T::zero(), |s, q| {
                        s + lam(1, q) * dm(1, j, q) * dm(1, j2, q) * wt[1][idx(i, q, k)]
                    });
                    m[(row, idx(i, j2, k))] += s / (two * hs[1] * hs[1]);
                }
                // (z, z)
                for k2 in 0..nz {
                    let s = (0..nz).fold(T::zero(), |s, r| {
                        s + lam(2, r) * dm(2, k, r) * dm(2, k2, r) * wt[2][idx(i, j, r)]
                    });
                    m[(row, idx(i, j, k2))] += s / (two * hs[2] * hs[2]);
                }
                // (x, y) and its transpose partner
                for i2 in 0..nx {
                    for j2 in 0..ny {
                        let t = sq(0, i2)
                            * sq(1, j)
                            * dm(0, i, i2)
                            * dm(1, j2, j)
                            * wt[3][idx(i2, j, k)]
                            / (two * hs[0] * hs[1]);
                        let col = idx(i2, j2, k);
                        m[(row, col)] += t;
                        m[(col, row)] += t;
                    }
                }
                // (x, z)
                for i2 in 0..nx {
                    for k2 in 0..nz {
                        let t = sq(0, i2)
                            * sq(2, k)
                            * dm(0, i, i2)
                            * dm(2, k2, k)
                            * wt[4][idx(i2, j, k)]
                            / (two * hs[0] * hs[2]);
                        let col = idx(i2, j, k2);
                        m[(row, col)] += t;
                        m[(col, row)] += t;
                    }
                }
                // (y, z)
                for j2 in 0..ny {
                    for k2 in 0..nz {
                        let t = sq(1, j2)
                            * sq(2, k)
                            * dm(1, j, j2)
                            * dm(2, k2, k)
                            * wt[5][idx(i, j2, k)]
                            / (two * hs[1] * hs[2]);
                        let col = idx(i, j2, k2);
                        m[(row, col)] += t;
                        m[(col, row)] += t;
                    }
                }
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] /= (jv[r] * jv[c]).sqrt();
        }
        m[(r, r)] += h.potential()[r];
    }
    Ok(m)
}
