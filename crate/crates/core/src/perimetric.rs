//! Perimetric coordinates for S states of a two-electron system.
//!
//! With `x = r1 + r12 - r2`, `y = r2 + r12 - r1`, `z = r1 + r2 - r12` the
//! triangle-constrained distances become the unconstrained octant. Electron
//! exchange is the swap `x <-> y`.
//!
//! The S-state Laplacian `Δ1 + Δ2` in `(r1, r2, r12)` is the divergence form
//! `J^{-1} ∂_a (J g^{ab} ∂_b)` with `J = r1 r2 r12`. Constant factors of the
//! volume element (`8π²` and the `1/4` of the coordinate change) cancel between
//! the kinetic and overlap forms and are dropped throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadmesh::LagrangeBasis;
use crate::scalar::Real;

pub type Mat3<T> = [[T; 3]; 3];

/// Gradients of `(x, y, z)` with respect to `(r1, r2, r12)`, one per row.
const GRADIENTS: [[f64; 3]; 3] = [[1.0, -1.0, 1.0], [-1.0, 1.0, 1.0], [1.0, 1.0, -1.0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialTriple<T> {
    pub r1: T,
    pub r2: T,
    pub r12: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerimetricTriple<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> RadialTriple<T> {
    pub fn new(r1: T, r2: T, r12: T) -> Self {
        Self { r1, r2, r12 }
    }

    fn check_triangle(&self) -> Result<()> {
        let Self { r1, r2, r12 } = *self;
        let slack = T::lit(4.0) * T::eps() * (r1 + r2 + r12);
        let ok = r1 >= T::zero()
            && r2 >= T::zero()
            && r12 >= T::zero()
            && r12 <= r1 + r2 + slack
            && (r1 - r2).abs() <= r12 + slack;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "distances ({r1}, {r2}, {r12}) violate the triangle inequalities"
            )))
        }
    }
}

impl<T: Real> PerimetricTriple<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn to_radial(self) -> RadialTriple<T> {
        radial_from_perimetric(self)
    }

    /// Electron exchange.
    pub fn swapped(self) -> Self {
        Self {
            x: self.y,
            y: self.x,
            z: self.z,
        }
    }
}

pub fn perimetric_from_radial<T: Real>(t: RadialTriple<T>) -> Result<PerimetricTriple<T>> {
    t.check_triangle()?;
    let RadialTriple { r1, r2, r12 } = t;
    // Clamp rounding noise on the boundary of the octant.
    let nonneg = |v: T| v.max(T::zero());
    Ok(PerimetricTriple {
        x: nonneg(r1 + r12 - r2),
        y: nonneg(r2 + r12 - r1),
        z: nonneg(r1 + r2 - r12),
    })
}

pub fn radial_from_perimetric<T: Real>(p: PerimetricTriple<T>) -> RadialTriple<T> {
    let half = T::lit(0.5);
    RadialTriple {
        r1: half * (p.x + p.z),
        r2: half * (p.y + p.z),
        r12: half * (p.x + p.y),
    }
}

/// Inverse metric of `Δ1 + Δ2` in `(r1, r2, r12)`:
/// `[[1, 0, c1], [0, 1, c2], [c1, c2, 2]]` with `c1`, `c2` the cosines of the
/// angles between `r⃗1` and `r⃗12` and between `r⃗2` and `r⃗21`.
pub fn metric_radial<T: Real>(t: RadialTriple<T>) -> Result<Mat3<T>> {
    let RadialTriple { r1, r2, r12 } = t;
    if !(r1 > T::zero() && r2 > T::zero() && r12 > T::zero()) {
        return Err(Error::Domain(format!(
            "metric needs positive distances, got ({r1}, {r2}, {r12})"
        )));
    }
    let two = T::lit(2.0);
    let c1 = (r1 * r1 + r12 * r12 - r2 * r2) / (two * r1 * r12);
    let c2 = (r2 * r2 + r12 * r12 - r1 * r1) / (two * r2 * r12);
    let (o, z) = (T::one(), T::zero());
    Ok([[o, z, c1], [z, o, c2], [c1, c2, two]])
}

/// `A m Aᵀ` with `A` the constant gradient matrix of the perimetric map.
fn to_perimetric<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let a = GRADIENTS.map(|row| row.map(T::lit));
    let mut am = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            am[i][k] = (0..3).fold(T::zero(), |s, j| s + a[i][j] * m[j][k]);
        }
    }
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i][k] = (0..3).fold(T::zero(), |s, j| s + am[i][j] * a[k][j]);
        }
    }
    out
}

/// Inverse metric `G` in perimetric coordinates.
pub fn metric_perimetric<T: Real>(p: PerimetricTriple<T>) -> Result<Mat3<T>> {
    let g = metric_radial(radial_from_perimetric(p))?;
    Ok(to_perimetric(&g))
}

/// `J = r1 r2 r12 = (x+z)(y+z)(x+y)/8`.
pub fn volume_weight<T: Real>(p: PerimetricTriple<T>) -> T {
    (p.x + p.z) * (p.y + p.z) * (p.x + p.y) / T::lit(8.0)
}

/// `J G`, evaluated as a polynomial in the distances so that it stays finite
/// on the boundary of the octant.
///
/// Expanding `A g Aᵀ` gives `G^{xx} = 4 + 2c1 - 2c2`, `G^{yy} = 4 - 2c1 + 2c2`,
/// `G^{zz} = 4 - 2c1 - 2c2`, `G^{xz} = 2c2 - 2`, `G^{yz} = 2c1 - 2` and
/// `G^{xy} = 0`. Written this way the tables are bit-exactly symmetric
/// under `x <-> y`.
pub fn weighted_metric<T: Real>(p: PerimetricTriple<T>) -> Mat3<T> {
    let RadialTriple { r1, r2, r12 } = radial_from_perimetric(p);
    let j = volume_weight(p);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let jc1 = half * r2 * (r1 * r1 + r12 * r12 - r2 * r2);
    let jc2 = half * r1 * (r2 * r2 + r12 * r12 - r1 * r1);
    let diff = two * (jc1 - jc2);
    let xx = four * j + diff;
    let yy = four * j - diff;
    let zz = four * j - two * (jc1 + jc2);
    let xz = two * (jc2 - j);
    let yz = two * (jc1 - j);
    let zero = T::zero();
    [[xx, zero, xz], [zero, yy, yz], [xz, yz, zz]]
}

/// Lattice sizes and scale parameters; physical mesh points are `h * u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl MeshSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, hx: f64, hy: f64, hz: f64) -> Self {
        Self {
            nx,
            ny,
            nz,
            hx,
            hy,
            hz,
        }
    }

    /// Exchange-symmetric lattice `(n, n, nz; h, h, hz)`.
    pub fn symmetric(n: usize, nz: usize, h: f64, hz: f64) -> Self {
        Self::new(n, n, nz, h, h, hz)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny), ("nz", self.nz)] {
            if n == 0 || n > crate::quadmesh::MAX_POINTS {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in 1..={}, got {n}",
                    crate::quadmesh::MAX_POINTS
                )));
            }
        }
        for (name, h) in [("hx", self.hx), ("hy", self.hy), ("hz", self.hz)] {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {h}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_exchange_symmetric(&self) -> bool {
        self.nx == self.ny && self.hx == self.hy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same lattice with all scale parameters divided by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            hx: self.hx / factor,
            hy: self.hy / factor,
            hz: self.hz / factor,
            ..*self
        }
    }
}

impl std::fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}x{}x{}; {}, {}, {}]",
            self.nx, self.ny, self.nz, self.hx, self.hy, self.hz
        )
    }
}

/// One mesh axis: the 1D basis plus its scaled coordinates.
#[derive(Debug, Clone)]
pub struct Axis<T> {
    pub basis: LagrangeBasis<T>,
    pub scale: T,
    pub points: Vec<T>,
}

impl<T: Real> Axis<T> {
    fn new(n: usize, h: f64) -> Result<Self> {
        let basis = LagrangeBasis::standard(n)?;
        let scale = T::lit(h);
        let points = basis.rule().nodes().iter().map(|&u| scale * u).collect();
        Ok(Self {
            basis,
            scale,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Index of a coordinate pair in the coefficient tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pair {
    XX,
    YY,
    ZZ,
    XY,
    XZ,
    YZ,
}

impl Pair {
    pub const ALL: [Pair; 6] = [Pair::XX, Pair::YY, Pair::ZZ, Pair::XY, Pair::XZ, Pair::YZ];

    pub fn of(a: usize, b: usize) -> Pair {
        match (a.min(b), a.max(b)) {
            (0, 0) => Pair::XX,
            (1, 1) => Pair::YY,
            (2, 2) => Pair::ZZ,
            (0, 1) => Pair::XY,
            (0, 2) => Pair::XZ,
            (1, 2) => Pair::YZ,
            _ => panic!("coordinate index out of range"),
        }
    }

    fn components(self) -> (usize, usize) {
        match self {
            Pair::XX => (0, 0),
            Pair::YY => (1, 1),
            Pair::ZZ => (2, 2),
            Pair::XY => (0, 1),
            Pair::XZ => (0, 2),
            Pair::YZ => (1, 2),
        }
    }
}

/// Tensor-product mesh with the volume weight and the `J G^{ab}` tables
/// precomputed at every point. Tables are flat, `(p, q, r)` row-major.
#[derive(Debug, Clone)]
pub struct PerimetricGrid<T> {
    spec: MeshSpec,
    axes: [Axis<T>; 3],
    volume: Vec<T>,
    weighted: [Vec<T>; 6],
}

impl<T: Real> PerimetricGrid<T> {
    pub fn spec(&self) -> &MeshSpec {
        &self.spec
    }

    pub fn axes(&self) -> &[Axis<T>; 3] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis<T> {
        &self.axes[a]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.spec.nx, self.spec.ny, self.spec.nz]
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, p: usize, q: usize, r: usize) -> usize {
        (p * self.spec.ny + q) * self.spec.nz + r
    }

    pub fn point(&self, p: usize, q: usize, r: usize) -> PerimetricTriple<T> {
        PerimetricTriple::new(
            self.axes[0].points[p],
            self.axes[1].points[q],
            self.axes[2].points[r],
        )
    }

    /// `J` at every mesh point.
    pub fn volume(&self) -> &[T] {
        &self.volume
    }

    /// `J G^{ab}` at every mesh point.
    pub fn weighted_metric(&self, pair: Pair) -> &[T] {
        &self.weighted[pair as usize]
    }
}

/// Precomputes all per-point tables for a lattice.
pub fn build_grid<T: Real>(spec: &MeshSpec) -> Result<PerimetricGrid<T>> {
    spec.validate()?;
    let axes = [
        Axis::new(spec.nx, spec.hx)?,
        Axis::new(spec.ny, spec.hy)?,
        Axis::new(spec.nz, spec.hz)?,
    ];
    let total = spec.len();
    let mut volume = Vec::new();
    volume
        .try_reserve_exact(total)
        .map_err(|e| Error::Resource(format!("volume table of {total} points: {e}")))?;
    volume.resize(total, T::zero());
    let mut weighted: [Vec<T>; 6] = Default::default();
    for table in weighted.iter_mut() {
        table
            .try_reserve_exact(total)
            .map_err(|e| Error::Resource(format!("metric table of {total} points: {e}")))?;
        table.resize(total, T::zero());
    }

    let (ny, nz) = (spec.ny, spec.nz);
    let slab = ny * nz;
    // Each p-slab is written independently, so the result does not depend on
    // how rayon partitions the work.
    let [wxx, wyy, wzz, wxy, wxz, wyz] = &mut weighted;
    volume
        .par_chunks_mut(slab)
        .zip(wxx.par_chunks_mut(slab))
        .zip(wyy.par_chunks_mut(slab))
        .zip(wzz.par_chunks_mut(slab))
        .zip(wxy.par_chunks_mut(slab))
        .zip(wxz.par_chunks_mut(slab))
        .zip(wyz.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(p, ((((((vol, xx), yy), zz), xy), xz), yz))| {
            let x = axes[0].points[p];
            for q in 0..ny {
                let y = axes[1].points[q];
                for r in 0..nz {
                    let pt = PerimetricTriple::new(x, y, axes[2].points[r]);
                    let k = q * nz + r;
                    vol[k] = volume_weight(pt);
                    let w = weighted_metric(pt);
                    let put = |pair: Pair, dst: &mut [T]| {
                        let (a, b) = pair.components();
                        dst[k] = w[a][b];
                    };
                    put(Pair::XX, xx);
                    put(Pair::YY, yy);
                    put(Pair::ZZ, zz);
                    put(Pair::XY, xy);
                    put(Pair::XZ, xz);
                    put(Pair::YZ, yz);
                }
            }
        });

    Ok(PerimetricGrid {
        spec: *spec,
        axes,
        volume,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equilateral_and_collinear_points() {
        let p = perimetric_from_radial(RadialTriple::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(p, PerimetricTriple::new(1.0, 1.0, 1.0));
        let p = perimetric_from_radial(RadialTriple::new(1.0, 1.0, 2.0)).unwrap();
        assert_eq!(p, PerimetricTriple::new(2.0, 2.0, 0.0));
        assert!(matches!(
            perimetric_from_radial(RadialTriple::new(1.0, 1.0, 3.0)),
            Err(Error::Domain(_))
        ));
        assert!(perimetric_from_radial(RadialTriple::new(5.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn radial_metric_cosines() {
        let g = metric_radial(RadialTriple::new(1.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(g[0][2], 0.5);
        assert_relative_eq!(g[1][2], 0.5);
        assert_eq!(g[2][2], 2.0);
        let g = metric_radial(RadialTriple::new(1.0, 2.0, 3.0)).unwrap();
        assert_relative_eq!(g[0][2], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g[1][2], 1.0, epsilon = 1e-15);
        assert!(matches!(
            metric_radial(RadialTriple::new(0.0, 1.0, 1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn perimetric_metric_at_unit_point() {
        let g = metric_perimetric(PerimetricTriple::new(1.0, 1.0, 1.0)).unwrap();
        // A g Aᵀ with c1 = c2 = 1/2
        let c = 0.5;
        assert_relative_eq!(g[0][0], 4.0 + 2.0 * c - 2.0 * c, epsilon = 1e-15);
        assert_relative_eq!(g[0][0], 4.0, epsilon = 1e-15);
        assert_relative_eq!(g[0][1], g[1][0]);
        assert!(matches!(
            metric_perimetric(PerimetricTriple::new(1.0, 0.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_metric_matches_product() {
        let p = PerimetricTriple::new(0.3, 1.7, 0.9);
        let g = metric_perimetric(p).unwrap();
        let j = volume_weight(p);
        let w = weighted_metric(p);
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(w[a][b], j * g[a][b], max_relative = 1e-13, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn volume_weight_examples() {
        assert_eq!(volume_weight(PerimetricTriple::new(1.0, 1.0, 1.0)), 1.0);
        assert_eq!(volume_weight(PerimetricTriple::new(2.0, 2.0, 0.0)), 2.0);
    }

    #[test]
    fn single_point_grid() {
        let g = build_grid::<f64>(&MeshSpec::new(1, 1, 1, 1.0, 1.0, 1.0)).unwrap();
        let pt = g.point(0, 0, 0);
        assert_relative_eq!(pt.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.volume()[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn grid_volume_matches_pointwise() {
        let h = 0.7;
        let g = build_grid::<f64>(&MeshSpec::new(2, 2, 2, h, h, h)).unwrap();
        for p in 0..2 {
            for q in 0..2 {
                for r in 0..2 {
                    let pt = g.point(p, q, r);
                    assert_eq!(g.volume()[g.index(p, q, r)], volume_weight(pt));
                }
            }
        }
    }

    #[test]
    fn doubling_hz_doubles_z_nodes() {
        let a = build_grid::<f64>(&MeshSpec::new(3, 3, 4, 1.0, 1.0, 0.5)).unwrap();
        let b = build_grid::<f64>(&MeshSpec::new(3, 3, 4, 1.0, 1.0, 1.0)).unwrap();
        for (za, zb) in a.axis(2).points.iter().zip(&b.axis(2).points) {
            assert_eq!(2.0 * za, *zb);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(build_grid::<f64>(&MeshSpec::new(0, 1, 1, 1.0, 1.0, 1.0)).is_err());
        assert!(build_grid::<f64>(&MeshSpec::new(1, 1, 1, -1.0, 1.0, 1.0)).is_err());
        assert!(build_grid::<f64>(&MeshSpec::new(1, 1, 1, 1.0, f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn exchange_symmetry_of_tables() {
        let g = build_grid::<f64>(&MeshSpec::symmetric(5, 3, 0.8, 0.5)).unwrap();
        let [n, _, nz] = g.dims();
        for p in 0..n {
            for q in 0..n {
                for r in 0..nz {
                    let a = g.index(p, q, r);
                    let b = g.index(q, p, r);
                    assert_eq!(g.volume()[a], g.volume()[b]);
                    assert_eq!(
                        g.weighted_metric(Pair::XX)[a],
                        g.weighted_metric(Pair::YY)[b]
                    );
                    assert_eq!(
                        g.weighted_metric(Pair::XZ)[a],
                        g.weighted_metric(Pair::YZ)[b]
                    );
                    assert_eq!(
                        g.weighted_metric(Pair::XY)[a],
                        g.weighted_metric(Pair::XY)[b]
                    );
                }
            }
        }
    }
}
