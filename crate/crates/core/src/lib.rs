//! Ground state of the two-electron ion on a Lagrange-Laguerre mesh in
//! perimetric coordinates, and the critical nuclear charge at which it
//! stops binding.
//!
//! The numerical core is generic over the scalar type; the aliases below fix
//! it to `f64`, which is what every physics driver uses.

pub mod critical;
pub mod eigensolve;
pub mod error;
pub mod hamiltonian;
pub mod perimetric;
pub mod precond;
pub mod quadmesh;
pub mod scalar;
pub mod selftest;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Rule = quadmesh::GaussLaguerreRule<f64>;
pub type Basis = quadmesh::LagrangeBasis<f64>;
pub type Grid = perimetric::PerimetricGrid<f64>;
pub type Hamiltonian = hamiltonian::HamiltonianOperator<f64>;
pub type State = hamiltonian::StateVector<f64>;
pub type EigenOptions = eigensolve::EigenOptions<f64>;
pub type EigenResult = eigensolve::EigenResult<f64>;
