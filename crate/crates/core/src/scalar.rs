//! Scalar abstraction shared by the mesh, operator and eigensolver code.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point type usable by the solver.
///
/// Math goes through [`RealField`] (`sqrt`, `exp`, `abs`, ...); conversions
/// go through num-traits.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the type cannot represent
    /// finite doubles at all, which no supported type does.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar type must represent f64 literals")
    }

    #[inline]
    fn from_index(n: usize) -> Self {
        Self::from_usize(n).expect("scalar type must represent indices")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Unit roundoff of the type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}
