use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Numeric type used for edge weights, rewards and graph analytics.
///
/// Everything above the solver boundary is generic over this trait; the MILP
/// layer itself always works in `f64` because that is what the backends speak.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance used when comparing accumulated path lengths.
    fn tolerance() -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `a` and `b` are equal up to a relative tolerance.
    fn approx_eq(a: Self, b: Self) -> bool {
        let scale = Self::one().max(a.abs()).max(b.abs());
        (a - b).abs() <= Self::tolerance() * scale
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
}
