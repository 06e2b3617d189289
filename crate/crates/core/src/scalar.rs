//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the laboratory: `f32` or `f64`.
///
/// Linear algebra comes from [`RealField`]; literal constants and report
/// conversions go through num-traits.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync
{
    /// Converts an `f64` constant (tolerances, literals) into `Self`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal")
    }

    /// Tolerance `value`, raised to `1e3·ε` for scalar types too coarse to
    /// resolve it. Leaves `f64` tolerances above `2.2e-13` unchanged.
    fn tol(value: f64) -> Self {
        Self::lit(value).max(Self::default_epsilon() * Self::lit(1e3))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::lit(0.125), 0.125);
        assert_eq!(f32::lit(0.5).as_f64(), 0.5);
    }

    #[test]
    fn tolerance_floor() {
        assert_eq!(f64::tol(1e-9), 1e-9);
        assert!(f32::tol(1e-9) > 1e-4);
    }
}
