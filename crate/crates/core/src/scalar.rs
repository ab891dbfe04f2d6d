//! Scalar abstraction shared by every strength, weight and relevance value.
//!
//! The engine is written once over [`Scalar`] and instantiated for `f64`
//! (the default, used by the CLI and trace format) and `f32`.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from a configuration value.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite configuration value")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `x` clamped into `[lo, hi]`.
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
