//! Scalar abstraction for the numeric parts of the pipeline.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the numeric pipeline is generic over: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Convert from f64, rounding to the nearest representable value.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    /// Widen to f64.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean<R: Real>(values: &[R]) -> R {
        let sum = values.iter().fold(0.0f64, |acc, v| acc + v.as_f64());
        R::from_f64_lossy(sum / values.len() as f64)
    }

    #[test]
    fn generic_mean_at_both_precisions() {
        assert_eq!(mean(&[1.0f64, 3.0]), 2.0);
        assert_eq!(mean(&[1.0f32, 3.0]), 2.0);
    }
}
