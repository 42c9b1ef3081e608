use core::fmt::Debug;
use core::iter::Sum;

use num_traits::Float;

/// Element type of a [`Tensor`](super::Tensor). Implemented for `f64` (the
/// default everywhere) and `f32`.
pub trait Scalar: Float + Debug + Default + Sum + Send + Sync + 'static {
    const NAME: &'static str;

    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
