use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the compute graph runs on.
///
/// Training runs in `f32`; the finite-difference gradient suite instantiates
/// the same code in `f64` where central differences are meaningful.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn fl(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand used all over the numeric code.
#[inline]
pub fn fl<F: Real>(x: f64) -> F {
    F::fl(x)
}
