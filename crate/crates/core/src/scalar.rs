use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the numeric core is generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("representable count")
    }

    /// Absolute tolerance for "sums to one" checks, widened for narrow types.
    fn simplex_tol() -> Self {
        let floor = Self::of(1e-9);
        let eps = Self::epsilon() * Self::of(64.0);
        if eps > floor {
            eps
        } else {
            floor
        }
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static {}
