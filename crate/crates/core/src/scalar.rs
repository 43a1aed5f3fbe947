//! Floating-point scalar abstraction shared by every numeric kernel.

use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::{Fft, FftDirection, FftNum, FftPlanner};

/// Floating point: `f32` or `f64`.
///
/// Training and gradient checking run at `f64`; `f32` exists so trained
/// parameters can be stored and run at half the memory.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Cached FFT plan for this precision.
    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<Self>>;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

type PlanCache<T> = Mutex<HashMap<(usize, bool), Arc<dyn Fft<T>>>>;

fn cached_plan<T: FftNum>(
    cache: &'static OnceLock<PlanCache<T>>,
    len: usize,
    direction: FftDirection,
) -> Arc<dyn Fft<T>> {
    let cache = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, direction == FftDirection::Forward);
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, direction))
        .clone()
}

static PLANS_F32: OnceLock<PlanCache<f32>> = OnceLock::new();
static PLANS_F64: OnceLock<PlanCache<f64>> = OnceLock::new();

impl Scalar for f32 {
    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<Self>> {
        cached_plan(&PLANS_F32, len, direction)
    }
}

impl Scalar for f64 {
    fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<Self>> {
        cached_plan(&PLANS_F64, len, direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_are_shared() {
        let a = f64::fft_plan(64, FftDirection::Forward);
        let b = f64::fft_plan(64, FftDirection::Forward);
        assert!(Arc::ptr_eq(&a, &b));
        let c = f64::fft_plan(64, FftDirection::Inverse);
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn literal_roundtrip() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::lit(1e-5).to_f64_lossy(), 1e-5);
    }
}
