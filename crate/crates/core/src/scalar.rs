//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type the library is generic over (`f32` or `f64`).
///
/// Tolerances throughout the crate are written for `f64`; see [`tolerance`]
/// for how they are widened for less precise types.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Returns `max(x, 64 ε)` so `f64` tolerances stay meaningful for `f32`.
#[inline]
pub fn tolerance<T: Real>(x: f64) -> T {
    let floor = T::default_epsilon() * lit::<T>(64.0);
    let x = lit::<T>(x);
    if x > floor {
        x
    } else {
        floor
    }
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `exp(z)` for a generic complex scalar.
#[inline]
pub fn cexp<T: Real>(z: Complex<T>) -> Complex<T> {
    let m = z.re.exp();
    Complex::new(m * z.im.cos(), m * z.im.sin())
}

/// Principal branch of `ln(z)`.
#[inline]
pub fn cln<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(cabs(z).ln(), z.im.atan2(z.re))
}

#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub fn cconj<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(z.re, -z.im)
}

#[inline]
pub fn cscale<T: Real>(z: Complex<T>, s: T) -> Complex<T> {
    Complex::new(z.re * s, z.im * s)
}

/// `i * z`.
#[inline]
pub fn times_i<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(-z.im, z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_widens_for_f32() {
        assert_eq!(tolerance::<f64>(1e-12), 1e-12);
        assert!(tolerance::<f32>(1e-12) > 1e-6);
    }

    #[test]
    fn complex_helpers_match_num_complex() {
        let z = Complex::new(0.3_f64, -1.7);
        assert!((cexp(z) - z.exp()).norm() < 1e-15);
        assert!((cln(z) - z.ln()).norm() < 1e-15);
        assert_eq!(times_i(z), Complex::<f64>::i() * z);
    }
}
