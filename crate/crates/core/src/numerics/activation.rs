use super::Matrix;
use crate::scalar::Scalar;

/// Hyperbolic tangent; saturates cleanly for large inputs.
#[inline]
pub fn tanh<T: Scalar>(v: T) -> T {
    v.tanh()
}

/// Logistic sigmoid evaluated without overflowing `exp` on either tail.
#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let z = v.exp();
        z / (T::one() + z)
    }
}

pub fn tanh_map<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(tanh)
}

pub fn sigmoid_map<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid)
}
