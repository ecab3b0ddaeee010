//! Dense linear algebra, activations, seeded randomness and a
//! finite-difference gradient oracle shared by the rest of the crate.

mod activation;
mod matrix;
mod rng;

pub use activation::{sigmoid, sigmoid_map, tanh, tanh_map};
pub use matrix::Matrix;
pub use rng::{Rng, Stream, RNG_ALGORITHM};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Matrix with i.i.d. entries drawn uniformly from `[lo, hi)`.
pub fn uniform_init<T: Scalar>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Result<Matrix<T>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Param(format!("uniform range needs lo < hi, got [{lo}, {hi})")));
    }
    let data = (0..rows * cols)
        .map(|_| {
            let v = lo + (hi - lo) * rng.uniform();
            // guard against rounding up to `hi` when the interval is tiny
            T::of(if v >= hi { lo } else { v })
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_diff_grad<T, F>(mut f: F, x: &Matrix<T>, h: T) -> Result<Matrix<T>>
where
    T: Scalar,
    F: FnMut(&Matrix<T>) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Param(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("objective is not finite near entry {i}")));
        }
        grad.as_mut_slice()[i] = (up - down) / (T::two() * h);
    }
    Ok(grad)
}
