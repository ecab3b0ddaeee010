use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Orthonormal 2-D DCT-II over `d x d` blocks.
///
/// Holds the 1-D basis `C` (`C[u][x] = a(u) cos((2x + 1) u pi / 2d)`), so the
/// forward transform is `C X C^T` and the inverse is `C^T Y C`.
#[derive(Debug, Clone)]
pub struct Dct<T> {
    basis: Matrix<T>,
}

impl<T: Scalar> Dct<T> {
    pub fn new(d: usize) -> Self {
        let mut basis = Matrix::zeros(d, d);
        let n = d as f64;
        for u in 0..d {
            let a = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for x in 0..d {
                let angle = std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n);
                basis[(u, x)] = T::of(a * angle.cos());
            }
        }
        Dct { basis }
    }

    pub fn size(&self) -> usize {
        self.basis.rows()
    }

    fn check(&self, block: &Matrix<T>) -> Result<()> {
        let d = self.size();
        if block.shape() != (d, d) {
            return Err(Error::shape("dct", (d, d), block.shape()));
        }
        Ok(())
    }

    /// Forward transform of a level-shifted block (pixels minus 128).
    pub fn forward(&self, block: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(block)?;
        self.basis.matmul(block)?.matmul_t(&self.basis)
    }

    pub fn inverse(&self, coeffs: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(coeffs)?;
        self.basis.t_matmul(coeffs)?.matmul(&self.basis)
    }
}

/// One-shot forward DCT of a square block.
pub fn dct2d_forward<T: Scalar>(block: &Matrix<T>) -> Result<Matrix<T>> {
    if block.rows() != block.cols() {
        return Err(Error::shape("dct2d_forward", (block.rows(), block.rows()), block.shape()));
    }
    Dct::new(block.rows()).forward(block)
}

/// One-shot inverse DCT of a square coefficient block.
pub fn dct2d_inverse<T: Scalar>(coeffs: &Matrix<T>) -> Result<Matrix<T>> {
    if coeffs.rows() != coeffs.cols() {
        return Err(Error::shape("dct2d_inverse", (coeffs.rows(), coeffs.rows()), coeffs.shape()));
    }
    Dct::new(coeffs.rows()).inverse(coeffs)
}
