use ndarray::Array2;

use crate::error::{shape_err, Error, Result};
use crate::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Unblocked column-by-column algorithm without pivoting. Only the lower
/// triangle of `a` is read.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let (n, m) = a.dim();
    if n != m || n == 0 {
        return shape_err(format!("cholesky needs a non-empty square matrix, got {n}x{m}"));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if !(pivot > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                row: j,
                pivot: pivot.as_f64(),
            });
        }
        let d = pivot.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// `L · Lᵀ` for a lower-triangular `L`.
pub fn lower_times_upper<T: Scalar>(l: &Array2<T>) -> Array2<T> {
    l.dot(&l.t())
}

pub fn frobenius_norm<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}
