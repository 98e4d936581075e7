//! Small dense linear algebra for symmetric positive definite systems.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-14 * scale) {
            return Err(Error::SingularVariance);
        }
        let d = d.sqrt();
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

fn solve_factored(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[[i, k]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[[k, i]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    y
}

pub(crate) fn solve_spd(a: ArrayView2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    Ok(solve_factored(&l, b))
}

pub(crate) fn inverse_spd(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve_factored(&l, &e);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    Ok(inv)
}

/// Least-squares fit of `y` on the given columns of `x` (no intercept).
/// Returns the coefficients and `(X_MᵀX_M)⁻¹`.
pub(crate) fn ols(x: ArrayView2<f64>, y: &[f64], columns: &[usize]) -> Result<(Vec<f64>, Array2<f64>)> {
    let s = columns.len();
    let mut gram = Array2::<f64>::zeros((s, s));
    let mut xty = vec![0.0; s];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        for (a, &ca) in columns.iter().enumerate() {
            let va = row[ca];
            xty[a] += va * yi;
            for (b, &cb) in columns.iter().enumerate().skip(a) {
                gram[[a, b]] += va * row[cb];
            }
        }
    }
    for a in 0..s {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    let inv = inverse_spd(gram.view())?;
    let coef = inv.dot(&Array1::from(xty)).to_vec();
    Ok((coef, inv))
}
