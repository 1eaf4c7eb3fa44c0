//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Threshold on the reciprocal condition number of the equilibrated matrix.
pub const RCOND_MIN: f64 = 1e-12;

/// Reciprocal condition number of `a` after scaling it to unit diagonal.
pub fn rcond_equilibrated(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return 0.0;
    }
    let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 {
        0.0
    } else {
        (min / max).max(0.0)
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, refusing
/// ill-conditioned input. `names` label the rows for the error message.
pub fn spd_factor(a: &DMatrix<f64>, names: &[String]) -> Result<Cholesky<f64, Dyn>> {
    let rcond = rcond_equilibrated(a);
    if rcond > RCOND_MIN {
        if let Some(ch) = Cholesky::new(a.clone()) {
            return Ok(ch);
        }
    }
    Err(Error::RankDeficient {
        columns: offending_columns(a, names),
        rcond,
    })
}

/// Greedily adds columns in order and reports those that do not raise the rank.
fn offending_columns(a: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..a.nrows() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = DMatrix::from_fn(trial.len(), trial.len(), |r, c| a[(trial[r], trial[c])]);
        if rcond_equilibrated(&sub) > RCOND_MIN {
            kept = trial;
        } else {
            bad.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
        }
    }
    bad
}

/// `(a + a') / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// PSD check with tolerance relative to the trace.
pub fn is_psd(a: &DMatrix<f64>) -> bool {
    let tr: f64 = a.diagonal().iter().map(|x| x.abs()).sum();
    min_eigenvalue(a) >= -1e-10 * tr.max(f64::MIN_POSITIVE)
}

/// Symmetric square root of a PSD matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// `a' m a` for a symmetric `m`.
pub fn quad_form(m: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    a.dot(&(m * a))
}

/// Outer product accumulation `acc += s s'`.
pub fn add_outer(acc: &mut DMatrix<f64>, s: &DVector<f64>, scale: f64) {
    let k = s.len();
    for j in 0..k {
        let sj = scale * s[j];
        for i in 0..k {
            acc[(i, j)] += s[i] * sj;
        }
    }
}

/// Inverse of a small symmetric positive-definite matrix; `None` if singular.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if rcond_equilibrated(a) <= RCOND_MIN {
        return None;
    }
    Cholesky::new(a.clone()).map(|c| c.inverse())
}
