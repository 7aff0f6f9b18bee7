//! Small dense helpers shared by the update rules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `a x = b` for a symmetric positive-definite `a`.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, block: &str) -> Result<DVector<f64>> {
    if a.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(block, "non-finite entry in normal equations"));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numeric(block, "system matrix is not positive definite"))?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(block, "solution is not finite"));
    }
    Ok(x)
}

/// Sum of outer products `sum_r x_r x_r^T`, scaled by `scale`.
pub fn scaled_gram<'a, I>(rows: I, k: usize, scale: f64) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut g = DMatrix::zeros(k, k);
    for x in rows {
        g.ger(1.0, x, x, 1.0);
    }
    g *= scale;
    g
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // Renormalise away the rounding left by the threshold.
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// Indices of the `n` largest values, descending, ties by smaller index.
pub fn top_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
