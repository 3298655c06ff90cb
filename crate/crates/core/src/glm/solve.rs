//! Symmetric LDL^T factorization for normal-equations solves.
//!
//! The information matrices handled here are small (tens of columns) and
//! positive semidefinite, so an unpivoted LDL^T with a relative tolerance on
//! the pivots is enough to solve, invert, and detect rank deficiency.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

#[derive(Debug)]
pub struct Singular;

pub struct Ldlt {
    // Unit lower-triangular factor, row-major dense for simplicity.
    l: Array2<f64>,
    d: Array1<f64>,
}

/// Factor a symmetric matrix, reading its lower triangle. Fails when any
/// pivot drops below `rel_tol` times the largest diagonal magnitude.
pub fn ldlt(a: ArrayView2<'_, f64>, rel_tol: f64) -> Result<Ldlt, Singular> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Singular);
    }
    let threshold = rel_tol * scale;
    let mut l = Array2::zeros((n, n));
    let mut d = Array1::zeros(n);
    for j in 0..n {
        let mut dj = a[[j, j]];
        for k in 0..j {
            dj -= l[[j, k]] * l[[j, k]] * d[k];
        }
        if !(dj.is_finite()) || dj.abs() <= threshold {
            return Err(Singular);
        }
        d[j] = dj;
        l[[j, j]] = 1.0;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]] * d[k];
            }
            l[[i, j]] = v / dj;
        }
    }
    Ok(Ldlt { l, d })
}

impl Ldlt {
    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.d.len();
        let mut x = b.to_owned();
        // Forward: L z = b.
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[[i, k]] * x[k];
            }
        }
        // Diagonal.
        for i in 0..n {
            x[i] /= self.d[i];
        }
        // Backward: L^T x = z.
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.l[[k, i]] * x[k];
            }
        }
        x
    }

    /// Inverse via n solves against the identity, symmetrized.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.d.len();
        let mut inv = Array2::zeros((n, n));
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            let col = self.solve(e.view());
            inv.column_mut(j).assign(&col);
        }
        // Exact symmetry for downstream checks.
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
                inv[[i, j]] = v;
                inv[[j, i]] = v;
            }
        }
        inv
    }
}
