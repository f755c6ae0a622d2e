//! Dense kernels: column-pivoted Householder QR and Cholesky solves.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). Nothing here
//! regularizes: rank deficiency is reported and left to the caller.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on `|R_jj| / max |R_ii|` below which a column is
/// treated as numerically dependent.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Cholesky pivots below this fraction of their original diagonal entry
/// mark the matrix as not positive definite.
const SPD_PIVOT_TOL: f64 = 1e-12;

/// Thin QR factorization with column pivoting: `A[:, perm] = Q R`.
#[derive(Debug, Clone)]
pub struct QrFactor {
    /// `N x p`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// `p x p`, upper triangular with non-increasing `|diag|`.
    pub r: DMatrix<f64>,
    /// Column `j` of `QR` is column `perm[j]` of `A`.
    pub perm: Vec<usize>,
    pub rank: usize,
    pub col_tol: f64,
}

impl QrFactor {
    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols()
    }

    /// Orthonormal basis of the numerical column space.
    pub fn basis(&self) -> DMatrix<f64> {
        self.q.columns(0, self.rank).into_owned()
    }

    /// First original column index found to be dependent on the others.
    pub fn first_dependent_column(&self) -> Option<usize> {
        (!self.is_full_rank()).then(|| self.perm[self.rank])
    }

    /// Least-squares solution of `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if let Some(column) = self.first_dependent_column() {
            return Err(Error::RankDeficient { column });
        }
        if b.nrows() != self.q.nrows() {
            return Err(Error::Dimension(format!(
                "rhs has {} rows, factor has {}",
                b.nrows(),
                self.q.nrows()
            )));
        }
        let p = self.ncols();
        let mut y = self.q.tr_mul(b);
        for c in 0..y.ncols() {
            for i in (0..p).rev() {
                let mut s = y[(i, c)];
                for j in i + 1..p {
                    s -= self.r[(i, j)] * y[(j, c)];
                }
                y[(i, c)] = s / self.r[(i, i)];
            }
        }
        let mut x = DMatrix::zeros(p, b.ncols());
        for (j, &orig) in self.perm.iter().enumerate() {
            x.set_row(orig, &y.row(j));
        }
        Ok(x)
    }
}

/// Householder QR with greedy column pivoting.
///
/// `rank` counts diagonal entries of `R` exceeding `rel_tol` times the
/// largest one.
pub fn thin_qr(a: &DMatrix<f64>, rel_tol: f64) -> Result<QrFactor> {
    let (n, p) = a.shape();
    if p == 0 || n < p {
        return Err(Error::Dimension(format!(
            "thin QR needs rows >= cols >= 1, got {n}x{p}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut tau = vec![0.0; p];
    let mut diag = vec![0.0; p];

    for j in 0..p {
        let pivot = {
            let data = w.as_slice();
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..p {
                let col = &data[c * n + j..(c + 1) * n];
                let s: f64 = col.iter().map(|v| v * v).sum();
                if s > best_norm {
                    best_norm = s;
                    best = c;
                }
            }
            best
        };
        if pivot != j {
            w.swap_columns(j, pivot);
            perm.swap(j, pivot);
        }

        let data = w.as_mut_slice();
        let (head, tail) = data.split_at_mut((j + 1) * n);
        let v = &mut head[j * n + j..];
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        let v0 = v[0] + sign * alpha;
        diag[j] = -sign * alpha;
        v[0] = 1.0;
        for x in v.iter_mut().skip(1) {
            *x /= v0;
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        tau[j] = 2.0 / vtv;

        for c in 0..p - j - 1 {
            let col = &mut tail[c * n + j..(c + 1) * n];
            let s: f64 = tau[j] * col.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (x, vi) in col.iter_mut().zip(v.iter()) {
                *x -= s * vi;
            }
        }
    }

    let mut r = DMatrix::zeros(p, p);
    for j in 0..p {
        r[(j, j)] = diag[j];
        for i in 0..j {
            r[(i, j)] = w[(i, j)];
        }
    }

    // Q = H_0 H_1 ... H_{p-1} applied to the first p columns of I.
    let mut q = DMatrix::zeros(n, p);
    for j in 0..p {
        q[(j, j)] = 1.0;
    }
    let wd = w.as_slice();
    for j in (0..p).rev() {
        if tau[j] == 0.0 {
            continue;
        }
        let v = &wd[j * n + j..(j + 1) * n];
        let qd = q.as_mut_slice();
        for c in j..p {
            let col = &mut qd[c * n + j..(c + 1) * n];
            // v[0] is the implicit unit entry
            let mut s = col[0];
            for i in 1..v.len() {
                s += v[i] * col[i];
            }
            s *= tau[j];
            col[0] -= s;
            for i in 1..v.len() {
                col[i] -= s * v[i];
            }
        }
    }

    let max_diag = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let rank = if max_diag == 0.0 {
        0
    } else {
        diag.iter().filter(|d| d.abs() > rel_tol * max_diag).count()
    };

    Ok(QrFactor {
        q,
        r,
        perm,
        rank,
        col_tol: rel_tol,
    })
}

/// Lower Cholesky factor. Fails with the offending pivot index instead of
/// perturbing the matrix.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let ajj = a[(j, j)];
        let mut d = ajj;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if ajj.is_nan() || d.is_nan() || ajj <= 0.0 || d <= SPD_PIVOT_TOL * ajj {
            return Err(Error::Singular { pivot: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p || b.nrows() != p {
        return Err(Error::Dimension(format!(
            "spd_solve: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = a.amax();
    for i in 0..p {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Dimension(format!(
                    "spd_solve: A is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for c in 0..x.ncols() {
        for i in 0..p {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..p {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

pub fn spd_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = spd_solve(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_solve(a, &DMatrix::identity(a.nrows(), a.nrows()))
}

/// `(A + A') / 2`, removing round-off asymmetry from products like `X'PX`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
