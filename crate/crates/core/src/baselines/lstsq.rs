//! Least squares through a complete orthogonal decomposition.
//!
//! `A P = Q [R11 R12; 0 0]` by Householder QR with column pivoting, then
//! `[R11 R12]ᵀ = Z [T; 0]` by a second Householder QR. The minimal-norm
//! solution is `x = P Z [T⁻ᵀ (Qᵀ b)₁..r]`.

use crate::error::{Error, Result};

/// Diagonal entries of `R` below `RANK_RCOND · |R₀₀|` count as zero.
pub const RANK_RCOND: f64 = 1e-10;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, row_major: &[f64]) -> Self {
        assert_eq!(row_major.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[c * rows + r] = row_major[r * cols + c];
            }
        }
        m
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..][..self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..][..self.rows]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            for (yr, a) in y.iter_mut().zip(self.col(c)) {
                *yr += a * xc;
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    pub rank: usize,
    /// Set when the columns are linearly dependent and `x` is the
    /// minimal-norm minimizer.
    pub minimal_norm: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Householder vector for `x`, overwriting `x` with `v` (v₀ = 1 implied by
/// scaling) and returning `(beta, alpha)` where `(I − beta v vᵀ) x = alpha e₀`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let norm = dot(x, x).sqrt();
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let alpha = if x[0] > 0.0 { -norm } else { norm };
    x[0] -= alpha;
    let vnorm2 = dot(x, x);
    let beta = if vnorm2 == 0.0 { 0.0 } else { 2.0 / vnorm2 };
    (beta, alpha)
}

fn apply_reflector(v: &[f64], beta: f64, target: &mut [f64]) {
    if beta == 0.0 {
        return;
    }
    let s = beta * dot(v, target);
    for (t, vi) in target.iter_mut().zip(v) {
        *t -= s * vi;
    }
}

/// Minimal-norm least-squares solution of `min ‖A x − b‖`.
pub fn solve(a: &ColMatrix, b: &[f64]) -> Result<LstsqSolution> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m {
        return Err(Error::Data(format!("right-hand side has {} rows, matrix {m}", b.len())));
    }
    if m == 0 || n == 0 {
        return Err(Error::Data("empty least-squares problem".into()));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|c| dot(r.col(c), r.col(c))).collect();
    let mut reference = norms.clone();
    let steps = m.min(n);
    let mut diag = Vec::with_capacity(steps);

    for k in 0..steps {
        // Pivot on the largest remaining column norm (lowest index on ties).
        let mut p = k;
        for c in k + 1..n {
            if norms[c] > norms[p] {
                p = c;
            }
        }
        if p != k {
            let (lo, hi) = r.data.split_at_mut(p * m);
            lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
            norms.swap(k, p);
            reference.swap(k, p);
            perm.swap(k, p);
        }
        let (head, tail) = r.data.split_at_mut((k + 1) * m);
        let v = &mut head[k * m + k..];
        let (beta, alpha) = householder(v);
        for c in 0..n - k - 1 {
            apply_reflector(v, beta, &mut tail[c * m + k..(c + 1) * m]);
        }
        apply_reflector(v, beta, &mut rhs[k..]);
        diag.push(alpha);
        for c in k + 1..n {
            let top = r.data[c * m + k];
            norms[c] -= top * top;
            if norms[c] <= 1e-6 * reference[c] {
                let col = &r.data[c * m + k + 1..(c + 1) * m];
                norms[c] = dot(col, col);
                reference[c] = norms[c];
            }
        }
    }

    let lead = diag.first().map_or(0.0, |d| d.abs());
    let rank = diag.iter().take_while(|d| d.abs() > RANK_RCOND * lead).count();
    if rank == 0 {
        return Ok(LstsqSolution {
            x: vec![0.0; n],
            rank: 0,
            minimal_norm: true,
        });
    }

    // Upper trapezoid [R11 R12] (rank × n); R's diagonal lives in `diag`.
    let upper = |i: usize, j: usize| -> f64 {
        if i == j {
            diag[i]
        } else {
            r.data[j * m + i]
        }
    };

    let z = if rank == n {
        // Back substitution on R11.
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in i + 1..n {
                s -= upper(i, j) * z[j];
            }
            z[i] = s / diag[i];
        }
        z
    } else {
        // W = [R11 R12]ᵀ, n × rank, column-major: column i holds row i of the trapezoid.
        let mut w = ColMatrix::zeros(n, rank);
        for i in 0..rank {
            let col = w.col_mut(i);
            for (j, slot) in col.iter_mut().enumerate().skip(i) {
                *slot = upper(i, j);
            }
        }
        let mut betas = Vec::with_capacity(rank);
        let mut tdiag = Vec::with_capacity(rank);
        for k in 0..rank {
            let (head, tail) = w.data.split_at_mut((k + 1) * n);
            let v = &mut head[k * n + k..];
            let (beta, alpha) = householder(v);
            for c in 0..rank - k - 1 {
                apply_reflector(v, beta, &mut tail[c * n + k..(c + 1) * n]);
            }
            betas.push(beta);
            tdiag.push(alpha);
        }
        // Tᵀ u = c, with T upper triangular (entries above the diagonal in w).
        let mut u = vec![0.0; rank];
        for i in 0..rank {
            let mut s = rhs[i];
            for j in 0..i {
                s -= w.get(j, i) * u[j];
            }
            u[i] = s / tdiag[i];
        }
        // z = Z [u; 0], applying the reflectors in reverse.
        let mut z = vec![0.0; n];
        z[..rank].copy_from_slice(&u);
        for k in (0..rank).rev() {
            let v = &w.data[k * n + k..(k + 1) * n];
            apply_reflector(v, betas[k], &mut z[k..]);
        }
        z
    };

    let mut x = vec![0.0; n];
    for (k, &col) in perm.iter().enumerate() {
        x[col] = z[k];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("least-squares solution is not finite".into()));
    }
    Ok(LstsqSolution {
        x,
        rank,
        minimal_norm: rank < n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_square_system() {
        // [2 1; 1 3] x = [3; 5] → x = [0.8, 1.4]
        let a = ColMatrix::from_rows(2, 2, &[2., 1., 1., 3.]);
        let s = solve(&a, &[3., 5.]).unwrap();
        assert_eq!(s.rank, 2);
        assert!(!s.minimal_norm);
        assert!((s.x[0] - 0.8).abs() < 1e-14 && (s.x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_splits_weight_evenly() {
        // Columns identical: minimal-norm splits the coefficient in half.
        let a = ColMatrix::from_rows(3, 2, &[1., 1., 2., 2., 3., 3.]);
        let s = solve(&a, &[2., 4., 6.]).unwrap();
        assert_eq!(s.rank, 1);
        assert!(s.minimal_norm);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_minimal_norm() {
        // x1 + x2 + x3 = 3 → minimal norm (1, 1, 1)
        let a = ColMatrix::from_rows(1, 3, &[1., 1., 1.]);
        let s = solve(&a, &[3.]).unwrap();
        assert_eq!(s.rank, 1);
        for v in s.x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let s = solve(&ColMatrix::zeros(3, 2), &[1., 2., 3.]).unwrap();
        assert_eq!(s.rank, 0);
        assert_eq!(s.x, vec![0.0, 0.0]);
    }
}
