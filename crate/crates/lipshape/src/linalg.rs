//! Compressed-row sparse matrices and a Jacobi-preconditioned conjugate
//! gradient solver, sized for P1 finite-element systems.

use crate::{Error, Result};

/// Square sparse matrix in compressed-row storage with sorted column
/// indices and no duplicates per row.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseMatrix> {
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(Error::OutOfRange(format!(
                    "triplet index ({r}, {c}) exceeds dimension {n}"
                )));
            }
        }
        // Bucket by row, then sort and merge within each row.
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut sum = 0.0;
                while i < row.len() && row[i].0 == c {
                    sum += row[i].1;
                    i += 1;
                }
                col_idx.push(c);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }

    /// Maximum relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let transposed = self.get(c, r);
                worst = worst.max((self.values[k] - transposed).abs());
            }
        }
        worst / scale
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }
}

/// Result of a converged CG solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `|Ax - b| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// definite systems. Converges when `|Ax - b| <= tol * |b|`.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    x0: Option<&[f64]>,
) -> Result<CgSolution> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(guess) => guess.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.matvec_into(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = (0..n).map(|i| inv_diag[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut r_norm = norm2(&r);
    let mut ap = vec![0.0; n];

    for iter in 0..max_iter {
        if r_norm <= tol * b_norm {
            return Ok(CgSolution {
                x,
                iterations: iter,
                residual: r_norm / b_norm,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Not SPD (or breakdown); report as non-convergence.
            return Err(Error::CgNoConvergence {
                iterations: iter,
                residual: r_norm / b_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        r_norm = norm2(&r);
    }
    if r_norm <= tol * b_norm {
        return Ok(CgSolution {
            x,
            iterations: max_iter,
            residual: r_norm / b_norm,
        });
    }
    Err(Error::CgNoConvergence {
        iterations: max_iter,
        residual: r_norm / b_norm,
    })
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Dense Gaussian elimination with partial pivoting; test oracle only.
    pub(crate) fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, pivot);
            rhs.swap(col, pivot);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for k in row + 1..n {
                acc -= m[row][k] * x[k];
            }
            x[row] = acc / m[row][row];
        }
        x
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.matvec(&[1.0, 0.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn empty_triplets_give_zero_matrix() {
        let m = SparseMatrix::from_triplets(3, &[]).unwrap();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range_indices() {
        assert!(SparseMatrix::from_triplets(2, &[(0, 2, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, &[(5, 0, 1.0)]).is_err());
    }

    #[test]
    fn random_spd_matvec_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        // Random SPD: B^T B + n I.
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    dense[i][j] += b[k][i] * b[k][j];
                }
            }
            dense[i][i] += n as f64;
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, dense[i][j]));
            }
        }
        let sparse = SparseMatrix::from_triplets(n, &triplets).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys = sparse.matvec(&x);
        for i in 0..n {
            let yd: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((ys[i] - yd).abs() < 1e-13);
        }
        assert!(sparse.asymmetry() < 1e-12);
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let n = 7;
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        let a = SparseMatrix::from_triplets(n, &triplets).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let sol = cg_solve(&a, &b, 1e-12, 10, None).unwrap();
        assert!(sol.iterations <= 1);
        for i in 0..n {
            assert!((sol.x[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_matches_dense_on_grid_laplacian() {
        // 5-point Laplacian on a 10x10 interior grid.
        let n_side = 10;
        let n = n_side * n_side;
        let idx = |i: usize, j: usize| i * n_side + j;
        let mut triplets = Vec::new();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n_side {
            for j in 0..n_side {
                let r = idx(i, j);
                triplets.push((r, r, 4.0));
                dense[r][r] = 4.0;
                let mut link = |rr: usize, cc: usize| {
                    triplets.push((rr, cc, -1.0));
                    dense[rr][cc] = -1.0;
                };
                if i > 0 {
                    link(r, idx(i - 1, j));
                }
                if i + 1 < n_side {
                    link(r, idx(i + 1, j));
                }
                if j > 0 {
                    link(r, idx(i, j - 1));
                }
                if j + 1 < n_side {
                    link(r, idx(i, j + 1));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, &triplets).unwrap();
        let b = vec![1.0; n];
        let sol = cg_solve(&a, &b, 1e-12, 10 * n, None).unwrap();
        let exact = dense_solve(&dense, &b);
        for i in 0..n {
            assert!((sol.x[i] - exact[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_residual_contract() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let n = 20 + 5 * trial;
            let mut triplets = Vec::new();
            for i in 0..n {
                triplets.push((i, i, 3.0 + rng.gen_range(0.0..1.0)));
                if i + 1 < n {
                    let off = rng.gen_range(-1.0..1.0);
                    triplets.push((i, i + 1, off));
                    triplets.push((i + 1, i, off));
                }
            }
            let a = SparseMatrix::from_triplets(n, &triplets).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tol = 1e-10;
            let sol = cg_solve(&a, &b, tol, 10 * n, None).unwrap();
            let mut r = a.matvec(&sol.x);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            assert!(norm2(&r) <= tol * norm2(&b) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cg_recovers_known_solution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 4.0));
            if i + 1 < n {
                triplets.push((i, i + 1, -1.0));
                triplets.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, &triplets).unwrap();
        let x_known: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = a.matvec(&x_known);
        let sol = cg_solve(&a, &b, 1e-12, 10 * n, None).unwrap();
        for i in 0..n {
            assert!((sol.x[i] - x_known[i]).abs() < 1e-9);
        }
    }
}
