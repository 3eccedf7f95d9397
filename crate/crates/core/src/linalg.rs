//! Minimal dense linear algebra for small symmetric positive-definite
//! systems (covariances, ridge normal equations). Matrices are row-major
//! `Vec<f64>` slabs; dimensions here are tiny (d is usually 8-60), so the
//! priority is allocation-free inner loops rather than asymptotics.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    pub dim: usize,
    /// Row-major lower triangle, including the diagonal; upper entries zero.
    pub factor: Vec<f64>,
}

impl Cholesky {
    /// Decompose a row-major symmetric matrix. Returns `None` when the
    /// matrix is not numerically positive-definite.
    pub fn decompose(matrix: &[f64], dim: usize) -> Option<Cholesky> {
        debug_assert_eq!(matrix.len(), dim * dim);
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = matrix[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * dim + j] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Some(Cholesky { dim, factor: l })
    }

    /// log(det M) = 2 * sum(log diag(L)).
    pub fn log_det(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.factor[i * self.dim + i].ln())
            .sum::<f64>()
            * 2.0
    }

    /// Solve L y = b in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.factor[i * n + k] * b[k];
            }
            b[i] = sum / self.factor[i * n + i];
        }
    }

    /// Solve L^T x = y in place.
    pub fn backward_solve(&self, y: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.factor[k * n + i] * y[k];
            }
            y[i] = sum / self.factor[i * n + i];
        }
    }

    /// Solve M x = b in place (forward then backward substitution).
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve(b);
        self.backward_solve(b);
    }

    /// Quadratic form b^T M^{-1} b; `scratch` must have length `dim`.
    pub fn quad_form(&self, b: &[f64], scratch: &mut [f64]) -> f64 {
        scratch.copy_from_slice(b);
        self.forward_solve(scratch);
        scratch.iter().map(|v| v * v).sum()
    }

    /// Inverse of the decomposed matrix, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.dim;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }

    /// y = L z for a standard-normal z: draws correlated Gaussian offsets.
    pub fn lower_times(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut sum = 0.0;
            for k in 0..=i {
                sum += self.factor[i * n + k] * z[k];
            }
            out[i] = sum;
        }
    }
}

/// out = M v for a row-major square matrix.
pub(crate) fn mat_vec(matrix: &[f64], dim: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..dim {
        let row = &matrix[i * dim..(i + 1) * dim];
        out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}
