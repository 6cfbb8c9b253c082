//! Symmetric block-tridiagonal solver by block Cholesky elimination.

/// In-place lower Cholesky of a row-major `n x n` matrix. Returns false when
/// the matrix is not numerically positive definite.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Block-tridiagonal symmetric matrix with `m` diagonal blocks of size `b`.
/// `off[k]` couples block rows `k` (rows) and `k+1` (columns).
pub(crate) struct BlockTridiag {
    pub b: usize,
    pub m: usize,
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl BlockTridiag {
    pub fn new(b: usize, m: usize) -> Self {
        Self {
            b,
            m,
            diag: vec![0.0; m * b * b],
            off: vec![0.0; m.saturating_sub(1) * b * b],
        }
    }

    pub fn clear(&mut self) {
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        self.off.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Solves `(A + mu * diag(shift)) x = rhs`; `None` if not positive definite.
    pub fn solve_shifted(&self, shift: &[f64], mu: f64, rhs: &[f64]) -> Option<Vec<f64>> {
        let (b, m) = (self.b, self.m);
        let bb = b * b;
        let mut chol = vec![0.0; m * bb];
        let mut w = vec![0.0; m.saturating_sub(1) * bb];
        let mut col = vec![0.0; b];
        for k in 0..m {
            let s = &mut chol[k * bb..(k + 1) * bb];
            s.copy_from_slice(&self.diag[k * bb..(k + 1) * bb]);
            for i in 0..b {
                s[i * b + i] += mu * shift[k * b + i];
            }
            if k > 0 {
                // S_k -= B_{k-1}^T W_{k-1}
                let bo = &self.off[(k - 1) * bb..k * bb];
                let wk = &w[(k - 1) * bb..k * bb];
                for i in 0..b {
                    for j in 0..b {
                        let mut acc = 0.0;
                        for r in 0..b {
                            acc += bo[r * b + i] * wk[r * b + j];
                        }
                        s[i * b + j] -= acc;
                    }
                }
            }
            if !cholesky(s, b) {
                return None;
            }
            if k + 1 < m {
                // W_k = S_k^{-1} B_k, column by column
                let bo = &self.off[k * bb..(k + 1) * bb];
                let l = &chol[k * bb..(k + 1) * bb];
                let wk = &mut w[k * bb..(k + 1) * bb];
                for j in 0..b {
                    for i in 0..b {
                        col[i] = bo[i * b + j];
                    }
                    cholesky_solve(l, b, &mut col);
                    for i in 0..b {
                        wk[i * b + j] = col[i];
                    }
                }
            }
        }
        let mut g = rhs.to_vec();
        for k in 0..m {
            if k > 0 {
                let bo = &self.off[(k - 1) * bb..k * bb];
                for i in 0..b {
                    let mut acc = 0.0;
                    for r in 0..b {
                        acc += bo[r * b + i] * g[(k - 1) * b + r];
                    }
                    g[k * b + i] -= acc;
                }
            }
            cholesky_solve(&chol[k * bb..(k + 1) * bb], b, &mut g[k * b..(k + 1) * b]);
        }
        for k in (0..m.saturating_sub(1)).rev() {
            let wk = &w[k * bb..(k + 1) * bb];
            for i in 0..b {
                let mut acc = 0.0;
                for j in 0..b {
                    acc += wk[i * b + j] * g[(k + 1) * b + j];
                }
                g[k * b + i] -= acc;
            }
        }
        Some(g)
    }
}
