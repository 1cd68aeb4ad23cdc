//! Small dense-band and sparse linear algebra used by the solvers:
//! a complex banded LU with partial pivoting, a CSR matrix, and a
//! conjugate-gradient solver for regularized normal equations.

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Banded complex matrix, n x n with kl sub- and ku super-diagonals.
/// Storage is row-oriented with kl extra superdiagonals reserved for the
/// fill produced by row pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = kl + ku + kl + 1; // extra kl columns for pivot fill
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![C64::new(0.0, 0.0); n * width],
        }
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> Option<usize> {
        let lo = row.saturating_sub(self.kl);
        let hi = (row + self.ku + self.kl).min(self.n - 1);
        if col < lo || col > hi {
            return None;
        }
        Some(row * self.width + (col + self.kl - row))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.offset(row, col)
            .map(|o| self.data[o])
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        let o = self
            .offset(row, col)
            .unwrap_or_else(|| panic!("({row},{col}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[o] = value;
    }

    pub fn add(&mut self, row: usize, col: usize, value: C64) {
        let o = self
            .offset(row, col)
            .unwrap_or_else(|| panic!("({row},{col}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[o] += value;
    }

    /// LU factorization with partial pivoting; consumes the matrix.
    pub fn factorize(mut self) -> Result<BandLu, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            // pivot search within the subdiagonal band of column k
            let last = (k + kl).min(n - 1);
            let mut piv = k;
            let mut piv_mag = self.get(k, k).norm();
            for r in k + 1..=last {
                let mag = self.get(r, k).norm();
                if mag > piv_mag {
                    piv = r;
                    piv_mag = mag;
                }
            }
            if piv_mag == 0.0 {
                return Err(LinalgError::Singular { col: k, pivot: piv_mag });
            }
            pivots[k] = piv;
            if piv != k {
                // swap the stored row segments over the affected columns
                let hi = (k + self.ku + kl).min(n - 1);
                for col in k..=hi {
                    let a = self.get(k, col);
                    let b = self.get(piv, col);
                    self.set(k, col, b);
                    self.set(piv, col, a);
                }
            }
            let pivot = self.get(k, k);
            let hi = (k + self.ku + kl).min(n - 1);
            for r in k + 1..=last {
                let factor = self.get(r, k) / pivot;
                self.set(r, k, factor); // store the multiplier in place of the zero
                if factor.norm() != 0.0 {
                    for col in k + 1..=hi {
                        let u = self.get(k, col);
                        if u.norm() != 0.0 {
                            let cur = self.get(r, col);
                            self.set(r, col, cur - factor * u);
                        }
                    }
                }
            }
        }
        Ok(BandLu { mat: self, pivots })
    }
}

/// Factored form: unit-lower multipliers and U share the band storage.
#[derive(Debug, Clone)]
pub struct BandLu {
    mat: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.mat.n
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.mat.n;
        assert_eq!(b.len(), n, "rhs length");
        let kl = self.mat.kl;
        let ku_eff = self.mat.ku + kl;
        let mut x = b.to_vec();
        // forward: apply row swaps and multipliers
        for k in 0..n {
            let piv = self.pivots[k];
            if piv != k {
                x.swap(k, piv);
            }
            let xk = x[k];
            if xk.norm() != 0.0 {
                let last = (k + kl).min(n - 1);
                for r in k + 1..=last {
                    let factor = self.mat.get(r, k);
                    x[r] -= factor * xk;
                }
            }
        }
        // back substitution with U
        for k in (0..n).rev() {
            let hi = (k + ku_eff).min(n - 1);
            let mut sum = x[k];
            for col in k + 1..=hi {
                sum -= self.mat.get(k, col) * x[col];
            }
            x[k] = sum / self.mat.get(k, k);
        }
        x
    }

    /// Solve A^H x = b (conjugate transpose).
    pub fn solve_conj_transpose(&self, b: &[C64]) -> Vec<C64> {
        let n = self.mat.n;
        assert_eq!(b.len(), n, "rhs length");
        let kl = self.mat.kl;
        let ku_eff = self.mat.ku + kl;
        let mut x = b.to_vec();
        // The factorization applies, in order, a swap S_k then an
        // elimination L_k^{-1} for each column, then leaves U. Hence
        // A = S_0 L_0 S_1 L_1 ... S_{n-1} L_{n-1} U and the adjoint solve
        // must undo U^H first, then L_k^H and S_k interleaved in reverse.
        for k in 0..n {
            let lo = k.saturating_sub(ku_eff);
            let mut sum = x[k];
            for col in lo..k {
                sum -= self.mat.get(col, k).conj() * x[col];
            }
            x[k] = sum / self.mat.get(k, k).conj();
        }
        for k in (0..n).rev() {
            let last = (k + kl).min(n - 1);
            let mut sum = x[k];
            for r in k + 1..=last {
                sum -= self.mat.get(r, k).conj() * x[r];
            }
            x[k] = sum;
            let piv = self.pivots[k];
            if piv != k {
                x.swap(k, piv);
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// Sparse rows + conjugate gradient on normal equations
// ---------------------------------------------------------------------------

/// Compressed sparse rows with real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(col, val) in row {
                indices.push(col);
                data.push(val);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(|k| (self.indices[k], self.data[k]))
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        (self.indptr[r]..self.indptr[r + 1]).map(|k| self.data[k]).sum()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![C64::new(0.0, 0.0); self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += x[self.indices[k]] * self.data[k];
            }
            y[r] = acc;
        }
        y
    }

    pub fn apply_transpose(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.n_rows);
        let mut x = vec![C64::new(0.0, 0.0); self.n_cols];
        for r in 0..self.n_rows {
            let yr = y[r];
            if yr.norm() == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                x[self.indices[k]] += yr * self.data[k];
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
    /// Relative residual of the normal equations per iteration.
    pub residual_history: Vec<f64>,
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[C64]) -> f64 {
    cdot(a, a).re.sqrt()
}

/// Conjugate gradient for (M^T M + lambda I) x = M^T b, i.e. the normal
/// equations of min |Mx - b|^2 + lambda |x|^2.
pub fn cg_normal_equations(
    m: &CsrMatrix,
    b: &[C64],
    lambda: f64,
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<C64>, CgReport) {
    let n = m.n_cols;
    let apply = |x: &[C64]| -> Vec<C64> {
        let mut y = m.apply_transpose(&m.apply(x));
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += *xi * lambda;
        }
        y
    };
    let rhs = m.apply_transpose(b);
    let rhs_norm = cnorm(&rhs);
    let mut x = vec![C64::new(0.0, 0.0); n];
    if rhs_norm == 0.0 {
        return (
            x,
            CgReport {
                iterations: 0,
                converged: true,
                stagnated: false,
                residual_history: vec![0.0],
            },
        );
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rho = cdot(&r, &r).re;
    let mut history = vec![1.0];
    let mut best = 1.0_f64;
    let mut since_improvement = 0usize;
    let mut converged = false;
    let mut stagnated = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let ap = apply(&p);
        let denom = cdot(&p, &ap).re;
        if denom <= 0.0 {
            stagnated = true;
            break;
        }
        let alpha = rho / denom;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rho_next = cdot(&r, &r).re;
        let rel = rho_next.sqrt() / rhs_norm;
        history.push(rel);
        if rel < rel_tol {
            converged = true;
            break;
        }
        if rel < best * (1.0 - 1e-3) {
            best = rel;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement > 50 {
                stagnated = true;
                break;
            }
        }
        let beta = rho_next / rho;
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
    }
    (
        x,
        CgReport {
            iterations,
            converged,
            stagnated,
            residual_history: history,
        },
    )
}
