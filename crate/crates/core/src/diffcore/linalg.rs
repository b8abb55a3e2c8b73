//! Dense Cholesky factorisation and SPD solves for the GP algebra.

use alloc::vec::Vec;

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

use super::{DiffError, Tensor};

/// First diagonal jitter tried after a plain factorisation fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest diagonal jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Lower-triangular Cholesky factor `L` with `A + jitter·I = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorises an SPD matrix, escalating diagonal jitter from
    /// [`JITTER_START`] by ×10 up to [`JITTER_MAX`] on failure.
    pub fn new(a: &Tensor) -> Result<Self, DiffError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(DiffError::ShapeMismatch { op: "cholesky", left: a.shape(), right: [n, n] });
        }
        a.check_finite("cholesky")?;
        if let Some(l) = factor(a.data(), n, 0.0) {
            return Ok(Self { n, l, jitter: 0.0 });
        }
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * (1.0 + 1e-9) {
            if let Some(l) = factor(a.data(), n, jitter) {
                return Ok(Self { n, l, jitter });
            }
            jitter *= 10.0;
        }
        Err(DiffError::NotPositiveDefinite { max_jitter: JITTER_MAX })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was added (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn factor(&self) -> Tensor {
        Tensor::from_vec(self.n, self.n, self.l.clone()).expect("square factor")
    }

    /// `log det(A + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Tensor) -> Result<Tensor, DiffError> {
        if b.rows() != self.n {
            return Err(DiffError::ShapeMismatch { op: "cholesky_solve", left: [self.n, self.n], right: b.shape() });
        }
        let mut out = Tensor::zeros(b.rows(), b.cols());
        let mut col = alloc::vec![0.0; self.n];
        for c in 0..b.cols() {
            for r in 0..self.n {
                col[r] = b.get(r, c);
            }
            self.solve_lower_in_place(&mut col);
            self.solve_upper_in_place(&mut col);
            for r in 0..self.n {
                out.set(r, c, col[r]);
            }
        }
        out.check_finite("cholesky_solve")?;
        Ok(out)
    }

    /// `(A + jitter·I)⁻¹`, formed as `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Tensor {
        let n = self.n;
        // Rows of `linv_t` are the columns of L⁻¹.
        let mut linv = alloc::vec![0.0; n * n];
        let mut e = alloc::vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            // Forward substitution starting at row j (L⁻¹ is lower triangular).
            for i in j..n {
                let mut s = e[i];
                for k in j..i {
                    s -= self.l[i * n + k] * e[k];
                }
                e[i] = s / self.l[i * n + i];
            }
            for i in 0..n {
                linv[i * n + j] = e[i];
            }
        }
        let linv = Tensor::from_vec(n, n, linv).expect("square");
        let mut out = Tensor::zeros(n, n);
        super::tensor::gemm(true, false, 1.0, &linv, &linv, 0.0, &mut out);
        out
    }
}

fn factor(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = l[i * n..i * n + j].iter().zip(&l[j * n..j * n + j]).map(|(x, y)| x * y).sum();
            let s = a[i * n + j] - dot;
            if i == j {
                let d = s + jitter;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    Cholesky::new(a)?.solve(b)
}
