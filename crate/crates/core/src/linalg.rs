//! Dense linear algebra used by the rest of the crate.
//!
//! Only what the engine needs: a row-major [`Matrix`] with a BLAS-style
//! product, Householder QR for random orthonormal columns, a cyclic Jacobi
//! eigensolver for small symmetric matrices, and nearest-rank percentiles.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.rows * self.cols <= 64 {
            for r in 0..self.rows {
                write!(f, "\n  {:?}", self.row(r))?;
            }
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// i.i.d. standard normal entries.
    pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    /// Sum of each row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    /// Appends the rows of `extra` below `self`.
    pub fn append_rows(&mut self, extra: &Matrix) -> Result<()> {
        if extra.cols != self.cols {
            return Err(Error::Shape(format!(
                "cannot append {}-column rows to a {}-column matrix",
                extra.cols, self.cols
            )));
        }
        self.data.extend_from_slice(&extra.data);
        self.rows += extra.rows;
        Ok(())
    }

    /// Appends `k` zero columns on the right.
    pub fn append_zero_cols(&mut self, k: usize) {
        if k == 0 {
            return;
        }
        let new_cols = self.cols + k;
        let mut data = Vec::with_capacity(self.rows * new_cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend(std::iter::repeat_n(0.0, k));
        }
        self.data = data;
        self.cols = new_cols;
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, Trans::No, other, Trans::No, 0.0, &mut out)?;
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Whether an operand of [`gemm`] is used transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `c ← alpha·op(a)·op(b) + beta·c`.
pub fn gemm(
    alpha: f64,
    a: &Matrix,
    ta: Trans,
    b: &Matrix,
    tb: Trans,
    beta: f64,
    c: &mut Matrix,
) -> Result<()> {
    let (m, k, rsa, csa) = match ta {
        Trans::No => (a.rows, a.cols, a.cols as isize, 1),
        Trans::Yes => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match tb {
        Trans::No => (b.rows, b.cols, b.cols as isize, 1),
        Trans::Yes => (b.cols, b.rows, 1, b.cols as isize),
    };
    if k != kb || c.rows != m || c.cols != n {
        return Err(Error::Shape(format!(
            "gemm: ({m}x{k})·({kb}x{n}) into {}x{}",
            c.rows, c.cols
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.scale(beta);
        return Ok(());
    }
    // SAFETY: dimensions and strides were checked against the slice lengths
    // above; `c` is exclusively borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

/// Thin Householder QR of a tall matrix (`rows ≥ cols`).
///
/// Returns `(q, r)` with `q` of shape `rows × cols` having orthonormal
/// columns and `r` upper triangular with a nonnegative diagonal, so that the
/// factorization is unique and `q` is Haar-distributed when `a` is Gaussian.
pub fn householder_qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if n > m {
        return Err(Error::invalid(format!("QR needs rows >= cols, got {m}x{n}")));
    }
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        for c in j..n {
            let dot: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum();
            for i in j..m {
                r[(i, c)] -= 2.0 * v[i - j] * dot;
            }
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = Matrix::from_fn(m, n, |i, c| if i == c { 1.0 } else { 0.0 });
    for j in (0..n).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        for c in 0..n {
            let dot: f64 = (j..m).map(|i| v[i - j] * q[(i, c)]).sum();
            if dot != 0.0 {
                for i in j..m {
                    q[(i, c)] -= 2.0 * v[i - j] * dot;
                }
            }
        }
    }

    let mut r_thin = Matrix::from_fn(n, n, |i, c| if c >= i { r[(i, c)] } else { 0.0 });
    for j in 0..n {
        if r_thin[(j, j)] < 0.0 {
            for c in 0..n {
                r_thin[(j, c)] = -r_thin[(j, c)];
            }
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok((q, r_thin))
}

/// `k` random orthonormal columns in `R^dim`.
///
/// These are the first `k` columns of the Q factor of a `dim × dim` standard
/// normal matrix. The first `k` columns of Q depend only on the first `k`
/// columns of the input, so only those are drawn.
pub fn orthonormal_columns<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Result<Matrix> {
    if k == 0 || k > dim {
        return Err(Error::invalid(format!(
            "orthonormal_columns needs 1 <= k <= dim, got k={k}, dim={dim}"
        )));
    }
    let a = Matrix::standard_normal(dim, k, rng);
    let (q, _) = householder_qr(&a)?;
    Ok(q)
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, unsorted.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12 · ‖A‖_F`.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("eigenvalues of a {:?} matrix", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("non-finite entry in symmetric matrix".into()));
    }
    let mut m = a.clone();
    let total = m.frobenius_sq().sqrt();
    if total == 0.0 || n == 1 {
        return Ok((0..n).map(|i| m[(i, i)]).collect());
    }
    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&m) <= JACOBI_TOL * total {
            return Ok((0..n).map(|i| m[(i, i)]).collect());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    m[(k, p)] = new_kp;
                    m[(p, k)] = new_kp;
                    m[(k, q)] = new_kq;
                    m[(q, k)] = new_kq;
                }
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    if off_norm(&m) <= 1e-9 * total {
        log::warn!("Jacobi stopped after {JACOBI_MAX_SWEEPS} sweeps above tolerance");
        return Ok((0..n).map(|i| m[(i, i)]).collect());
    }
    Err(Error::Numeric(format!(
        "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

/// Singular values of `scale · H`, in descending order.
///
/// Computed as square roots of the eigenvalues of the `M × M` Gram matrix
/// `scale² · H Hᵀ`; negative eigenvalues from roundoff are clamped to zero.
/// When `H` has fewer columns than rows the `n × n` Gram matrix `HᵀH` is
/// used instead and the remaining `M − n` values are zero.
pub fn singular_values(h: &Matrix, scale: f64) -> Result<Vec<f64>> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::invalid(format!(
            "singular values of an empty {:?} matrix",
            h.shape()
        )));
    }
    if !h.is_finite() {
        return Err(Error::Numeric("non-finite activation entry".into()));
    }
    let (rows, cols) = h.shape();
    let m = rows.min(cols);
    let mut gram = Matrix::zeros(m, m);
    if cols < rows {
        gemm(scale * scale, h, Trans::Yes, h, Trans::No, 0.0, &mut gram)?;
    } else {
        gemm(scale * scale, h, Trans::No, h, Trans::Yes, 0.0, &mut gram)?;
    }
    // Symmetrize exactly so the Jacobi updates stay symmetric.
    for p in 0..m {
        for q in (p + 1)..m {
            let v = 0.5 * (gram[(p, q)] + gram[(q, p)]);
            gram[(p, q)] = v;
            gram[(q, p)] = v;
        }
    }
    let mut sv: Vec<f64> = symmetric_eigenvalues(&gram)?
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.resize(rows, 0.0);
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Nearest-rank percentile: the element at index `ceil(p/100 · N) − 1` of
/// the ascending sort (index 0 when `p = 0`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let n = values.len();
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    let idx = rank.saturating_sub(1).min(n - 1);
    let mut buf = values.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    Ok(*v)
}
