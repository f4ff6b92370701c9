//! Small dense complex linear algebra (dimension at most 4).
//!
//! Every system solved by the relaying schemes is 2x2 or 4x4, so the routines
//! here use direct partial-pivot LU and one-sided Jacobi and never allocate
//! beyond the matrix itself.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported square dimension.
pub const MAX_DIM: usize = 4;

/// Default condition-number threshold above which a solve is treated as singular.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e8;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix dimension {0} exceeds supported maximum {MAX_DIM}")]
    TooLarge(usize),
    #[error("singular system (condition number {cond:e})")]
    Singular { cond: f64 },
    #[error("matrix is not Hermitian positive definite: {0}")]
    Definiteness(String),
    #[error("non-finite entry")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A dense complex vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVector(Vec<Complex64>);

impl CVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        CVector(entries)
    }

    pub fn zeros(len: usize) -> Self {
        CVector(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_real(entries: &[f64]) -> Self {
        CVector(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        CVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: Complex64) -> CVector {
        CVector(self.0.iter().map(|z| z * c).collect())
    }
}

impl From<Vec<Complex64>> for CVector {
    fn from(v: Vec<Complex64>) -> Self {
        CVector(v)
    }
}

impl<const N: usize> From<[Complex64; N]> for CVector {
    fn from(v: [Complex64; N]) -> Self {
        CVector(v.to_vec())
    }
}

impl Index<usize> for CVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

/// A dense complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Dimension("empty matrix".into()));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(nrows > 0 && ncols > 0, "empty matrix");
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        CMatrix {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&CMatrix]) -> Self {
        let cols = parts[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch");
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        CMatrix { rows, cols, data }
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect::<Vec<_>>()
            .into()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn check_square(&self) -> Result<usize> {
        if !self.is_square() {
            return Err(LinalgError::Dimension(format!(
                "expected square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.rows > MAX_DIM {
            return Err(LinalgError::TooLarge(self.rows));
        }
        Ok(self.rows)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Mul<&CVector> for &CMatrix {
    type Output = CVector;
    fn mul(self, rhs: &CVector) -> CVector {
        self.mul_vec(rhs)
    }
}

/// In-place LU factorisation with partial pivoting.
struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    fn factor(m: &CMatrix) -> Lu {
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[(r, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / pivot;
                lu[(r, k)] = f;
                for c in k + 1..n {
                    let delta = f * lu[(k, c)];
                    lu[(r, c)] -= delta;
                }
            }
        }
        Lu {
            lu,
            perm,
            sign,
            singular,
        }
    }

    fn det(&self) -> Complex64 {
        if self.singular {
            return Complex64::new(0.0, 0.0);
        }
        (0..self.lu.rows).fold(Complex64::new(self.sign, 0.0), |acc, i| acc * self.lu[(i, i)])
    }

    fn solve(&self, rhs: &CVector) -> CVector {
        let n = self.lu.rows;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            for c in 0..r {
                let delta = self.lu[(r, c)] * x[c];
                x[r] -= delta;
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                let delta = self.lu[(r, c)] * x[c];
                x[r] -= delta;
            }
            x[r] /= self.lu[(r, r)];
        }
        x.into()
    }
}

/// Determinant of a square matrix of dimension at most 4.
pub fn det(m: &CMatrix) -> Result<Complex64> {
    match m.check_square()? {
        1 => Ok(m[(0, 0)]),
        2 => Ok(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]),
        _ => Ok(Lu::factor(m).det()),
    }
}

/// Singular values in descending order (one-sided Jacobi on the columns).
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.check_square()?;
    let mut a = m.clone();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    let ap = a[(r, p)];
                    let aq = a[(r, q)];
                    alpha += ap.norm_sqr();
                    beta += aq.norm_sqr();
                    gamma += ap.conj() * aq;
                }
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q by the phase of gamma so the pair's inner product is real.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let ap = a[(r, p)];
                    let aq = a[(r, q)] * phase.conj();
                    a[(r, p)] = ap * c - aq * s;
                    a[(r, q)] = ap * s + aq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|c| (0..n).map(|r| a[(r, c)].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Ratio of largest to smallest singular value; `f64::INFINITY` when the
/// smallest is exactly zero.
pub fn condition_number(m: &CMatrix) -> Result<f64> {
    let sv = singular_values(m)?;
    let smax = sv[0];
    let smin = *sv.last().expect("nonempty");
    if smin == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Solves `m x = rhs`, rejecting systems whose condition number exceeds
/// [`DEFAULT_COND_THRESHOLD`].
pub fn solve(m: &CMatrix, rhs: &CVector) -> Result<CVector> {
    solve_with_threshold(m, rhs, DEFAULT_COND_THRESHOLD)
}

/// An infinite `cond_threshold` skips the condition estimate; exactly
/// singular systems are still rejected.
pub fn solve_with_threshold(m: &CMatrix, rhs: &CVector, cond_threshold: f64) -> Result<CVector> {
    let n = m.check_square()?;
    if rhs.len() != n {
        return Err(LinalgError::Dimension(format!(
            "rhs length {} for a {n}x{n} system",
            rhs.len()
        )));
    }
    if cond_threshold.is_finite() {
        let cond = condition_number(m)?;
        if cond.is_nan() || cond > cond_threshold {
            return Err(LinalgError::Singular { cond });
        }
    } else if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let lu = Lu::factor(m);
    if lu.singular {
        return Err(LinalgError::Singular {
            cond: f64::INFINITY,
        });
    }
    Ok(lu.solve(rhs))
}

/// Inverse of a well-conditioned square matrix.
pub fn inverse_with_threshold(m: &CMatrix, cond_threshold: f64) -> Result<CMatrix> {
    let n = m.check_square()?;
    let mut out = CMatrix::zeros(n, n);
    let cond = condition_number(m)?;
    if cond.is_nan() || cond > cond_threshold {
        return Err(LinalgError::Singular { cond });
    }
    let lu = Lu::factor(m);
    if lu.singular {
        return Err(LinalgError::Singular {
            cond: f64::INFINITY,
        });
    }
    for c in 0..n {
        let mut e = CVector::zeros(n);
        e[c] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        for r in 0..n {
            out[(r, c)] = col[r];
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor `L` with `m = L L^H`, after validating
/// Hermitian symmetry (to 1e-10 relative to the largest entry).
pub fn cholesky(m: &CMatrix) -> Result<CMatrix> {
    let n = m.check_square()?;
    let scale = m.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..=i {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(LinalgError::Definiteness(format!(
                    "entry ({i},{j}) breaks Hermitian symmetry"
                )));
            }
        }
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= 0.0 {
            return Err(LinalgError::Definiteness(format!(
                "Cholesky pivot {j} is not positive"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L` by forward substitution.
pub fn forward_substitute(l: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = l.check_square()?;
    if b.rows != n {
        return Err(LinalgError::Dimension(format!(
            "{} rows on the right for a {n}x{n} triangle",
            b.rows
        )));
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        for r in 0..n {
            let mut s = x[(r, c)];
            for k in 0..r {
                s -= l[(r, k)] * x[(k, c)];
            }
            x[(r, c)] = s / l[(r, r)];
        }
    }
    Ok(x)
}

/// Natural-log determinant of a Hermitian positive definite matrix via Cholesky.
pub fn logdet_hermitian_psd(m: &CMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok((0..l.rows).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}
