//! Small dense complex linear algebra.
//!
//! Matrices here are tiny (at most a few hundred rows), so a row-major
//! `Vec` with straightforward loops is fast enough and keeps the kernels
//! generic over the scalar type.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
}

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec length");
        Self { rows, cols, data }
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[Complex<T>]) -> Self {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    /// Single-row matrix.
    pub fn row_vector(v: &[Complex<T>]) -> Self {
        Self::from_vec(1, v.len(), v.to_vec())
    }

    /// Stacks equally sized vectors as columns.
    pub fn from_columns(cols: &[Vec<Complex<T>>]) -> Self {
        let rows = cols.first().map_or(0, |c| c.len());
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    /// Stacks equally sized vectors as rows.
    pub fn from_rows(rows: &[Vec<Complex<T>>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
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

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex<T>] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex<T>]) {
        assert_eq!(v.len(), self.rows);
        for (i, x) in v.iter().enumerate() {
            self[(i, j)] = *x;
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(Complex::new(s, T::zero()))
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::ShapeMismatch {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.add(&other.scale_real(-T::one()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, a) in a_row.iter().enumerate() {
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += *a * *b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::ShapeMismatch {
                op: "mul_vec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| *a * *b).sum())
            .collect())
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared norm of each row.
    pub fn row_norms_sq(&self) -> Vec<T> {
        (0..self.rows).map(|i| norm_sq(self.row(i))).collect()
    }

    pub fn column_norms_sq(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, z) in out.iter_mut().zip(self.row(i)) {
                *o += z.norm_sqr();
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r1, c1) = self.shape();
        let (r2, c2) = other.shape();
        Self::from_fn(r1 * r2, c1 * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn hstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "hstack",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// Solves `self · X = rhs` with partial-pivot LU.
    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare(self.rows, self.cols));
        }
        if rhs.rows != self.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "solve",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = self
            .data
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(n as f64);
        for col in 0..n {
            let (piv, piv_mag) = (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if piv_mag <= tiny {
                return Err(LinalgError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                }
                for j in 0..m {
                    b.data.swap(piv * m + j, col * m + j);
                }
            }
            let p = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / p;
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                for j in 0..m {
                    let v = b[(col, j)];
                    b[(r, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[(col, col)];
            for j in 0..m {
                let mut acc = b[(col, j)];
                for k in col + 1..n {
                    acc -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = acc / p;
            }
        }
        Ok(b)
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        self.solve(&Self::identity(self.rows))
    }
}

impl<T> Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// `aᴴ b`.
#[inline]
pub fn dot_h<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * *y).sum()
}

/// `aᵀ b` without conjugation.
#[inline]
pub fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[inline]
pub fn norm_sq<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Returns `v / ‖v‖`, or `None` for the zero vector.
pub fn normalized<T: Real>(v: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let n = norm_sq(v).sqrt();
    if n <= T::min_positive_value() {
        return None;
    }
    Some(v.iter().map(|z| *z / n).collect())
}

pub fn kron_vec<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(*x * *y);
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit-norm
/// eigenvectors as columns.
pub fn hermitian_eigen<T: Real>(a: &CMat<T>) -> Result<(Vec<T>, CMat<T>), LinalgError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let mut m = a.clone();
    // symmetrize away rounding in the input
    for i in 0..n {
        m[(i, i)] = Complex::new(m[(i, i)].re, T::zero());
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * Complex::new(T::lit(0.5), T::zero());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let mut v = CMat::<T>::identity(n);
    let total = m.frobenius_sq().max(T::min_positive_value());
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)].norm_sqr();
            }
        }
        if off <= total * T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag <= T::min_positive_value() {
                    continue;
                }
                let phase = apq / mag;
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (T::lit(2.0) * mag);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // J = diag phase correction followed by a real rotation:
                // J_pp = c, J_pq = s, J_qp = -s e^{-iφ}, J_qq = c e^{-iφ}
                let cz = Complex::new(c, T::zero());
                let sz = Complex::new(s, T::zero());
                let jpp = cz;
                let jpq = sz;
                let jqp = -sz * phase.conj();
                let jqq = cz * phase.conj();
                // m <- m J (columns p, q)
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * jpp + mkq * jqp;
                    m[(k, q)] = mkp * jpq + mkq * jqq;
                }
                // m <- Jᴴ m (rows p, q)
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = jpp.conj() * mpk + jqp.conj() * mqk;
                    m[(q, k)] = jpq.conj() * mpk + jqq.conj() * mqk;
                }
                m[(p, q)] = Complex::new(T::zero(), T::zero());
                m[(q, p)] = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        m[(y, y)]
            .re
            .partial_cmp(&m[(x, x)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((values, vectors))
}
