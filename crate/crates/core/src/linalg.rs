//! Minimal dense linear algebra: slice arithmetic, a row-major matrix, an LU
//! solve with partial pivoting, and symmetric eigenvalues via cyclic Jacobi.
//! The systems produced by the oracle and diagnostics are tiny (tens of
//! unknowns), so there is no need for a full linear algebra backend.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x)
}

pub fn norm<T: Scalar>(x: &[T]) -> T {
    norm2(x).sqrt()
}

pub fn sub<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt()
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: c,
                    got: row.len(),
                });
            }
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `(A + A^T) / 2`; square matrices only.
    pub fn symmetric_part(&self) -> Mat<T> {
        assert_eq!(self.rows, self.cols, "symmetric part of non-square matrix");
        let half = cast::<T>(0.5);
        let mut out = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `A x = b` by LU with partial pivoting. `A` must be square.
pub fn solve<T: Scalar>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "solve: matrix must be square",
            expected: n,
            got: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "solve: right hand side",
            expected: n,
            got: b.len(),
        });
    }
    let mut lu = a.clone();
    let mut x: Vec<T> = b.to_vec();
    let scale = lu.frobenius_norm().max(T::one());
    let tiny = T::epsilon() * scale * cast::<T>(16.0);

    for col in 0..n {
        // pivot on the largest remaining entry in this column
        let mut piv = col;
        let mut max = lu[(col, col)].abs();
        for r in col + 1..n {
            let v = lu[(r, col)].abs();
            if v > max {
                max = v;
                piv = r;
            }
        }
        if max <= tiny {
            return Err(Error::SingularSystem);
        }
        if piv != col {
            for j in 0..n {
                let t = lu[(col, j)];
                lu[(col, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            x.swap(col, piv);
        }
        let d = lu[(col, col)];
        for r in col + 1..n {
            let f = lu[(r, col)] / d;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = lu[(col, j)];
                lu[(r, j)] -= f * v;
            }
            let d = f * x[col];
            x[r] -= d;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= lu[(i, j)] * x[j];
        }
        x[i] = s / lu[(i, i)];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
/// Accuracy is near machine precision for the small matrices used here.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Mat<T>) -> Vec<T> {
    assert_eq!(a.rows(), a.cols(), "eigenvalues of non-square matrix");
    let n = a.rows();
    if n == 0 {
        return Vec::new();
    }
    let mut m = a.clone();
    let scale = m.frobenius_norm().max(T::epsilon());
    let stop = T::epsilon() * scale;

    for _sweep in 0..200 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::epsilon() * scale * cast::<T>(1e-3) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (cast::<T>(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("NaN eigenvalue"));
    eig
}
