//! Dense square matrices with just enough algebra for Gaussian fitting:
//! Cholesky factorisation and triangular solves.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

/// Row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Returns `None` when `data.len() != dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == dim * dim).then_some(SquareMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest |a_ij − a_ji| relative to the largest |a_ij|.
    pub fn asymmetry(&self) -> T {
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// `self · selfᵀ`.
    pub fn mul_transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v: T = self.row(i).iter().zip(self.row(j)).map(|(&a, &b)| a * b).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.dim {
            self[(i, i)] += value;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// Lower-triangular `L` with `L·Lᵀ = a`, reading only the lower triangle
/// of `a`. `None` if `a` is not numerically positive definite.
pub fn cholesky<T: Scalar>(a: &SquareMatrix<T>) -> Option<SquareMatrix<T>> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let dot: T = l.row(i)[..j].iter().zip(&l.row(j)[..j]).map(|(&x, &y)| x * y).sum();
            let s = a[(i, j)] - dot;
            if i == j {
                // also rejects NaN
                if !(s > T::zero()) {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    l.is_finite().then_some(l)
}

/// Solves `l · z = b` for lower-triangular `l` with a non-zero diagonal.
pub fn forward_substitute<T: Scalar>(l: &SquareMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let dot: T = l.row(i)[..i].iter().zip(&z).map(|(&a, &b)| a * b).sum();
        z.push((b[i] - dot) / l[(i, i)]);
    }
    z
}
