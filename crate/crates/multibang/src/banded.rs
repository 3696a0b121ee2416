//! Banded linear algebra: LU factorization with partial pivoting.
//!
//! Row-major band storage; row `i` holds column offsets `-kl ..= ku+kl`
//! relative to the diagonal, the extra `kl` upper columns being the fill
//! introduced by row swaps. Factor and solve are O(dim * kl * (kl+ku)).

use crate::scalar::Real;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix<F> {
    dim: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Real> BandedMatrix<F> {
    pub fn zeros(dim: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            dim,
            kl,
            ku,
            width,
            data: vec![F::zero(); dim * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.in_storage_band(i, j), "({}, {}) outside band", i, j);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn in_storage_band(&self, i: usize, j: usize) -> bool {
        i < self.dim && j < self.dim && j + self.kl >= i && j <= i + self.ku + self.kl
    }

    /// Entry (i, j); zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> F {
        if self.in_storage_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            F::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        let idx = self.index(i, j);
        self.data[idx] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: F) {
        let idx = self.index(i, j);
        self.data[idx] = self.data[idx] + v;
    }

    /// Matrix-vector product (valid only before factoring).
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![F::zero(); self.dim];
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + self.kl).min(self.dim - 1);
            let mut acc = F::zero();
            for j in lo..=hi {
                acc = acc + self.data[self.index(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(mut self) -> Result<BandedLu<F>> {
        let dim = self.dim;
        let (kl, ku, width) = (self.kl, self.ku, self.width);
        let mut ipiv = vec![0usize; dim];
        for k in 0..dim {
            let i_max = (k + kl).min(dim - 1);
            let mut piv_row = k;
            let mut piv_abs = self.data[self.index(k, k)].abs();
            for r in (k + 1)..=i_max {
                let a = self.data[self.index(r, k)].abs();
                if a > piv_abs {
                    piv_abs = a;
                    piv_row = r;
                }
            }
            if piv_abs == F::zero() {
                return Err(Error::Singular(format!("zero pivot at column {}", k)));
            }
            ipiv[k] = piv_row;
            let j_max = (k + ku + kl).min(dim - 1);
            if piv_row != k {
                for j in k..=j_max {
                    let a = self.index(k, j);
                    let b = self.index(piv_row, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.index(k, k)];
            for i in (k + 1)..=i_max {
                let idx_ik = self.index(i, k);
                let l = self.data[idx_ik] / pivot;
                self.data[idx_ik] = l;
                if l != F::zero() {
                    // row_i -= l * row_k over the trailing band columns;
                    // contiguous in storage thanks to the row-major layout
                    let row_k = k * width + (k + 1 + kl - k);
                    let row_i = i * width + (k + 1 + kl - i);
                    for off in 0..(j_max.saturating_sub(k)) {
                        let v = self.data[row_k + off];
                        self.data[row_i + off] = self.data[row_i + off] - l * v;
                    }
                }
            }
        }
        Ok(BandedLu { mat: self, ipiv })
    }
}

/// Factored form; solves share the storage of the factored matrix.
#[derive(Debug, Clone)]
pub struct BandedLu<F> {
    mat: BandedMatrix<F>,
    ipiv: Vec<usize>,
}

impl<F: Real> BandedLu<F> {
    pub fn dim(&self) -> usize {
        self.mat.dim
    }

    pub fn solve_in_place(&self, rhs: &mut [F]) {
        let dim = self.mat.dim;
        assert_eq!(rhs.len(), dim);
        let (kl, ku) = (self.mat.kl, self.mat.ku);
        for k in 0..dim {
            let r = self.ipiv[k];
            if r != k {
                rhs.swap(k, r);
            }
            let i_max = (k + kl).min(dim - 1);
            for i in (k + 1)..=i_max {
                let l = self.mat.data[self.mat.index(i, k)];
                rhs[i] = rhs[i] - l * rhs[k];
            }
        }
        for i in (0..dim).rev() {
            let j_max = (i + ku + kl).min(dim - 1);
            let mut acc = rhs[i];
            for j in (i + 1)..=j_max {
                acc = acc - self.mat.data[self.mat.index(i, j)] * rhs[j];
            }
            rhs[i] = acc / self.mat.data[self.mat.index(i, i)];
        }
    }

    pub fn solve(&self, mut rhs: Vec<F>) -> Vec<F> {
        self.solve_in_place(&mut rhs);
        rhs
    }
}

/// An assembled banded system A x = b.
#[derive(Debug, Clone)]
pub struct BandedSystem<F> {
    pub matrix: BandedMatrix<F>,
    pub rhs: Vec<F>,
}

impl<F: Real> BandedSystem<F> {
    pub fn solve(self) -> Result<Vec<F>> {
        let lu = self.matrix.factor()?;
        Ok(lu.solve(self.rhs))
    }
}
