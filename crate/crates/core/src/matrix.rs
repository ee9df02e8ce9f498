//! Minimal dense row-stochastic matrices for oracle-scale kernels.
//!
//! Kernels over the partially-masked state space are tiny by construction
//! (the enumeration cap keeps `(V+1)^L` small), so a flat `Vec<f64>` in
//! row-major order is all that is needed. Rows index the *from* state and
//! columns the *to* state, both by canonical index.

use crate::error::{Error, Result};

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct StochMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochMatrix {
    /// All-zero `n x n` matrix.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Mutable entry `(row, col)`.
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.n + col]
    }

    /// Row `row` as a slice.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    /// Mutable row `row`.
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.n..(row + 1) * self.n]
    }

    /// `self * other` (composition of kernels: first `self`, then `other`).
    pub fn matmul(&self, other: &StochMatrix) -> Result<StochMatrix> {
        if self.n != other.n {
            return Err(Error::InvalidParameter(format!(
                "matrix dimension mismatch: {} vs {}",
                self.n, other.n
            )));
        }
        let n = self.n;
        let mut out = StochMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Pushes a distribution (row vector) through the kernel: `p * K`.
    pub fn push(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "vector length {} does not match matrix dimension {}",
                p.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            let row = &self.data[i * n..(i + 1) * n];
            for (o, &k) in out.iter_mut().zip(row) {
                *o += pi * k;
            }
        }
        Ok(out)
    }
}
