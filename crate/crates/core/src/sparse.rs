//! Minimal compressed-sparse-row complex matrices for the integrator kernels.

use nalgebra::{DMatrix, DVector};

use crate::fock::C64;

#[derive(Debug, Clone)]
pub(crate) struct Csr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl Csr {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, values }
    }

    #[cfg(test)]
    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[k])] = self.values[k];
            }
        }
        m
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &DVector<C64>, y: &mut DVector<C64>) {
        let xs = x.as_slice();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * xs[self.indices[k]];
            }
            *yi = acc;
        }
    }

    /// `out += s * A B`, column by column.
    pub fn mul_dense_acc(&self, b: &DMatrix<C64>, s: C64, out: &mut DMatrix<C64>) {
        let n = self.n;
        for (bc, oc) in b.as_slice().chunks_exact(n).zip(out.as_mut_slice().chunks_exact_mut(n)) {
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[k] * bc[self.indices[k]];
                }
                oc[i] += s * acc;
            }
        }
    }

    /// `out += s * B A` via column axpys: row `k` of `A` scatters column `k` of `B`.
    pub fn dense_mul_acc(&self, b: &DMatrix<C64>, s: C64, out: &mut DMatrix<C64>) {
        let n = self.n;
        let bs = b.as_slice();
        let os = out.as_mut_slice();
        for k in 0..n {
            let bc = &bs[k * n..(k + 1) * n];
            for p in self.indptr[k]..self.indptr[k + 1] {
                let j = self.indices[p];
                let v = s * self.values[p];
                let oc = &mut os[j * n..(j + 1) * n];
                for (o, &x) in oc.iter_mut().zip(bc) {
                    *o += v * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> DMatrix<C64> {
        // sparse-ish deterministic pattern
        DMatrix::from_fn(n, n, |i, j| {
            let h = (i as u64 * 31 + j as u64 * 17 + seed) % 7;
            if h < 3 {
                C64::new(h as f64 - 1.0, (i as f64 - j as f64) * 0.25)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn products_match_dense() {
        let a = sample(7, 3);
        let b = sample(7, 5) + DMatrix::from_element(7, 7, C64::new(0.1, -0.2));
        let csr = Csr::from_dense(&a);
        assert_eq!(csr.to_dense(), a);
        let s = C64::new(0.3, 0.7);
        let mut left = DMatrix::zeros(7, 7);
        csr.mul_dense_acc(&b, s, &mut left);
        assert!((left - (&a * &b) * s).norm() < 1e-12);
        let mut right = DMatrix::zeros(7, 7);
        csr.dense_mul_acc(&b, s, &mut right);
        assert!((right - (&b * &a) * s).norm() < 1e-12);
        let x = b.column(2).into_owned();
        let mut y = DVector::zeros(7);
        csr.mul_vec(&x, &mut y);
        assert!((y - &a * &x).norm() < 1e-12);
    }
}
