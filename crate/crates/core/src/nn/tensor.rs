use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NnError;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if rows * cols != data.len() {
            return Err(NnError::ShapeMismatch {
                op: "from_vec",
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(NnError::ShapeMismatch {
                    op: "from_rows",
                    expected: (rows.len(), cols),
                    found: (rows.len(), row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = 1.0;
        }
        t
    }

    pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.row_iter().map(<[f64]>::to_vec).collect()
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut out = Self::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · otherᵀ`. Zero entries of `self` are skipped, which keeps
    /// bag-of-words inputs cheap.
    pub fn matmul_t(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.cols {
            return Err(NnError::ShapeMismatch {
                op: "matmul_t",
                expected: (other.rows, self.cols),
                found: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        let mut nonzero: Vec<(usize, f64)> = Vec::with_capacity(self.cols);
        for r in 0..self.rows {
            nonzero.clear();
            nonzero.extend(
                self.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(k, &a)| (k, a)),
            );
            let dst = out.row_mut(r);
            for (o, d) in dst.iter_mut().enumerate() {
                let rhs = other.row(o);
                *d = nonzero.iter().map(|&(k, a)| a * rhs[k]).sum();
            }
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.rows {
            return Err(NnError::ShapeMismatch {
                op: "matmul",
                expected: (self.cols, other.cols),
                found: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let lhs = self.row(r);
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in lhs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.rows != other.rows {
            return Err(NnError::ShapeMismatch {
                op: "t_matmul",
                expected: (self.rows, other.cols),
                found: other.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let rhs = other.row(r);
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[k * other.cols..(k + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(rhs) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<(), NnError> {
        if self.shape() != other.shape() {
            return Err(NnError::ShapeMismatch {
                op: "add_assign",
                expected: self.shape(),
                found: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Errors with `what` in the message if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<(), NnError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NnError::NonFinite {
                what: what.to_string(),
            })
        }
    }
}

impl Index<(usize, usize)> for Tensor2 {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Tensor2 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_transposes() {
        let a = Tensor2::from_vec(2, 3, vec![1.0, 0.0, 2.0, -1.0, 3.0, 0.5]).unwrap();
        let b = Tensor2::from_vec(3, 2, vec![1.0, 2.0, 0.0, 1.0, 4.0, -2.0]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[9.0, -2.0, 1.0, -0.0]);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().t_matmul(&b).unwrap(), ab);
    }

    #[test]
    fn shape_errors() {
        let a = Tensor2::zeros(2, 3);
        assert!(a.matmul(&Tensor2::zeros(2, 3)).is_err());
        assert!(a.matmul_t(&Tensor2::zeros(2, 2)).is_err());
        assert!(Tensor2::from_vec(2, 2, vec![1.0]).is_err());
        assert!(Tensor2::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let mut a = Tensor2::zeros(1, 2);
        a[(0, 1)] = f64::NAN;
        let err = a.check_finite("logits").unwrap_err();
        assert!(err.to_string().contains("logits"));
    }
}
