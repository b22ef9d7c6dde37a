//! Row-stochastic `k×k` matrices. Indices are 0-based: entry `(i, j)`
//! is the probability that color `i + 1` moves to color `j + 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coloring::Permutation;
use crate::error::{Error, Result};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StochMatrix {
    k: usize,
    data: Vec<f64>,
}

impl StochMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::Empty);
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::NotStochastic(format!("expected {k}x{k} entries")));
        }
        Self::from_row_major(k, rows.into_iter().flatten().collect())
    }

    pub fn from_row_major(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty);
        }
        if data.len() != k * k {
            return Err(Error::NotStochastic(format!("expected {} entries, got {}", k * k, data.len())));
        }
        for (idx, &v) in data.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NotStochastic(format!(
                    "entry ({}, {}) = {v} is not a nonnegative real",
                    idx / k + 1,
                    idx % k + 1
                )));
            }
        }
        for i in 0..k {
            let sum: f64 = data[i * k..(i + 1) * k].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self { k, data })
    }

    pub(crate) fn from_row_major_unchecked(k: usize, data: Vec<f64>) -> Self {
        Self { k, data }
    }

    pub fn identity(k: usize) -> Self {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Self { k, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn row_major(&self) -> &[f64] {
        &self.data
    }

    /// `S_* = min_i S_ii`.
    pub fn s_star(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    /// `Π_i S_ii^n`: the probability that a `μ_S` map is the identity on `[n]`.
    pub fn identity_probability(&self, n: usize) -> f64 {
        (0..self.k).map(|i| self.get(i, i).powi(n as i32)).product()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.k).all(|i| self.get(i, i) == 1.0)
    }

    pub fn is_zero_one(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &StochMatrix) -> Result<StochMatrix> {
        if self.k != other.k {
            return Err(Error::ColorCountMismatch { left: self.k, right: other.k });
        }
        let k = self.k;
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            for l in 0..k {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    data[i * k + j] += a * other.get(l, j);
                }
            }
        }
        Ok(Self { k, data })
    }

    /// Row vector times matrix, `v ↦ vS`.
    pub fn left_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.k {
            return Err(Error::ColorCountMismatch { left: self.k, right: v.len() });
        }
        let k = self.k;
        let mut out = vec![0.0; k];
        for (i, &vi) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.get(i, j);
            }
        }
        Ok(out)
    }

    /// `γSγ'^{-1} = (S_{γ(i)γ'(i')})`: rows permuted by `gamma`, columns by `gamma_col`.
    pub fn permuted(&self, gamma: &Permutation, gamma_col: &Permutation) -> Result<StochMatrix> {
        if gamma.len() != self.k || gamma_col.len() != self.k {
            return Err(Error::ColorCountMismatch { left: self.k, right: gamma.len().max(gamma_col.len()) });
        }
        let k = self.k;
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                data[i * k + j] = self.get(gamma.image(i + 1) - 1, gamma_col.image(j + 1) - 1);
            }
        }
        Ok(Self { k, data })
    }

    pub fn max_abs_diff(&self, other: &StochMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for StochMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<StochMatrix> for Vec<Vec<f64>> {
    fn from(m: StochMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Display for StochMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| format!("[{}]", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")))
            .collect();
        write!(f, "[{}]", rows.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(StochMatrix::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).is_ok());
        assert!(StochMatrix::new(vec![vec![0.7, 0.4], vec![0.4, 0.6]]).is_err());
        assert!(StochMatrix::new(vec![vec![1.2, -0.2], vec![0.4, 0.6]]).is_err());
        assert!(StochMatrix::new(vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn s_star_and_identity_probability() {
        let s = StochMatrix::new(vec![vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        assert_eq!(s.s_star(), 0.5);
        assert!((s.identity_probability(1) - 0.45).abs() < 1e-15);
        assert!(StochMatrix::identity(3).is_identity());
    }

    #[test]
    fn permuted_swaps_rows() {
        let s = StochMatrix::new(vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let swap = Permutation::new(vec![2, 1]).unwrap();
        let id = Permutation::identity(2);
        let p = s.permuted(&swap, &id).unwrap();
        assert_eq!(p.rows(), vec![vec![0.4, 0.6], vec![0.9, 0.1]]);
    }

    #[test]
    fn product_and_action() {
        let swap = StochMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(swap.mul(&swap).unwrap(), StochMatrix::identity(2));
        assert_eq!(swap.left_apply(&[0.25, 0.75]).unwrap(), vec![0.75, 0.25]);
    }
}
