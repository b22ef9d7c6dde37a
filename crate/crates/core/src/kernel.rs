//! Dense kernels on `{1..k}^n`: transition matrices `P_n` and jump-rate
//! generators `Q_n`. States are indexed by [`Coloring::index`].

use serde::Serialize;

use crate::coloring::Coloring;
use crate::error::{Error, Result};

/// Largest state space for which a dense kernel is built (`4096² ≈ 1.7e7` entries).
pub const MAX_EXACT_STATES: usize = 4096;

/// Row-sum tolerance for exact kernels.
pub const KERNEL_ROW_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Transition probabilities; rows sum to one.
    Discrete,
    /// Jump rates; rows sum to zero, off-diagonal entries nonnegative.
    Continuous,
}

/// Number of states `k^n`, guarded by [`MAX_EXACT_STATES`].
pub fn state_count(k: usize, n: usize) -> Result<usize> {
    let states = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if states > MAX_EXACT_STATES as u128 {
        return Err(Error::StateSpaceTooLarge { states, limit: MAX_EXACT_STATES });
    }
    Ok(states as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactKernel {
    k: usize,
    n: usize,
    kind: KernelKind,
    states: usize,
    matrix: Vec<f64>,
}

impl ExactKernel {
    /// Fills a kernel entrywise. For [`KernelKind::Continuous`] the function
    /// is only consulted off the diagonal; the diagonal is minus the row sum.
    pub fn from_fn<F>(kind: KernelKind, k: usize, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&Coloring, &Coloring) -> f64,
    {
        let states = state_count(k, n)?;
        let colorings: Vec<Coloring> = (0..states).map(|i| Coloring::from_index(k, n, i)).collect();
        let mut matrix = vec![0.0; states * states];
        for (a, x) in colorings.iter().enumerate() {
            let row = &mut matrix[a * states..(a + 1) * states];
            for (b, y) in colorings.iter().enumerate() {
                if kind == KernelKind::Continuous && a == b {
                    continue;
                }
                row[b] = f(x, y);
            }
            if kind == KernelKind::Continuous {
                let off: f64 = row.iter().sum();
                row[a] = -off;
            }
        }
        Self::from_matrix(kind, k, n, matrix)
    }

    /// Wraps a dense row-major matrix after validating it.
    pub fn from_matrix(kind: KernelKind, k: usize, n: usize, matrix: Vec<f64>) -> Result<Self> {
        let states = state_count(k, n)?;
        if matrix.len() != states * states {
            return Err(Error::InvalidParameter(format!("expected {}x{} kernel", states, states)));
        }
        let kernel = Self { k, n, kind, states, matrix };
        kernel.validate()?;
        Ok(kernel)
    }

    fn validate(&self) -> Result<()> {
        for a in 0..self.states {
            let row = self.row(a);
            let target = match self.kind {
                KernelKind::Discrete => 1.0,
                KernelKind::Continuous => 0.0,
            };
            let scale = row.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let sum: f64 = row.iter().sum();
            if (sum - target).abs() > KERNEL_ROW_TOL * scale {
                return Err(Error::InvalidParameter(format!("row {a} sums to {sum}, expected {target}")));
            }
            for (b, &v) in row.iter().enumerate() {
                let must_be_nonneg = self.kind == KernelKind::Discrete || a != b;
                if must_be_nonneg && v < -KERNEL_ROW_TOL {
                    return Err(Error::InvalidParameter(format!("negative entry {v} at ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn state(&self, index: usize) -> Coloring {
        Coloring::from_index(self.k, self.n, index)
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.states + b]
    }

    pub fn entry(&self, x: &Coloring, y: &Coloring) -> f64 {
        self.get(x.index(), y.index())
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.matrix[a * self.states..(a + 1) * self.states]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Row vector times kernel.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for (a, &va) in v.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(a)) {
                *o += va * p;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards_state_space() {
        assert!(state_count(2, 12).is_ok());
        assert!(matches!(state_count(2, 13), Err(Error::StateSpaceTooLarge { .. })));
        assert!(matches!(state_count(10, 100), Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ExactKernel::from_matrix(KernelKind::Discrete, 2, 1, vec![0.5, 0.5, 0.2, 0.2]).is_err());
        assert!(ExactKernel::from_matrix(KernelKind::Continuous, 2, 1, vec![-1.0, 1.0, 2.0, -2.0]).is_ok());
        assert!(ExactKernel::from_matrix(KernelKind::Continuous, 2, 1, vec![1.0, -1.0, 2.0, -2.0]).is_err());
    }
}
