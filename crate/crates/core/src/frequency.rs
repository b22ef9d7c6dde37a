//! Points of the simplex `Δ_k` and its ranked version `Δ_k^↓`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::StochMatrix;

/// Tolerance on `|Σ entries − 1|` for exact frequency vectors.
pub const EXACT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    /// Exact element of the simplex (e.g. a matrix-product track).
    Exact,
    /// Empirical proportions over `sample_size` coordinates.
    Empirical { sample_size: usize },
}

/// A vector of `k` nonnegative color frequencies summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    entries: Vec<f64>,
    kind: FrequencyKind,
}

impl FrequencyVector {
    /// Exact frequency vector; entries must be nonnegative and sum to 1 within 1e-12.
    pub fn exact(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty);
        }
        if entries.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParameter(format!("negative or non-finite frequency in {entries:?}")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > EXACT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("frequencies sum to {sum}, not 1")));
        }
        Ok(Self { entries, kind: FrequencyKind::Exact })
    }

    pub(crate) fn empirical(entries: Vec<f64>, sample_size: usize) -> Self {
        Self { entries, kind: FrequencyKind::Empirical { sample_size } }
    }

    /// The point mass on color `color` (1-based).
    pub fn vertex(k: usize, color: usize) -> Result<Self> {
        if color == 0 || color > k {
            return Err(Error::ColorOutOfRange { index: 1, color, k });
        }
        let mut entries = vec![0.0; k];
        entries[color - 1] = 1.0;
        Self::exact(entries)
    }

    pub fn uniform(k: usize) -> Self {
        Self { entries: vec![1.0 / k as f64; k], kind: FrequencyKind::Exact }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kind(&self) -> FrequencyKind {
        self.kind
    }

    pub fn sample_size(&self) -> Option<usize> {
        match self.kind {
            FrequencyKind::Exact => None,
            FrequencyKind::Empirical { sample_size } => Some(sample_size),
        }
    }

    /// Worst-case binomial standard deviation `0.5/√n` of an entry of an
    /// exchangeable empirical vector; zero for exact vectors.
    pub fn sampling_error(&self) -> f64 {
        match self.kind {
            FrequencyKind::Exact => 0.0,
            FrequencyKind::Empirical { sample_size } => 0.5 / (sample_size as f64).sqrt(),
        }
    }

    /// Right action `φ ↦ φS`.
    pub fn right_mul(&self, s: &StochMatrix) -> Result<Self> {
        let entries = s.left_apply(&self.entries)?;
        Ok(Self { entries, kind: self.kind })
    }

    /// Entries sorted in decreasing order.
    pub fn ranked(&self) -> Vec<f64> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// `‖self − other‖_∞`.
    pub fn sup_distance(&self, other: &FrequencyVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
