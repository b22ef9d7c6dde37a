//! Measures `Σ` on `k×k` stochastic matrices, the coset-map laws `μ_S`, flip
//! rates `c`, and characteristic pairs `(Σ, c)`.
//!
//! Admissibility means `Σ({I_k}) = 0` and `∫(1 − S_*) Σ(dS) < ∞`. Atomic
//! variants are checked exactly; [`MatrixMeasure::DirichletProduct`] charges
//! `I_k` with probability zero and its integral is bounded by its mass.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::coloring::{cumulative, pick, Permutation};
use crate::coset::CosetMap;
use crate::error::{Error, Result};
use crate::matrix::StochMatrix;
use crate::rng;

/// Safety cap on the number of terms read from a countable family.
pub const MAX_COUNTABLE_TERMS: usize = 1_000_000;

/// Attempts made by the rejection sampler before switching to direct conditional sampling.
pub const REJECTION_CAP: usize = 1000;

/// A weighted atom of an atomic measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub matrix: StochMatrix,
    pub weight: f64,
}

impl Atom {
    pub fn new(matrix: StochMatrix, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!("atom weight must be positive and finite, got {weight}")));
        }
        if matrix.is_identity() {
            return Err(Error::ChargesIdentity);
        }
        Ok(Self { matrix, weight })
    }

    /// `w (1 − S_*)`.
    pub fn regularity(&self) -> f64 {
        self.weight * (1.0 - self.matrix.s_star())
    }

    /// `w (1 − Π_i S_ii^n)`: rate of maps that are not the identity on `[n]`.
    pub fn level_rate(&self, n: usize) -> f64 {
        self.weight * (1.0 - self.matrix.identity_probability(n))
    }
}

/// Atom generator of a countable family: `r ↦ r`-th atom (0-based), `None` when exhausted.
pub type AtomGenerator = Arc<dyn Fn(usize) -> Option<Atom> + Send + Sync>;

/// A countable atomic family with declared `∫(1 − S_*) dΣ`.
#[derive(Clone)]
pub struct CountableAtomic {
    k: usize,
    generator: AtomGenerator,
    declared_regularity: f64,
    declared_mass: Option<f64>,
    tolerance: f64,
    description: String,
}

impl fmt::Debug for CountableAtomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CountableAtomic")
            .field("k", &self.k)
            .field("description", &self.description)
            .field("declared_regularity", &self.declared_regularity)
            .field("declared_mass", &self.declared_mass)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

impl CountableAtomic {
    /// `declared_mass = None` means the family has infinite total mass.
    pub fn new(
        k: usize,
        generator: AtomGenerator,
        declared_regularity: f64,
        declared_mass: Option<f64>,
        tolerance: f64,
        description: impl Into<String>,
    ) -> Result<Self> {
        if !(declared_regularity >= 0.0) || !declared_regularity.is_finite() {
            return Err(Error::Inadmissible(format!("declared regularity mass {declared_regularity} is not finite")));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter("truncation tolerance must be positive".into()));
        }
        Ok(Self { k, generator, declared_regularity, declared_mass, tolerance, description: description.into() })
    }

    /// Atoms `S_r = (1 − ε_r) I + ε_r B` with `ε_r = eps0·ratio^r` and weights
    /// `w_r = weight0·growth^r`, `r = 0, 1, …`. The regularity integral is
    /// `(1 − B_*)·eps0·weight0 / (1 − ratio·growth)`; total mass is infinite
    /// when `growth ≥ 1`.
    pub fn geometric(base: StochMatrix, eps0: f64, ratio: f64, weight0: f64, growth: f64, tolerance: f64) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 <= 1.0) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParameter("need 0 < eps0 <= 1 and 0 < ratio < 1".into()));
        }
        if !(weight0 > 0.0) || !(growth > 0.0) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if base.is_identity() {
            return Err(Error::ChargesIdentity);
        }
        if ratio * growth >= 1.0 {
            return Err(Error::Inadmissible(format!(
                "ratio·growth = {} ≥ 1: (1 − S_*)-weighted mass diverges",
                ratio * growth
            )));
        }
        let k = base.k();
        let declared_regularity = (1.0 - base.s_star()) * eps0 * weight0 / (1.0 - ratio * growth);
        let declared_mass = if growth < 1.0 { Some(weight0 / (1.0 - growth)) } else { None };
        let description = format!(
            "geometric family: base={base}, eps0={eps0}, ratio={ratio}, weight0={weight0}, growth={growth}"
        );
        let generator: AtomGenerator = Arc::new(move |r| {
            let eps = eps0 * ratio.powi(r as i32);
            let w = weight0 * growth.powi(r as i32);
            if eps == 0.0 || !w.is_finite() {
                return None;
            }
            let kk = base.k();
            let data = (0..kk * kk)
                .map(|idx| {
                    let (i, j) = (idx / kk, idx % kk);
                    let id = if i == j { 1.0 } else { 0.0 };
                    (1.0 - eps) * id + eps * base.get(i, j)
                })
                .collect();
            let m = StochMatrix::from_row_major_unchecked(kk, data);
            if m.is_identity() {
                return None;
            }
            Some(Atom { matrix: m, weight: w })
        });
        Self::new(k, generator, declared_regularity, declared_mass, tolerance, description)
    }

    pub fn atom(&self, r: usize) -> Option<Atom> {
        (self.generator)(r)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// A measure `Σ` on stochastic matrices.
#[derive(Clone, Debug)]
pub enum MatrixMeasure {
    FiniteAtomic { k: usize, atoms: Vec<Atom> },
    CountableAtomic(CountableAtomic),
    /// `mass · ξ_{α/k}^{⊗k}`: rows i.i.d. symmetric Dirichlet(α/k, …, α/k).
    DirichletProduct { k: usize, alpha: f64, mass: f64 },
    /// Atoms restricted to {0,1}-valued stochastic matrices.
    ZeroOne { k: usize, atoms: Vec<Atom> },
}

/// Value of `∫(1 − S_*) Σ(dS)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regularity {
    pub value: f64,
    /// Monte Carlo standard error, for non-atomic measures.
    pub std_error: Option<f64>,
    pub exact: bool,
    /// Upper bound on the unread tail of a countable family.
    pub tail_bound: f64,
}

/// Level-`n` atoms kept after truncating a measure.
#[derive(Clone, Debug)]
pub struct Truncation {
    /// `(atom, level-n rate)`; rates are `w(1 − Π S_ii^n)`.
    pub atoms: Vec<(Atom, f64)>,
    /// Upper bound on the total level-`n` rate of dropped atoms.
    pub discarded_rate: f64,
}

impl MatrixMeasure {
    pub fn empty(k: usize) -> Self {
        MatrixMeasure::FiniteAtomic { k, atoms: Vec::new() }
    }

    pub fn finite_atomic(atoms: Vec<(StochMatrix, f64)>) -> Result<Self> {
        let k = atoms.first().map(|(m, _)| m.k()).ok_or(Error::Empty)?;
        let atoms = build_atoms(k, atoms)?;
        Ok(MatrixMeasure::FiniteAtomic { k, atoms })
    }

    pub fn single_atom(matrix: StochMatrix, weight: f64) -> Result<Self> {
        Self::finite_atomic(vec![(matrix, weight)])
    }

    pub fn zero_one(atoms: Vec<(StochMatrix, f64)>) -> Result<Self> {
        let k = atoms.first().map(|(m, _)| m.k()).ok_or(Error::Empty)?;
        if let Some((m, _)) = atoms.iter().find(|(m, _)| !m.is_zero_one()) {
            return Err(Error::InvalidParameter(format!("atom {m} is not a 0-1 matrix")));
        }
        let atoms = build_atoms(k, atoms)?;
        Ok(MatrixMeasure::ZeroOne { k, atoms })
    }

    pub fn dirichlet_product(k: usize, alpha: f64, mass: f64) -> Result<Self> {
        crate::coloring::check_k(k)?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter(format!("mass must be positive and finite, got {mass}")));
        }
        if k == 1 {
            // the only 1×1 stochastic matrix is I_1
            return Err(Error::ChargesIdentity);
        }
        Ok(MatrixMeasure::DirichletProduct { k, alpha, mass })
    }

    pub fn k(&self) -> usize {
        match self {
            MatrixMeasure::FiniteAtomic { k, .. }
            | MatrixMeasure::ZeroOne { k, .. }
            | MatrixMeasure::DirichletProduct { k, .. } => *k,
            MatrixMeasure::CountableAtomic(c) => c.k,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => atoms.is_empty(),
            _ => false,
        }
    }

    /// Finite atoms, when the measure is finitely atomic.
    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => Some(atoms),
            _ => None,
        }
    }

    /// Total mass; `None` if infinite.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => {
                Some(atoms.iter().map(|a| a.weight).sum())
            }
            MatrixMeasure::DirichletProduct { mass, .. } => Some(*mass),
            MatrixMeasure::CountableAtomic(c) => c.declared_mass,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MatrixMeasure::FiniteAtomic { k, atoms } => format!(
                "finite-atomic k={k}: {}",
                atoms.iter().map(|a| format!("{}×{}", a.weight, a.matrix)).collect::<Vec<_>>().join(" + ")
            ),
            MatrixMeasure::ZeroOne { k, atoms } => format!(
                "zero-one k={k}: {}",
                atoms.iter().map(|a| format!("{}×{}", a.weight, a.matrix)).collect::<Vec<_>>().join(" + ")
            ),
            MatrixMeasure::DirichletProduct { k, alpha, mass } => {
                format!("dirichlet-product k={k}, alpha={alpha}, mass={mass}")
            }
            MatrixMeasure::CountableAtomic(c) => format!("countable-atomic k={}: {}", c.k, c.description),
        }
    }

    /// Draws `S ~ Σ/‖Σ‖`.
    pub fn sample_matrix<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StochMatrix> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => {
                if atoms.is_empty() {
                    return Err(Error::Inadmissible("cannot sample from the zero measure".into()));
                }
                let cum = cumulative(&atoms.iter().map(|a| a.weight).collect::<Vec<_>>());
                Ok(atoms[pick(&cum, rng.random())].matrix.clone())
            }
            MatrixMeasure::DirichletProduct { k, alpha, .. } => Ok(sample_dirichlet_product(*k, *alpha / *k as f64, rng)),
            MatrixMeasure::CountableAtomic(c) => {
                let mass = c.declared_mass.ok_or_else(|| {
                    Error::Inadmissible("infinite-mass countable family cannot be normalized; truncate it first".into())
                })?;
                // atoms until the unread weight is below tolerance·mass
                let mut atoms = Vec::new();
                let mut read = 0.0;
                for r in 0..MAX_COUNTABLE_TERMS {
                    match c.atom(r) {
                        Some(a) => {
                            read += a.weight;
                            atoms.push(a);
                        }
                        None => break,
                    }
                    if mass - read <= c.tolerance * mass {
                        break;
                    }
                }
                if atoms.is_empty() {
                    return Err(Error::Inadmissible("countable family has no atoms".into()));
                }
                let cum = cumulative(&atoms.iter().map(|a| a.weight).collect::<Vec<_>>());
                Ok(atoms[pick(&cum, rng.random())].matrix.clone())
            }
        }
    }

    /// `∫(1 − S_*) Σ(dS)`. Exact for finite atomic measures; summed with a
    /// tail bound for countable families; Monte Carlo with `samples` draws for
    /// Dirichlet products.
    pub fn regularity_integral<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<Regularity> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => Ok(Regularity {
                value: atoms.iter().map(Atom::regularity).sum(),
                std_error: None,
                exact: true,
                tail_bound: 0.0,
            }),
            MatrixMeasure::DirichletProduct { k, alpha, mass } => {
                if samples < 2 {
                    return Err(Error::InvalidParameter("need at least 2 Monte Carlo samples".into()));
                }
                let shape = alpha / *k as f64;
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..samples {
                    let s = sample_dirichlet_product(*k, shape, rng);
                    let v = 1.0 - s.s_star();
                    sum += v;
                    sum_sq += v * v;
                }
                let n = samples as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
                Ok(Regularity {
                    value: mass * mean,
                    std_error: Some(mass * (var / n).sqrt()),
                    exact: false,
                    tail_bound: 0.0,
                })
            }
            MatrixMeasure::CountableAtomic(c) => {
                let declared = c.declared_regularity;
                let slack = c.tolerance * declared.max(1.0);
                let mut partial = 0.0;
                for r in 0..MAX_COUNTABLE_TERMS {
                    let Some(atom) = c.atom(r) else {
                        // exhausted: whatever the declaration still promises is reported as tail
                        let tail = (declared - partial).max(0.0);
                        return Ok(Regularity { value: partial, std_error: None, exact: tail <= slack, tail_bound: tail });
                    };
                    if atom.matrix.k() != c.k {
                        return Err(Error::ColorCountMismatch { left: c.k, right: atom.matrix.k() });
                    }
                    if atom.matrix.is_identity() {
                        return Err(Error::ChargesIdentity);
                    }
                    partial += atom.regularity();
                    if partial > declared + slack {
                        return Err(Error::Inadmissible(format!(
                            "partial sums exceed the declared integral {declared} after {} terms",
                            r + 1
                        )));
                    }
                    if declared - partial <= c.tolerance {
                        return Ok(Regularity {
                            value: partial,
                            std_error: None,
                            exact: false,
                            tail_bound: (declared - partial).max(0.0),
                        });
                    }
                }
                Err(Error::Inadmissible(format!(
                    "partial sums did not reach the declared integral within {MAX_COUNTABLE_TERMS} terms"
                )))
            }
        }
    }

    /// Rejects measures charging `I_k` or with divergent `(1 − S_*)` mass.
    pub fn check_admissible(&self) -> Result<()> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => {
                if atoms.iter().any(|a| a.matrix.is_identity()) {
                    return Err(Error::ChargesIdentity);
                }
                Ok(())
            }
            MatrixMeasure::DirichletProduct { .. } => Ok(()),
            MatrixMeasure::CountableAtomic(_) => self.regularity_integral(0, &mut rng::seeded(0)).map(|_| ()),
        }
    }

    /// Atoms with their level-`n` rates `w(1 − Π S_ii^n)`. For a countable
    /// family, atom `r` is dropped when its rate is below `ε/2^{r+1}`, and
    /// reading stops once the tail bound `nk·(declared − partial)` is below
    /// `ε/2`; the dropped rate is bounded by `ε`.
    pub fn truncate(&self, n: usize) -> Result<Truncation> {
        match self {
            MatrixMeasure::FiniteAtomic { atoms, .. } | MatrixMeasure::ZeroOne { atoms, .. } => Ok(Truncation {
                atoms: atoms.iter().map(|a| (a.clone(), a.level_rate(n))).collect(),
                discarded_rate: 0.0,
            }),
            MatrixMeasure::DirichletProduct { .. } => {
                Err(Error::InvalidParameter("a Dirichlet product has no atoms to truncate".into()))
            }
            MatrixMeasure::CountableAtomic(c) => {
                let eps = c.tolerance;
                let bound_factor = (n * c.k) as f64;
                let mut atoms = Vec::new();
                let mut dropped = 0.0;
                let mut partial = 0.0;
                for r in 0..MAX_COUNTABLE_TERMS {
                    let Some(atom) = c.atom(r) else {
                        let tail = bound_factor * (c.declared_regularity - partial).max(0.0);
                        return Ok(Truncation { atoms, discarded_rate: dropped + tail });
                    };
                    partial += atom.regularity();
                    let rate = atom.level_rate(n);
                    if rate < eps / 2f64.powi(r as i32 + 1) {
                        dropped += rate;
                    } else {
                        atoms.push((atom, rate));
                    }
                    let tail = bound_factor * (c.declared_regularity - partial).max(0.0);
                    if tail <= eps / 2.0 {
                        return Ok(Truncation { atoms, discarded_rate: dropped + tail });
                    }
                }
                Err(Error::Inadmissible(format!("truncation did not converge within {MAX_COUNTABLE_TERMS} terms")))
            }
        }
    }

    /// Invariance of `Σ` under `S ↦ γSγ'^{-1}` for all `(γ, γ')`.
    ///
    /// Atomic measures are checked exactly (matrices compared within `tol`),
    /// scanning pairs in lexicographic order and reporting the first failure.
    /// Dirichlet products are exchangeable by construction; a deterministic
    /// moment comparison is attached as a sanity check.
    pub fn is_row_column_exchangeable(&self, tol: f64) -> RceReport {
        match self {
            MatrixMeasure::FiniteAtomic { k, atoms } | MatrixMeasure::ZeroOne { k, atoms } => {
                check_atoms_rce(*k, atoms, tol)
            }
            MatrixMeasure::CountableAtomic(c) => match self.truncate(1) {
                Ok(t) => {
                    let atoms: Vec<Atom> = t.atoms.into_iter().map(|(a, _)| a).collect();
                    let mut report = check_atoms_rce(c.k, &atoms, tol);
                    report.note = Some(format!("checked {} atoms retained at truncation tolerance", atoms.len()));
                    report
                }
                Err(e) => RceReport {
                    exchangeable: false,
                    structural: false,
                    witness: None,
                    sanity_max_deviation: None,
                    note: Some(e.to_string()),
                },
            },
            MatrixMeasure::DirichletProduct { k, alpha, .. } => {
                let shape = alpha / *k as f64;
                let samples = 20_000;
                let mut rng = rng::seeded(0x5eed);
                let mut first = vec![0.0; k * k];
                let mut second = vec![0.0; k * k];
                for _ in 0..samples {
                    let s = sample_dirichlet_product(*k, shape, &mut rng);
                    for (idx, &v) in s.row_major().iter().enumerate() {
                        first[idx] += v;
                        second[idx] += v * v;
                    }
                }
                let n = samples as f64;
                let spread = |v: &[f64]| {
                    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    (hi - lo) / n
                };
                let dev = spread(&first).max(spread(&second));
                RceReport {
                    exchangeable: true,
                    structural: true,
                    witness: None,
                    sanity_max_deviation: Some(dev),
                    note: Some(if dev <= tol.max(0.02) {
                        "i.i.d. symmetric Dirichlet rows".into()
                    } else {
                        format!("moment sanity check spread {dev} exceeds tolerance")
                    }),
                }
            }
        }
    }
}

fn build_atoms(k: usize, atoms: Vec<(StochMatrix, f64)>) -> Result<Vec<Atom>> {
    atoms
        .into_iter()
        .map(|(m, w)| {
            if m.k() != k {
                return Err(Error::ColorCountMismatch { left: k, right: m.k() });
            }
            Atom::new(m, w)
        })
        .collect()
}

/// Result of a row-column exchangeability check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RceReport {
    pub exchangeable: bool,
    /// Certified by construction rather than by enumeration.
    pub structural: bool,
    pub witness: Option<RceWitness>,
    pub sanity_max_deviation: Option<f64>,
    pub note: Option<String>,
}

/// A `(γ, γ')` pair moving weight: `Σ` gives `weight_before` to `matrix` but
/// `weight_after` to its image.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RceWitness {
    pub row_permutation: Vec<usize>,
    pub column_permutation: Vec<usize>,
    pub matrix: StochMatrix,
    pub image: StochMatrix,
    pub weight_before: f64,
    pub weight_after: f64,
}

fn check_atoms_rce(k: usize, atoms: &[Atom], tol: f64) -> RceReport {
    let weight_near = |m: &StochMatrix| -> f64 {
        atoms.iter().filter(|a| a.matrix.max_abs_diff(m) <= tol).fold(0.0, |acc, a| acc + a.weight)
    };
    let perms = Permutation::all(k);
    for gamma in &perms {
        for gamma_col in &perms {
            for atom in atoms {
                let image = atom.matrix.permuted(gamma, gamma_col).expect("same k");
                let before = weight_near(&atom.matrix);
                let after = weight_near(&image);
                if (before - after).abs() > tol * before.max(1.0) {
                    return RceReport {
                        exchangeable: false,
                        structural: false,
                        witness: Some(RceWitness {
                            row_permutation: gamma.images().to_vec(),
                            column_permutation: gamma_col.images().to_vec(),
                            matrix: atom.matrix.clone(),
                            image,
                            weight_before: before,
                            weight_after: after,
                        }),
                        sanity_max_deviation: None,
                        note: None,
                    };
                }
            }
        }
    }
    RceReport { exchangeable: true, structural: false, witness: None, sanity_max_deviation: None, note: None }
}

/// One symmetric Dirichlet(shape, …, shape) vector of length `k`, from
/// normalized Gamma variates. Sampled in log space (`G_a = G_{a+1}·U^{1/a}`)
/// so that small shapes do not underflow to an all-zero row.
pub fn sample_dirichlet<R: Rng + ?Sized>(k: usize, shape: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(shape + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>();
            g.ln() + (1.0 - u).ln() / shape
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
    row
}

/// `S` with `k` i.i.d. rows, each symmetric Dirichlet(`shape`).
pub fn sample_dirichlet_product<R: Rng + ?Sized>(k: usize, shape: f64, rng: &mut R) -> StochMatrix {
    let data = (0..k).flat_map(|_| sample_dirichlet(k, shape, rng)).collect();
    StochMatrix::from_row_major_unchecked(k, data)
}

/// `M^[n] ~ μ_S`: all `nk` entries independent, coset `i` drawn from row `i` of `S`.
pub fn sample_coset_map<R: Rng + ?Sized>(s: &StochMatrix, n: usize, rng: &mut R) -> CosetMap {
    let k = s.k();
    let cosets = (0..k)
        .map(|i| {
            let cum = cumulative(s.row(i));
            (0..n).map(|_| pick(&cum, rng.random()) as u8 + 1).collect()
        })
        .collect();
    CosetMap::from_raw(k, n, cosets)
}

/// How a conditional map draw was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionalDraw {
    Rejection { attempts: usize },
    Direct,
}

/// `M^[n] ~ μ_S(· | M^[n] ≠ id_{k,n})`. Rejection from `μ_S` for up to
/// [`REJECTION_CAP`] attempts, then direct sampling of the first deviating cell.
pub fn sample_coset_map_non_identity<R: Rng + ?Sized>(
    s: &StochMatrix,
    n: usize,
    rng: &mut R,
) -> Result<(CosetMap, ConditionalDraw)> {
    if n == 0 || s.identity_probability(n) >= 1.0 {
        return Err(Error::InvalidParameter("μ_S never leaves the identity at this level".into()));
    }
    for attempt in 1..=REJECTION_CAP {
        let m = sample_coset_map(s, n, rng);
        if !m.is_identity() {
            return Ok((m, ConditionalDraw::Rejection { attempts: attempt }));
        }
    }
    Ok((sample_coset_map_non_identity_direct(s, n, rng), ConditionalDraw::Direct))
}

/// Exact conditional draw: cells are scanned coset-major; the first
/// non-fixed cell `(i, j)` is drawn from its conditional law, cells before it
/// are fixed, its value comes from row `i` without the diagonal, and cells
/// after it are unconstrained.
pub fn sample_coset_map_non_identity_direct<R: Rng + ?Sized>(s: &StochMatrix, n: usize, rng: &mut R) -> CosetMap {
    let k = s.k();
    let stay: Vec<f64> = (0..k).map(|i| s.get(i, i).powi(n as i32)).collect();
    // P(first deviating coset = i) ∝ Π_{i'<i} stay_{i'} · (1 − stay_i)
    let mut weights = Vec::with_capacity(k);
    let mut prefix = 1.0;
    for &st in &stay {
        weights.push(prefix * (1.0 - st));
        prefix *= st;
    }
    let coset = pick(&cumulative(&weights), rng.random());
    let d = s.get(coset, coset);
    // P(pos ≤ j) = (1 − d^j)/(1 − d^n)
    let position = if d == 0.0 {
        0
    } else {
        let u: f64 = rng.random();
        let j = ((1.0 - u * (1.0 - stay[coset])).ln() / d.ln()).ceil() as usize;
        j.clamp(1, n) - 1
    };
    let off: Vec<f64> = (0..k).map(|j| if j == coset { 0.0 } else { s.get(coset, j) }).collect();
    let deviating = pick(&cumulative(&off), rng.random()) as u8 + 1;

    let mut cosets = Vec::with_capacity(k);
    for i in 0..k {
        let cum = cumulative(s.row(i));
        let row = (0..n)
            .map(|j| {
                if i < coset || (i == coset && j < position) {
                    i as u8 + 1
                } else if i == coset && j == position {
                    deviating
                } else {
                    pick(&cum, rng.random()) as u8 + 1
                }
            })
            .collect();
        cosets.push(row);
    }
    CosetMap::from_raw(k, n, cosets)
}

/// Off-diagonal flip rates `c_{ii'} ≥ 0` (0-based indices, diagonal zero).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlipRates {
    k: usize,
    c: Vec<f64>,
}

impl FlipRates {
    /// From a `k×k` table; the diagonal is ignored.
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let k = table.len();
        crate::coloring::check_k(k)?;
        let mut c = Vec::with_capacity(k * k);
        for (i, row) in table.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidParameter(format!("flip-rate table must be {k}x{k}")));
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    c.push(0.0);
                } else if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("flip rate c[{}][{}] = {v} must be ≥ 0", i + 1, j + 1)));
                } else {
                    c.push(v);
                }
            }
        }
        Ok(Self { k, c })
    }

    pub fn zero(k: usize) -> Self {
        Self { k, c: vec![0.0; k * k] }
    }

    /// `c_{ii'} = c` for all `i ≠ i'`.
    pub fn homogeneous(k: usize, c: f64) -> Result<Self> {
        Self::new((0..k).map(|i| (0..k).map(|j| if i == j { 0.0 } else { c }).collect()).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.k + j]
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    /// Total rate at which one coordinate of color `i + 1` flips away.
    pub fn out_rate(&self, i: usize) -> f64 {
        self.c[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn max_rate(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    /// First `(i, i')`, `(j, j')` pair (1-based) whose rates differ, if any.
    pub fn inhomogeneity(&self, tol: f64) -> Option<((usize, usize), (usize, usize))> {
        let k = self.k;
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        let &(i0, j0) = pairs.first()?;
        let c0 = self.get(i0, j0);
        pairs
            .iter()
            .find(|&&(i, j)| (self.get(i, j) - c0).abs() > tol)
            .map(|&(i, j)| ((i0 + 1, j0 + 1), (i + 1, j + 1)))
    }

    /// Generator `G` of one coordinate's flip chain: `G_{ii'} = c_{ii'}`, `G_{ii} = −Σ c_{ii'}`.
    pub fn generator(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| if i == j { -self.out_rate(i) } else { self.get(i, j) }).collect())
            .collect()
    }

    pub fn table(&self) -> Vec<Vec<f64>> {
        self.c.chunks(self.k).map(<[f64]>::to_vec).collect()
    }
}

/// A characteristic pair `(Σ, c)` defining `χ_{Σ,c} = μ_Σ + Σ c_{ii'} ρ_{ii'}`.
#[derive(Clone, Debug)]
pub struct CharacteristicPair {
    pub sigma: MatrixMeasure,
    pub flips: FlipRates,
}

impl CharacteristicPair {
    /// Checks color counts and admissibility of `Σ`.
    pub fn new(sigma: MatrixMeasure, flips: FlipRates) -> Result<Self> {
        if sigma.k() != flips.k() {
            return Err(Error::ColorCountMismatch { left: sigma.k(), right: flips.k() });
        }
        sigma.check_admissible()?;
        Ok(Self { sigma, flips })
    }

    pub fn zero(k: usize) -> Self {
        Self { sigma: MatrixMeasure::empty(k), flips: FlipRates::zero(k) }
    }

    pub fn flips_only(flips: FlipRates) -> Self {
        Self { sigma: MatrixMeasure::empty(flips.k()), flips }
    }

    pub fn k(&self) -> usize {
        self.flips.k()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn m(rows: &[&[f64]]) -> StochMatrix {
        StochMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identity_atoms_rejected() {
        assert_eq!(MatrixMeasure::single_atom(StochMatrix::identity(2), 1.0).unwrap_err(), Error::ChargesIdentity);
        assert!(MatrixMeasure::single_atom(m(&[&[0.5, 0.5], &[0.5, 0.5]]), 0.0).is_err());
        assert!(MatrixMeasure::zero_one(vec![(m(&[&[0.5, 0.5], &[0.0, 1.0]]), 1.0)]).is_err());
        assert!(MatrixMeasure::zero_one(vec![(m(&[&[0.0, 1.0], &[0.0, 1.0]]), 1.0)]).is_ok());
    }

    #[test]
    fn regularity_of_atoms() {
        let s = m(&[&[0.9, 0.1], &[0.05, 0.95]]);
        let sigma = MatrixMeasure::single_atom(s, 2.0).unwrap();
        let r = sigma.regularity_integral(0, &mut rng::seeded(0)).unwrap();
        assert!(r.exact);
        assert!((r.value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn point_mass_sampling() {
        let s = m(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let sigma = MatrixMeasure::single_atom(s.clone(), 3.0).unwrap();
        let mut rng = rng::seeded(1);
        for _ in 0..10 {
            assert_eq!(sigma.sample_matrix(&mut rng).unwrap(), s);
        }
        assert!(MatrixMeasure::empty(2).sample_matrix(&mut rng).is_err());
    }

    #[test]
    fn dirichlet_rows_are_normalized_even_for_tiny_shape() {
        let mut rng = rng::seeded(2);
        for &alpha in &[0.01, 0.5, 2.0, 50.0] {
            let sigma = MatrixMeasure::dirichlet_product(3, alpha, 1.0).unwrap();
            for _ in 0..200 {
                let s = sigma.sample_matrix(&mut rng).unwrap();
                for i in 0..3 {
                    let sum: f64 = s.row(i).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                    assert!(s.row(i).iter().all(|v| v.is_finite() && *v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn dirichlet_mean_is_one_over_k() {
        let sigma = MatrixMeasure::dirichlet_product(2, 2.0, 1.0).unwrap();
        let mut rng = rng::seeded(3);
        let n = 100_000;
        let mean = (0..n).map(|_| sigma.sample_matrix(&mut rng).unwrap().get(0, 0)).sum::<f64>() / n as f64;
        // Dirichlet(1,1) row: S_11 ~ Uniform(0,1), variance 1/12
        let sd = (1.0f64 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn coset_map_degenerate_rows() {
        let mut rng = rng::seeded(4);
        assert!(sample_coset_map(&StochMatrix::identity(3), 10, &mut rng).is_identity());
        let swap = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(sample_coset_map(&swap, 5, &mut rng), CosetMap::from_color_map(2, 5, &[2, 1]).unwrap());
    }

    #[test]
    fn coset_map_rows_follow_s() {
        let s = m(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let n = 100_000;
        let map = sample_coset_map(&s, n, &mut rng::seeded(5));
        let f = map.matrix_frequency().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let p = s.get(i, j);
                let sd = (p * (1.0 - p) / n as f64).sqrt();
                assert!((f.get(i, j) - p).abs() <= 3.0 * sd, "({i},{j}) {}", f.get(i, j));
            }
        }
    }

    #[test]
    fn direct_conditional_sampler_matches_rejection_law() {
        // k=2, n=2: compare the law of M^[2] given M^[2] ≠ id with the exact conditional.
        let s = m(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let n = 2;
        let mut rng = rng::seeded(6);
        let draws = 200_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let map = sample_coset_map_non_identity_direct(&s, n, &mut rng);
            assert!(!map.is_identity());
            *counts.entry(map.flat().to_string()).or_insert(0usize) += 1;
        }
        let z = 1.0 - s.identity_probability(n);
        for flat in crate::coloring::enumerate(2, 4) {
            let map = CosetMap::from_flat(2, &flat).unwrap();
            let mut p = 1.0;
            for i in 1..=2 {
                for j in 1..=n {
                    p *= s.get(i - 1, map.entry(i, j) - 1);
                }
            }
            let expected = if map.is_identity() { 0.0 } else { p / z };
            let got = *counts.get(&flat.to_string()).unwrap_or(&0) as f64 / draws as f64;
            let sd = (expected * (1.0 - expected) / draws as f64).sqrt();
            assert!((got - expected).abs() <= 4.0 * sd + 1e-12, "{flat}: {got} vs {expected}");
        }
    }

    #[test]
    fn rejection_falls_back_for_near_identity() {
        let s = m(&[&[1.0 - 1e-9, 1e-9], &[0.0, 1.0]]);
        let (map, how) = sample_coset_map_non_identity(&s, 3, &mut rng::seeded(7)).unwrap();
        assert_eq!(how, ConditionalDraw::Direct);
        assert!(!map.is_identity());
    }

    #[test]
    fn rce_examples() {
        let sym = MatrixMeasure::single_atom(m(&[&[0.5, 0.5], &[0.5, 0.5]]), 1.0).unwrap();
        assert!(sym.is_row_column_exchangeable(1e-12).exchangeable);
        let asym = MatrixMeasure::single_atom(m(&[&[0.9, 0.1], &[0.4, 0.6]]), 1.0).unwrap();
        let report = asym.is_row_column_exchangeable(1e-12);
        assert!(!report.exchangeable);
        let w = report.witness.unwrap();
        // first violating pair in lexicographic order: identity rows, swapped columns
        assert_eq!(w.row_permutation, vec![1, 2]);
        assert_eq!(w.column_permutation, vec![2, 1]);
        let dir = MatrixMeasure::dirichlet_product(3, 1.5, 1.0).unwrap();
        let r = dir.is_row_column_exchangeable(0.02);
        assert!(r.exchangeable && r.structural);
        assert!(r.sanity_max_deviation.unwrap() < 0.02);
    }

    #[test]
    fn countable_family_regularity_and_truncation() {
        let base = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        // infinite mass: weights grow, jumps shrink faster
        let fam = CountableAtomic::geometric(base, 0.5, 0.25, 1.0, 2.0, 1e-6).unwrap();
        let sigma = MatrixMeasure::CountableAtomic(fam);
        assert_eq!(sigma.total_mass(), None);
        let r = sigma.regularity_integral(0, &mut rng::seeded(0)).unwrap();
        // (1 - 0)·0.5·1 / (1 - 0.5) = 1
        assert!((r.value - 1.0).abs() <= 1e-6);
        assert!(r.tail_bound <= 1e-6);
        assert!(sigma.sample_matrix(&mut rng::seeded(0)).is_err());
        let t = sigma.truncate(3).unwrap();
        assert!(!t.atoms.is_empty());
        assert!(t.discarded_rate <= 1e-6);
        // near-identity atoms are moved by column permutations alone
        assert!(!sigma.is_row_column_exchangeable(1e-12).exchangeable);
    }

    #[test]
    fn divergent_family_rejected() {
        let base = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            CountableAtomic::geometric(base.clone(), 0.5, 0.5, 1.0, 2.0, 1e-9),
            Err(Error::Inadmissible(_))
        ));
        // a generator whose true integral exceeds its declaration is caught
        let gen: AtomGenerator = Arc::new(move |_r| Some(Atom { matrix: base.clone(), weight: 1.0 }));
        let fam = CountableAtomic::new(2, gen, 5.5, None, 1e-9, "harmonic").unwrap();
        let sigma = MatrixMeasure::CountableAtomic(fam);
        assert!(matches!(sigma.check_admissible(), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn flip_rates() {
        let c = FlipRates::new(vec![vec![9.0, 1.0], vec![3.0, 9.0]]).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.generator(), vec![vec![-1.0, 1.0], vec![3.0, -3.0]]);
        assert_eq!(c.inhomogeneity(0.0), Some(((1, 2), (2, 1))));
        assert!(FlipRates::homogeneous(3, 2.0).unwrap().inhomogeneity(0.0).is_none());
        assert!(FlipRates::new(vec![vec![0.0, -1.0], vec![0.0, 0.0]]).is_err());
    }
}
