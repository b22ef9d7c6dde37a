//! Brute-force checks on small state spaces.
//!
//! Every check returns a [`CheckReport`] carrying the largest deviation seen
//! and, on failure, a witness naming the offending states.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coloring::{enumerate, Coloring, Permutation};
use crate::continuous::FirstJump;
use crate::error::{Error, Result};
use crate::kernel::{state_count, ExactKernel, KernelKind};
use crate::rng::{stream, SimRng};

/// Default absolute tolerance for floating-point kernel identities.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest state space the exchangeability check accepts.
pub const MAX_CHECK_STATES: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub states: Vec<String>,
    pub values: Vec<f64>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub max_deviation: f64,
    pub witness: Option<Witness>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), passed: true, max_deviation: 0.0, witness: None, notes: Vec::new() }
    }

    /// Records a deviation; keeps the witness of the largest one.
    fn observe(&mut self, dev: f64, tol: f64, witness: impl FnOnce() -> Witness) {
        if dev > self.max_deviation {
            self.max_deviation = dev;
            if dev > tol {
                self.witness = Some(witness());
            }
        }
        if dev > tol || dev.is_nan() {
            self.passed = false;
        }
    }
}

/// Which permutations [`check_exchangeable`] tries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermutationSet {
    /// `(j j+1)` for `j < n`; these generate the symmetric group.
    Adjacent,
    /// All `n!` permutations.
    All,
}

/// `P_n(x, x') = P_n(x^σ, x'^σ)` for every pair of states.
pub fn check_exchangeable(kernel: &ExactKernel, set: PermutationSet, tol: f64) -> Result<CheckReport> {
    let (k, n) = (kernel.k(), kernel.n());
    if kernel.states() > MAX_CHECK_STATES {
        return Err(Error::StateSpaceTooLarge { states: kernel.states() as u128, limit: MAX_CHECK_STATES });
    }
    let perms: Vec<Permutation> = match set {
        PermutationSet::Adjacent => (1..n).map(|j| Permutation::transposition(n, j, j + 1)).collect::<Result<_>>()?,
        PermutationSet::All => Permutation::all(n),
    };
    let states: Vec<Coloring> = enumerate(k, n).collect();
    let mut report = CheckReport::new("exchangeability");
    report.notes.push(format!("{} permutations", perms.len()));
    for sigma in &perms {
        let image: Vec<usize> = states.iter().map(|x| x.relabel(sigma).map(|y| y.index())).collect::<Result<_>>()?;
        for a in 0..states.len() {
            for b in 0..states.len() {
                let (u, v) = (kernel.get(a, b), kernel.get(image[a], image[b]));
                report.observe((u - v).abs(), tol, || Witness {
                    states: vec![
                        states[a].to_string(),
                        states[b].to_string(),
                        states[image[a]].to_string(),
                        states[image[b]].to_string(),
                    ],
                    values: vec![u, v],
                    description: format!("entry changes under the permutation {:?}", sigma.images()),
                });
            }
        }
    }
    Ok(report)
}

/// For every `x ∈ {1..k}^m`, every extension `x* ∈ {1..k}^n` and every `x'`:
/// `P_m(x, x') = Σ_{x̂ : x̂^[m] = x'} P_n(x*, x̂)`. The same identity holds for
/// jump rates. Also reports the spread of the projected value across
/// extensions, which must vanish for the projection to be Markov at all.
pub fn check_consistent(kernel_n: &ExactKernel, kernel_m: &ExactKernel, tol: f64) -> Result<CheckReport> {
    let (k, n, m) = (kernel_n.k(), kernel_n.n(), kernel_m.n());
    if kernel_m.k() != k {
        return Err(Error::ColorCountMismatch { left: k, right: kernel_m.k() });
    }
    if kernel_m.kind() != kernel_n.kind() {
        return Err(Error::InvalidParameter("kernels differ in kind".into()));
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("need m ≤ n, got m = {m}, n = {n}")));
    }
    let (sm, sn) = (state_count(k, m)?, state_count(k, n)?);
    let block = sn / sm;
    let mut report = CheckReport::new("consistency");
    let mut spread = 0.0f64;
    for x in 0..sm {
        for xp in 0..sm {
            let exact = kernel_m.get(x, xp);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for t in 0..block {
                let ext = x * block + t;
                let projected: f64 = (0..block).map(|u| kernel_n.get(ext, xp * block + u)).sum();
                lo = lo.min(projected);
                hi = hi.max(projected);
                report.observe((projected - exact).abs(), tol, || Witness {
                    states: vec![
                        Coloring::from_index(k, m, x).to_string(),
                        Coloring::from_index(k, n, ext).to_string(),
                        Coloring::from_index(k, m, xp).to_string(),
                    ],
                    values: vec![projected, exact],
                    description: format!(
                        "from extension {} the level-{n} kernel projects to {projected} for {} -> {}, level-{m} gives {exact}",
                        Coloring::from_index(k, n, ext),
                        Coloring::from_index(k, m, x),
                        Coloring::from_index(k, m, xp)
                    ),
                });
            }
            spread = spread.max(hi - lo);
        }
    }
    report.notes.push(format!("max spread across extensions: {spread}"));
    if spread > tol {
        report.passed = false;
    }
    Ok(report)
}

/// Ehrenfest urn on `{1,2}^n`: pick a coordinate uniformly, then set it by a
/// fair coin. `P(x, x) = 1/2`, each single-coordinate neighbor `1/(2n)`.
pub fn ehrenfest_kernel(n: usize) -> Result<ExactKernel> {
    if n == 0 {
        return Err(Error::InvalidParameter("Ehrenfest chain needs n ≥ 1".into()));
    }
    ExactKernel::from_fn(KernelKind::Discrete, 2, n, |x, y| {
        let diff = x.word().iter().zip(y.word()).filter(|(a, b)| a != b).count();
        match diff {
            0 => 0.5,
            1 => 0.5 / n as f64,
            _ => 0.0,
        }
    })
}

/// `λ(x)P(x, x') = λ(x')P(x', x)` for all pairs.
pub fn check_detailed_balance(kernel: &ExactKernel, lambda: &[f64], tol: f64) -> Result<CheckReport> {
    check_distribution(lambda, kernel.states())?;
    let mut report = CheckReport::new("detailed balance");
    for a in 0..kernel.states() {
        for b in a + 1..kernel.states() {
            let (l, r) = (lambda[a] * kernel.get(a, b), lambda[b] * kernel.get(b, a));
            report.observe((l - r).abs(), tol, || Witness {
                states: vec![kernel.state(a).to_string(), kernel.state(b).to_string()],
                values: vec![l, r],
                description: "probability flux differs between the two directions".into(),
            });
        }
    }
    Ok(report)
}

/// `λP = λ` (discrete) or `λQ = 0` (continuous).
pub fn check_stationary(kernel: &ExactKernel, lambda: &[f64], tol: f64) -> Result<CheckReport> {
    check_distribution(lambda, kernel.states())?;
    let flow = kernel.left_apply(lambda);
    let mut report = CheckReport::new("stationarity");
    for (a, f) in flow.iter().enumerate() {
        let target = match kernel.kind() {
            KernelKind::Discrete => lambda[a],
            KernelKind::Continuous => 0.0,
        };
        report.observe((f - target).abs(), tol, || Witness {
            states: vec![kernel.state(a).to_string()],
            values: vec![*f, target],
            description: "mass after one step differs from the stationary mass".into(),
        });
    }
    Ok(report)
}

fn check_distribution(v: &[f64], states: usize) -> Result<()> {
    if v.len() != states {
        return Err(Error::LengthMismatch { expected: states, got: v.len() });
    }
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("not a probability vector (sum {sum})")));
    }
    Ok(())
}

/// `d_TV(P^m(start, ·), stationary)` for `m = 0..=steps`.
pub fn mixing_profile(kernel: &ExactKernel, start: &Coloring, stationary: &[f64], steps: usize) -> Result<Vec<f64>> {
    if kernel.kind() != KernelKind::Discrete {
        return Err(Error::InvalidParameter("mixing profiles need a discrete kernel".into()));
    }
    check_distribution(stationary, kernel.states())?;
    if start.k() != kernel.k() || start.len() != kernel.n() {
        return Err(Error::LengthMismatch { expected: kernel.n(), got: start.len() });
    }
    let mut mu = vec![0.0; kernel.states()];
    mu[start.index()] = 1.0;
    let tv = |mu: &[f64]| 0.5 * mu.iter().zip(stationary).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(tv(&mu));
    for _ in 0..steps {
        mu = kernel.left_apply(&mu);
        out.push(tv(&mu));
    }
    Ok(out)
}

/// How a Monte Carlo comparison draws from the process.
pub enum Simulator<'a> {
    /// One step of a discrete chain.
    Step(Box<dyn Fn(&Coloring, &mut SimRng) -> Result<Coloring> + Sync + 'a>),
    /// First visible jump within a horizon (continuous time).
    FirstJump(Box<dyn Fn(&Coloring, f64, &mut SimRng) -> Result<FirstJump> + Sync + 'a>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEntry {
    pub from: String,
    pub to: String,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub passed: bool,
    pub kind: KernelKind,
    pub replicas_per_row: usize,
    /// Nominal per-entry sigma level requested.
    pub tol_sigma: f64,
    /// Bonferroni-corrected z threshold actually applied.
    pub threshold_z: f64,
    pub entries: Vec<McEntry>,
    pub max_abs_z: f64,
    /// Smallest expected count over nonzero entries is below [`MIN_EXPECTED_COUNT`].
    pub underpowered: bool,
    pub min_expected_count: f64,
    pub notes: Vec<String>,
}

impl McReport {
    pub fn to_check(&self) -> CheckReport {
        let worst = self
            .entries
            .iter()
            .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
            .filter(|e| e.z.abs() > self.threshold_z);
        CheckReport {
            name: "monte carlo".into(),
            passed: self.passed,
            max_deviation: self.max_abs_z,
            witness: worst.map(|e| Witness {
                states: vec![e.from.clone(), e.to.clone()],
                values: vec![e.estimate, e.exact],
                description: format!("z = {:.2} beyond {:.2}", e.z, self.threshold_z),
            }),
            notes: self.notes.clone(),
        }
    }
}

/// Below this expected count the normal approximation is not trusted.
pub const MIN_EXPECTED_COUNT: f64 = 10.0;

/// Replica chunks per row; each chunk is one rng stream.
const CHUNKS: usize = 64;

/// `z` level giving family-wise error `2(1 − Φ(tol_sigma))` across `entries` tests.
pub fn bonferroni_z(tol_sigma: f64, entries: usize) -> f64 {
    let normal = Normal::standard();
    let alpha = 2.0 * (1.0 - normal.cdf(tol_sigma));
    normal.inverse_cdf(1.0 - alpha / (2.0 * entries.max(1) as f64))
}

/// Compares empirical transitions (discrete) or first-jump rates
/// (continuous) out of each state in `starts` with the exact kernel.
///
/// Discrete: `replicas` single steps per start; `z = (p̂ − p)/sqrt(p(1−p)/N)`.
/// Continuous: `replicas` runs of horizon `h = 0.01/q(x)` per start, where
/// `q(x) = −Q(x, x)`; the rate estimate is `count / exposure` (the censored
/// exponential MLE, unbiased for the first jump) with `σ = sqrt(q/E)`.
///
/// Entries with exact value 0 fail on any observation.
pub fn compare_monte_carlo(
    kernel: &ExactKernel,
    starts: &[Coloring],
    simulator: &Simulator<'_>,
    replicas: usize,
    tol_sigma: f64,
    seed: u64,
) -> Result<McReport> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    match (kernel.kind(), simulator) {
        (KernelKind::Discrete, Simulator::Step(_)) | (KernelKind::Continuous, Simulator::FirstJump(_)) => {}
        _ => return Err(Error::InvalidParameter("simulator does not match the kernel kind".into())),
    }
    let s = kernel.states();
    let threshold_z = bonferroni_z(tol_sigma, starts.len() * s);
    let mut entries = Vec::new();
    let mut min_expected = f64::INFINITY;
    let mut passed = true;
    let mut max_abs_z = 0.0f64;
    let mut notes = Vec::new();

    for (row, x) in starts.iter().enumerate() {
        if x.k() != kernel.k() || x.len() != kernel.n() {
            return Err(Error::LengthMismatch { expected: kernel.n(), got: x.len() });
        }
        let a = x.index();
        let out_rate = -kernel.get(a, a);
        let horizon = if out_rate > 0.0 { 0.01 / out_rate } else { 1.0 };
        let chunk_results: Vec<Result<(Vec<u64>, f64)>> = (0..CHUNKS)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = stream(seed, (row * CHUNKS + chunk) as u64);
                let mine = replicas / CHUNKS + usize::from(chunk < replicas % CHUNKS);
                let mut counts = vec![0u64; s];
                let mut exposure = 0.0;
                for _ in 0..mine {
                    match simulator {
                        Simulator::Step(f) => counts[f(x, &mut rng)?.index()] += 1,
                        Simulator::FirstJump(f) => {
                            let jump = f(x, horizon, &mut rng)?;
                            exposure += jump.exposure;
                            if let Some(y) = jump.target {
                                counts[y.index()] += 1;
                            }
                        }
                    }
                }
                Ok((counts, exposure))
            })
            .collect();
        let mut counts = vec![0u64; s];
        let mut exposure = 0.0;
        for r in chunk_results {
            let (c, e) = r?;
            counts.iter_mut().zip(c).for_each(|(t, v)| *t += v);
            exposure += e;
        }

        for b in 0..s {
            let exact = kernel.get(a, b);
            let (estimate, std_error, expected) = match kernel.kind() {
                KernelKind::Discrete => {
                    let n = replicas as f64;
                    (counts[b] as f64 / n, (exact * (1.0 - exact) / n).sqrt(), exact * n)
                }
                KernelKind::Continuous => {
                    if a == b {
                        continue;
                    }
                    (counts[b] as f64 / exposure, (exact / exposure).sqrt(), exact * exposure)
                }
            };
            let z = if std_error > 0.0 {
                (estimate - exact) / std_error
            } else if estimate == exact {
                0.0
            } else {
                f64::INFINITY
            };
            if exact > 0.0 && std_error > 0.0 {
                min_expected = min_expected.min(expected);
            }
            max_abs_z = max_abs_z.max(z.abs());
            if z.abs() > threshold_z {
                passed = false;
            }
            entries.push(McEntry {
                from: x.to_string(),
                to: kernel.state(b).to_string(),
                exact,
                estimate,
                std_error,
                z,
            });
        }
        if kernel.kind() == KernelKind::Continuous {
            notes.push(format!("{x}: horizon {horizon:.3e}, exposure {exposure:.3e}"));
        }
    }
    let underpowered = min_expected.is_finite() && min_expected < MIN_EXPECTED_COUNT;
    if underpowered {
        passed = false;
        notes.push(format!(
            "underpowered: smallest expected count {min_expected:.2} below {MIN_EXPECTED_COUNT}; increase replicas"
        ));
    }
    Ok(McReport {
        passed,
        kind: kernel.kind(),
        replicas_per_row: replicas,
        tol_sigma,
        threshold_z,
        entries,
        max_abs_z,
        underpowered,
        min_expected_count: if min_expected.is_finite() { min_expected } else { 0.0 },
        notes,
    })
}
