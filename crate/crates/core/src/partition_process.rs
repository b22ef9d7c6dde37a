//! Homogeneous cut-and-paste processes on partitions with at most `k` blocks.
//!
//! When `Σ` is row–column exchangeable and all flip rates equal one constant
//! `c`, the projection `B(X)` of the coloring process is itself Markov. The
//! partition process is simulated by running the coloring process from a
//! symmetric associate of the initial partition and projecting.

use std::ops::ControlFlow;

use rand::Rng;
use serde::Serialize;

use crate::coloring::{enumerate, Coloring};
use crate::continuous::{exact_generator, simulate_with};
use crate::coset::CosetMap;
use crate::error::{Error, Result};
use crate::kernel::{ExactKernel, KernelKind};
use crate::measures::{CharacteristicPair, FlipRates, MatrixMeasure};
use crate::partition::{enumerate_partitions, falling_factorial, project_to_partition, symmetric_associate, Partition};

/// Tolerance used when certifying homogeneity.
pub const HOMOGENEITY_TOL: f64 = 1e-12;

/// A characteristic pair that treats the colors symmetrically.
#[derive(Clone, Debug)]
pub struct HomogeneousPair {
    pair: CharacteristicPair,
    c: f64,
}

impl HomogeneousPair {
    pub fn new(sigma: MatrixMeasure, c: f64) -> Result<Self> {
        let flips = FlipRates::homogeneous(sigma.k(), c)?;
        Self::from_pair(CharacteristicPair::new(sigma, flips)?)
    }

    /// Certifies `pair`, naming the first violated symmetry otherwise.
    pub fn from_pair(pair: CharacteristicPair) -> Result<Self> {
        let report = pair.sigma.is_row_column_exchangeable(HOMOGENEITY_TOL);
        if !report.exchangeable {
            let detail = match report.witness {
                Some(w) => format!(
                    "Σ is not row-column exchangeable: under row permutation {:?} and column permutation {:?}, \
                     the matrix {} has weight {} but its image {} has weight {}",
                    w.row_permutation,
                    w.column_permutation,
                    w.matrix.row_major().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                    w.weight_before,
                    w.image.row_major().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                    w.weight_after
                ),
                None => format!("Σ is not row-column exchangeable ({})", report.note.unwrap_or_default()),
            };
            return Err(Error::NotHomogeneous(detail));
        }
        if let Some(((i, j), (a, b))) = pair.flips.inhomogeneity(HOMOGENEITY_TOL) {
            return Err(Error::NotHomogeneous(format!(
                "flip rates are not constant: c_{i}{j} = {} but c_{a}{b} = {}",
                pair.flips.get(i - 1, j - 1),
                pair.flips.get(a - 1, b - 1)
            )));
        }
        let c = if pair.k() > 1 { pair.flips.get(0, 1) } else { 0.0 };
        Ok(Self { pair, c })
    }

    pub fn pair(&self) -> &CharacteristicPair {
        &self.pair
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k(&self) -> usize {
        self.pair.k()
    }
}

/// `CP(M, π) = B(M(x̃))` for a symmetric associate `x̃` of `π`.
pub fn cp_operator<R: Rng + ?Sized>(m: &CosetMap, pi: &Partition, rng: &mut R) -> Result<Partition> {
    if m.k() != pi.k() {
        return Err(Error::ColorCountMismatch { left: m.k(), right: pi.k() });
    }
    let x = symmetric_associate(pi, rng)?;
    Ok(project_to_partition(&m.apply(&x)?))
}

/// A kernel or generator on partitions of `[n]` with at most `k` blocks,
/// indexed by [`enumerate_partitions`] order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionKernel {
    pub kind: KernelKind,
    pub k: usize,
    pub n: usize,
    pub states: Vec<Partition>,
    /// Row-major `states × states`.
    pub matrix: Vec<f64>,
}

impl PartitionKernel {
    /// Wraps an arbitrary table (e.g. a hand-built rate table).
    pub fn from_table(kind: KernelKind, k: usize, n: usize, matrix: Vec<f64>) -> Result<Self> {
        let states = enumerate_partitions(n, k);
        if matrix.len() != states.len() * states.len() {
            return Err(Error::InvalidParameter(format!("expected a {0}x{0} table", states.len())));
        }
        Ok(Self { kind, k, n, states, matrix })
    }

    pub fn index(&self, pi: &Partition) -> Option<usize> {
        self.states.iter().position(|s| s == pi)
    }

    pub fn get(&self, pi: &Partition, pi2: &Partition) -> Result<f64> {
        let s = self.states.len();
        let a = self.index(pi).ok_or_else(|| Error::InvalidPartition(format!("{pi} not in the state space")))?;
        let b = self.index(pi2).ok_or_else(|| Error::InvalidPartition(format!("{pi2} not in the state space")))?;
        Ok(self.matrix[a * s + b])
    }
}

/// Pushforward of a coloring kernel along `B`:
/// `Q(π, π') = Σ_{x' : B(x') = π'} Q(x, x')` for any `x` with `B(x) = π`.
/// Fails unless the sum is the same for every representative `x` (within `tol`).
pub fn pushforward(kernel: &ExactKernel, tol: f64) -> Result<PartitionKernel> {
    let (k, n) = (kernel.k(), kernel.n());
    let states = enumerate_partitions(n, k);
    let s = states.len();
    let colorings: Vec<Coloring> = enumerate(k, n).collect();
    let class: Vec<usize> = colorings
        .iter()
        .map(|x| states.iter().position(|p| *p == project_to_partition(x)).expect("enumerated"))
        .collect();
    let mut matrix: Vec<Option<f64>> = vec![None; s * s];
    for (a, &ca) in class.iter().enumerate() {
        let mut sums = vec![0.0; s];
        for (b, &cb) in class.iter().enumerate() {
            sums[cb] += kernel.get(a, b);
        }
        for (cb, v) in sums.into_iter().enumerate() {
            let slot = &mut matrix[ca * s + cb];
            match slot {
                None => *slot = Some(v),
                Some(prev) if (*prev - v).abs() > tol => {
                    return Err(Error::NotHomogeneous(format!(
                        "projection is not Markov: rate from {} into {} is {} from one representative and {} from {}",
                        states[ca], states[cb], prev, v, colorings[a]
                    )));
                }
                Some(_) => {}
            }
        }
    }
    Ok(PartitionKernel { kind: kernel.kind(), k, n, states, matrix: matrix.into_iter().map(|v| v.unwrap_or(0.0)).collect() })
}

/// The partition-level generator of a homogeneous pair at level `n`.
pub fn partition_generator(pair: &HomogeneousPair, n: usize) -> Result<PartitionKernel> {
    pushforward(&exact_generator(pair.pair(), n)?, 1e-10)
}

/// `Q̃(x, x') = Q(B(x), B(x')) / k↓#B(x')`: the coloring-level rate between
/// symmetric representatives.
pub fn symmetric_rate(pi: &Partition, pi2: &Partition, q: &PartitionKernel) -> Result<f64> {
    if pi == pi2 {
        return Err(Error::DiagonalRate);
    }
    let blocks = pi2.block_count();
    if blocks > q.k || pi.block_count() > q.k {
        return Err(Error::TooManyBlocks { blocks: blocks.max(pi.block_count()), k: q.k });
    }
    Ok(q.get(pi, pi2)? / falling_factorial(q.k, blocks) as f64)
}

/// Ranked block frequencies in the ranked simplex, padded with zeros to length `k`.
pub trait Ranked {
    fn ranked_frequency(&self) -> Vec<f64>;
}

fn ranked_from_sizes(mut sizes: Vec<usize>, n: usize, k: usize) -> Vec<f64> {
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.resize(k.max(sizes.len()), 0);
    sizes.into_iter().map(|s| if n == 0 { 0.0 } else { s as f64 / n as f64 }).collect()
}

impl Ranked for Partition {
    fn ranked_frequency(&self) -> Vec<f64> {
        ranked_from_sizes(self.block_sizes(), self.n(), self.k())
    }
}

impl Ranked for Coloring {
    fn ranked_frequency(&self) -> Vec<f64> {
        ranked_from_sizes(self.counts().into_iter().filter(|&c| c > 0).collect(), self.len(), self.k())
    }
}

/// Ranked frequencies along a trace of partitions or colorings.
pub fn ranked_frequency<T: Ranked>(trace: &[T]) -> Vec<Vec<f64>> {
    trace.iter().map(Ranked::ranked_frequency).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionJump {
    pub time: f64,
    pub partition: Partition,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionSample {
    pub time: f64,
    pub partition: Partition,
    pub ranked: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionTrace {
    pub horizon: f64,
    pub initial: Partition,
    /// The symmetric associate the coloring process started from.
    pub associate: Coloring,
    /// Times at which the partition changed, with the new partition.
    pub jumps: Vec<PartitionJump>,
    pub grid: Vec<PartitionSample>,
    pub final_partition: Partition,
}

impl PartitionTrace {
    /// Time spent in each visited partition over `[0, horizon]`.
    pub fn occupation_times(&self) -> Vec<(Partition, f64)> {
        let mut out: Vec<(Partition, f64)> = Vec::new();
        let mut current = &self.initial;
        let mut since = 0.0;
        let add = |p: &Partition, dt: f64, out: &mut Vec<(Partition, f64)>| match out.iter_mut().find(|(q, _)| q == p) {
            Some(e) => e.1 += dt,
            None => out.push((p.clone(), dt)),
        };
        for jump in &self.jumps {
            add(current, jump.time - since, &mut out);
            current = &jump.partition;
            since = jump.time;
        }
        add(current, self.horizon - since, &mut out);
        out
    }
}

/// Simulates `B(X*_{Σ,c})` from `pi0` over `[0, horizon]`, sampling the
/// partition at each `grid` time.
pub fn simulate_partition<R: Rng + ?Sized>(
    pair: &HomogeneousPair,
    pi0: &Partition,
    horizon: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<PartitionTrace> {
    if pi0.k() != pair.k() {
        return Err(Error::ColorCountMismatch { left: pair.k(), right: pi0.k() });
    }
    let associate = symmetric_associate(pi0, rng)?;
    let mut current = pi0.clone();
    let mut jumps = Vec::new();
    let mut samples = Vec::new();
    let (last, _, _) = simulate_with(
        pair.pair(),
        &associate,
        horizon,
        grid,
        false,
        rng,
        |time, x| {
            let partition = project_to_partition(x);
            samples.push(PartitionSample { time, ranked: partition.ranked_frequency(), partition });
        },
        |ev| {
            if ev.visible {
                let p = project_to_partition(ev.state);
                if p != current {
                    current = p.clone();
                    jumps.push(PartitionJump { time: ev.time, partition: p });
                }
            }
            ControlFlow::Continue(())
        },
    )?;
    Ok(PartitionTrace {
        horizon,
        initial: pi0.clone(),
        associate,
        jumps,
        grid: samples,
        final_partition: project_to_partition(&last),
    })
}
