//! Exchangeable cut-and-paste Markov processes on k-colorings of `[n]` and on
//! partitions with at most `k` blocks.
//!
//! The crate works on explicit finite restrictions. Its layers:
//!
//! - [`coloring`], [`partition`], [`frequency`], [`sequence`]: colorings,
//!   bounded-block partitions, simplex points and sequence-array ingestion.
//! - [`coset`], [`matrix`]: coset maps acting on colorings and their
//!   stochastic-matrix frequencies.
//! - [`measures`]: measures `Σ` on stochastic matrices, the coset-map laws
//!   `μ_S`, flip rates and characteristic pairs `(Σ, c)`.
//! - [`discrete`]: the discrete-time chain, its frequency chain and the
//!   Dirichlet-product closed forms ([`rational`] has the exact-arithmetic path).
//! - [`continuous`]: the continuous-time process as a Poisson event loop and
//!   its frequency flow.
//! - [`partition_process`]: homogeneous processes projected to partitions.
//! - [`oracle`]: brute-force checks on small state spaces.

pub mod coloring;
pub mod continuous;
pub mod coset;
pub mod discrete;
pub mod error;
pub mod frequency;
pub mod kernel;
pub mod matrix;
pub mod measures;
pub mod oracle;
pub mod partition;
pub mod partition_process;
pub mod rational;
pub mod rng;
pub mod sequence;

pub use coloring::{distance, empirical_frequency, Coloring, Permutation};
pub use coset::{CosetMap, SingleFlip};
pub use error::{Error, Result};
pub use frequency::{FrequencyKind, FrequencyVector};
pub use kernel::{ExactKernel, KernelKind};
pub use matrix::StochMatrix;
pub use measures::{CharacteristicPair, CountableAtomic, FlipRates, MatrixMeasure};
pub use partition::{project_to_partition, symmetric_associate, Partition};
