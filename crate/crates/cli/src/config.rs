use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use cutpaste::measures::CountableAtomic;
use cutpaste::rational::BigRational;
use cutpaste::{CharacteristicPair, Coloring, FlipRates, MatrixMeasure, Partition, StochMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SimulateDiscrete,
    SimulateContinuous,
    SimulatePartition,
    Exact,
    Verify,
    Mixing,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SimulateDiscrete => "simulate-discrete",
            Mode::SimulateContinuous => "simulate-continuous",
            Mode::SimulatePartition => "simulate-partition",
            Mode::Exact => "exact",
            Mode::Verify => "verify",
            Mode::Mixing => "mixing",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub k: usize,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: u64,
    /// Steps of the discrete chain.
    #[serde(default)]
    pub steps: usize,
    /// Time horizon of continuous runs.
    #[serde(default)]
    pub horizon: f64,
    /// Number of evenly spaced sample times in `[0, horizon]` (both ends included).
    #[serde(default)]
    pub grid_points: usize,
    /// Initial state: a color word, a partition in block syntax, `"uniform"` or `"constant"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub flips: FlipConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub mixing: MixingConfig,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaConfig {
    #[default]
    Empty,
    Dirichlet {
        alpha: f64,
        #[serde(default = "unit_mass")]
        mass: f64,
        /// Exact `α` as `"p/q"` for rational-mode computations.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rational_alpha: Option<String>,
    },
    Atoms {
        atoms: Vec<AtomConfig>,
    },
    ZeroOne {
        atoms: Vec<AtomConfig>,
    },
    /// Atoms `(1 − ε_r) I + ε_r B` with `ε_r = eps0·ratio^r` and weight `weight0·growth^r`.
    Geometric {
        base: Vec<f64>,
        eps0: f64,
        ratio: f64,
        weight0: f64,
        growth: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
}

fn unit_mass() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub weight: f64,
    /// Row-major `k × k` entries.
    pub matrix: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipConfig {
    /// One rate for every `i ≠ i'`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Full `k × k` table; the diagonal is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    /// Store full states in traces; defaults to `n ≤ 256`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_states: Option<bool>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { out_dir: default_out_dir(), format: Format::Csv, record_states: None }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    #[serde(default)]
    pub kernel: KernelChoice,
    /// Exact fractions (Dirichlet product with `rational_alpha`, discrete kernel only).
    #[serde(default)]
    pub rational: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyKernel {
    #[default]
    Pair,
    Ehrenfest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationChoice {
    #[default]
    Adjacent,
    All,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub kernel: VerifyKernel,
    /// Levels `n` at which kernels are built; consistency is checked between consecutive levels.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub permutations: PermutationChoice,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Single steps per start state for a Monte Carlo comparison at the smallest level (0 = skip).
    #[serde(default)]
    pub monte_carlo_replicas: usize,
    #[serde(default = "default_sigma")]
    pub tol_sigma: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            kernel: VerifyKernel::Pair,
            levels: default_levels(),
            permutations: PermutationChoice::Adjacent,
            tol: default_tol(),
            monte_carlo_replicas: 0,
            tol_sigma: default_sigma(),
        }
    }
}

fn default_levels() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_tol() -> f64 {
    1e-10
}

fn default_sigma() -> f64 {
    4.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    #[serde(default = "default_mixing_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self { steps: default_mixing_steps(), start: None }
    }
}

fn default_mixing_steps() -> usize {
    50
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A usage problem; reported with exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, mode: Mode, o: &Overrides) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(usage(format!("mode: config declares {} but the command is {}", m.name(), mode.name())));
            }
        }
        self.mode = Some(mode);
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.replicas {
            self.replicas = r;
        }
        if let Some(d) = &o.out_dir {
            self.output.out_dir = d.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > cutpaste::coloring::MAX_COLORS {
            return Err(usage(format!("k: must be between 1 and {}, got {}", cutpaste::coloring::MAX_COLORS, self.k)));
        }
        if self.seed > i64::MAX as u64 {
            return Err(usage("seed: must be below 2^63"));
        }
        if self.replicas == 0 {
            return Err(usage("replicas: must be at least 1"));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(usage(format!("horizon: must be finite and nonnegative, got {}", self.horizon)));
        }
        if self.grid_points == 1 {
            return Err(usage("grid_points: use 0 (no grid) or at least 2"));
        }
        if self.flips.c.is_some() && self.flips.table.is_some() {
            return Err(usage("flips: give either c or table, not both"));
        }
        if self.verify.levels.is_empty() || self.verify.levels.contains(&0) {
            return Err(usage("verify.levels: need at least one level, all ≥ 1"));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config in canonical TOML form. Output
    /// location and format do not enter the digest.
    pub fn digest(&self) -> String {
        let mut resolved = self.clone();
        resolved.output = OutputConfig::default();
        let canonical = toml::to_string(&resolved).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    pub fn mode(&self) -> Mode {
        self.mode.expect("mode set by apply")
    }

    pub fn record_states(&self) -> bool {
        self.output.record_states.unwrap_or(self.n <= 256)
    }

    pub fn grid(&self) -> Vec<f64> {
        match self.grid_points {
            0 => Vec::new(),
            p => (0..p).map(|i| self.horizon * i as f64 / (p - 1) as f64).collect(),
        }
    }

    fn matrix(&self, field: &str, entries: &[f64]) -> Result<StochMatrix> {
        if entries.len() != self.k * self.k {
            return Err(usage(format!("{field}: expected {} entries (k×k row-major), got {}", self.k * self.k, entries.len())));
        }
        StochMatrix::from_row_major(self.k, entries.to_vec()).map_err(|e| usage(format!("{field}: {e}")))
    }

    /// The declared `Σ`. Admissibility is checked separately, by [`Self::pair`].
    pub fn sigma(&self) -> Result<MatrixMeasure> {
        let k = self.k;
        let atoms = |atoms: &[AtomConfig]| -> Result<Vec<(StochMatrix, f64)>> {
            atoms
                .iter()
                .enumerate()
                .map(|(i, a)| Ok((self.matrix(&format!("sigma.atoms[{i}].matrix"), &a.matrix)?, a.weight)))
                .collect()
        };
        let wrap = |field: &str, r: cutpaste::Result<MatrixMeasure>| r.map_err(|e| tag_measure_error(field, e));
        match &self.sigma {
            SigmaConfig::Empty => Ok(MatrixMeasure::empty(k)),
            SigmaConfig::Dirichlet { alpha, mass, .. } => wrap("sigma", MatrixMeasure::dirichlet_product(k, *alpha, *mass)),
            SigmaConfig::Atoms { atoms: a } if a.is_empty() => Ok(MatrixMeasure::empty(k)),
            SigmaConfig::Atoms { atoms: a } => wrap("sigma.atoms", MatrixMeasure::finite_atomic(atoms(a)?)),
            SigmaConfig::ZeroOne { atoms: a } => wrap("sigma.atoms", MatrixMeasure::zero_one(atoms(a)?)),
            SigmaConfig::Geometric { base, eps0, ratio, weight0, growth, tolerance } => {
                let base = self.matrix("sigma.base", base)?;
                let family = CountableAtomic::geometric(base, *eps0, *ratio, *weight0, *growth, *tolerance)
                    .map_err(|e| tag_measure_error("sigma", e))?;
                Ok(MatrixMeasure::CountableAtomic(family))
            }
        }
    }

    pub fn flip_rates(&self) -> Result<FlipRates> {
        let r = match (&self.flips.c, &self.flips.table) {
            (Some(c), None) => FlipRates::homogeneous(self.k, *c),
            (None, Some(t)) => {
                if t.len() != self.k || t.iter().any(|row| row.len() != self.k) {
                    return Err(usage(format!("flips.table: expected a {0}×{0} table", self.k)));
                }
                FlipRates::new(t.clone())
            }
            _ => Ok(FlipRates::zero(self.k)),
        };
        r.map_err(|e| usage(format!("flips: {e}")))
    }

    /// `(Σ, c)` after the admissibility check.
    pub fn pair(&self) -> Result<CharacteristicPair> {
        let sigma = self.sigma()?;
        let flips = self.flip_rates()?;
        CharacteristicPair::new(sigma, flips).map_err(|e| tag_measure_error("sigma", e))
    }

    fn parse_coloring(&self, field: &str, text: &str, n: usize) -> Result<Coloring> {
        let x = Coloring::parse(self.k, text).map_err(|e| usage(format!("{field}: {e}")))?;
        if x.len() != n {
            bail!(UsageError(format!("{field}: coloring has length {} but n = {n}", x.len())));
        }
        Ok(x)
    }

    /// Initial coloring for replica `rng`.
    pub fn initial_coloring(&self, rng: &mut cutpaste::rng::SimRng) -> Result<Coloring> {
        match self.initial.as_deref() {
            None | Some("constant") => Ok(Coloring::constant(self.k, self.n, 1)?),
            Some("uniform") => Ok(Coloring::uniform(self.k, self.n, rng)?),
            Some(text) => self.parse_coloring("initial", text, self.n),
        }
    }

    pub fn initial_partition(&self) -> Result<Partition> {
        match self.initial.as_deref() {
            None | Some("constant") => Ok(Partition::one_block(self.k, self.n)?),
            Some(text) => {
                let pi = Partition::parse(self.k, text).map_err(|e| usage(format!("initial: {e}")))?;
                if pi.n() != self.n {
                    bail!(UsageError(format!("initial: partition of [{}] but n = {}", pi.n(), self.n)));
                }
                Ok(pi)
            }
        }
    }

    pub fn mixing_start(&self, n: usize) -> Result<Coloring> {
        match self.mixing.start.as_deref() {
            None => Ok(Coloring::constant(self.k, n, 1)?),
            Some(text) => self.parse_coloring("mixing.start", text, n),
        }
    }

    pub fn rational_alpha(&self) -> Result<Option<BigRational>> {
        match &self.sigma {
            SigmaConfig::Dirichlet { rational_alpha: Some(text), alpha, .. } => {
                let r = cutpaste::rational::parse_rational(text).map_err(|e| usage(format!("sigma.rational_alpha: {e}")))?;
                let approx = cutpaste::rational::to_f64(&r);
                if (approx - alpha).abs() > 1e-12 * alpha.abs().max(1.0) {
                    bail!(UsageError(format!("sigma.rational_alpha: {text} does not match alpha = {alpha}")));
                }
                Ok(Some(r))
            }
            _ => Ok(None),
        }
    }
}

/// Measure errors: inadmissibility keeps its own exit status, everything else is a usage error.
fn tag_measure_error(field: &str, e: cutpaste::Error) -> anyhow::Error {
    match e {
        cutpaste::Error::Inadmissible(_) | cutpaste::Error::ChargesIdentity => anyhow!(e),
        other => usage(format!("{field}: {other}")),
    }
}
