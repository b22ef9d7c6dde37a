//! The continuous-time process `X*_{Σ,c}` restricted to `[n]`.
//!
//! Jumps come from a Poisson event loop with two kinds of events:
//!
//! * matrix events: atom `r` of `Σ` fires at rate `w_r(1 − Π_i S_{r,ii}^n)`,
//!   the rate of `μ_{S_r}`-maps that are not the identity on `[n]`; the map is
//!   drawn from `μ_{S_r}` conditioned on that. A Dirichlet product fires at
//!   its total mass and draws identity maps are discarded.
//! * flip events: each coordinate of color `i` flips to `i'` at rate `c_{ii'}`;
//!   clocks are aggregated by color class.
//!
//! A matrix event whose map fixes the current state is recorded but causes no
//! visible jump. Between matrix events the color frequencies follow the
//! deterministic flip flow `φ' = φG`, available in closed form.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::coloring::{cumulative, empirical_frequency, pick, Coloring};
use crate::coset::CosetMap;
use crate::discrete::{dirichlet_transition, product_probability};
use crate::error::{Error, Result};
use crate::frequency::FrequencyVector;
use crate::kernel::{ExactKernel, KernelKind};
use crate::matrix::StochMatrix;
use crate::measures::{sample_coset_map, sample_coset_map_non_identity, Atom, CharacteristicPair, MatrixMeasure};

/// Where matrix events come from at level `n`.
#[derive(Clone, Debug)]
pub enum MatrixSource {
    /// Atoms with their level-`n` rates `w(1 − Π S_ii^n)`.
    Atoms(Vec<(Atom, f64)>),
    /// A Dirichlet product firing at its total mass.
    Dirichlet { k: usize, alpha: f64, mass: f64 },
}

/// Event rates of the level-`n` process at a given state.
#[derive(Clone, Debug)]
pub struct RateTable {
    pub n: usize,
    pub source: MatrixSource,
    /// Flip rates by color class: entry `i·k + i'` is `c_{ii'}·#{j : x^j = i}`.
    pub type2: Vec<f64>,
    /// Upper bound on the rate dropped when truncating a countable `Σ`.
    pub discarded: f64,
    k: usize,
}

impl RateTable {
    /// Per-atom matrix-event rates (the single Dirichlet rate for a Dirichlet product).
    pub fn type1(&self) -> Vec<f64> {
        match &self.source {
            MatrixSource::Atoms(atoms) => atoms.iter().map(|(_, r)| *r).collect(),
            MatrixSource::Dirichlet { mass, .. } => vec![*mass],
        }
    }

    pub fn type1_total(&self) -> f64 {
        self.type1().iter().sum()
    }

    pub fn type2_total(&self) -> f64 {
        self.type2.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.type1_total() + self.type2_total()
    }

    /// Rate at which a coordinate currently colored `from` flips to `to` (1-based colors).
    pub fn coordinate_rate(&self, pair: &CharacteristicPair, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            pair.flips.get(from - 1, to - 1)
        }
    }

    fn refresh_type2(&mut self, pair: &CharacteristicPair, counts: &[usize]) {
        let k = self.k;
        for i in 0..k {
            for j in 0..k {
                self.type2[i * k + j] = if i == j { 0.0 } else { pair.flips.get(i, j) * counts[i] as f64 };
            }
        }
    }
}

fn matrix_source(sigma: &MatrixMeasure, n: usize) -> Result<(MatrixSource, f64)> {
    match sigma {
        MatrixMeasure::DirichletProduct { k, alpha, mass } => {
            Ok((MatrixSource::Dirichlet { k: *k, alpha: *alpha, mass: *mass }, 0.0))
        }
        _ => {
            let t = sigma.truncate(n)?;
            Ok((MatrixSource::Atoms(t.atoms), t.discarded_rate))
        }
    }
}

/// Rate table of `pair` at level `n` in state `current`.
pub fn level_rates(pair: &CharacteristicPair, n: usize, current: &Coloring) -> Result<RateTable> {
    pair.sigma.check_admissible()?;
    if current.k() != pair.k() {
        return Err(Error::ColorCountMismatch { left: pair.k(), right: current.k() });
    }
    if current.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: current.len() });
    }
    let (source, discarded) = matrix_source(&pair.sigma, n)?;
    let k = pair.k();
    let mut table = RateTable { n, source, type2: vec![0.0; k * k], discarded, k };
    table.refresh_type2(pair, &current.counts());
    Ok(table)
}

/// The exact level-`n` generator: off-diagonal
/// `Q_n(x, x') = Σ_r w_r Π_j S_r(x^j, x'^j) + c_{ii'}·1{x' flips one coordinate of x from i to i'}`.
pub fn exact_generator(pair: &CharacteristicPair, n: usize) -> Result<ExactKernel> {
    let k = pair.k();
    let matrix_rate: Box<dyn Fn(&Coloring, &Coloring) -> f64> = match &pair.sigma {
        MatrixMeasure::DirichletProduct { alpha, mass, .. } => {
            let (alpha, mass) = (*alpha, *mass);
            Box::new(move |x, y| mass * dirichlet_transition(x, y, alpha).expect("validated alpha"))
        }
        sigma => {
            let atoms = sigma.truncate(n)?.atoms;
            Box::new(move |x, y| atoms.iter().map(|(a, _)| a.weight * product_probability(&a.matrix, x, y)).sum())
        }
    };
    ExactKernel::from_fn(KernelKind::Continuous, k, n, |x, y| {
        let mut rate = matrix_rate(x, y);
        let mut diff = x.word().iter().zip(y.word()).filter(|(a, b)| a != b);
        if let (Some((&a, &b)), None) = (diff.next(), diff.next()) {
            rate += pair.flips.get(a as usize - 1, b as usize - 1);
        }
        rate
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A matrix event from atom `source` (0 for a Dirichlet product).
    Matrix {
        source: usize,
        matrix: StochMatrix,
        #[serde(skip)]
        map: Option<CosetMap>,
    },
    /// Coordinate `index` flipped from `from` to `to`.
    Flip { index: usize, from: usize, to: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    /// Whether the state changed.
    pub visible: bool,
    /// Hash of the state after the event (see [`state_hash`]).
    pub state_hash: u64,
    /// State after the event, when states are recorded.
    pub state: Option<Coloring>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSample {
    pub time: f64,
    pub frequency: FrequencyVector,
    pub state: Option<Coloring>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub matrix: usize,
    pub flip: usize,
    /// Matrix events that left the state unchanged.
    pub invisible: usize,
}

/// What [`simulate`] keeps.
#[derive(Clone, Debug, Default)]
pub struct TraceOptions {
    pub record_events: bool,
    /// Store the full state with each event and grid sample.
    pub record_states: bool,
    /// Store the sampled coset map with each matrix event.
    pub record_maps: bool,
    /// Increasing sample times in `[0, horizon]`.
    pub grid: Vec<f64>,
}

impl TraceOptions {
    pub fn full() -> Self {
        Self { record_events: true, record_states: true, record_maps: true, grid: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuousTrace {
    pub horizon: f64,
    pub initial: Coloring,
    pub events: Vec<EventRecord>,
    pub grid: Vec<GridSample>,
    pub counts: EventCounts,
    pub final_state: Coloring,
    /// Rate dropped by truncation of a countable `Σ` (bounds the simulation error).
    pub discarded_rate: f64,
}

impl ContinuousTrace {
    /// Matrix events as `(time, S)`, for driving [`frequency_flow`].
    pub fn matrix_jumps(&self) -> Vec<(f64, StochMatrix)> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Matrix { matrix, .. } => Some((e.time, matrix.clone())),
                EventKind::Flip { .. } => None,
            })
            .collect()
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_hash(j: usize, color: u8) -> u64 {
    mix((j as u64) << 8 | color as u64)
}

/// Additive position-color hash `Σ_j h(j, x^j) mod 2^64`; updated in O(1) per flip.
pub fn state_hash(x: &Coloring) -> u64 {
    x.word().iter().enumerate().fold(0u64, |acc, (j, &c)| acc.wrapping_add(cell_hash(j, c)))
}

/// Coordinates grouped by color with O(1) moves.
struct ColorIndex {
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl ColorIndex {
    fn new(x: &Coloring) -> Self {
        let mut members = vec![Vec::new(); x.k()];
        let mut slot = vec![0; x.len()];
        for (j, &c) in x.word().iter().enumerate() {
            let list = &mut members[c as usize - 1];
            slot[j] = list.len();
            list.push(j);
        }
        Self { members, slot }
    }

    fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    fn move_coordinate(&mut self, j: usize, from: usize, to: usize) {
        let s = self.slot[j];
        let list = &mut self.members[from];
        list.swap_remove(s);
        if let Some(&moved) = list.get(s) {
            self.slot[moved] = s;
        }
        self.slot[j] = self.members[to].len();
        self.members[to].push(j);
    }
}

/// Event handed to the observer of [`simulate_with`].
#[derive(Debug)]
pub struct EventView<'a> {
    pub time: f64,
    pub kind: &'a EventKind,
    pub visible: bool,
    pub state_hash: u64,
    pub state: &'a Coloring,
}

fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// The event loop. `on_grid(t, state)` is called for each grid time with the
/// state in force at that time; `on_event` sees each event after it is
/// applied and may stop the run early. Returns the final state, event counts
/// and the truncation bound.
pub fn simulate_with<R, G, E>(
    pair: &CharacteristicPair,
    x0: &Coloring,
    horizon: f64,
    grid: &[f64],
    record_maps: bool,
    rng: &mut R,
    mut on_grid: G,
    mut on_event: E,
) -> Result<(Coloring, EventCounts, f64)>
where
    R: Rng + ?Sized,
    G: FnMut(f64, &Coloring),
    E: FnMut(EventView<'_>) -> ControlFlow<()>,
{
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be a finite nonnegative time, got {horizon}")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|&g| g < 0.0 || g > horizon) {
        return Err(Error::InvalidParameter("grid must be increasing and within [0, horizon]".into()));
    }
    let n = x0.len();
    let k = pair.k();
    let mut rates = level_rates(pair, n, x0)?;
    let type1 = rates.type1();
    let type1_total: f64 = type1.iter().sum();
    let type1_cum = cumulative(&type1);

    let mut x = x0.clone();
    let mut index = ColorIndex::new(&x);
    let mut hash = state_hash(&x);
    let mut counts = EventCounts::default();
    let mut next_grid = 0;
    let mut t = 0.0;

    loop {
        let type2_total = rates.type2_total();
        let total = type1_total + type2_total;
        let t_next = if total > 0.0 { t + exp_time(total, rng) } else { f64::INFINITY };
        while next_grid < grid.len() && grid[next_grid] < t_next.min(f64::MAX) {
            if grid[next_grid] > horizon {
                break;
            }
            on_grid(grid[next_grid], &x);
            next_grid += 1;
        }
        if t_next > horizon {
            break;
        }
        t = t_next;

        let u = rng.random::<f64>() * total;
        let (kind, visible) = if u < type1_total {
            let source = pick(&type1_cum, u / type1_total);
            let (matrix, map) = match &rates.source {
                MatrixSource::Atoms(atoms) => {
                    let s = &atoms[source].0.matrix;
                    let (map, _) = sample_coset_map_non_identity(s, n, rng)?;
                    (s.clone(), map)
                }
                MatrixSource::Dirichlet { k, alpha, .. } => {
                    let s = crate::measures::sample_dirichlet_product(*k, alpha / *k as f64, rng);
                    let map = sample_coset_map(&s, n, rng);
                    if map.is_identity() {
                        // not an atom time of the restricted process
                        continue;
                    }
                    (s, map)
                }
            };
            let next = map.apply(&x)?;
            let visible = next != x;
            counts.matrix += 1;
            if visible {
                x = next;
                index = ColorIndex::new(&x);
                hash = state_hash(&x);
                rates.refresh_type2(pair, &index.counts());
            } else {
                counts.invisible += 1;
            }
            (EventKind::Matrix { source, matrix, map: record_maps.then_some(map) }, visible)
        } else {
            let class = pick(&cumulative(&rates.type2), (u - type1_total) / type2_total);
            let (from, to) = (class / k, class % k);
            let members = &index.members[from];
            let j = members[rng.random_range(0..members.len())];
            index.move_coordinate(j, from, to);
            x.set(j + 1, to + 1);
            hash = hash.wrapping_sub(cell_hash(j, from as u8 + 1)).wrapping_add(cell_hash(j, to as u8 + 1));
            rates.refresh_type2(pair, &index.counts());
            counts.flip += 1;
            (EventKind::Flip { index: j + 1, from: from + 1, to: to + 1 }, true)
        };
        if on_event(EventView { time: t, kind: &kind, visible, state_hash: hash, state: &x }).is_break() {
            break;
        }
    }
    Ok((x, counts, rates.discarded))
}

/// Simulates `X*_{Σ,c}` on `[n]` (`n = x0.len()`) over `[0, horizon]`.
pub fn simulate<R: Rng + ?Sized>(
    pair: &CharacteristicPair,
    x0: &Coloring,
    horizon: f64,
    options: &TraceOptions,
    rng: &mut R,
) -> Result<ContinuousTrace> {
    let mut events = Vec::new();
    let mut samples = Vec::new();
    let mut grid_err = None;
    let (final_state, counts, discarded_rate) = simulate_with(
        pair,
        x0,
        horizon,
        &options.grid,
        options.record_maps,
        rng,
        |time, x| match empirical_frequency(x) {
            Ok(frequency) => samples.push(GridSample {
                time,
                frequency,
                state: options.record_states.then(|| x.clone()),
            }),
            Err(e) => grid_err = Some(e),
        },
        |ev| {
            if options.record_events {
                events.push(EventRecord {
                    time: ev.time,
                    kind: ev.kind.clone(),
                    visible: ev.visible,
                    state_hash: ev.state_hash,
                    state: options.record_states.then(|| ev.state.clone()),
                });
            }
            ControlFlow::Continue(())
        },
    )?;
    if let Some(e) = grid_err {
        return Err(e);
    }
    Ok(ContinuousTrace { horizon, initial: x0.clone(), events, grid: samples, counts, final_state, discarded_rate })
}

/// First visible jump from `x0` within `horizon`: the state jumped to (if
/// any) and the time spent in `x0` (the exposure).
#[derive(Clone, Debug, PartialEq)]
pub struct FirstJump {
    pub target: Option<Coloring>,
    pub exposure: f64,
}

pub fn first_jump<R: Rng + ?Sized>(pair: &CharacteristicPair, x0: &Coloring, horizon: f64, rng: &mut R) -> Result<FirstJump> {
    let mut hit = None;
    simulate_with(pair, x0, horizon, &[], false, rng, |_, _| {}, |ev| {
        if ev.visible {
            hit = Some((ev.time, ev.state.clone()));
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(match hit {
        Some((time, state)) => FirstJump { target: Some(state), exposure: time },
        None => FirstJump { target: None, exposure: horizon },
    })
}

/// `exp(tG)` for the flip generator `G`: the law at time `t` of one coordinate's color.
pub fn flip_transition(pair: &CharacteristicPair, t: f64) -> Result<StochMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
    }
    let k = pair.k();
    let g = pair.flips.generator();
    let m = DMatrix::from_fn(k, k, |i, j| g[i][j] * t);
    let e = m.exp();
    let mut data = Vec::with_capacity(k * k);
    for i in 0..k {
        let row: Vec<f64> = (0..k).map(|j| e[(i, j)].max(0.0)).collect();
        let sum: f64 = row.iter().sum();
        data.extend(row.into_iter().map(|v| v / sum));
    }
    StochMatrix::from_row_major(k, data)
}

/// The frequency process: between matrix jumps `φ` follows `φ' = φG`; at a
/// matrix jump `(τ, S)`, `φ ← φS`. Returns `φ` at each time in `times`.
pub fn frequency_flow(
    pair: &CharacteristicPair,
    phi0: &FrequencyVector,
    times: &[f64],
    jumps: &[(f64, StochMatrix)],
) -> Result<Vec<FrequencyVector>> {
    if phi0.len() != pair.k() {
        return Err(Error::ColorCountMismatch { left: pair.k(), right: phi0.len() });
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("times must be increasing and nonnegative".into()));
    }
    if jumps.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::InvalidParameter("jump times must be increasing".into()));
    }
    let normalize = |v: Vec<f64>| -> Result<FrequencyVector> {
        let v: Vec<f64> = v.into_iter().map(|e| e.max(0.0)).collect();
        let s: f64 = v.iter().sum();
        FrequencyVector::exact(v.into_iter().map(|e| e / s).collect())
    };
    let mut phi = FrequencyVector::exact(phi0.entries().to_vec())?;
    let mut now = 0.0;
    let mut next_jump = 0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        while next_jump < jumps.len() && jumps[next_jump].0 <= t {
            let (tau, s) = &jumps[next_jump];
            let flowed = flip_transition(pair, tau - now)?.left_apply(phi.entries())?;
            phi = normalize(s.left_apply(&flowed)?)?;
            now = *tau;
            next_jump += 1;
        }
        let flowed = flip_transition(pair, t - now)?.left_apply(phi.entries())?;
        out.push(normalize(flowed)?);
    }
    Ok(out)
}

/// Matrix jumps of the frequency process over `[0, horizon]`: a Poisson
/// stream at the total mass of `Σ`, each jump `S ~ Σ/‖Σ‖`.
pub fn sample_frequency_jumps<R: Rng + ?Sized>(
    pair: &CharacteristicPair,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<(f64, StochMatrix)>> {
    if pair.sigma.is_zero() {
        return Ok(Vec::new());
    }
    let mass = pair
        .sigma
        .total_mass()
        .ok_or_else(|| Error::Inadmissible("frequency jumps need a finite-mass Σ".into()))?;
    let mut jumps = Vec::new();
    let mut t = exp_time(mass, rng);
    while t <= horizon {
        jumps.push((t, pair.sigma.sample_matrix(rng)?));
        t += exp_time(mass, rng);
    }
    Ok(jumps)
}
