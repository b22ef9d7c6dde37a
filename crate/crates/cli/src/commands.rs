use std::ops::ControlFlow;

use anyhow::{anyhow, Result};
use cutpaste::continuous::{simulate_with, EventKind};
use cutpaste::discrete::{dirichlet_stationary, exact_transition_matrix, run_chain_with, step};
use cutpaste::kernel::ExactKernel;
use cutpaste::oracle::{
    check_consistent, check_detailed_balance, check_exchangeable, check_stationary, compare_monte_carlo,
    ehrenfest_kernel, mixing_profile, CheckReport, PermutationSet, Simulator,
};
use cutpaste::partition_process::{simulate_partition, HomogeneousPair};
use cutpaste::rng::{par_replicas, seeded};
use cutpaste::{empirical_frequency, CharacteristicPair, Coloring, MatrixMeasure};
use serde::Serialize;

use crate::config::{KernelChoice, PermutationChoice, RunConfig, SigmaConfig, UsageError, VerifyKernel};
use crate::output::{fmt_f64, Table, Writer};

/// What a command reports back to `main`.
pub enum Status {
    Ok,
    VerificationFailed,
}

fn indexed(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}_{i}")).collect()
}

fn floats(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| fmt_f64(x)).collect()
}

/// `(Σ, c)` after admissibility; an inadmissible `Σ` carries its regularity report.
pub fn load_pair(config: &RunConfig) -> Result<CharacteristicPair> {
    config.pair().map_err(|e| match e.downcast_ref::<cutpaste::Error>() {
        Some(cutpaste::Error::Inadmissible(_)) => {
            let report = config
                .sigma()
                .ok()
                .and_then(|s| s.regularity_integral(10_000, &mut seeded(config.seed)).ok())
                .map(|r| serde_json::to_string(&r).unwrap_or_default())
                .unwrap_or_else(|| "unavailable".into());
            e.context(format!("regularity report: {report}"))
        }
        _ => e,
    })
}

pub fn simulate_discrete(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let pair = load_pair(config)?;
    let k = config.k;
    let record = config.record_states();
    let mut columns = vec!["replica".to_string(), "step".to_string()];
    if record {
        columns.push("state".into());
    }
    columns.extend(indexed("freq", k));
    columns.extend(indexed("phi", k));
    columns.extend((1..=k).flat_map(|i| (1..=k).map(move |j| format!("s_{i}_{j}"))));

    let runs = par_replicas(config.seed, config.replicas, |r, rng| -> Result<Vec<Vec<String>>> {
        let x0 = config.initial_coloring(rng)?;
        let phi0 = empirical_frequency(&x0)?;
        let phi0 = cutpaste::FrequencyVector::exact(phi0.entries().to_vec())?;
        let mut rows = Vec::with_capacity(config.steps + 1);
        let mut err = None;
        run_chain_with(&x0, &phi0, &pair.sigma, config.steps, rng, |m, x, s, phi| {
            let mut row = vec![r.to_string(), m.to_string()];
            if record {
                row.push(x.to_string());
            }
            match empirical_frequency(x) {
                Ok(f) => row.extend(floats(f.entries())),
                Err(e) => err = Some(e),
            }
            row.extend(floats(phi.entries()));
            match s {
                Some(s) => row.extend(floats(s.row_major())),
                None => row.extend(std::iter::repeat_n(String::new(), k * k)),
            }
            rows.push(row);
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        Ok(rows)
    });
    let mut table = Table::new(columns);
    for rows in runs {
        for row in rows? {
            table.push(row);
        }
    }
    out.table("trace", &table)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ReplicaSummary {
    replica: u64,
    matrix_events: usize,
    flip_events: usize,
    invisible_events: usize,
    discarded_rate: f64,
    final_state: Option<String>,
}

#[derive(Serialize)]
struct Summary {
    sigma: String,
    replicas: Vec<ReplicaSummary>,
}

pub fn simulate_continuous(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let pair = load_pair(config)?;
    let k = config.k;
    let record = config.record_states();
    let grid = config.grid();

    let mut event_cols: Vec<String> =
        ["replica", "time", "kind", "source", "index", "from", "to", "visible", "state_hash"].map(String::from).to_vec();
    let mut grid_cols = vec!["replica".to_string(), "time".to_string()];
    grid_cols.extend(indexed("freq", k));
    if record {
        event_cols.push("state".into());
        grid_cols.push("state".into());
    }

    type Rows = (Vec<Vec<String>>, Vec<Vec<String>>, ReplicaSummary);
    let runs = par_replicas(config.seed, config.replicas, |r, rng| -> Result<Rows> {
        let x0 = config.initial_coloring(rng)?;
        let mut events = Vec::new();
        let mut samples = Vec::new();
        let (last, counts, discarded) = simulate_with(
            &pair,
            &x0,
            config.horizon,
            &grid,
            false,
            rng,
            |t, x| {
                let mut row = vec![r.to_string(), fmt_f64(t)];
                row.extend(floats(empirical_frequency(x).expect("nonempty").entries()));
                if record {
                    row.push(x.to_string());
                }
                samples.push(row);
            },
            |ev| {
                let (kind, source, index, from, to) = match ev.kind {
                    EventKind::Matrix { source, .. } => ("matrix", source.to_string(), String::new(), String::new(), String::new()),
                    EventKind::Flip { index, from, to } => {
                        ("flip", String::new(), index.to_string(), from.to_string(), to.to_string())
                    }
                };
                let mut row = vec![
                    r.to_string(),
                    fmt_f64(ev.time),
                    kind.into(),
                    source,
                    index,
                    from,
                    to,
                    ev.visible.to_string(),
                    format!("{:016x}", ev.state_hash),
                ];
                if record {
                    row.push(ev.state.to_string());
                }
                events.push(row);
                ControlFlow::Continue(())
            },
        )?;
        let summary = ReplicaSummary {
            replica: r,
            matrix_events: counts.matrix,
            flip_events: counts.flip,
            invisible_events: counts.invisible,
            discarded_rate: discarded,
            final_state: record.then(|| last.to_string()),
        };
        Ok((events, samples, summary))
    });
    let mut events = Table::new(event_cols);
    let mut samples = Table::new(grid_cols);
    let mut replicas = Vec::new();
    for run in runs {
        let (e, s, summary) = run?;
        e.into_iter().for_each(|row| events.push(row));
        s.into_iter().for_each(|row| samples.push(row));
        replicas.push(summary);
    }
    out.table("events", &events)?;
    if !grid.is_empty() {
        out.table("grid", &samples)?;
    }
    out.document("summary.json", &Summary { sigma: pair.sigma.describe(), replicas })?;
    Ok(Status::Ok)
}

pub fn simulate_partition_cmd(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let pair = HomogeneousPair::from_pair(load_pair(config)?)?;
    let pi0 = config.initial_partition()?;
    let grid = config.grid();
    let k = config.k;
    let runs = par_replicas(config.seed, config.replicas, |_, rng| simulate_partition(&pair, &pi0, config.horizon, &grid, rng));

    let mut jumps = Table::new(["replica", "time", "partition"]);
    let mut ranked_cols = vec!["replica".to_string(), "time".to_string(), "partition".to_string()];
    ranked_cols.extend(indexed("ranked", k));
    let mut ranked = Table::new(ranked_cols);
    for (r, run) in runs.into_iter().enumerate() {
        let trace = run?;
        jumps.push(vec![r.to_string(), fmt_f64(0.0), trace.initial.to_string()]);
        for j in &trace.jumps {
            jumps.push(vec![r.to_string(), fmt_f64(j.time), j.partition.to_string()]);
        }
        for s in &trace.grid {
            let mut row = vec![r.to_string(), fmt_f64(s.time), s.partition.to_string()];
            row.extend(floats(&s.ranked));
            ranked.push(row);
        }
    }
    out.table("partitions", &jumps)?;
    if !grid.is_empty() {
        out.table("ranked", &ranked)?;
    }
    Ok(Status::Ok)
}

fn discrete_kernel(sigma: &MatrixMeasure, n: usize) -> Result<ExactKernel> {
    Ok(exact_transition_matrix(n, sigma)?)
}

pub fn exact(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let pair = load_pair(config)?;
    let n = config.n;
    let mut table = Table::new(["from", "to", "value"]);
    if config.exact.rational {
        let alpha = config
            .rational_alpha()?
            .ok_or_else(|| anyhow!(UsageError("exact.rational: needs a dirichlet sigma with rational_alpha".into())))?;
        if config.exact.kernel != KernelChoice::Discrete {
            return Err(anyhow!(UsageError("exact.rational: only the discrete kernel has a rational form".into())));
        }
        let values = cutpaste::rational::dirichlet_kernel(n, config.k, &alpha)?;
        let states: Vec<Coloring> = cutpaste::coloring::enumerate(config.k, n).collect();
        for (i, v) in values.iter().enumerate() {
            let (a, b) = (i / states.len(), i % states.len());
            table.push(vec![states[a].to_string(), states[b].to_string(), v.to_string()]);
        }
    } else {
        let kernel = match config.exact.kernel {
            KernelChoice::Discrete => discrete_kernel(&pair.sigma, n)?,
            KernelChoice::Continuous => cutpaste::continuous::exact_generator(&pair, n)?,
        };
        for a in 0..kernel.states() {
            for b in 0..kernel.states() {
                table.push(vec![kernel.state(a).to_string(), kernel.state(b).to_string(), fmt_f64(kernel.get(a, b))]);
            }
        }
    }
    out.table("kernel", &table)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    checks: Vec<CheckReport>,
}

fn named(mut r: CheckReport, name: String) -> CheckReport {
    r.name = name;
    r
}

pub fn verify(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let v = &config.verify;
    let set = match v.permutations {
        PermutationChoice::Adjacent => PermutationSet::Adjacent,
        PermutationChoice::All => PermutationSet::All,
    };
    let mut levels = v.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut checks = Vec::new();

    // (label, kernels per level)
    let mut families: Vec<(&str, Vec<ExactKernel>)> = Vec::new();
    let mut pair = None;
    match v.kernel {
        VerifyKernel::Ehrenfest => {
            if config.k != 2 {
                return Err(anyhow!(UsageError("verify.kernel: the Ehrenfest chain needs k = 2".into())));
            }
            families.push(("ehrenfest", levels.iter().map(|&n| ehrenfest_kernel(n)).collect::<cutpaste::Result<_>>()?));
        }
        VerifyKernel::Pair => {
            let p = load_pair(config)?;
            if !matches!(p.sigma, MatrixMeasure::CountableAtomic(_)) {
                families.push(("discrete", levels.iter().map(|&n| discrete_kernel(&p.sigma, n)).collect::<Result<_>>()?));
            }
            families.push((
                "continuous",
                levels.iter().map(|&n| cutpaste::continuous::exact_generator(&p, n)).collect::<cutpaste::Result<_>>()?,
            ));
            pair = Some(p);
        }
    }

    for (label, kernels) in &families {
        for kernel in kernels {
            let r = check_exchangeable(kernel, set, v.tol)?;
            checks.push(named(r, format!("exchangeability ({label}, n={})", kernel.n())));
        }
        for w in kernels.windows(2) {
            let r = check_consistent(&w[1], &w[0], v.tol)?;
            checks.push(named(r, format!("consistency ({label}, n={} -> m={})", w[1].n(), w[0].n())));
        }
    }

    if let SigmaConfig::Dirichlet { alpha, .. } = &config.sigma {
        if v.kernel == VerifyKernel::Pair {
            for kernel in &families[0].1 {
                let lambda = dirichlet_stationary(kernel.n(), config.k, *alpha)?.colorings;
                checks.push(named(check_detailed_balance(kernel, &lambda, v.tol)?, format!("detailed balance (n={})", kernel.n())));
                checks.push(named(check_stationary(kernel, &lambda, v.tol)?, format!("stationarity (n={})", kernel.n())));
            }
            if let Some(a) = config.rational_alpha()? {
                for &n in levels.iter().filter(|&&n| n <= cutpaste::rational::MAX_RATIONAL_N) {
                    let scan = cutpaste::rational::detailed_balance(n, config.k, &a)?;
                    checks.push(exact_check(format!("rational detailed balance (n={n})"), &scan));
                }
                for w in levels.windows(2).filter(|w| w[1] <= cutpaste::rational::MAX_RATIONAL_N) {
                    let scan = cutpaste::rational::consistency(w[0], w[1], config.k, &a)?;
                    checks.push(exact_check(format!("rational consistency (n={} -> m={})", w[1], w[0]), &scan));
                }
            }
        }
    }

    if v.monte_carlo_replicas > 0 {
        if let Some(p) = &pair {
            let (label, kernels) = &families[0];
            let kernel = &kernels[0];
            let starts: Vec<Coloring> = cutpaste::coloring::enumerate(config.k, kernel.n()).collect();
            let sim = if *label == "discrete" {
                Simulator::Step(Box::new(|x, rng| Ok(step(x, &p.sigma, rng)?.0)))
            } else {
                Simulator::FirstJump(Box::new(|x, h, rng| cutpaste::continuous::first_jump(p, x, h, rng)))
            };
            let mc = compare_monte_carlo(kernel, &starts, &sim, v.monte_carlo_replicas, v.tol_sigma, config.seed)?;
            checks.push(named(mc.to_check(), format!("monte carlo ({label}, n={})", kernel.n())));
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport { passed, checks };
    out.document("report.json", &report)?;
    if config.output.format == crate::config::Format::Csv {
        let mut table = Table::new(["check", "passed", "max_deviation", "witness"]);
        for c in &report.checks {
            let witness = c.witness.as_ref().map(|w| w.description.clone()).unwrap_or_default();
            table.push(vec![c.name.clone(), c.passed.to_string(), fmt_f64(c.max_deviation), witness]);
        }
        out.table("checks", &table)?;
    }
    for c in &report.checks {
        println!("{} {}", if c.passed { "pass" } else { "FAIL" }, c.name);
        if let Some(w) = &c.witness {
            println!("     witness: {}", w.description);
        }
    }
    Ok(if passed { Status::Ok } else { Status::VerificationFailed })
}

fn exact_check(name: String, scan: &cutpaste::rational::ExactScan) -> CheckReport {
    CheckReport {
        name,
        passed: scan.holds(),
        max_deviation: cutpaste::rational::to_f64(&scan.max_deviation),
        witness: None,
        notes: vec![format!("{} pairs, exact deviation {}", scan.pairs_checked, scan.max_deviation)],
    }
}

/// Stationary law by iterating the lazy kernel `(I + P)/2` from uniform.
fn power_stationary(kernel: &ExactKernel) -> Result<Vec<f64>> {
    let s = kernel.states();
    let mut mu = vec![1.0 / s as f64; s];
    for _ in 0..1_000_000 {
        let step = kernel.left_apply(&mu);
        let next: Vec<f64> = mu.iter().zip(&step).map(|(a, b)| 0.5 * (a + b)).collect();
        let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if diff < 1e-15 {
            let total: f64 = mu.iter().sum();
            return Ok(mu.into_iter().map(|v| v / total).collect());
        }
    }
    Err(anyhow!("stationary distribution did not converge"))
}

pub fn mixing(config: &RunConfig, out: &mut Writer) -> Result<Status> {
    let pair = load_pair(config)?;
    let kernel = discrete_kernel(&pair.sigma, config.n)?;
    let stationary = match &config.sigma {
        SigmaConfig::Dirichlet { alpha, .. } => dirichlet_stationary(config.n, config.k, *alpha)?.colorings,
        _ => power_stationary(&kernel)?,
    };
    let start = config.mixing_start(config.n)?;
    let profile = mixing_profile(&kernel, &start, &stationary, config.mixing.steps)?;
    let mut table = Table::new(["step", "tv"]);
    for (m, d) in profile.iter().enumerate() {
        table.push(vec![m.to_string(), fmt_f64(*d)]);
    }
    out.table("mixing", &table)?;
    let mut law = Table::new(["state", "stationary"]);
    for (a, p) in stationary.iter().enumerate() {
        law.push(vec![kernel.state(a).to_string(), fmt_f64(*p)]);
    }
    out.table("stationary", &law)?;
    Ok(Status::Ok)
}
