use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;
use shiftbreak::field::{factorize, is_prime};
use shiftbreak::recovery::{
    initial_candidates_smooth, initial_candidates_zero_call, interpolation_recover,
    large_e_call_count, randomized_probe_count, recover_from_candidates, recover_large_e,
    recover_randomized, recover_small_e, Phase, PhaseRecord,
};
use shiftbreak::{
    ExponentParams, HPolicy, IdentityOutcome, LabRow, Lemma, PrimeContext, ProbePolicy,
    RecoveryOutcome, ShiftOracle, Variant, Verdict, WitnessSet,
};

use crate::config::{Algorithm, Command, ExperimentConfig, GridPoint, SecretSpec, VariantArg};
use crate::error::{CliError, Result};
use crate::report::{to_row, BenchRow, IdentityReport, RecoveryReport};

/// One `(p, e)` grid cell with optional per-cell secrets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub p: u64,
    pub e: u64,
    pub s: Option<SecretSpec>,
    pub t: Option<SecretSpec>,
}

type Secrets = (Option<SecretSpec>, Option<SecretSpec>);

/// Rows of a finished run and the number of algorithm failures among them.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<Value>,
    pub failures: u64,
}

/// Generator for one trial, keyed by the run seed and the cell coordinates so
/// that results do not depend on scheduling.
pub fn trial_rng(seed: u64, p: u64, e: u64, trial: u32) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&p.to_le_bytes());
    bytes[16..24].copy_from_slice(&e.to_le_bytes());
    bytes[24..28].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (q, k) in factorize(n) {
        let mut next = Vec::with_capacity(out.len() * (k as usize + 1));
        for &d in &out {
            let mut x = d;
            for _ in 0..=k {
                next.push(x);
                x *= q;
            }
        }
        out = next;
    }
    out.sort_unstable();
    out
}

fn draw(
    cfg: &ExperimentConfig,
    spec: Option<SecretSpec>,
    rng: &mut ChaCha8Rng,
    p: u64,
) -> Result<u64> {
    match spec.unwrap_or(SecretSpec::Random) {
        SecretSpec::Value(v) if v < p => Ok(v),
        SecretSpec::Value(v) => Err(CliError::config(format!("secret {v} is not below p = {p}"))),
        SecretSpec::Random if cfg.seed.is_none() => Err(CliError::config(
            "--seed is required when a secret is random or left unset",
        )),
        SecretSpec::Random => Ok(rng.gen_range(0..p)),
    }
}

fn setup(p: u64, e: u64) -> Result<(PrimeContext, ExponentParams)> {
    let ctx = PrimeContext::new(p).map_err(CliError::from_setup)?;
    let params = ExponentParams::new(&ctx, e).map_err(CliError::from_setup)?;
    Ok((ctx, params))
}

fn exponents_for(cfg: &ExperimentConfig, p: u64, e: Option<u64>) -> Result<Vec<u64>> {
    if p < 3 {
        return Err(CliError::config(format!("p = {p} must be an odd prime")));
    }
    if let Some(e) = e {
        if e == 0 || !(p - 1).is_multiple_of(e) {
            return Err(CliError::config(format!(
                "e = {e} must divide p - 1 = {}",
                p - 1
            )));
        }
        return Ok(vec![e]);
    }
    let lo = cfg.e_min.unwrap_or(1);
    let hi = cfg.e_max.unwrap_or(p - 1);
    let identity_cap = if cfg.command == Command::Identity {
        (p - 1) / 2
    } else {
        p - 1
    };
    Ok(divisors(p - 1)
        .into_iter()
        .filter(|&d| d >= lo && d <= hi && d <= identity_cap)
        .collect())
}

fn primes_up_to(n: u64) -> Vec<u64> {
    (3..=n).filter(|&q| is_prime(q)).collect()
}

/// Expands the configured grid into `(p, e)` cells in grid order.
pub fn expand_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut base: Vec<(u64, Option<u64>, Secrets)> = Vec::new();
    if let Some(grid) = &cfg.grid {
        for point in grid {
            if let Some(key) = point
                .keys()
                .find(|k| !matches!(k.as_str(), "p" | "e" | "s" | "t"))
            {
                return Err(CliError::config(format!("unknown grid key {key:?}")));
            }
            let p = *point
                .get("p")
                .ok_or_else(|| CliError::config("every grid point needs \"p\""))?;
            let secret =
                |key: &str, fallback| point.get(key).map(|&v| SecretSpec::Value(v)).or(fallback);
            base.push((
                p,
                point.get("e").copied().or(cfg.e),
                (secret("s", cfg.s), secret("t", cfg.t)),
            ));
        }
    } else if let Some(p_max) = cfg.p_max {
        base.extend(
            primes_up_to(p_max)
                .into_iter()
                .map(|p| (p, cfg.e, (cfg.s, cfg.t))),
        );
    } else if let Some(p) = cfg.p {
        base.push((p, cfg.e, (cfg.s, cfg.t)));
    }
    let mut cells = Vec::new();
    for (p, e, (s, t)) in base {
        if !is_prime(p) {
            return Err(CliError::config(format!("{p} is not prime")));
        }
        for e in exponents_for(cfg, p, e)? {
            cells.push(Cell { p, e, s, t });
        }
    }
    Ok(cells)
}

fn probe_policy(cfg: &ExperimentConfig) -> ProbePolicy {
    ProbePolicy {
        epsilon: cfg.epsilon,
        window_cap: cfg.window_cap,
        ..ProbePolicy::default()
    }
}

fn h_policy(cfg: &ExperimentConfig) -> HPolicy {
    HPolicy {
        mode: cfg.h_mode.into(),
        epsilon: cfg.epsilon,
        c0: cfg.c0,
        delta: cfg.delta,
        cap: cfg.window_cap,
    }
}

fn prepend(first: PhaseRecord, mut out: RecoveryOutcome) -> RecoveryOutcome {
    out.phases.insert(0, first);
    out
}

/// Runs one recovery algorithm against `oracle`. `seed` drives the randomized probes.
pub fn run_algorithm(
    oracle: &ShiftOracle,
    algorithm: Algorithm,
    policy: &ProbePolicy,
    seed: u64,
) -> shiftbreak::Result<RecoveryOutcome> {
    let initial_phase = |calls: u64, candidates: usize| PhaseRecord {
        phase: Phase::InitialCandidates,
        calls,
        candidates,
        probe: None,
        window: None,
    };
    match algorithm {
        Algorithm::Interpolation => interpolation_recover(oracle),
        Algorithm::ZeroCallNarrow => recover_small_e(oracle, policy),
        Algorithm::SmoothNarrow => {
            let (initial, _) = initial_candidates_smooth(oracle, policy.epsilon)?;
            let first = initial_phase(oracle.call_count(), initial.len());
            Ok(prepend(
                first,
                recover_from_candidates(oracle, &initial, policy)?,
            ))
        }
        Algorithm::Randomized => {
            let witnesses = WitnessSet::nonresidues(oracle.context(), oracle.params())?;
            let initial = initial_candidates_zero_call(oracle, &witnesses)?;
            let first = initial_phase(oracle.call_count(), initial.len());
            Ok(prepend(first, recover_randomized(oracle, &initial, seed)?))
        }
        Algorithm::LargeE => recover_large_e(oracle, policy),
    }
}

/// Plants a secret for `trial`, runs `algorithm`, and checks the answer and
/// the call accounting against the oracle.
pub fn recover_trial(
    cfg: &ExperimentConfig,
    cell: &Cell,
    algorithm: Algorithm,
    trial: u32,
) -> Result<RecoveryReport> {
    let (ctx, params) = setup(cell.p, cell.e)?;
    let mut rng = trial_rng(cfg.seed.unwrap_or(0), cell.p, cell.e, trial);
    let s = draw(cfg, cell.s, &mut rng, cell.p)?;
    let algorithm_seed: u64 = rng.gen();
    let oracle = ShiftOracle::new(&ctx, &params, s, []).map_err(CliError::from_setup)?;
    let started = Instant::now();
    let outcome = run_algorithm(&oracle, algorithm, &probe_policy(cfg), algorithm_seed)
        .map_err(CliError::from_run)?;
    let elapsed = started.elapsed();
    let calls = oracle.call_count();
    let accounted: u64 = outcome.phases.iter().map(|ph| ph.calls).sum();
    if outcome.shift != s {
        return Err(CliError::Defect(format!(
            "{} recovered {} but {} was planted (p = {}, e = {})",
            algorithm.id(),
            outcome.shift,
            s,
            cell.p,
            cell.e
        )));
    }
    if accounted != calls {
        return Err(CliError::Defect(format!(
            "{} reported {accounted} calls but the oracle counted {calls}",
            algorithm.id()
        )));
    }
    Ok(RecoveryReport {
        algorithm: algorithm.id(),
        p: cell.p,
        e: cell.e,
        trial,
        planted: s,
        recovered: outcome.shift,
        oracle_calls: calls,
        phases: outcome.phases,
        wall_time_ms: cfg.timing.then_some(elapsed.as_secs_f64() * 1e3),
    })
}

pub fn run_recover(cfg: &ExperimentConfig) -> Result<Vec<RecoveryReport>> {
    let algorithm = cfg.selected_algorithms()[0];
    let cells = expand_cells(cfg)?;
    let tasks: Vec<(&Cell, u32)> = cells
        .iter()
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    tasks
        .par_iter()
        .map(|&(cell, trial)| recover_trial(cfg, cell, algorithm, trial))
        .collect()
}

fn identity_trial(cfg: &ExperimentConfig, cell: &Cell, trial: u32) -> Result<IdentityReport> {
    let (ctx, params) = setup(cell.p, cell.e)?;
    let mut rng = trial_rng(cfg.seed.unwrap_or(0), cell.p, cell.e, trial);
    let s = draw(cfg, cell.s, &mut rng, cell.p)?;
    let t = draw(cfg, cell.t, &mut rng, cell.p)?;
    let policy = h_policy(cfg);
    let started = Instant::now();
    let (outcome, calls): (IdentityOutcome, u64) = match cfg.variant {
        VariantArg::KnownT => {
            let oracle =
                ShiftOracle::new(&ctx, &params, s, [ctx.neg(t)]).map_err(CliError::from_setup)?;
            let out = shiftbreak::identity::test_known_t(&oracle, t, &policy)
                .map_err(CliError::from_run)?;
            (out, oracle.call_count())
        }
        VariantArg::UnknownT => {
            let os = ShiftOracle::new(&ctx, &params, s, []).map_err(CliError::from_setup)?;
            let ot = ShiftOracle::new(&ctx, &params, t, []).map_err(CliError::from_setup)?;
            let out = shiftbreak::identity::test_unknown_t(&os, &ot, &policy)
                .map_err(CliError::from_run)?;
            (out, os.call_count() + ot.call_count())
        }
    };
    let elapsed = started.elapsed();
    if outcome.calls != calls {
        return Err(CliError::Defect(format!(
            "tester reported {} calls but the oracles counted {calls}",
            outcome.calls
        )));
    }
    let expected = if s == t {
        Verdict::Equal
    } else {
        Verdict::Distinct
    };
    let correct = outcome.verdict == expected;
    let exact = matches!(policy.mode, shiftbreak::HMode::Exact);
    if exact && !correct {
        return Err(CliError::Defect(format!(
            "exact-mode tester answered {:?} for s = {s}, t = {t} (p = {}, e = {})",
            outcome.verdict, cell.p, cell.e
        )));
    }
    Ok(IdentityReport {
        variant: match Variant::from(cfg.variant) {
            Variant::KnownT => "known_t",
            Variant::UnknownT => "unknown_t",
        },
        p: cell.p,
        e: cell.e,
        trial,
        s,
        t,
        h_mode: if exact { "exact" } else { "theoretical" },
        h: outcome.h,
        verdict: outcome.verdict,
        expected,
        correct,
        probes: outcome.probes,
        oracle_calls: calls,
        wall_time_ms: cfg.timing.then_some(elapsed.as_secs_f64() * 1e3),
    })
}

pub fn run_identity(cfg: &ExperimentConfig) -> Result<Vec<IdentityReport>> {
    let cells = expand_cells(cfg)?;
    let tasks: Vec<(&Cell, u32)> = cells
        .iter()
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    tasks
        .par_iter()
        .map(|&(cell, trial)| identity_trial(cfg, cell, trial))
        .collect()
}

fn lab_points(cfg: &ExperimentConfig, lemma: Lemma) -> Result<Vec<Vec<u64>>> {
    let names = lemma.param_names();
    let mut partial: Vec<GridPoint> = Vec::new();
    let mut flag_point = cfg.params.clone();
    for (name, value) in [("p", cfg.p), ("e", cfg.e)] {
        if let (Some(v), true) = (value, names.contains(&name)) {
            flag_point.entry(name.to_string()).or_insert(v);
        }
    }
    if let Some(grid) = &cfg.grid {
        partial.extend(grid.iter().cloned());
    } else if let Some(p_max) = cfg.p_max {
        if !names.contains(&"p") {
            return Err(CliError::config(format!(
                "--p-max does not apply to {}",
                lemma.id()
            )));
        }
        for p in primes_up_to(p_max) {
            let mut point = flag_point.clone();
            point.insert("p".to_string(), p);
            partial.push(point);
        }
    } else if !flag_point.is_empty() {
        partial.push(flag_point);
    }
    let mut points = Vec::new();
    for point in partial {
        if let Some(key) = point.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(CliError::config(format!(
                "{} takes parameters {}; got {key:?}",
                lemma.id(),
                names.join(", ")
            )));
        }
        let exponents = match (point.get("e"), point.get("p")) {
            (None, Some(&p)) if names.contains(&"e") => {
                exponents_for(cfg, p, None)?.into_iter().map(Some).collect()
            }
            _ => vec![None],
        };
        for e in exponents {
            let row: Option<Vec<u64>> = names
                .iter()
                .map(|&n| {
                    if n == "e" {
                        e.or(point.get(n).copied())
                    } else {
                        point.get(n).copied()
                    }
                })
                .collect();
            let row = row.ok_or_else(|| {
                CliError::config(format!(
                    "{} needs parameters {}",
                    lemma.id(),
                    names.join(", ")
                ))
            })?;
            points.push(row);
        }
    }
    Ok(points)
}

pub fn run_lab(cfg: &ExperimentConfig) -> Result<Vec<LabRow>> {
    let lemma = cfg
        .lemma
        .ok_or_else(|| CliError::config("lab requires --lemma"))?;
    let points = lab_points(cfg, lemma)?;
    Ok(shiftbreak::lab::run_grid(lemma, &points).rows)
}

fn bench_cell(cfg: &ExperimentConfig, cell: &Cell, algorithm: Algorithm) -> Result<BenchRow> {
    let trials: Vec<Result<RecoveryReport>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| recover_trial(cfg, cell, algorithm, trial))
        .collect();
    let mut calls = Vec::new();
    let mut wall = 0.0;
    let mut failures = 0;
    for t in trials {
        match t {
            Ok(r) => {
                calls.push(r.oracle_calls);
                wall += r.wall_time_ms.unwrap_or(0.0);
            }
            Err(CliError::Defect(_)) => failures += 1,
            Err(other) => return Err(other),
        }
    }
    let n = calls.len().max(1) as f64;
    Ok(BenchRow {
        p: cell.p,
        e: cell.e,
        algorithm: algorithm.id(),
        trials: cfg.trials,
        mean_calls: calls.iter().sum::<u64>() as f64 / n,
        max_calls: calls.iter().copied().max().unwrap_or(0),
        interpolation_calls: cell.e + 1,
        failures,
        nu: (algorithm == Algorithm::Randomized).then(|| randomized_probe_count(cell.p, cell.e)),
        m: (algorithm == Algorithm::LargeE).then(|| large_e_call_count(cell.p, cell.e)),
        mean_wall_time_ms: cfg.timing.then(|| wall / n),
    })
}

pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let cells = expand_cells(cfg)?;
    let algorithms = cfg.selected_algorithms();
    let tasks: Vec<(&Cell, Algorithm)> = cells
        .iter()
        .flat_map(|c| algorithms.iter().map(move |&a| (c, a)))
        .collect();
    tasks
        .par_iter()
        .map(|&(cell, algorithm)| bench_cell(cfg, cell, algorithm))
        .collect()
}

/// Dispatches on the command and serializes the rows in grid order.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    Ok(match cfg.command {
        Command::Recover => RunOutput {
            rows: run_recover(cfg)?.iter().map(to_row).collect(),
            failures: 0,
        },
        Command::Identity => RunOutput {
            rows: run_identity(cfg)?.iter().map(to_row).collect(),
            failures: 0,
        },
        Command::Lab => RunOutput {
            rows: run_lab(cfg)?.iter().map(to_row).collect(),
            failures: 0,
        },
        Command::Bench => {
            let rows = run_bench(cfg)?;
            RunOutput {
                failures: rows.iter().map(|r| r.failures).sum(),
                rows: rows.iter().map(to_row).collect(),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recover_cfg(algorithm: Algorithm) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Command::Recover);
        cfg.p = Some(13);
        cfg.e = Some(3);
        cfg.s = Some(SecretSpec::Value(5));
        cfg.algorithms = vec![algorithm];
        cfg.seed = Some(42);
        cfg
    }

    #[test]
    fn divisors_are_sorted_and_complete() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors(1), vec![1]);
        assert_eq!(divisors(1008).len(), 30);
    }

    #[test]
    fn recovers_planted_shift_with_each_algorithm() {
        for a in Algorithm::ALL {
            let reports = run_recover(&recover_cfg(a)).unwrap();
            assert_eq!(reports.len(), 1);
            assert_eq!(reports[0].recovered, 5, "{}", a.id());
        }
    }

    #[test]
    fn interpolation_uses_e_plus_one_calls() {
        let reports = run_recover(&recover_cfg(Algorithm::Interpolation)).unwrap();
        assert_eq!(reports[0].oracle_calls, 4);
    }

    #[test]
    fn identity_examples() {
        let mut cfg = ExperimentConfig::new(Command::Identity);
        cfg.p = Some(13);
        cfg.e = Some(3);
        cfg.s = Some(SecretSpec::Value(5));
        cfg.t = Some(SecretSpec::Value(4));
        let r = &run_identity(&cfg).unwrap()[0];
        assert_eq!(r.verdict, Verdict::Distinct);
        assert!(r.probes <= 3);

        cfg.s = Some(SecretSpec::Value(4));
        assert_eq!(run_identity(&cfg).unwrap()[0].verdict, Verdict::Equal);

        cfg.s = Some(SecretSpec::Value(5));
        cfg.variant = VariantArg::UnknownT;
        let r = &run_identity(&cfg).unwrap()[0];
        assert_eq!(
            (r.verdict, r.probes, r.oracle_calls),
            (Verdict::Distinct, 1, 2)
        );
    }

    #[test]
    fn lab_expands_exponents_per_prime() {
        let mut cfg = ExperimentConfig::new(Command::Lab);
        cfg.lemma = Some(Lemma::CosetRun);
        cfg.p = Some(13);
        let rows = run_lab(&cfg).unwrap();
        let es: Vec<u64> = rows.iter().map(|r| r.params[1].1).collect();
        assert_eq!(es, vec![1, 2, 3, 4, 6, 12]);
    }

    #[test]
    fn lab_hyperbola_point() {
        let mut cfg = ExperimentConfig::new(Command::Lab);
        cfg.lemma = Some(Lemma::Hyperbola);
        cfg.params = [("p", 13), ("u", 0), ("v", 1), ("h", 3)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let rows = run_lab(&cfg).unwrap();
        assert_eq!(rows[0].value, Some(shiftbreak::LabValue::Count(1)));
    }

    #[test]
    fn empty_lab_grid_is_empty() {
        let mut cfg = ExperimentConfig::new(Command::Lab);
        cfg.lemma = Some(Lemma::Energy);
        cfg.grid = Some(Vec::new());
        assert!(run_lab(&cfg).unwrap().is_empty());
    }

    #[test]
    fn bench_reports_large_e_depth() {
        let mut cfg = ExperimentConfig::new(Command::Bench);
        cfg.p = Some(13);
        cfg.e = Some(12);
        cfg.seed = Some(7);
        cfg.algorithms = vec![Algorithm::LargeE];
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].m, Some(large_e_call_count(13, 12)));
        assert_eq!(rows[0].failures, 0);
    }

    #[test]
    fn trial_streams_are_independent_of_order() {
        let a: u64 = trial_rng(1, 13, 3, 0).gen();
        let b: u64 = trial_rng(1, 13, 3, 1).gen();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(1, 13, 3, 0).gen::<u64>());
    }

    #[test]
    fn nondividing_exponent_is_a_config_error() {
        let mut cfg = recover_cfg(Algorithm::ZeroCallNarrow);
        cfg.e = Some(5);
        assert_eq!(run_recover(&cfg).unwrap_err().exit_code(), 2);
    }
}
