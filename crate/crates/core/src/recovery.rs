//! Recovering the hidden shift `s` from `O_{e,s}`.
//!
//! * [`interpolation_recover`]: the `e + 1` call baseline.
//! * [`initial_candidates_zero_call`] / [`initial_candidates_smooth`]: a first
//!   candidate set of size at most `e`.
//! * [`recover_from_candidates`]: adaptive narrowing with a bounded number of
//!   calls for `e ≤ p^{0.9}`. Each round scans a probe window, picks the probe
//!   whose answer splits the candidates best, and keeps the candidates that
//!   agree with the oracle.
//! * [`recover_randomized`]: `ν` uniformly random probes.
//! * [`recover_large_e`]: full-field scan after `m` calls, for `e > p^{0.9}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{isqrt, ExponentParams, PowerMap, PrimeContext};
use crate::oracle::ShiftOracle;
use crate::roots::{all_eth_roots, candidates_from_consecutive_powers, WitnessSet};

/// Candidate sets at or below this size are resolved by querying `-t`.
pub const FINAL_RESOLUTION_SIZE: usize = 4;

/// Largest `p` for which [`recover_large_e`] scans the whole field.
pub const FULL_SCAN_CAP: u64 = 10_000_000;

/// Exponent of `p` separating the adaptive pipeline from the large-`e` scan.
pub const SMALL_E_EXPONENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ZeroCallRoots,
    SmoothPigeonhole,
    GlobalScan,
    Narrowed,
    Supplied,
}

/// Sorted set of shifts consistent with every oracle answer seen so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    members: Vec<u64>,
    provenance: Provenance,
}

impl CandidateSet {
    pub fn new(members: impl IntoIterator<Item = u64>, provenance: Provenance) -> Self {
        let mut members: Vec<u64> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        CandidateSet {
            members,
            provenance,
        }
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, t: u64) -> bool {
        self.members.binary_search(&t).is_ok()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePolicy {
    /// Exponent slack in the window formulas, `0 < ε < 1/2`.
    pub epsilon: f64,
    /// Largest probe window; `None` means `p - 1`.
    pub window_cap: Option<u64>,
    /// Window growth factor when no probe separates the candidates.
    pub stall_factor: u64,
    /// Narrowing rounds allowed in the `e ≤ p^{0.9}` regime.
    pub max_rounds: u32,
}

impl Default for ProbePolicy {
    fn default() -> Self {
        ProbePolicy {
            epsilon: 0.05,
            window_cap: None,
            stall_factor: 2,
            max_rounds: 64,
        }
    }
}

impl ProbePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::OutOfRange {
                what: "epsilon (must lie in (0, 1/2))",
                value: self.epsilon.to_bits(),
            });
        }
        if self.stall_factor < 2 {
            return Err(Error::OutOfRange {
                what: "stall_factor",
                value: self.stall_factor,
            });
        }
        Ok(())
    }

    fn cap(&self, p: u64) -> u64 {
        self.window_cap.unwrap_or(p - 1).clamp(1, p)
    }
}

/// Which collision statistic drives probe selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `r(x)`: largest fiber of `t ↦ ((t + x)^e, (t + ζx)^e)`; two calls per round.
    PairFiber,
    /// `R(x)`: ordered pairs `s_1 ≠ s_2` with `(x + s_1)/(x + s_2) ∈ G_e`; one call.
    RatioPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Interpolation,
    InitialCandidates,
    ShiftedIntersections,
    FiberNarrowing,
    RatioNarrowing,
    RandomProbes,
    FullScan,
    Resolution,
}

/// Calls spent in one phase (or narrowing round) and the candidate count after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub calls: u64,
    pub candidates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryOutcome {
    pub shift: u64,
    pub phases: Vec<PhaseRecord>,
}

/// Result of one narrowing round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Narrowing {
    pub candidates: CandidateSet,
    pub probe: u64,
    pub window: u64,
    pub calls: u64,
}

/// `ζ = ⌊√p⌋^{-1} mod p`, the dilation paired with each probe by `r(x)`.
pub fn probe_dilation(ctx: &PrimeContext) -> u64 {
    ctx.inv(isqrt(ctx.p())).expect("1 ≤ ⌊√p⌋ < p")
}

/// `ν = ⌊3 ln p / ln(p/e)⌋ + 1`.
pub fn randomized_probe_count(p: u64, e: u64) -> u64 {
    let p = p as f64;
    (3.0 * p.ln() / (p / e as f64).ln()).floor() as u64 + 1
}

/// `m = ⌊ln p / (2 ln(p - 1)/ln e)⌋ + 1`.
pub fn large_e_call_count(p: u64, e: u64) -> u64 {
    let pf = p as f64;
    (pf.ln() * (e as f64).ln() / (2.0 * (pf - 1.0).ln())).floor() as u64 + 1
}

/// First `m ∈ 3..=8` with `p ≥ (2m⌊e^{1/(2m+1)}⌋ + 2m + 2)·e`, if any.
pub fn intersection_depth(p: u64, e: u64) -> Option<u64> {
    (3..=8u64).find(|&m| {
        let root = (e as f64).powf(1.0 / (2 * m + 1) as f64).floor() as u64;
        let factor = 2 * m * root + 2 * m + 2;
        (factor as u128) * (e as u128) <= p as u128
    })
}

fn in_small_regime(p: u64, e: u64) -> bool {
    (e as f64) <= (p as f64).powf(SMALL_E_EXPONENT)
}

fn outcome_calls(oracle: &ShiftOracle, since: u64) -> u64 {
    oracle.call_count() - since
}

/// Interpolates `(X + s)^e` through `x = 0..=e` and reads `s` off the
/// coefficient of `X^{e-1}`, which is `e·s`. Exactly `e + 1` calls.
pub fn interpolation_recover(oracle: &ShiftOracle) -> Result<RecoveryOutcome> {
    let ctx = oracle.context();
    let e = oracle.params().e();
    let start = oracle.call_count();
    let values = (0..=e)
        .map(|x| oracle.query(x))
        .collect::<Result<Vec<_>>>()?;
    // Nodes 0..=e: w_i = ∏_{j≠i}(i - j) = i!·(-1)^{e-i}·(e-i)!, and the
    // X^{e-1} coefficient of the i-th Lagrange basis polynomial is
    // -(Σ_j j - i)/w_i.
    let mut fact = vec![1u64; e as usize + 1];
    for i in 1..=e as usize {
        fact[i] = ctx.mul(fact[i - 1], i as u64);
    }
    let node_sum = ctx.reduce(((e as u128 * (e as u128 + 1)) / 2 % ctx.p() as u128) as u64);
    let mut coeff = 0;
    for (i, &y) in values.iter().enumerate() {
        let mut w = ctx.mul(fact[i], fact[e as usize - i]);
        if (e as usize - i) % 2 == 1 {
            w = ctx.neg(w);
        }
        let numer = ctx.neg(ctx.sub(node_sum, i as u64));
        coeff = ctx.add(coeff, ctx.mul(y, ctx.div(numer, w)?));
    }
    let shift = ctx.div(coeff, e)?;
    Ok(RecoveryOutcome {
        shift,
        phases: vec![PhaseRecord {
            phase: Phase::Interpolation,
            calls: outcome_calls(oracle, start),
            candidates: 1,
            probe: None,
            window: None,
        }],
    })
}

/// One call at `x = 0`; every `e`-th root of the answer.
pub fn initial_candidates_zero_call(
    oracle: &ShiftOracle,
    witnesses: &WitnessSet,
) -> Result<CandidateSet> {
    let a0 = oracle.query(0)?;
    let roots = all_eth_roots(oracle.context(), oracle.params(), a0, witnesses)?;
    Ok(CandidateSet::new(roots, Provenance::ZeroCallRoots))
}

/// Witnesses from the integers `1..=y`: for each prime `ℓ | e`, the smallest
/// `γ_ℓ(x)` (largest `γ ≤ α_ℓ` with `x^{(p-1)/ℓ^γ} = 1`) and its first minimizer.
pub fn smooth_witnesses(ctx: &PrimeContext, params: &ExponentParams, y: u64) -> Result<WitnessSet> {
    let y = y.clamp(1, ctx.p() - 1);
    let entries = params.e_factors().iter().map(|&(ell, _)| {
        let alpha = ctx.multiplicity(ell);
        let gamma_of = |x: u64| {
            (0..=alpha)
                .rev()
                .find(|&g| ctx.pow(x, (ctx.p() - 1) / ell.pow(g)) == 1)
                .unwrap_or(0)
        };
        let (gamma, x) = (1..=y)
            .map(|x| (gamma_of(x), x))
            .min_by_key(|&(g, x)| (g, x))
            .expect("y ≥ 1");
        (ell, gamma, (gamma < alpha).then_some(x))
    });
    WitnessSet::new(ctx, params, entries.collect::<Vec<_>>())
}

/// Witnesses from `1..=⌊p^ε⌋`, then `n + 1` calls at `x = 0..=n`.
pub fn initial_candidates_smooth(
    oracle: &ShiftOracle,
    epsilon: f64,
) -> Result<(CandidateSet, WitnessSet)> {
    let y = (oracle.context().p() as f64).powf(epsilon).floor() as u64;
    initial_candidates_smooth_bound(oracle, y)
}

/// [`initial_candidates_smooth`] with an explicit smoothness bound `y`.
pub fn initial_candidates_smooth_bound(
    oracle: &ShiftOracle,
    y: u64,
) -> Result<(CandidateSet, WitnessSet)> {
    let ctx = oracle.context();
    let params = oracle.params();
    let witnesses = smooth_witnesses(ctx, params, y)?;
    let answers = (0..=witnesses.modulus())
        .map(|x| oracle.query(x))
        .collect::<Result<Vec<_>>>()?;
    let members = candidates_from_consecutive_powers(ctx, params, &witnesses, &answers)?;
    Ok((
        CandidateSet::new(members, Provenance::SmoothPigeonhole),
        witnesses,
    ))
}

/// `r(x)` with `ζ = ⌊√p⌋^{-1}`.
pub fn fiber_statistic(
    ctx: &PrimeContext,
    params: &ExponentParams,
    set: &CandidateSet,
    x: u64,
) -> u64 {
    let zx = ctx.mul(probe_dilation(ctx), x);
    PowerClasses::new(ctx, params).fiber(set.members(), x, zx)
}

/// `R(x)`, excluding pairs with `x + s_2 ≡ 0`.
pub fn ratio_pair_statistic(
    ctx: &PrimeContext,
    params: &ExponentParams,
    set: &CandidateSet,
    x: u64,
) -> u64 {
    PowerClasses::new(ctx, params).ratio_pairs(set.members(), x)
}

/// Labels `z` by its coset of `G_e` (0 for `z = 0`). Below the table cap the
/// label is `1 + (ind z mod d)`; above it, `z^e` itself.
struct PowerClasses {
    ctx: PrimeContext,
    e: u64,
    d: u64,
    table: Option<Vec<u32>>,
}

impl PowerClasses {
    const TABLE_CAP: u64 = 1 << 20;

    fn new(ctx: &PrimeContext, params: &ExponentParams) -> Self {
        let d = params.d();
        let table = (ctx.p() <= Self::TABLE_CAP).then(|| {
            let mut table = vec![0u32; ctx.p() as usize];
            let mut z = 1;
            for k in 0..ctx.p() - 1 {
                table[z as usize] = 1 + (k % d) as u32;
                z = ctx.mul(z, ctx.generator());
            }
            table
        });
        PowerClasses {
            ctx: ctx.clone(),
            e: params.e(),
            d,
            table,
        }
    }

    #[inline]
    fn label(&self, a: u64, b: u64) -> u64 {
        let z = self.ctx.add(a, b);
        match &self.table {
            Some(t) => u64::from(t[z as usize]),
            None => self.ctx.pow(z, self.e),
        }
    }

    /// Number of labels when they are small enough to count in an array.
    fn dense_labels(&self, slots: u64, n: usize) -> Option<usize> {
        (self.table.is_some() && slots <= 4 * n as u64 + 64).then_some(slots as usize)
    }

    fn fiber(&self, members: &[u64], x: u64, zx: u64) -> u64 {
        let width = self.d + 1;
        if let Some(slots) = self.dense_labels(width * width, members.len()) {
            let mut counts = vec![0u32; slots];
            for &t in members {
                counts[(self.label(x, t) * width + self.label(zx, t)) as usize] += 1;
            }
            return u64::from(counts.into_iter().max().unwrap_or(0));
        }
        let mut keys: Vec<(u64, u64)> = members
            .iter()
            .map(|&t| (self.label(x, t), self.label(zx, t)))
            .collect();
        keys.sort_unstable();
        keys.chunk_by(|a, b| a == b)
            .map(|run| run.len() as u64)
            .max()
            .unwrap_or(0)
    }

    // (x + s_1)/(x + s_2) ∈ G_e exactly when both are nonzero in the same coset.
    fn ratio_pairs(&self, members: &[u64], x: u64) -> u64 {
        let pairs = |c: u64| c * c.saturating_sub(1);
        if let Some(slots) = self.dense_labels(self.d + 1, members.len()) {
            let mut counts = vec![0u64; slots];
            for &t in members {
                counts[self.label(x, t) as usize] += 1;
            }
            return counts[1..].iter().map(|&c| pairs(c)).sum();
        }
        let mut keys: Vec<u64> = members
            .iter()
            .map(|&t| self.label(x, t))
            .filter(|&k| k != 0)
            .collect();
        keys.sort_unstable();
        keys.chunk_by(|a, b| a == b)
            .map(|run| pairs(run.len() as u64))
            .sum()
    }
}

/// No probe can do better than a perfectly balanced split over the `d`
/// nonzero power classes, with zero classes holding at most one candidate each.
fn statistic_floor(n: u64, d: u64, stat: Statistic) -> u64 {
    match stat {
        Statistic::RatioPairs => {
            let spread = n.saturating_sub(1);
            let (q, rem) = (spread / d, spread % d);
            rem * (q + 1) * q + (d - rem) * q * q.saturating_sub(1)
        }
        Statistic::PairFiber => n.saturating_sub(2).div_ceil(d.saturating_mul(d)).max(1),
    }
}

fn statistic_ceiling(n: u64, stat: Statistic) -> u64 {
    match stat {
        Statistic::RatioPairs => n * (n - 1),
        Statistic::PairFiber => n,
    }
}

/// Starting window for a round, from the asymptotic phase formulas.
fn default_window(
    ctx: &PrimeContext,
    params: &ExponentParams,
    n: usize,
    stat: Statistic,
    eps: f64,
) -> u64 {
    let p = ctx.p() as f64;
    let e = params.e() as f64;
    let h = match stat {
        Statistic::PairFiber => {
            let alpha = (n as f64).ln() / p.ln();
            let beta = (3.0 - 2.0 * alpha - (1.0 + 4.0 * alpha * alpha).sqrt()) / 4.0 + eps;
            p.powf(beta).ceil()
        }
        Statistic::RatioPairs => {
            let rho = e.ln() / p.ln();
            if rho >= 0.65 {
                e.powf(0.56).ceil()
            } else {
                e.powf(0.5 + eps / 2.0).ceil()
            }
        }
    };
    if h.is_finite() && h >= 1.0 {
        h.min(u64::MAX as f64) as u64
    } else {
        1
    }
}

struct Scanner<'a> {
    oracle: &'a ShiftOracle,
    pm: PowerMap,
    classes: PowerClasses,
    zeta: u64,
}

impl<'a> Scanner<'a> {
    fn new(oracle: &'a ShiftOracle) -> Self {
        let ctx = oracle.context();
        Scanner {
            oracle,
            pm: PowerMap::new(ctx, oracle.params().e()),
            classes: PowerClasses::new(ctx, oracle.params()),
            zeta: probe_dilation(ctx),
        }
    }

    fn partner(&self, x: u64) -> u64 {
        self.oracle.context().mul(self.zeta, x)
    }

    fn value(&self, members: &[u64], x: u64, stat: Statistic) -> Option<u64> {
        if self.oracle.is_forbidden(x) {
            return None;
        }
        match stat {
            Statistic::RatioPairs => Some(self.classes.ratio_pairs(members, x)),
            Statistic::PairFiber => {
                let zx = self.partner(x);
                (!self.oracle.is_forbidden(zx)).then(|| self.classes.fiber(members, x, zx))
            }
        }
    }

    /// Smallest `x` in the (growing) window minimizing the statistic, once
    /// some probe is guaranteed to split the candidates.
    fn select_probe(
        &self,
        members: &[u64],
        policy: &ProbePolicy,
        stat: Statistic,
        window: u64,
    ) -> Result<(u64, u64)> {
        const MAX_BLOCK: u64 = 4096;
        const PARALLEL_WORK: u64 = 1 << 16;
        let p = self.oracle.context().p();
        let cap = policy.cap(p);
        let n = members.len() as u64;
        let floor = statistic_floor(n, self.oracle.params().d(), stat);
        let ceiling = statistic_ceiling(n, stat);
        let mut h = window.clamp(1, cap);
        let mut scanned = 0;
        let mut best: Option<(u64, u64)> = None;
        // Blocks start small so that an early hit on the floor stays cheap.
        let mut block = 8;
        loop {
            'scan: while scanned < h {
                let end = (scanned + block).min(h);
                block = (block * 2).min(MAX_BLOCK);
                let values: Vec<Option<u64>> = if (end - scanned) * n < PARALLEL_WORK {
                    (scanned..end)
                        .map(|x| self.value(members, x, stat))
                        .collect()
                } else {
                    (scanned..end)
                        .into_par_iter()
                        .map(|x| self.value(members, x, stat))
                        .collect()
                };
                for (x, v) in (scanned..end).zip(values) {
                    if let Some(v) = v {
                        if best.is_none_or(|(b, _)| v < b) {
                            best = Some((v, x));
                            if v <= floor {
                                scanned = end;
                                break 'scan;
                            }
                        }
                    }
                }
                scanned = end;
            }
            if let Some((v, x)) = best {
                if v < ceiling {
                    return Ok((x, h));
                }
            }
            if h >= cap {
                return Err(Error::Stalled {
                    window: h,
                    candidates: members.len(),
                });
            }
            h = h.saturating_mul(policy.stall_factor).min(cap);
        }
    }

    fn narrow(
        &self,
        set: &CandidateSet,
        policy: &ProbePolicy,
        stat: Statistic,
        window: u64,
    ) -> Result<Narrowing> {
        let start = self.oracle.call_count();
        if set.len() < 2 {
            return Ok(Narrowing {
                candidates: set.clone(),
                probe: 0,
                window: 0,
                calls: 0,
            });
        }
        let (x, h) = self.select_probe(set.members(), policy, stat, window)?;
        let a = self.oracle.query(x)?;
        let kept: Vec<u64> = match stat {
            Statistic::RatioPairs => set
                .members()
                .iter()
                .copied()
                .filter(|&t| self.pm.shifted(x, t) == a)
                .collect(),
            Statistic::PairFiber => {
                let zx = self.partner(x);
                // x = 0 pairs with itself; one call carries all the information.
                let b = if zx == x { a } else { self.oracle.query(zx)? };
                set.members()
                    .iter()
                    .copied()
                    .filter(|&t| self.pm.shifted(x, t) == a && self.pm.shifted(zx, t) == b)
                    .collect()
            }
        };
        Ok(Narrowing {
            candidates: CandidateSet::new(kept, Provenance::Narrowed),
            probe: x,
            window: h,
            calls: outcome_calls(self.oracle, start),
        })
    }

    /// Queries `x = -t` for the remaining candidates until one answers zero,
    /// filtering by every nonzero answer on the way.
    fn resolve(
        &self,
        mut set: CandidateSet,
        policy: &ProbePolicy,
        phases: &mut Vec<PhaseRecord>,
    ) -> Result<u64> {
        let ctx = self.oracle.context();
        let start = self.oracle.call_count();
        loop {
            match set.len() {
                0 => return Err(Error::InconsistentAnswers),
                1 => break,
                _ => {}
            }
            let probe = set
                .members()
                .iter()
                .map(|&t| ctx.neg(t))
                .find(|&x| !self.oracle.is_forbidden(x));
            match probe {
                Some(x) => {
                    let a = self.oracle.query(x)?;
                    if a == 0 {
                        set = CandidateSet::new([ctx.neg(x)], Provenance::Narrowed);
                        break;
                    }
                    let kept = set
                        .members()
                        .iter()
                        .copied()
                        .filter(|&t| self.pm.shifted(x, t) == a);
                    set = CandidateSet::new(kept, Provenance::Narrowed);
                }
                None => {
                    let window = policy.cap(ctx.p());
                    set = self
                        .narrow(&set, policy, Statistic::RatioPairs, window)?
                        .candidates;
                }
            }
        }
        phases.push(PhaseRecord {
            phase: Phase::Resolution,
            calls: outcome_calls(self.oracle, start),
            candidates: 1,
            probe: None,
            window: None,
        });
        Ok(set.members()[0])
    }

    fn record(&self, phases: &mut Vec<PhaseRecord>, round: &Narrowing, stat: Statistic) {
        phases.push(PhaseRecord {
            phase: match stat {
                Statistic::PairFiber => Phase::FiberNarrowing,
                Statistic::RatioPairs => Phase::RatioNarrowing,
            },
            calls: round.calls,
            candidates: round.candidates.len(),
            probe: Some(round.probe),
            window: Some(round.window),
        });
    }
}

/// One narrowing round with the phase-formula starting window.
pub fn narrow_candidates(
    oracle: &ShiftOracle,
    set: &CandidateSet,
    policy: &ProbePolicy,
    stat: Statistic,
) -> Result<Narrowing> {
    policy.validate()?;
    let window = default_window(
        oracle.context(),
        oracle.params(),
        set.len(),
        stat,
        policy.epsilon,
    );
    Scanner::new(oracle).narrow(set, policy, stat, window)
}

/// One narrowing round starting from an explicit window `[0, window)`.
pub fn narrow_with_window(
    oracle: &ShiftOracle,
    set: &CandidateSet,
    policy: &ProbePolicy,
    stat: Statistic,
    window: u64,
) -> Result<Narrowing> {
    policy.validate()?;
    Scanner::new(oracle).narrow(set, policy, stat, window)
}

/// Finds `s` given a candidate set known to contain it.
pub fn recover_from_candidates(
    oracle: &ShiftOracle,
    initial: &CandidateSet,
    policy: &ProbePolicy,
) -> Result<RecoveryOutcome> {
    policy.validate()?;
    let ctx = oracle.context();
    let params = oracle.params();
    let (p, e) = (ctx.p(), params.e());
    let scanner = Scanner::new(oracle);
    let mut phases = Vec::new();
    let mut set = initial.clone();
    if set.is_empty() {
        return Err(Error::InconsistentAnswers);
    }

    if set.len() > FINAL_RESOLUTION_SIZE {
        if let Some(m) = intersection_depth(p, e) {
            let start = oracle.call_count();
            for j in (1..=m).filter(|&j| j < p) {
                if set.len() <= 1 {
                    break;
                }
                if oracle.is_forbidden(j) {
                    continue;
                }
                let a = oracle.query(j)?;
                let kept = set
                    .members()
                    .iter()
                    .copied()
                    .filter(|&t| scanner.pm.shifted(j, t) == a);
                set = CandidateSet::new(kept, Provenance::Narrowed);
            }
            phases.push(PhaseRecord {
                phase: Phase::ShiftedIntersections,
                calls: outcome_calls(oracle, start),
                candidates: set.len(),
                probe: None,
                window: Some(m),
            });
        }
    }

    // Outside e ≤ p^{0.9} each answer may remove a single candidate, so only
    // strict shrinkage bounds the loop.
    let round_cap = if in_small_regime(p, e) {
        policy.max_rounds as usize
    } else {
        usize::MAX
    };
    let fiber_threshold = (p as f64).powf(0.05);
    let mut rounds = 0;
    while set.len() > FINAL_RESOLUTION_SIZE {
        if rounds >= round_cap {
            return Err(Error::Stalled {
                window: policy.cap(p),
                candidates: set.len(),
            });
        }
        let stat = if set.len() as f64 > fiber_threshold {
            Statistic::PairFiber
        } else {
            Statistic::RatioPairs
        };
        let window = default_window(ctx, params, set.len(), stat, policy.epsilon);
        let round = scanner.narrow(&set, policy, stat, window)?;
        scanner.record(&mut phases, &round, stat);
        set = round.candidates;
        rounds += 1;
    }
    let shift = scanner.resolve(set, policy, &mut phases)?;
    Ok(RecoveryOutcome { shift, phases })
}

/// `ν` probes drawn from a ChaCha8 stream seeded with `seed`, then resolution
/// of whatever survives.
pub fn recover_randomized(
    oracle: &ShiftOracle,
    initial: &CandidateSet,
    seed: u64,
) -> Result<RecoveryOutcome> {
    let ctx = oracle.context();
    let p = ctx.p();
    let nu = randomized_probe_count(p, oracle.params().e());
    let scanner = Scanner::new(oracle);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = oracle.call_count();
    let mut set = initial.clone();
    for _ in 0..nu {
        let x = loop {
            let x = rng.gen_range(0..p);
            if !oracle.is_forbidden(x) {
                break x;
            }
        };
        let a = oracle.query(x)?;
        let kept = set
            .members()
            .iter()
            .copied()
            .filter(|&t| scanner.pm.shifted(x, t) == a);
        set = CandidateSet::new(kept, Provenance::Narrowed);
    }
    let mut phases = vec![PhaseRecord {
        phase: Phase::RandomProbes,
        calls: outcome_calls(oracle, start),
        candidates: set.len(),
        probe: None,
        window: Some(nu),
    }];
    let shift = scanner.resolve(set, &ProbePolicy::default(), &mut phases)?;
    Ok(RecoveryOutcome { shift, phases })
}

/// Zero-call candidates followed by [`recover_from_candidates`].
pub fn recover_small_e(oracle: &ShiftOracle, policy: &ProbePolicy) -> Result<RecoveryOutcome> {
    let witnesses = WitnessSet::nonresidues(oracle.context(), oracle.params())?;
    let start = oracle.call_count();
    let initial = initial_candidates_zero_call(oracle, &witnesses)?;
    let first = PhaseRecord {
        phase: Phase::InitialCandidates,
        calls: outcome_calls(oracle, start),
        candidates: initial.len(),
        probe: None,
        window: None,
    };
    let mut out = recover_from_candidates(oracle, &initial, policy)?;
    out.phases.insert(0, first);
    Ok(out)
}

/// For `e > p^{0.9}`: `m` calls at `j = 1..=m`, a scan of the whole field for
/// the consistent set, then `R`-guided narrowing with window
/// `⌊(p/e)·√p·(ln p)^2⌋`. Smaller `e` go through [`recover_small_e`].
pub fn recover_large_e(oracle: &ShiftOracle, policy: &ProbePolicy) -> Result<RecoveryOutcome> {
    policy.validate()?;
    let ctx = oracle.context();
    let (p, e) = (ctx.p(), oracle.params().e());
    if in_small_regime(p, e) {
        return recover_small_e(oracle, policy);
    }
    if p > FULL_SCAN_CAP {
        return Err(Error::TooLargeForScan(p));
    }
    let scanner = Scanner::new(oracle);
    let m = large_e_call_count(p, e).min(p - 1);
    let start = oracle.call_count();
    let mut answers = Vec::with_capacity(m as usize);
    for j in 1..=m {
        if oracle.is_forbidden(j) {
            continue;
        }
        let a = oracle.query(j)?;
        if a == 0 {
            return Ok(RecoveryOutcome {
                shift: ctx.neg(j),
                phases: vec![PhaseRecord {
                    phase: Phase::FullScan,
                    calls: outcome_calls(oracle, start),
                    candidates: 1,
                    probe: Some(j),
                    window: Some(m),
                }],
            });
        }
        answers.push((j, a));
    }
    let consistent: Vec<u64> = (0..p)
        .into_par_iter()
        .filter(|&x| answers.iter().all(|&(j, a)| scanner.pm.shifted(x, j) == a))
        .collect();
    let mut set = CandidateSet::new(consistent, Provenance::GlobalScan);
    let mut phases = vec![PhaseRecord {
        phase: Phase::FullScan,
        calls: outcome_calls(oracle, start),
        candidates: set.len(),
        probe: None,
        window: Some(m),
    }];
    let pf = p as f64;
    let window = ((pf / e as f64) * pf.sqrt() * pf.ln().powi(2)).floor() as u64;
    let window = window.clamp(1, policy.cap(p));
    while set.len() > FINAL_RESOLUTION_SIZE {
        let round = scanner.narrow(&set, policy, Statistic::RatioPairs, window)?;
        scanner.record(&mut phases, &round, Statistic::RatioPairs);
        set = round.candidates;
    }
    let shift = scanner.resolve(set, policy, &mut phases)?;
    Ok(RecoveryOutcome { shift, phases })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(p: u64, e: u64, s: u64) -> ShiftOracle {
        let ctx = PrimeContext::new(p).unwrap();
        let params = ExponentParams::new(&ctx, e).unwrap();
        ShiftOracle::new(&ctx, &params, s, []).unwrap()
    }

    fn set(members: &[u64]) -> CandidateSet {
        CandidateSet::new(members.iter().copied(), Provenance::Supplied)
    }

    #[test]
    fn interpolation_examples() {
        let o = setup(13, 3, 5);
        assert_eq!(interpolation_recover(&o).unwrap().shift, 5);
        assert_eq!(o.call_count(), 4);
        let o = setup(13, 1, 7);
        assert_eq!(interpolation_recover(&o).unwrap().shift, 7);
        assert_eq!(o.call_count(), 2);
        let o = setup(13, 12, 0);
        assert_eq!(interpolation_recover(&o).unwrap().shift, 0);
        assert_eq!(o.call_count(), 13);
    }

    #[test]
    fn zero_call_examples() {
        let cases: [(u64, u64, &[u64]); 3] =
            [(3, 5, &[2, 5, 6]), (3, 0, &[0]), (4, 1, &[1, 5, 8, 12])];
        for (e, s, want) in cases {
            let o = setup(13, e, s);
            let w = WitnessSet::nonresidues(o.context(), o.params()).unwrap();
            let got = initial_candidates_zero_call(&o, &w).unwrap();
            assert_eq!(got.members(), want);
            assert_eq!(o.call_count(), 1);
        }
    }

    #[test]
    fn smooth_examples() {
        let o = setup(13, 3, 5);
        let (cands, w) = initial_candidates_smooth_bound(&o, 2).unwrap();
        assert_eq!(w.modulus(), 1);
        assert_eq!(w.get(3).unwrap().nonresidue, Some(2));
        assert_eq!(o.call_count(), 2);
        assert!(cands.contains(5));

        let o = setup(13, 3, 5);
        let (cands, w) = initial_candidates_smooth_bound(&o, 1).unwrap();
        assert_eq!(w.modulus(), 3);
        assert_eq!(o.call_count(), 4);
        assert!(cands.contains(5));

        let o = setup(101, 1, 42);
        let (cands, w) = initial_candidates_smooth(&o, 0.05).unwrap();
        assert_eq!(w.modulus(), 1);
        assert_eq!(cands.members(), &[42]);
        assert_eq!(o.call_count(), 2);
    }

    #[test]
    fn statistic_examples() {
        let ctx = PrimeContext::new(13).unwrap();
        let params = ExponentParams::new(&ctx, 3).unwrap();
        assert_eq!(probe_dilation(&ctx), 9);
        let s = set(&[4, 5]);
        assert_eq!(fiber_statistic(&ctx, &params, &s, 1), 1);
        assert_eq!(fiber_statistic(&ctx, &params, &s, 0), 1);
        assert_eq!(fiber_statistic(&ctx, &params, &set(&[7]), 3), 1);
        assert_eq!(ratio_pair_statistic(&ctx, &params, &s, 1), 2);
        assert_eq!(ratio_pair_statistic(&ctx, &params, &s, 0), 0);
        assert_eq!(ratio_pair_statistic(&ctx, &params, &set(&[7]), 3), 0);
    }

    #[test]
    fn narrow_examples() {
        let policy = ProbePolicy::default();
        let o = setup(13, 3, 5);
        let round =
            narrow_candidates(&o, &set(&[2, 5, 6]), &policy, Statistic::RatioPairs).unwrap();
        assert_eq!(round.candidates.members(), &[5]);
        assert_eq!(round.probe, 1);
        assert_eq!(o.call_count(), 1);

        // r(0) = 1 already separates {4, 5}; the probe pairs with itself.
        let o = setup(13, 3, 5);
        let round = narrow_candidates(&o, &set(&[4, 5]), &policy, Statistic::PairFiber).unwrap();
        assert_eq!(round.candidates.members(), &[5]);
        assert_eq!(round.probe, 0);
        assert_eq!(o.call_count(), 1);

        // With x = 0 forbidden the probe moves to x = 1 and queries x and ζx.
        let base = setup(13, 3, 5);
        let o = ShiftOracle::new(base.context(), base.params(), 5, [0]).unwrap();
        let round = narrow_candidates(&o, &set(&[4, 5]), &policy, Statistic::PairFiber).unwrap();
        assert_eq!(round.probe, 1);
        assert_eq!(round.candidates.members(), &[5]);
        assert_eq!(o.call_count(), 2);
    }

    #[test]
    fn narrowing_grows_window_until_separation() {
        // e = p - 1: only x = -t separates, far outside a window of 1.
        let o = setup(31, 30, 17);
        let policy = ProbePolicy::default();
        let round =
            narrow_with_window(&o, &set(&[16, 17]), &policy, Statistic::RatioPairs, 1).unwrap();
        assert!(round.window >= 14);
        assert!(round.candidates.contains(17));
        assert!(round.candidates.len() < 2);

        let capped = ProbePolicy {
            window_cap: Some(4),
            ..ProbePolicy::default()
        };
        assert!(matches!(
            narrow_with_window(&o, &set(&[16, 17]), &capped, Statistic::RatioPairs, 1),
            Err(Error::Stalled { .. })
        ));
    }

    #[test]
    fn recover_from_candidates_examples() {
        let policy = ProbePolicy::default();
        let o = setup(13, 3, 5);
        assert_eq!(
            recover_from_candidates(&o, &set(&[2, 5, 6]), &policy)
                .unwrap()
                .shift,
            5
        );
        let o = setup(13, 3, 5);
        assert_eq!(
            recover_from_candidates(&o, &set(&[5]), &policy)
                .unwrap()
                .shift,
            5
        );
        assert!(o.call_count() <= 1);

        for s in [0u64, 1, 17, 500, 1008] {
            let o = setup(1009, 12, s);
            let out = recover_small_e(&o, &policy).unwrap();
            assert_eq!(out.shift, s);
            assert!(o.call_count() <= 10, "s={s} calls={}", o.call_count());
        }
    }

    #[test]
    fn randomized_examples() {
        assert_eq!(randomized_probe_count(13, 3), 6);
        assert_eq!(randomized_probe_count(1009, 12), 5);
        let run = |seed| {
            let o = setup(13, 3, 5);
            let w = WitnessSet::nonresidues(o.context(), o.params()).unwrap();
            let s0 = initial_candidates_zero_call(&o, &w).unwrap();
            let out = recover_randomized(&o, &s0, seed).unwrap();
            (out, o.call_count())
        };
        let (a, calls_a) = run(42);
        let (b, calls_b) = run(42);
        assert_eq!(a.shift, 5);
        assert_eq!(a, b);
        assert_eq!(calls_a, calls_b);
    }

    #[test]
    fn large_e_examples() {
        assert_eq!(large_e_call_count(13, 6), 1);
        assert_eq!(large_e_call_count(13, 12), 2);
        let policy = ProbePolicy::default();
        let o = setup(13, 12, 7);
        assert_eq!(recover_large_e(&o, &policy).unwrap().shift, 7);
        let o = setup(13, 12, 12);
        assert_eq!(recover_large_e(&o, &policy).unwrap().shift, 12);
        assert_eq!(o.call_count(), 1);
        // e = 6 ≤ 13^{0.9} takes the adaptive route.
        let o = setup(13, 6, 12);
        assert_eq!(recover_large_e(&o, &policy).unwrap().shift, 12);
    }

    #[test]
    fn intersection_depth_condition() {
        assert_eq!(intersection_depth(1009, 16), Some(3));
        assert_eq!(intersection_depth(1009, 504), None);
        assert_eq!(intersection_depth(13, 3), None);
    }

    #[test]
    fn policy_validation() {
        let bad = ProbePolicy {
            epsilon: 0.6,
            ..ProbePolicy::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProbePolicy {
            stall_factor: 1,
            ..ProbePolicy::default()
        };
        assert!(bad.validate().is_err());
    }
}
