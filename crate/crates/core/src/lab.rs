//! Exact counters for the finite quantities behind the probe-window and
//! candidate-set bounds, with report rows comparing them to the asymptotic
//! predictions.

use std::collections::{HashMap, HashSet};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{gcd, isqrt, ExponentParams, IndexTable, PowerMap, PrimeContext};

/// Largest `p` for exhaustive scans of the whole field.
pub const FIELD_SCAN_CAP: u64 = 1_000_000;

/// Largest number of tuples enumerated by a single product counter.
pub const ENUMERATION_CAP: u64 = 100_000_000;

/// Largest `x` accepted by [`psi_count`].
pub const PSI_CAP: u64 = 100_000_000;

fn require_field_scan(p: u64) -> Result<()> {
    if p > FIELD_SCAN_CAP {
        return Err(Error::TooLarge {
            what: "p (field scan)",
            value: p,
            cap: FIELD_SCAN_CAP,
        });
    }
    Ok(())
}

fn require_below_p(ctx: &PrimeContext, h: u64) -> Result<()> {
    if h >= ctx.p() {
        return Err(Error::OutOfRange {
            what: "bound H (must be < p)",
            value: h,
        });
    }
    Ok(())
}

fn checked_power(base: u64, exp: u32, what: &'static str) -> Result<u64> {
    match base.checked_pow(exp) {
        Some(v) if v <= ENUMERATION_CAP => Ok(v),
        _ => Err(Error::TooLarge {
            what,
            value: base.saturating_pow(exp),
            cap: ENUMERATION_CAP,
        }),
    }
}

/// `N(e)`: the longest run `x+1, ..., x+H` inside a single coset `r·G_e`.
///
/// Two nonzero elements share a coset exactly when their `e`-th powers agree,
/// and 0 lies in no coset, so runs never cross it.
pub fn longest_coset_run(ctx: &PrimeContext, params: &ExponentParams) -> Result<u64> {
    require_field_scan(ctx.p())?;
    let pm = PowerMap::new(ctx, params.e());
    let (mut best, mut run, mut prev) = (0u64, 0u64, None);
    for x in 1..ctx.p() {
        let label = pm.shifted(x, 0);
        run = if prev == Some(label) { run + 1 } else { 1 };
        best = best.max(run);
        prev = Some(label);
    }
    Ok(best)
}

/// Solutions of `(x + u)(y + u) ≡ v` with `1 ≤ x, y ≤ H`.
pub fn hyperbola_count(ctx: &PrimeContext, u: u64, v: u64, h: u64) -> Result<u64> {
    let (u, v) = (ctx.reduce(u), ctx.reduce(v));
    if v == 0 {
        return Err(Error::BadV);
    }
    require_below_p(ctx, h)?;
    let count = (1..=h)
        .filter(|&x| {
            let a = ctx.add(x, u);
            a != 0 && {
                let y = ctx.sub(ctx.div(v, a).expect("a ≠ 0"), u);
                (1..=h).contains(&y)
            }
        })
        .count();
    Ok(count as u64)
}

/// Solutions of `(a + x_1)(a + x_2) ≡ (a + x_3)(a + x_4)` in `[1, H]^4`, as the
/// sum of squared multiplicities of the pair products.
pub fn multiplicative_energy_count(ctx: &PrimeContext, a: u64, h: u64) -> Result<u64> {
    require_below_p(ctx, h)?;
    checked_power(h, 2, "H^2 (energy histogram)")?;
    let a = ctx.reduce(a);
    let mut hist: HashMap<u64, u64> = HashMap::new();
    for x1 in 1..=h {
        let l = ctx.add(a, x1);
        for x2 in 1..=h {
            *hist.entry(ctx.mul(l, ctx.add(a, x2))).or_insert(0) += 1;
        }
    }
    Ok(hist.values().map(|c| c * c).sum())
}

/// `#(G_e ∩ (λ_1 G_e + μ_1) ∩ ... ∩ (λ_m G_e + μ_m))`.
pub fn subgroup_shift_intersection(
    ctx: &PrimeContext,
    params: &ExponentParams,
    shifts: &[(u64, u64)],
) -> Result<u64> {
    let shifts: Vec<(u64, u64)> = shifts
        .iter()
        .map(|&(l, m)| (ctx.reduce(l), ctx.reduce(m)))
        .collect();
    for (i, &(lambda, mu)) in shifts.iter().enumerate() {
        if lambda == 0 || mu == 0 || shifts[..i].iter().any(|&(_, m)| m == mu) {
            return Err(Error::DegenerateShift(lambda, mu));
        }
    }
    let inverses: Vec<(u64, u64)> = shifts
        .iter()
        .map(|&(l, m)| (ctx.inv(l).expect("λ ≠ 0"), m))
        .collect();
    let e = params.e();
    let count = crate::field::subgroup_elements(ctx, params)
        .into_iter()
        .filter(|&g| {
            inverses.iter().all(|&(l_inv, mu)| {
                let z = ctx.mul(ctx.sub(g, mu), l_inv);
                z != 0 && ctx.pow(z, e) == 1
            })
        })
        .count();
    Ok(count as u64)
}

fn validate_fold(nu: u32) -> Result<()> {
    if !(1..=4).contains(&nu) {
        return Err(Error::OutOfRange {
            what: "fold ν (1..=4)",
            value: u64::from(nu),
        });
    }
    Ok(())
}

/// Histogram of `∏(x_i + s)` over `[1, h]^k`.
fn product_histogram(ctx: &PrimeContext, k: u32, s: u64, h: u64) -> HashMap<u64, u64> {
    let mut hist = HashMap::from([(1u64, 1u64)]);
    for _ in 0..k {
        let mut next = HashMap::with_capacity(hist.len() * h as usize);
        for (&v, &c) in &hist {
            for x in 1..=h {
                *next.entry(ctx.mul(v, ctx.add(x, s))).or_insert(0) += c;
            }
        }
        hist = next;
    }
    hist
}

/// `J_ν(λ; h)`: tuples in `[1, h]^ν` with `∏(x_i + s) ≡ λ`, by meet in the middle.
pub fn product_count_j(ctx: &PrimeContext, nu: u32, lambda: u64, s: u64, h: u64) -> Result<u64> {
    validate_fold(nu)?;
    let (lambda, s) = (ctx.reduce(lambda), ctx.reduce(s));
    if lambda == 0 {
        return Err(Error::ZeroArgument);
    }
    require_below_p(ctx, h)?;
    let (left, right) = (nu / 2, nu - nu / 2);
    checked_power(h, right, "h^⌈ν/2⌉ (meet in the middle)")?;
    let left_hist = product_histogram(ctx, left, s, h);
    let right_hist = product_histogram(ctx, right, s, h);
    let count = right_hist
        .iter()
        .filter(|(&r, _)| r != 0)
        .map(|(&r, &c)| {
            let want = ctx.div(lambda, r).expect("r ≠ 0");
            c * left_hist.get(&want).copied().unwrap_or(0)
        })
        .sum();
    Ok(count)
}

/// [`product_count_j`] by the direct `ν`-fold loop; requires `h^ν ≤ 10^8`.
pub fn product_count_j_direct(
    ctx: &PrimeContext,
    nu: u32,
    lambda: u64,
    s: u64,
    h: u64,
) -> Result<u64> {
    validate_fold(nu)?;
    let (lambda, s) = (ctx.reduce(lambda), ctx.reduce(s));
    if lambda == 0 {
        return Err(Error::ZeroArgument);
    }
    require_below_p(ctx, h)?;
    let total = checked_power(h, nu, "h^ν (direct loop)")?;
    let mut count = 0;
    let mut digits = vec![1u64; nu as usize];
    for _ in 0..total {
        let prod = digits.iter().fold(1, |acc, &x| ctx.mul(acc, ctx.add(x, s)));
        if prod == lambda {
            count += 1;
        }
        for d in digits.iter_mut() {
            if *d < h {
                *d += 1;
                break;
            }
            *d = 1;
        }
    }
    Ok(count)
}

/// `|A^{(ν)}|` for `A = {x + s}` (linear, `t = None`) or
/// `A = {(x + s)/(x + t) : x ≢ -t}` (fractional), `1 ≤ x ≤ h`.
pub fn product_set_size(
    ctx: &PrimeContext,
    nu: u32,
    s: u64,
    t: Option<u64>,
    h: u64,
) -> Result<u64> {
    validate_fold(nu)?;
    require_below_p(ctx, h)?;
    let s = ctx.reduce(s);
    let base: HashSet<u64> = match t.map(|t| ctx.reduce(t)) {
        None => (1..=h).map(|x| ctx.add(x, s)).collect(),
        Some(t) if t == s => return Err(Error::DegeneratePair),
        Some(t) => (1..=h)
            .filter(|&x| ctx.add(x, t) != 0)
            .map(|x| ctx.div(ctx.add(x, s), ctx.add(x, t)).expect("x + t ≠ 0"))
            .collect(),
    };
    checked_power(base.len().max(1) as u64, nu, "|A|^ν (product set)")?;
    let mut set: HashSet<u64> = base.clone();
    for _ in 1..nu {
        set = set
            .iter()
            .flat_map(|&a| base.iter().map(move |&b| ctx.mul(a, b)))
            .collect();
    }
    Ok(set.len() as u64)
}

/// Output of [`spaced_partition`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpacedPartition {
    pub d_sets: Vec<Vec<u64>>,
    pub e_sets: Vec<Vec<u64>>,
    pub leftover: Vec<u64>,
}

/// Which of the four partition properties hold, plus the structural ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionCheck {
    /// Parts are disjoint subsets of `S` and, with the leftover, cover `S`.
    pub covers: bool,
    /// Every part has at least `0.25·p^{-κ}·|S|^{1/2}` elements.
    pub sizes: bool,
    /// Every `D_k` is `√p/3`-spaced.
    pub d_spaced: bool,
    /// Every `ξ·E_ℓ` is `√p/3`-spaced.
    pub e_spaced: bool,
    /// The leftover has at most `2·p^{-κ}·|S|` elements.
    pub leftover: bool,
}

impl PartitionCheck {
    pub fn all(&self) -> bool {
        self.covers && self.sizes && self.d_spaced && self.e_spaced && self.leftover
    }
}

/// `|x|`: distance from `x` to 0 in `Z/p`.
pub fn circular_abs(p: u64, x: u64) -> u64 {
    let x = x % p;
    x.min(p - x)
}

fn is_spaced(p: u64, set: &[u64], spacing: f64) -> bool {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != set.len() {
        return false;
    }
    if sorted.len() < 2 {
        return true;
    }
    // On a circle the minimum pairwise distance is attained by neighbours.
    let wrap = circular_abs(p, sorted[0] + p - sorted[sorted.len() - 1]);
    sorted
        .windows(2)
        .map(|w| circular_abs(p, w[1] - w[0]))
        .chain(std::iter::once(wrap))
        .all(|d| d as f64 >= spacing)
}

fn spacing(p: u64) -> f64 {
    (p as f64).sqrt() / 3.0
}

/// Greedy sweep: a maximal (not extendable) `U`-spaced subset of sorted `items`.
fn greedy_spaced(p: u64, items: &[u64], u: f64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for &x in items {
        let ok = match (out.first(), out.last()) {
            (Some(&first), Some(&last)) => {
                circular_abs(p, x + p - last) as f64 >= u
                    && circular_abs(p, x + p - first) as f64 >= u
            }
            _ => true,
        };
        if ok {
            out.push(x);
        }
    }
    out
}

/// Splits `S ⊆ F_p` into `√p/3`-spaced sets `D_k`, sets `E_ℓ` that become
/// `√p/3`-spaced after dilation by `ξ = ⌊√p⌋`, and a small leftover.
pub fn spaced_partition(ctx: &PrimeContext, set: &[u64], kappa: f64) -> Result<SpacedPartition> {
    let p = ctx.p();
    if p < 37 {
        return Err(Error::OutOfRange {
            what: "p (must be at least 37)",
            value: p,
        });
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(Error::OutOfRange {
            what: "kappa",
            value: kappa.to_bits(),
        });
    }
    let members = normalize_set(ctx, set);
    let threshold = 16.0 * (p as f64).powf(2.0 * kappa);
    if (members.len() as f64) < threshold {
        return Err(Error::TooSmall {
            size: members.len(),
            threshold,
        });
    }
    Ok(partition_unchecked(p, &members, kappa))
}

fn normalize_set(ctx: &PrimeContext, set: &[u64]) -> Vec<u64> {
    let mut members: Vec<u64> = set.iter().map(|&x| ctx.reduce(x)).collect();
    members.sort_unstable();
    members.dedup();
    members
}

fn partition_unchecked(p: u64, members: &[u64], kappa: f64) -> SpacedPartition {
    let u = spacing(p);
    let n = members.len() as f64;
    let root = n.sqrt();
    let mut rest = members.to_vec();
    let mut d_sets = Vec::new();
    let cover = loop {
        let sweep = greedy_spaced(p, &rest, u);
        if (sweep.len() as f64) < root || sweep.is_empty() {
            break sweep;
        }
        rest.retain(|x| sweep.binary_search(x).is_err());
        d_sets.push(sweep);
    };

    // Every remaining element lies within U of a cover point (the sweep is
    // maximal), and each element is near at most two of them.
    let large = (p as f64).powf(-kappa) * root;
    let pieces: Vec<Vec<u64>> = cover
        .iter()
        .map(|&c| {
            rest.iter()
                .copied()
                .filter(|&x| circular_abs(p, x + p - c) as f64 <= u)
                .collect::<Vec<u64>>()
        })
        .filter(|piece| piece.len() as f64 > large)
        .collect();
    let mut owners: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, piece) in pieces.iter().enumerate() {
        for &x in piece {
            owners.entry(x).or_default().push(i);
        }
    }
    let mut e_sets: Vec<Vec<u64>> = vec![Vec::new(); pieces.len()];
    let mut shared: HashMap<(usize, usize), Vec<u64>> = HashMap::new();
    for (&x, who) in &owners {
        match who.as_slice() {
            [only] => e_sets[*only].push(x),
            [a, b, ..] => shared.entry((*a.min(b), *a.max(b))).or_default().push(x),
            [] => {}
        }
    }
    for ((lo, hi), mut common) in shared {
        common.sort_unstable();
        let half = common.len() / 2;
        e_sets[lo].extend_from_slice(&common[..half]);
        e_sets[hi].extend_from_slice(&common[half..]);
    }
    for e in &mut e_sets {
        e.sort_unstable();
    }
    let placed: HashSet<u64> = e_sets.iter().flatten().copied().collect();
    let leftover = rest.into_iter().filter(|x| !placed.contains(x)).collect();
    SpacedPartition {
        d_sets,
        e_sets,
        leftover,
    }
}

/// Mechanical check of a partition of `set` against the four properties.
pub fn check_spaced_partition(
    ctx: &PrimeContext,
    set: &[u64],
    kappa: f64,
    part: &SpacedPartition,
) -> PartitionCheck {
    let p = ctx.p();
    let members = normalize_set(ctx, set);
    let n = members.len() as f64;
    let u = spacing(p);
    let xi = isqrt(p);

    let mut seen = HashSet::new();
    let all_parts = part
        .d_sets
        .iter()
        .chain(&part.e_sets)
        .chain(std::iter::once(&part.leftover));
    let mut covers = true;
    for x in all_parts.flatten() {
        covers &= members.binary_search(x).is_ok() && seen.insert(*x);
    }
    covers &= seen.len() == members.len();

    let min_size = 0.25 * (p as f64).powf(-kappa) * n.sqrt();
    let sizes = part
        .d_sets
        .iter()
        .chain(&part.e_sets)
        .all(|s| s.len() as f64 >= min_size);
    let d_spaced = part.d_sets.iter().all(|s| is_spaced(p, s, u));
    let e_spaced = part.e_sets.iter().all(|s| {
        let dilated: Vec<u64> = s.iter().map(|&x| ctx.mul(xi, x)).collect();
        is_spaced(p, &dilated, u)
    });
    let leftover = part.leftover.len() as f64 <= 2.0 * (p as f64).powf(-kappa) * n;
    PartitionCheck {
        covers,
        sizes,
        d_spaced,
        e_spaced,
        leftover,
    }
}

/// `Σ_{x=1..h, x ≢ -t} χ_j((x + s)/(x + t))`.
pub fn char_sum_fraction(
    table: &IndexTable,
    params: &ExponentParams,
    j: u64,
    s: u64,
    t: u64,
    h: u64,
) -> Result<Complex64> {
    let ctx = table.context();
    let (s, t) = (ctx.reduce(s), ctx.reduce(t));
    if s == t {
        return Err(Error::DegeneratePair);
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for x in 1..=h {
        let den = ctx.add(ctx.reduce(x), t);
        if den == 0 {
            continue;
        }
        let arg = ctx.div(ctx.add(ctx.reduce(x), s), den)?;
        sum += table.character(params, j, arg)?;
    }
    Ok(sum)
}

fn require_nonprincipal(params: &ExponentParams, j: u64) -> Result<()> {
    if j.is_multiple_of(params.d()) {
        return Err(Error::PrincipalCharacter);
    }
    Ok(())
}

/// `Σ_{y=1..h} χ_j(y)`.
pub fn char_sum_interval(
    table: &IndexTable,
    params: &ExponentParams,
    j: u64,
    h: u64,
) -> Result<Complex64> {
    require_nonprincipal(params, j)?;
    (1..=h).try_fold(Complex64::new(0.0, 0.0), |acc, y| {
        Ok(acc + table.character(params, j, y)?)
    })
}

/// `Σ_{x=1..p} χ_j(x^f + a)`.
pub fn char_sum_shifted_power(
    table: &IndexTable,
    params: &ExponentParams,
    j: u64,
    f: u64,
    a: u64,
) -> Result<Complex64> {
    require_nonprincipal(params, j)?;
    let ctx = table.context();
    (1..=ctx.p()).try_fold(Complex64::new(0.0, 0.0), |acc, x| {
        let arg = ctx.add(ctx.pow(ctx.reduce(x), f), ctx.reduce(a));
        Ok(acc + table.character(params, j, arg)?)
    })
}

/// `Ψ(x, y)`: `y`-smooth integers in `[1, x]`, by a segmented sieve that
/// divides out every prime up to `min(y, √x)`.
pub fn psi_count(x: u64, y: u64) -> Result<u64> {
    if x > PSI_CAP {
        return Err(Error::TooLarge {
            what: "x (smooth-number sieve)",
            value: x,
            cap: PSI_CAP,
        });
    }
    if x == 0 {
        return Ok(0);
    }
    if y >= x {
        return Ok(x);
    }
    let bound = y.min(isqrt(x));
    let primes = small_primes(bound);
    const SEGMENT: u64 = 1 << 16;
    let segments = x.div_ceil(SEGMENT);
    let count = (0..segments)
        .into_par_iter()
        .map(|k| {
            let lo = k * SEGMENT + 1;
            let hi = ((k + 1) * SEGMENT).min(x);
            let mut rem: Vec<u64> = (lo..=hi).collect();
            for &q in &primes {
                let first = lo.div_ceil(q) * q;
                let mut m = first;
                while m <= hi {
                    let r = &mut rem[(m - lo) as usize];
                    while (*r).is_multiple_of(q) {
                        *r /= q;
                    }
                    m += q;
                }
            }
            // What survives has only prime factors above the sieve bound;
            // when y ≥ √x it is 1 or a single prime.
            rem.iter().filter(|&&r| r == 1 || r <= y).count() as u64
        })
        .sum();
    Ok(count)
}

fn small_primes(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n as usize + 1];
    let mut out = Vec::new();
    for i in 2..=n as usize {
        if !composite[i] {
            out.push(i as u64);
            let mut k = i * i;
            while k <= n as usize {
                composite[k] = true;
                k += i;
            }
        }
    }
    out
}

fn element_order(ctx: &PrimeContext, x: u64) -> u64 {
    let mut n = ctx.p() - 1;
    for &(ell, _) in ctx.group_order_factors() {
        while n.is_multiple_of(ell) && ctx.pow(x, n / ell) == 1 {
            n /= ell;
        }
    }
    n
}

/// Order of the subgroup of `F_p^*` generated by `1, ..., y`.
///
/// In a cyclic group this is the lcm of the generators' orders, which equals
/// `(p - 1)/gcd(p - 1, ind 1, ..., ind y)`.
pub fn smooth_subgroup_order(ctx: &PrimeContext, y: u64) -> u64 {
    let full = ctx.p() - 1;
    let mut order = 1;
    for x in 2..=y.min(full) {
        let k = element_order(ctx, x);
        order = order / gcd(order, k) * k;
        if order == full {
            break;
        }
    }
    order
}

/// The lab experiments, each keyed by the integer parameters of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// `(p, e)` → `N(e)`, against `√e`.
    CosetRun,
    /// `(p, u, v, h)`, against `h^{3/2}/√p + 1`.
    Hyperbola,
    /// `(p, a, h)`, against `h^4/p + h^2`.
    Energy,
    /// `(p, e, m)` with shifts `(1, j)`, `j = 1..=m`, against `e^{(m+1)/(2m+1)}`.
    ShiftIntersection,
    /// `(p, nu, lambda, s, h)`, against `exp(ln h/ln ln h)`.
    ProductCount,
    /// `(p, nu, s, h)`, against `h^ν·exp(-ln h/ln ln h)`.
    ProductSetLinear,
    /// `(p, nu, s, t, h)`, against `h^ν·exp(-ln h/√(ln ln h))`.
    ProductSetFractional,
    /// `(p, e, j, s, t, h)` → `|Σ|`, against `4√p·ln p`.
    CharSumFraction,
    /// `(p, e, j, h)` → `|Σ|`, against `h^{1/2}·p^{3/16}`.
    CharSumInterval,
    /// `(p, e, j, f, a)` → `|Σ|`, against `f√p`.
    CharSumShiftedPower,
    /// `(x, y)`, against `x·u^{-u}` with `u = ln x/ln y`.
    Psi,
    /// `(p, y)`, against `Ψ(p - 1, y)`.
    SmoothSubgroup,
}

impl Lemma {
    pub const ALL: [Lemma; 12] = [
        Lemma::CosetRun,
        Lemma::Hyperbola,
        Lemma::Energy,
        Lemma::ShiftIntersection,
        Lemma::ProductCount,
        Lemma::ProductSetLinear,
        Lemma::ProductSetFractional,
        Lemma::CharSumFraction,
        Lemma::CharSumInterval,
        Lemma::CharSumShiftedPower,
        Lemma::Psi,
        Lemma::SmoothSubgroup,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Lemma::CosetRun => "coset_run",
            Lemma::Hyperbola => "hyperbola",
            Lemma::Energy => "energy",
            Lemma::ShiftIntersection => "shift_intersection",
            Lemma::ProductCount => "product_count",
            Lemma::ProductSetLinear => "product_set_linear",
            Lemma::ProductSetFractional => "product_set_fractional",
            Lemma::CharSumFraction => "char_sum_fraction",
            Lemma::CharSumInterval => "char_sum_interval",
            Lemma::CharSumShiftedPower => "char_sum_shifted_power",
            Lemma::Psi => "psi",
            Lemma::SmoothSubgroup => "smooth_subgroup",
        }
    }

    pub fn from_id(id: &str) -> Option<Lemma> {
        Lemma::ALL.into_iter().find(|l| l.id() == id)
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Lemma::CosetRun => &["p", "e"],
            Lemma::Hyperbola => &["p", "u", "v", "h"],
            Lemma::Energy => &["p", "a", "h"],
            Lemma::ShiftIntersection => &["p", "e", "m"],
            Lemma::ProductCount => &["p", "nu", "lambda", "s", "h"],
            Lemma::ProductSetLinear => &["p", "nu", "s", "h"],
            Lemma::ProductSetFractional => &["p", "nu", "s", "t", "h"],
            Lemma::CharSumFraction => &["p", "e", "j", "s", "t", "h"],
            Lemma::CharSumInterval => &["p", "e", "j", "h"],
            Lemma::CharSumShiftedPower => &["p", "e", "j", "f", "a"],
            Lemma::Psi => &["x", "y"],
            Lemma::SmoothSubgroup => &["p", "y"],
        }
    }
}

/// Exact count (integer counters) or magnitude (character sums).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabValue {
    Count(u64),
    Magnitude(f64),
}

impl LabValue {
    pub fn as_f64(self) -> f64 {
        match self {
            LabValue::Count(c) => c as f64,
            LabValue::Magnitude(m) => m,
        }
    }
}

/// One grid point. `value` is `None` when the point was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct LabRow {
    pub lemma_id: &'static str,
    pub params: Vec<(&'static str, u64)>,
    pub value: Option<LabValue>,
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
    pub skipped: Option<String>,
}

// Flat layout: lemma_id, one key per parameter in grid order, then the
// measured value and its comparison.
impl Serialize for LabRow {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.params.len() + 6))?;
        map.serialize_entry("lemma_id", self.lemma_id)?;
        for (name, value) in &self.params {
            map.serialize_entry(name, value)?;
        }
        let (count, magnitude) = match self.value {
            Some(LabValue::Count(c)) => (Some(c), None),
            Some(LabValue::Magnitude(m)) => (None, Some(m)),
            None => (None, None),
        };
        map.serialize_entry("exact_count", &count)?;
        map.serialize_entry("magnitude", &magnitude)?;
        map.serialize_entry("predicted", &self.predicted)?;
        map.serialize_entry("ratio", &self.ratio)?;
        map.serialize_entry("skipped", &self.skipped)?;
        map.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSummary {
    pub max: f64,
    pub mean: f64,
    pub rows: usize,
}

/// All rows of one lemma sweep, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabReport {
    pub lemma_id: &'static str,
    pub rows: Vec<LabRow>,
}

impl LabReport {
    /// Max and mean of `count/predicted` over the rows that were evaluated.
    pub fn ratio_summary(&self) -> Option<RatioSummary> {
        let ratios: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).collect();
        if ratios.is_empty() {
            return None;
        }
        Some(RatioSummary {
            max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
            rows: ratios.len(),
        })
    }
}

fn ln_ln_ratio(h: u64) -> Option<f64> {
    let l = (h as f64).ln();
    (l.ln() > 0.0).then(|| l / l.ln())
}

/// Evaluates `lemma` at one grid point. Errors from the counter (including
/// caps) mark the row as skipped rather than failing the sweep.
pub fn evaluate(lemma: Lemma, point: &[u64]) -> LabRow {
    let names = lemma.param_names();
    let params: Vec<(&'static str, u64)> =
        names.iter().copied().zip(point.iter().copied()).collect();
    let outcome = if point.len() != names.len() {
        Err(Error::LengthMismatch {
            expected: names.len(),
            got: point.len(),
        })
    } else {
        evaluate_point(lemma, point)
    };
    match outcome {
        Ok((value, predicted)) => {
            let ratio = (predicted > 0.0).then(|| value.as_f64() / predicted);
            LabRow {
                lemma_id: lemma.id(),
                params,
                value: Some(value),
                predicted: Some(predicted),
                ratio,
                skipped: None,
            }
        }
        Err(err) => LabRow {
            lemma_id: lemma.id(),
            params,
            value: None,
            predicted: None,
            ratio: None,
            skipped: Some(err.to_string()),
        },
    }
}

/// Evaluates every point of a grid in parallel; rows come back in grid order.
pub fn run_grid(lemma: Lemma, grid: &[Vec<u64>]) -> LabReport {
    LabReport {
        lemma_id: lemma.id(),
        rows: grid
            .par_iter()
            .map(|point| evaluate(lemma, point))
            .collect(),
    }
}

fn field(p: u64, e: u64) -> Result<(PrimeContext, ExponentParams)> {
    let ctx = PrimeContext::new(p)?;
    let params = ExponentParams::new(&ctx, e)?;
    Ok((ctx, params))
}

fn character_table(p: u64, e: u64) -> Result<(IndexTable, ExponentParams)> {
    let (ctx, params) = field(p, e)?;
    Ok((IndexTable::build(&ctx)?, params))
}

fn evaluate_point(lemma: Lemma, v: &[u64]) -> Result<(LabValue, f64)> {
    use LabValue::{Count, Magnitude};
    Ok(match lemma {
        Lemma::CosetRun => {
            let (ctx, params) = field(v[0], v[1])?;
            (
                Count(longest_coset_run(&ctx, &params)?),
                (v[1] as f64).sqrt(),
            )
        }
        Lemma::Hyperbola => {
            let ctx = PrimeContext::new(v[0])?;
            let h = v[3] as f64;
            (
                Count(hyperbola_count(&ctx, v[1], v[2], v[3])?),
                h.powf(1.5) / (v[0] as f64).sqrt() + 1.0,
            )
        }
        Lemma::Energy => {
            let ctx = PrimeContext::new(v[0])?;
            let h = v[2] as f64;
            (
                Count(multiplicative_energy_count(&ctx, v[1], v[2])?),
                h.powi(4) / v[0] as f64 + h * h,
            )
        }
        Lemma::ShiftIntersection => {
            let (ctx, params) = field(v[0], v[1])?;
            let m = v[2];
            let shifts: Vec<(u64, u64)> = (1..=m).map(|j| (1, j)).collect();
            (
                Count(subgroup_shift_intersection(&ctx, &params, &shifts)?),
                (v[1] as f64).powf((m + 1) as f64 / (2 * m + 1) as f64),
            )
        }
        Lemma::ProductCount => {
            let ctx = PrimeContext::new(v[0])?;
            let nu = fold(v[1])?;
            (
                Count(product_count_j(&ctx, nu, v[2], v[3], v[4])?),
                ln_ln_ratio(v[4]).map_or(1.0, f64::exp),
            )
        }
        Lemma::ProductSetLinear => {
            let ctx = PrimeContext::new(v[0])?;
            let nu = fold(v[1])?;
            let full = (v[3] as f64).powi(nu as i32);
            (
                Count(product_set_size(&ctx, nu, v[2], None, v[3])?),
                full * ln_ln_ratio(v[3]).map_or(1.0, |r| (-r).exp()),
            )
        }
        Lemma::ProductSetFractional => {
            let ctx = PrimeContext::new(v[0])?;
            let nu = fold(v[1])?;
            let l = (v[4] as f64).ln();
            let decay = if l.ln() > 0.0 {
                (-l / l.ln().sqrt()).exp()
            } else {
                1.0
            };
            (
                Count(product_set_size(&ctx, nu, v[2], Some(v[3]), v[4])?),
                (v[4] as f64).powi(nu as i32) * decay,
            )
        }
        Lemma::CharSumFraction => {
            let (table, params) = character_table(v[0], v[1])?;
            require_nonprincipal(&params, v[2])?;
            let sum = char_sum_fraction(&table, &params, v[2], v[3], v[4], v[5])?;
            let p = v[0] as f64;
            (Magnitude(sum.norm()), 4.0 * p.sqrt() * p.ln())
        }
        Lemma::CharSumInterval => {
            let (table, params) = character_table(v[0], v[1])?;
            let sum = char_sum_interval(&table, &params, v[2], v[3])?;
            (
                Magnitude(sum.norm()),
                (v[3] as f64).sqrt() * (v[0] as f64).powf(3.0 / 16.0),
            )
        }
        Lemma::CharSumShiftedPower => {
            let (table, params) = character_table(v[0], v[1])?;
            let sum = char_sum_shifted_power(&table, &params, v[2], v[3], v[4])?;
            (Magnitude(sum.norm()), v[3] as f64 * (v[0] as f64).sqrt())
        }
        Lemma::Psi => {
            let (x, y) = (v[0], v[1]);
            let predicted = if y >= 2 && x >= y {
                let u = (x as f64).ln() / (y as f64).ln();
                x as f64 * u.powf(-u)
            } else {
                x.min(1) as f64
            };
            (Count(psi_count(x, y)?), predicted)
        }
        Lemma::SmoothSubgroup => {
            let ctx = PrimeContext::new(v[0])?;
            let y = v[1].min(v[0] - 1);
            (
                Count(smooth_subgroup_order(&ctx, y)),
                psi_count(v[0] - 1, y)? as f64,
            )
        }
    })
}

fn fold(nu: u64) -> Result<u32> {
    let nu = u32::try_from(nu).map_err(|_| Error::OutOfRange {
        what: "fold ν (1..=4)",
        value: nu,
    })?;
    validate_fold(nu)?;
    Ok(nu)
}
