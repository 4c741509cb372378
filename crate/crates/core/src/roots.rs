//! Deterministic solution of binomial equations `x^e = A` over `F_p`, with
//! optional divisibility restrictions on `ind x`, and the candidate-set builder
//! for the system `(x + j)^e = A_j`, `j = 0..n`.
//!
//! Roots of prime degree `r` inside a cyclic subgroup are extracted from a
//! supplied `r`-th power nonresidue: the nonresidue generates the `r`-Sylow
//! part, a discrete logarithm there (digit by digit, `r` steps per digit)
//! corrects a coprime-exponent guess, and the remaining roots differ by
//! powers of a primitive `r`-th root of unity.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{inv_mod, ExponentParams, PrimeContext};

/// Witness for one prime `ℓ | e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Witness {
    pub ell: u64,
    /// `α` with `ℓ^α ∥ p - 1`.
    pub alpha: u32,
    /// Chosen exponent `γ ≤ α`.
    pub gamma: u32,
    /// An `ℓ^{γ+1}`-th power nonresidue; absent exactly when `γ = α`.
    pub nonresidue: Option<u64>,
}

/// Per-prime witnesses for `e`, with the derived modulus `n = ∏ ℓ^γ_ℓ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessSet {
    entries: Vec<Witness>,
    n: u64,
}

impl WitnessSet {
    /// Validates `(ℓ, γ_ℓ, w_ℓ)` triples against `p` and `e`.
    pub fn new(
        ctx: &PrimeContext,
        params: &ExponentParams,
        entries: impl IntoIterator<Item = (u64, u32, Option<u64>)>,
    ) -> Result<Self> {
        let mut out: Vec<Witness> = Vec::new();
        for (ell, gamma, w) in entries {
            if !params.e_factors().iter().any(|&(q, _)| q == ell) {
                return Err(Error::NotDividing {
                    e: ell,
                    modulus_minus_one: params.e(),
                });
            }
            let alpha = ctx.multiplicity(ell);
            if gamma > alpha {
                return Err(Error::OutOfRange {
                    what: "gamma",
                    value: u64::from(gamma),
                });
            }
            let nonresidue = if gamma < alpha {
                let w = w.ok_or(Error::IncompleteWitnesses(ell))?;
                let w = ctx.reduce(w);
                if w == 0 || ctx.pow(w, (ctx.p() - 1) / ell.pow(gamma + 1)) == 1 {
                    return Err(Error::BadWitness(w));
                }
                Some(w)
            } else {
                None
            };
            out.retain(|x| x.ell != ell);
            out.push(Witness {
                ell,
                alpha,
                gamma,
                nonresidue,
            });
        }
        out.sort_by_key(|w| w.ell);
        let n = out.iter().map(|w| w.ell.pow(w.gamma)).product();
        Ok(WitnessSet { entries: out, n })
    }

    /// Least `ℓ`-th power nonresidue for every prime `ℓ | e`, all with `γ = 0`.
    pub fn nonresidues(ctx: &PrimeContext, params: &ExponentParams) -> Result<Self> {
        let entries = params
            .e_factors()
            .iter()
            .map(|&(ell, _)| Ok((ell, 0, Some(ctx.least_nonresidue(ell)?))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ctx, params, entries)
    }

    /// `n = ∏ ℓ^γ_ℓ`.
    pub fn modulus(&self) -> u64 {
        self.n
    }

    pub fn entries(&self) -> &[Witness] {
        &self.entries
    }

    pub fn get(&self, ell: u64) -> Option<&Witness> {
        self.entries.iter().find(|w| w.ell == ell)
    }

    fn require_all(&self, params: &ExponentParams) -> Result<()> {
        for &(ell, _) in params.e_factors() {
            if self.get(ell).is_none() {
                return Err(Error::IncompleteWitnesses(ell));
            }
        }
        Ok(())
    }
}

fn check_subgroup_order(ctx: &PrimeContext, m: u64) -> Result<()> {
    if m == 0 || !(ctx.p() - 1).is_multiple_of(m) {
        return Err(Error::NotDividing {
            e: m,
            modulus_minus_one: ctx.p() - 1,
        });
    }
    Ok(())
}

/// Unique solution of `x^d = a` in the order-`m` subgroup when `gcd(d, m) = 1`.
pub fn root_coprime(ctx: &PrimeContext, m: u64, d_exp: u64, a: u64) -> Result<u64> {
    check_subgroup_order(ctx, m)?;
    let a = ctx.reduce(a);
    if a == 0 || ctx.pow(a, m) != 1 {
        return Err(Error::NotInSubgroup(a));
    }
    let f = inv_mod(d_exp % m, m).ok_or(Error::NotCoprime {
        exp: d_exp,
        order: m,
    })?;
    // m = 1: the subgroup is {1} and inv_mod yields 0.
    Ok(ctx.pow(a, f))
}

/// Discrete log of `h` to base `z`, where `z` has order `r^k`.
fn sylow_log(ctx: &PrimeContext, z: u64, r: u64, k: u32, h: u64) -> u64 {
    let order = r.pow(k);
    let unit = ctx.pow(z, order / r);
    let z_inv = ctx.inv(z).expect("generator is a unit");
    let mut log = 0u64;
    let mut scale = 1u64;
    for i in 0..k {
        let residual = ctx.mul(h, ctx.pow(z_inv, log));
        let probe = ctx.pow(residual, r.pow(k - 1 - i));
        let mut acc = 1;
        let digit = (0..r)
            .find(|_| {
                let hit = acc == probe;
                acc = ctx.mul(acc, unit);
                hit
            })
            .expect("element lies in the Sylow subgroup");
        log += digit * scale;
        scale *= r;
    }
    log
}

/// All solutions of `x^r = a` inside the order-`m` subgroup of `F_p^*`, given
/// `b` from that subgroup with no `r`-th root there. Returns either nothing or
/// exactly `r` roots, sorted.
pub fn roots_prime_given_witness(
    ctx: &PrimeContext,
    m: u64,
    r: u64,
    b: u64,
    a: u64,
) -> Result<Vec<u64>> {
    check_subgroup_order(ctx, m)?;
    if r < 2 || !m.is_multiple_of(r) {
        return Err(Error::NotDividing {
            e: r,
            modulus_minus_one: m,
        });
    }
    let (a, b) = (ctx.reduce(a), ctx.reduce(b));
    if b == 0 || ctx.pow(b, m) != 1 {
        return Err(Error::NotInSubgroup(b));
    }
    if ctx.pow(b, m / r) == 1 {
        return Err(Error::BadWitness(b));
    }
    if a == 0 || ctx.pow(a, m) != 1 {
        return Err(Error::NotInSubgroup(a));
    }
    if ctx.pow(a, m / r) != 1 {
        return Ok(Vec::new());
    }
    let mut k = 0;
    let mut q = m;
    while q.is_multiple_of(r) {
        q /= r;
        k += 1;
    }
    let rk = m / q;
    // r·u ≡ 1 (mod q); the defect a^{ru-1} lands in the r-Sylow subgroup.
    let u = if q == 1 {
        0
    } else {
        inv_mod(r % q, q).expect("r ∤ q")
    };
    let guess = ctx.pow(a, u);
    let defect_exp = ((r as u128 * u as u128 + m as u128 - 1) % m as u128) as u64;
    let defect = ctx.pow(a, defect_exp);
    let z = ctx.pow(b, q);
    let log = sylow_log(ctx, z, r, k, defect);
    debug_assert_eq!(log % r, 0);
    let root = ctx.mul(guess, ctx.pow(z, (rk - log / r) % rk));
    let unity = ctx.pow(z, rk / r);
    let mut out = Vec::with_capacity(r as usize);
    let mut x = root;
    for _ in 0..r {
        out.push(x);
        x = ctx.mul(x, unity);
    }
    out.sort_unstable();
    Ok(out)
}

/// Every solution of `x^e = A`: `{0}` for `A = 0`, otherwise empty or a coset
/// of `G_e`. Needs a `γ = 0` witness (an `ℓ`-th power nonresidue) per `ℓ | e`.
pub fn all_eth_roots(
    ctx: &PrimeContext,
    params: &ExponentParams,
    a: u64,
    witnesses: &WitnessSet,
) -> Result<Vec<u64>> {
    let a = ctx.reduce(a);
    let mut plan = Vec::new();
    for &(ell, mult) in params.e_factors() {
        match witnesses.get(ell) {
            Some(Witness {
                gamma: 0,
                nonresidue: Some(w),
                ..
            }) => plan.push((ell, mult, *w)),
            _ => return Err(Error::IncompleteWitnesses(ell)),
        }
    }
    if a == 0 {
        return Ok(vec![0]);
    }
    let m = ctx.p() - 1;
    let mut frontier = vec![a];
    for (ell, mult, w) in plan {
        for _ in 0..mult {
            let mut next = Vec::with_capacity(frontier.len() * ell as usize);
            for y in frontier {
                next.extend(roots_prime_given_witness(ctx, m, ell, w, y)?);
            }
            frontier = next;
            if frontier.is_empty() {
                return Ok(frontier);
            }
        }
    }
    frontier.sort_unstable();
    Ok(frontier)
}

/// Largest `γ ≤ cap` with `ℓ^γ | ind w`, found by testing `w^{(p-1)/ℓ^γ} = 1`.
fn index_valuation(ctx: &PrimeContext, ell: u64, cap: u32, w: u64) -> u32 {
    (0..=cap)
        .rev()
        .find(|&g| ctx.pow(w, (ctx.p() - 1) / ell.pow(g)) == 1)
        .unwrap_or(0)
}

/// All `x` with `x^ℓ = A` and `ℓ^β | ind x`, where `ℓ^α ∥ p - 1` and
/// `β ≤ α`. For `β < α` a `ℓ^{β+1}`-th power nonresidue is required; for
/// `β = α` the solution is unique (or absent) and no witness is used.
pub fn restricted_roots(
    ctx: &PrimeContext,
    ell: u64,
    beta: u32,
    witness: Option<u64>,
    a: u64,
) -> Result<Vec<u64>> {
    let alpha = ctx.multiplicity(ell);
    if alpha == 0 {
        return Err(Error::NotDividing {
            e: ell,
            modulus_minus_one: ctx.p() - 1,
        });
    }
    if beta > alpha {
        return Err(Error::OutOfRange {
            what: "beta",
            value: u64::from(beta),
        });
    }
    let a = ctx.reduce(a);
    if a == 0 {
        return Err(Error::ZeroArgument);
    }
    let order = ctx.p() - 1;
    if beta == alpha {
        let m = order / ell.pow(alpha);
        if ctx.pow(a, m) != 1 {
            return Ok(Vec::new());
        }
        return Ok(vec![root_coprime(ctx, m, ell, a)?]);
    }
    let w = ctx.reduce(witness.ok_or(Error::IncompleteWitnesses(ell))?);
    if w == 0 || ctx.pow(w, order / ell.pow(beta + 1)) == 1 {
        return Err(Error::BadWitness(w));
    }
    let gamma = index_valuation(ctx, ell, beta, w);
    // ℓ^β ∥ ind b, so b is a non-ℓ-th power in {x : ℓ^β | ind x}.
    let b = ctx.pow(w, ell.pow(beta - gamma));
    let m = order / ell.pow(beta);
    if ctx.pow(a, m) != 1 {
        return Ok(Vec::new());
    }
    roots_prime_given_witness(ctx, m, ell, b, a)
}

/// All `x` with `x^e = A` and `n | ind x`, `n` taken from the witnesses.
pub fn roots_with_index_divisibility(
    ctx: &PrimeContext,
    params: &ExponentParams,
    witnesses: &WitnessSet,
    a: u64,
) -> Result<Vec<u64>> {
    witnesses.require_all(params)?;
    let a = ctx.reduce(a);
    if a == 0 {
        return Err(Error::ZeroArgument);
    }
    let mut frontier = vec![a];
    for &(ell, mult) in params.e_factors() {
        let wit = witnesses.get(ell).expect("checked above");
        // Peel x^{ℓ^mult} = y one ℓ-th root at a time; the j-th intermediate
        // power x^{ℓ^j} must have ℓ^{min(γ + j, α)} | ind.
        for j in (0..mult).rev() {
            let beta = (wit.gamma + j).min(wit.alpha);
            let mut next = Vec::new();
            for y in frontier {
                next.extend(restricted_roots(ctx, ell, beta, wit.nonresidue, y)?);
            }
            frontier = next;
            if frontier.is_empty() {
                return Ok(frontier);
            }
        }
    }
    frontier.sort_unstable();
    frontier.dedup();
    Ok(frontier)
}

/// Exact solution set of `(x + j)^e = A_j`, `j = 0..n`, where `n` is the
/// witness modulus.
pub fn candidates_from_consecutive_powers(
    ctx: &PrimeContext,
    params: &ExponentParams,
    witnesses: &WitnessSet,
    answers: &[u64],
) -> Result<Vec<u64>> {
    witnesses.require_all(params)?;
    let n = witnesses.modulus();
    if answers.len() as u64 != n + 1 {
        return Err(Error::LengthMismatch {
            expected: (n + 1) as usize,
            got: answers.len(),
        });
    }
    let answers: Vec<u64> = answers.iter().map(|&a| ctx.reduce(a)).collect();
    let satisfies = |x: u64| {
        answers
            .iter()
            .enumerate()
            .all(|(j, &a)| ctx.pow(ctx.add(x, j as u64), params.e()) == a)
    };
    if let Some(j) = answers.iter().position(|&a| a == 0) {
        let x = ctx.neg(j as u64);
        return Ok(if satisfies(x) { vec![x] } else { Vec::new() });
    }
    let pairs: Vec<(u64, u64)> = (0..=n)
        .flat_map(|j1| (j1 + 1..=n).map(move |j2| (j1, j2)))
        .collect();
    let found: Vec<Vec<u64>> = pairs
        .par_iter()
        .map(|&(j1, j2)| -> Result<Vec<u64>> {
            let ratio = ctx.div(answers[j2 as usize], answers[j1 as usize])?;
            let mut xs = Vec::new();
            for y in roots_with_index_divisibility(ctx, params, witnesses, ratio)? {
                if y == 1 {
                    continue;
                }
                let x = ctx.sub(ctx.div(j2 - j1, ctx.sub(y, 1))?, j1);
                if satisfies(x) {
                    xs.push(x);
                }
            }
            Ok(xs)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<u64> = found.into_iter().flatten().collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
