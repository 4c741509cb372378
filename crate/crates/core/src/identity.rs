//! Deciding whether two shifted-power oracles hide the same shift.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ExponentParams, PowerMap, PrimeContext};
use crate::lab::longest_coset_run;
use crate::oracle::ShiftOracle;

/// Largest `p` for which the unknown-`t` window is found by exhausting all pairs.
pub const EXACT_PAIR_SCAN_CAP: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HMode {
    /// Asymptotic formulas with explicit `ε` and `c₀`.
    Theoretical,
    /// Smallest window verified sound by exhaustive computation.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    KnownT,
    UnknownT,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPolicy {
    pub mode: HMode,
    pub epsilon: f64,
    pub c0: f64,
    /// Small-`e` refinement: with `e = p^δ`-scale inputs the window is further
    /// capped by `e^{c₀δ}` (known `t`) or `e^{c₀δ^{1/3}}` (unknown `t`).
    pub delta: Option<f64>,
    /// Largest window; `None` means `p - 1`.
    pub cap: Option<u64>,
}

impl Default for HPolicy {
    fn default() -> Self {
        HPolicy {
            mode: HMode::Exact,
            epsilon: 0.05,
            c0: 1.0,
            delta: None,
            cap: None,
        }
    }
}

impl HPolicy {
    pub fn theoretical() -> Self {
        HPolicy {
            mode: HMode::Theoretical,
            ..HPolicy::default()
        }
    }

    fn validate(&self, p: u64) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::OutOfRange {
                what: "epsilon (must be positive)",
                value: self.epsilon.to_bits(),
            });
        }
        if let Some(cap) = self.cap {
            if cap == 0 || cap > p - 1 {
                return Err(Error::OutOfRange {
                    what: "window cap",
                    value: cap,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equal,
    Distinct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentityOutcome {
    pub verdict: Verdict,
    /// Probe points examined (one oracle call each for known `t`, two for unknown `t`).
    pub probes: u64,
    pub h: u64,
    pub calls: u64,
}

fn ceil_window(h: f64) -> u64 {
    if h.is_finite() && h >= 1.0 {
        h.ceil().min(u64::MAX as f64) as u64
    } else {
        1
    }
}

/// Probe-window size for either variant.
///
/// Known `t` probes `y = 1..=h`; unknown `t` probes `x = 0..=h`.
pub fn choose_h(
    ctx: &PrimeContext,
    params: &ExponentParams,
    variant: Variant,
    policy: &HPolicy,
) -> Result<u64> {
    let (p, e) = (ctx.p(), params.e());
    if e > (p - 1) / 2 {
        return Err(Error::RangeViolation { p, e });
    }
    policy.validate(p)?;
    let cap = policy.cap.unwrap_or(p - 1);
    let h = match policy.mode {
        HMode::Theoretical => {
            let (pf, ef, eps) = (p as f64, e as f64, policy.epsilon);
            let mut h = match variant {
                Variant::KnownT => ef.powf(0.25 + eps).min(pf.powf(0.25 + eps)),
                Variant::UnknownT => {
                    let medium = (ef.sqrt() * pf.powf(eps)).max(ef * ef * pf.powf(eps - 1.0));
                    medium.min(pf.sqrt() * pf.ln().powi(2))
                }
            };
            if let Some(delta) = policy.delta {
                let small = match variant {
                    Variant::KnownT => ef.powf(policy.c0 * delta),
                    Variant::UnknownT => ef.powf(policy.c0 * delta.cbrt()),
                };
                h = h.min(small);
            }
            ceil_window(h)
        }
        HMode::Exact => match variant {
            Variant::KnownT => longest_coset_run(ctx, params)? + 1,
            Variant::UnknownT => exact_unknown_window(ctx, params)?,
        },
    };
    Ok(h.clamp(1, cap))
}

/// Largest first-disagreement index `min{x ≥ 0 : (x+s)^e ≠ (x+t)^e}` over all
/// `s ≠ t`, so that probing `x = 0..=h` separates every distinct pair.
pub fn exact_unknown_window(ctx: &PrimeContext, params: &ExponentParams) -> Result<u64> {
    let p = ctx.p();
    if p > EXACT_PAIR_SCAN_CAP {
        return Err(Error::TooLarge {
            what: "p (exhaustive pair scan)",
            value: p,
            cap: EXACT_PAIR_SCAN_CAP,
        });
    }
    let powers: Vec<u64> = (0..2 * p).map(|z| ctx.pow(z % p, params.e())).collect();
    let worst = (0..p)
        .into_par_iter()
        .map(|s| {
            let mut worst = 0;
            for t in s + 1..p {
                let first = (0..p)
                    .find(|&x| powers[(x + s) as usize] != powers[(x + t) as usize])
                    .expect("x = -s separates distinct shifts");
                worst = worst.max(first);
            }
            worst
        })
        .max()
        .unwrap_or(0);
    Ok(worst)
}

/// Known `t`: probes `x = y^{-1} - t` for `y = 1..=h`, so `x + t` is never zero
/// and the forbidden query `-t` is never issued.
pub fn test_known_t(oracle: &ShiftOracle, t: u64, policy: &HPolicy) -> Result<IdentityOutcome> {
    let h = choose_h(oracle.context(), oracle.params(), Variant::KnownT, policy)?;
    test_known_t_with_window(oracle, t, h)
}

/// [`test_known_t`] with an explicit window `h < p`.
pub fn test_known_t_with_window(oracle: &ShiftOracle, t: u64, h: u64) -> Result<IdentityOutcome> {
    let ctx = oracle.context();
    if t >= ctx.p() {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
        });
    }
    if h == 0 || h >= ctx.p() {
        return Err(Error::OutOfRange {
            what: "window h",
            value: h,
        });
    }
    let start = oracle.call_count();
    let mut verdict = Verdict::Equal;
    let mut probes = 0;
    for y in 1..=h {
        let y_inv = ctx.inv(y)?;
        let x = ctx.sub(y_inv, t);
        probes += 1;
        if oracle.query(x)? != ctx.pow(y_inv, oracle.params().e()) {
            verdict = Verdict::Distinct;
            break;
        }
    }
    Ok(IdentityOutcome {
        verdict,
        probes,
        h,
        calls: oracle.call_count() - start,
    })
}

/// Unknown `t`: queries both oracles at `x = 0..=h` until they disagree.
pub fn test_unknown_t(
    oracle_s: &ShiftOracle,
    oracle_t: &ShiftOracle,
    policy: &HPolicy,
) -> Result<IdentityOutcome> {
    check_same_params(oracle_s, oracle_t)?;
    let h = choose_h(
        oracle_s.context(),
        oracle_s.params(),
        Variant::UnknownT,
        policy,
    )?;
    test_unknown_t_with_window(oracle_s, oracle_t, h)
}

/// [`test_unknown_t`] with an explicit window `h < p`.
pub fn test_unknown_t_with_window(
    oracle_s: &ShiftOracle,
    oracle_t: &ShiftOracle,
    h: u64,
) -> Result<IdentityOutcome> {
    check_same_params(oracle_s, oracle_t)?;
    if h >= oracle_s.context().p() {
        return Err(Error::OutOfRange {
            what: "window h",
            value: h,
        });
    }
    let start = oracle_s.call_count() + oracle_t.call_count();
    let mut verdict = Verdict::Equal;
    let mut probes = 0;
    for x in 0..=h {
        probes += 1;
        if oracle_s.query(x)? != oracle_t.query(x)? {
            verdict = Verdict::Distinct;
            break;
        }
    }
    Ok(IdentityOutcome {
        verdict,
        probes,
        h,
        calls: oracle_s.call_count() + oracle_t.call_count() - start,
    })
}

fn check_same_params(a: &ShiftOracle, b: &ShiftOracle) -> Result<()> {
    if a.context().p() != b.context().p() || a.params().e() != b.params().e() {
        return Err(Error::MismatchedParams);
    }
    Ok(())
}

/// Smallest `h` for which the known-`t` test is sound, i.e. every `s ≠ t` has
/// some `y ≤ h` with `1 + (s - t)y ∉ G_e`. Computed without [`longest_coset_run`];
/// the exact-mode window `N(e) + 1` is never below it.
pub fn known_t_first_sound_window(ctx: &PrimeContext, params: &ExponentParams) -> u64 {
    let pm = PowerMap::new(ctx, params.e());
    (1..ctx.p())
        .map(|delta| {
            (1..ctx.p())
                .find(|&y| pm.shifted(1, ctx.mul(delta, y)) != 1)
                .unwrap_or(ctx.p())
        })
        .max()
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(p: u64, e: u64) -> (PrimeContext, ExponentParams) {
        let ctx = PrimeContext::new(p).unwrap();
        let params = ExponentParams::new(&ctx, e).unwrap();
        (ctx, params)
    }

    fn known_oracle(p: u64, e: u64, s: u64, t: u64) -> ShiftOracle {
        let (ctx, params) = setup(p, e);
        ShiftOracle::new(&ctx, &params, s, [ctx.neg(t)]).unwrap()
    }

    #[test]
    fn choose_h_examples() {
        let (ctx, params) = setup(163, 81);
        let h = choose_h(&ctx, &params, Variant::KnownT, &HPolicy::theoretical()).unwrap();
        assert_eq!(h, 4);

        let (ctx, params) = setup(13, 3);
        assert_eq!(
            choose_h(&ctx, &params, Variant::KnownT, &HPolicy::default()).unwrap(),
            3
        );

        let (ctx, params) = setup(13, 12);
        assert_eq!(
            choose_h(&ctx, &params, Variant::KnownT, &HPolicy::default()),
            Err(Error::RangeViolation { p: 13, e: 12 })
        );
    }

    #[test]
    fn unknown_t_theoretical_respects_cap() {
        let p = 1009f64;
        assert!(p.sqrt() * p.ln().powi(2) > 1008.0);
        for e in [16, 63, 504] {
            let (ctx, params) = setup(1009, e);
            let h = choose_h(&ctx, &params, Variant::UnknownT, &HPolicy::theoretical()).unwrap();
            assert!((1..=1008).contains(&h));
        }
        let (ctx, params) = setup(1009, 504);
        let policy = HPolicy {
            cap: Some(10),
            ..HPolicy::theoretical()
        };
        assert_eq!(
            choose_h(&ctx, &params, Variant::UnknownT, &policy).unwrap(),
            10
        );
    }

    #[test]
    fn known_t_examples() {
        let o = known_oracle(13, 3, 5, 4);
        let out = test_known_t_with_window(&o, 4, 3).unwrap();
        assert_eq!(out.verdict, Verdict::Distinct);
        assert_eq!(out.calls, out.probes);

        let o = known_oracle(13, 3, 4, 4);
        let out = test_known_t(&o, 4, &HPolicy::default()).unwrap();
        assert_eq!(out.verdict, Verdict::Equal);
        assert_eq!(out.calls, 3);
    }

    #[test]
    fn window_below_coset_run_is_unsound_somewhere() {
        let (ctx, params) = setup(13, 3);
        let n = longest_coset_run(&ctx, &params).unwrap() - 1;
        let fooled = (0..13).any(|s| {
            (0..13).filter(|&t| t != s).any(|t| {
                let o = known_oracle(13, 3, s, t);
                test_known_t_with_window(&o, t, n).unwrap().verdict == Verdict::Equal
            })
        });
        assert!(fooled);
    }

    #[test]
    fn unknown_t_examples() {
        let (ctx, params) = setup(13, 3);
        let a = ShiftOracle::new(&ctx, &params, 5, []).unwrap();
        let b = ShiftOracle::new(&ctx, &params, 4, []).unwrap();
        let out = test_unknown_t(&a, &b, &HPolicy::default()).unwrap();
        assert_eq!(out.verdict, Verdict::Distinct);
        assert_eq!(out.probes, 1);
        assert_eq!(out.calls, 2);

        let c = ShiftOracle::new(&ctx, &params, 7, []).unwrap();
        let d = ShiftOracle::new(&ctx, &params, 7, []).unwrap();
        let out = test_unknown_t(&c, &d, &HPolicy::default()).unwrap();
        assert_eq!(out.verdict, Verdict::Equal);
        assert_eq!(out.probes, out.h + 1);

        let (ctx2, params2) = setup(13, 4);
        let other = ShiftOracle::new(&ctx2, &params2, 7, []).unwrap();
        assert_eq!(
            test_unknown_t(&c, &other, &HPolicy::default()),
            Err(Error::MismatchedParams)
        );
    }

    #[test]
    fn exact_windows_agree_with_independent_scan() {
        for (p, e) in [(13, 3), (13, 6), (31, 5), (31, 15), (61, 12)] {
            let (ctx, params) = setup(p, e);
            let n = longest_coset_run(&ctx, &params).unwrap();
            // A fooling pair needs a run of length h + 1 starting at (s - t)^{-1}.
            assert_eq!(known_t_first_sound_window(&ctx, &params), n, "p={p} e={e}");
        }
    }
}
