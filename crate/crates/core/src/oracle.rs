//! The sealed shifted-power oracle `x ↦ (x + s)^e`.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::field::{ExponentParams, PrimeContext};

/// Oracle for `O_{e,s}`. The shift `s` cannot be read back through the public
/// API; every successful query is counted.
#[derive(Debug)]
pub struct ShiftOracle {
    ctx: PrimeContext,
    params: ExponentParams,
    secret: u64,
    calls: AtomicU64,
    forbidden: BTreeSet<u64>,
}

impl ShiftOracle {
    pub fn new(
        ctx: &PrimeContext,
        params: &ExponentParams,
        s: u64,
        forbidden: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        if s >= ctx.p() {
            return Err(Error::OutOfRange {
                what: "secret shift",
                value: s,
            });
        }
        Ok(ShiftOracle {
            ctx: ctx.clone(),
            params: params.clone(),
            secret: s,
            calls: AtomicU64::new(0),
            forbidden: forbidden.into_iter().map(|x| ctx.reduce(x)).collect(),
        })
    }

    pub fn context(&self) -> &PrimeContext {
        &self.ctx
    }

    pub fn params(&self) -> &ExponentParams {
        &self.params
    }

    pub fn is_forbidden(&self, x: u64) -> bool {
        self.forbidden.contains(&x)
    }

    /// `(x + s)^e mod p`. Rejected inputs are not counted.
    pub fn query(&self, x: u64) -> Result<u64> {
        if x >= self.ctx.p() {
            return Err(Error::OutOfRange {
                what: "query",
                value: x,
            });
        }
        if self.forbidden.contains(&x) {
            return Err(Error::ForbiddenInput(x));
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.ctx.pow(self.ctx.add(x, self.secret), self.params.e()))
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Harness backdoor for correctness assertions.
    #[cfg(any(test, feature = "test-harness"))]
    pub fn revealed_secret(&self) -> u64 {
        self.secret
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(s: u64, forbidden: &[u64]) -> ShiftOracle {
        let ctx = PrimeContext::new(13).unwrap();
        let params = ExponentParams::new(&ctx, 3).unwrap();
        ShiftOracle::new(&ctx, &params, s, forbidden.iter().copied()).unwrap()
    }

    #[test]
    fn construction() {
        assert_eq!(oracle(5, &[]).call_count(), 0);
        let ctx = PrimeContext::new(13).unwrap();
        let params = ExponentParams::new(&ctx, 3).unwrap();
        assert!(matches!(
            ShiftOracle::new(&ctx, &params, 13, []),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn query_examples() {
        let o = oracle(5, &[9]);
        assert_eq!(o.query(2), Ok(5));
        assert_eq!(o.query(8), Ok(0));
        assert_eq!(o.query(9), Err(Error::ForbiddenInput(9)));
        assert_eq!(o.call_count(), 2);
        assert!(o.query(13).is_err());
        assert_eq!(o.call_count(), 2);
    }

    #[test]
    fn counter_exact_under_concurrency() {
        let o = oracle(5, &[9]);
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for x in 0..13 {
                        let _ = o.query(x);
                    }
                });
            }
        });
        assert_eq!(o.call_count(), 8 * 12);
    }

    #[test]
    fn matches_backdoor_everywhere() {
        let o = oracle(5, &[]);
        let ctx = o.context();
        let s = o.revealed_secret();
        for x in 0..13 {
            let want = ctx.pow((x + s) % 13, 3);
            assert_eq!(o.query(x).unwrap(), want);
            assert_eq!(want == 0, (x + s).is_multiple_of(13));
        }
    }
}
