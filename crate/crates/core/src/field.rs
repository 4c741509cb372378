//! Prime-field arithmetic: the modulus with its least primitive root and the
//! factorization of the group order, subgroups `G_e`, discrete indices and the
//! multiplicative characters that are trivial on `G_e`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest modulus accepted (exclusive). Products of two residues fit in `u128`.
pub const MODULUS_CAP: u64 = 1 << 61;

/// Largest modulus for which a dense discrete-index table is built.
pub const INDEX_TABLE_CAP: u64 = 1 << 24;

/// A prime modulus together with its least primitive root and the complete
/// factorization of `p - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeContext {
    p: u64,
    g: u64,
    group_order_factors: Vec<(u64, u32)>,
}

impl PrimeContext {
    pub fn new(p: u64) -> Result<Self> {
        if !(3..MODULUS_CAP).contains(&p) {
            return Err(Error::Overflow(p));
        }
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        let group_order_factors = factorize(p - 1);
        let mut ctx = PrimeContext {
            p,
            g: 0,
            group_order_factors,
        };
        ctx.g = (2..p)
            .find(|&g| ctx.is_primitive_root(g))
            .expect("a prime modulus has a primitive root");
        Ok(ctx)
    }

    #[inline]
    pub fn p(&self) -> u64 {
        self.p
    }

    /// The least primitive root modulo `p`.
    #[inline]
    pub fn generator(&self) -> u64 {
        self.g
    }

    /// `(ℓ, α_ℓ)` pairs with `∏ ℓ^α_ℓ = p - 1`, primes ascending.
    pub fn group_order_factors(&self) -> &[(u64, u32)] {
        &self.group_order_factors
    }

    /// Exponent `α` with `ℓ^α ∥ p - 1` (zero when `ℓ ∤ p - 1`).
    pub fn multiplicity(&self, ell: u64) -> u32 {
        self.group_order_factors
            .iter()
            .find(|&&(q, _)| q == ell)
            .map_or(0, |&(_, a)| a)
    }

    fn is_primitive_root(&self, g: u64) -> bool {
        self.group_order_factors
            .iter()
            .all(|&(ell, _)| self.pow(g, (self.p - 1) / ell) != 1)
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.p
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        mul_mod(a, b, self.p)
    }

    /// `a^k mod p` by square-and-multiply; `a^0 = 1` for every `a`, including 0.
    #[inline]
    pub fn pow(&self, a: u64, k: u64) -> u64 {
        pow_mod(a, k, self.p)
    }

    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = a % self.p;
        if a == 0 {
            return Err(Error::NoInverse);
        }
        Ok(self.pow(a, self.p - 2))
    }

    pub fn div(&self, a: u64, b: u64) -> Result<u64> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// The smallest `a ≥ 2` that is not an `ℓ`-th power modulo `p`.
    pub fn least_nonresidue(&self, ell: u64) -> Result<u64> {
        if ell < 2 || self.multiplicity(ell) == 0 {
            return Err(Error::NotDividing {
                e: ell,
                modulus_minus_one: self.p - 1,
            });
        }
        let exp = (self.p - 1) / ell;
        Ok((2..self.p)
            .find(|&a| self.pow(a, exp) != 1)
            .expect("a nonresidue exists for every prime divisor of p - 1"))
    }
}

/// The oracle exponent `e | p - 1` with its cofactor `d = (p - 1)/e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentParams {
    e: u64,
    d: u64,
    e_factors: Vec<(u64, u32)>,
}

impl ExponentParams {
    pub fn new(ctx: &PrimeContext, e: u64) -> Result<Self> {
        let order = ctx.p() - 1;
        if e == 0 || !order.is_multiple_of(e) {
            return Err(Error::NotDividing {
                e,
                modulus_minus_one: order,
            });
        }
        let e_factors = ctx
            .group_order_factors()
            .iter()
            .filter_map(|&(ell, _)| {
                let mut k = 0;
                let mut rest = e;
                while rest.is_multiple_of(ell) {
                    rest /= ell;
                    k += 1;
                }
                (k > 0).then_some((ell, k))
            })
            .collect();
        Ok(ExponentParams {
            e,
            d: order / e,
            e_factors,
        })
    }

    #[inline]
    pub fn e(&self) -> u64 {
        self.e
    }

    #[inline]
    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn e_factors(&self) -> &[(u64, u32)] {
        &self.e_factors
    }
}

/// `G_e = {μ : μ^e = 1}`, sorted ascending.
pub fn subgroup_elements(ctx: &PrimeContext, params: &ExponentParams) -> Vec<u64> {
    let step = ctx.pow(ctx.generator(), params.d());
    let mut out = Vec::with_capacity(params.e() as usize);
    let mut mu = 1;
    for _ in 0..params.e() {
        out.push(mu);
        mu = ctx.mul(mu, step);
    }
    out.sort_unstable();
    out
}

/// Dense discrete-logarithm table to the least primitive root. Indices follow
/// the `[1, p - 1]` convention, so `ind(1) = p - 1`.
#[derive(Debug, Clone)]
pub struct IndexTable {
    ctx: PrimeContext,
    ind: Vec<u32>,
}

impl IndexTable {
    pub fn build(ctx: &PrimeContext) -> Result<Self> {
        let p = ctx.p();
        if p > INDEX_TABLE_CAP {
            return Err(Error::TooLarge {
                what: "p (index table)",
                value: p,
                cap: INDEX_TABLE_CAP,
            });
        }
        let mut ind = vec![0u32; p as usize];
        let mut z = 1;
        for k in 1..p {
            z = ctx.mul(z, ctx.generator());
            ind[z as usize] = k as u32;
        }
        Ok(IndexTable {
            ctx: ctx.clone(),
            ind,
        })
    }

    pub fn context(&self) -> &PrimeContext {
        &self.ctx
    }

    /// `ind(x)`, or `None` when `x ≡ 0`.
    #[inline]
    pub fn ind(&self, x: u64) -> Option<u64> {
        let x = self.ctx.reduce(x);
        (x != 0).then(|| u64::from(self.ind[x as usize]))
    }

    /// `χ_j(x) = exp(2πi·j·ind(x)/d)` for `0 ≤ j < d`, with `χ_j(0) = 0`.
    /// Every such character is trivial on `G_e`.
    pub fn character(&self, params: &ExponentParams, j: u64, x: u64) -> Result<Complex64> {
        let d = params.d();
        if j >= d {
            return Err(Error::OutOfRange {
                what: "character index",
                value: j,
            });
        }
        Ok(match self.ind(x) {
            None => Complex64::new(0.0, 0.0),
            Some(k) => {
                let phase = ((j as u128 * k as u128) % d as u128) as f64 / d as f64;
                Complex64::from_polar(1.0, std::f64::consts::TAU * phase)
            }
        })
    }
}

/// Cached `z ↦ z^e` for small moduli; falls back to exponentiation above the cap.
#[derive(Debug, Clone)]
pub(crate) struct PowerMap {
    ctx: PrimeContext,
    e: u64,
    table: Option<Vec<u64>>,
}

impl PowerMap {
    const TABLE_CAP: u64 = 1 << 20;

    pub(crate) fn new(ctx: &PrimeContext, e: u64) -> Self {
        let table =
            (ctx.p() <= Self::TABLE_CAP).then(|| (0..ctx.p()).map(|z| ctx.pow(z, e)).collect());
        PowerMap {
            ctx: ctx.clone(),
            e,
            table,
        }
    }

    /// `(a + b)^e` for residues `a, b`.
    #[inline]
    pub(crate) fn shifted(&self, a: u64, b: u64) -> u64 {
        let z = self.ctx.add(a, b);
        match &self.table {
            Some(t) => t[z as usize],
            None => self.ctx.pow(z, self.e),
        }
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(a: u64, mut k: u64, m: u64) -> u64 {
    let mut base = a % m;
    let mut acc = 1 % m;
    while k > 0 {
        if k & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        k >>= 1;
    }
    acc
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `floor(sqrt(n))`.
pub fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Inverse of `a` modulo `m` (not necessarily prime), when `gcd(a, m) = 1`.
pub(crate) fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128 % m as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    (old_r == 1).then(|| old_s.rem_euclid(m as i128) as u64)
}

/// Deterministic Miller–Rabin; the witness set is exact below 2^64.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &q in &WITNESSES {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Trial-division factorization, primes ascending. Stops early once the
/// cofactor is prime.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut push = |q: u64, n: &mut u64| {
        let mut k = 0;
        while (*n).is_multiple_of(q) {
            *n /= q;
            k += 1;
        }
        if k > 0 {
            out.push((q, k));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut q = 5;
    while q * q <= n {
        if is_prime(n) {
            break;
        }
        push(q, &mut n);
        push(q + 2, &mut n);
        q += 6;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::new(p).unwrap()
    }

    #[test]
    fn make_context_examples() {
        let c = ctx(13);
        assert_eq!(c.generator(), 2);
        assert_eq!(c.group_order_factors(), &[(2, 2), (3, 1)]);
        // 2^6 ≡ -1 and 2^4 ≡ 3, so 2 has full order.
        assert_eq!(c.pow(2, 6), 12);
        assert_eq!(c.pow(2, 4), 3);

        let c = ctx(3);
        assert_eq!(c.generator(), 2);
        assert_eq!(c.group_order_factors(), &[(2, 1)]);

        assert_eq!(PrimeContext::new(15), Err(Error::NotPrime(15)));
        assert_eq!(PrimeContext::new(2), Err(Error::Overflow(2)));
        assert_eq!(PrimeContext::new(1 << 61), Err(Error::Overflow(1 << 61)));
    }

    #[test]
    fn large_modulus_near_cap() {
        // 2^61 - 1 is a Mersenne prime.
        let c = ctx((1 << 61) - 1);
        let prod: u64 = c
            .group_order_factors()
            .iter()
            .map(|&(q, a)| q.pow(a))
            .product();
        assert_eq!(prod, c.p() - 1);
        assert_eq!(c.pow(c.generator(), c.p() - 1), 1);
        assert_eq!(c.generator(), 37);
    }

    #[test]
    fn mod_pow_examples() {
        let c = ctx(13);
        assert_eq!(c.pow(7, 3), 5);
        for a in 0..13 {
            assert_eq!(c.pow(a, 1), a);
        }
        assert_eq!(c.pow(5, 4), 1);
        assert_eq!(c.pow(0, 0), 1);
    }

    #[test]
    fn mod_inv_examples() {
        let c = ctx(13);
        assert_eq!(c.inv(5), Ok(8));
        assert_eq!(c.inv(1), Ok(1));
        assert_eq!(c.inv(0), Err(Error::NoInverse));
    }

    #[test]
    fn subgroup_examples() {
        let c = ctx(13);
        let g = |e| subgroup_elements(&c, &ExponentParams::new(&c, e).unwrap());
        assert_eq!(g(3), vec![1, 3, 9]);
        assert_eq!(g(1), vec![1]);
        assert_eq!(g(4), vec![1, 5, 8, 12]);
        assert!(ExponentParams::new(&c, 5).is_err());
    }

    #[test]
    fn index_table_examples() {
        let c = ctx(13);
        let t = IndexTable::build(&c).unwrap();
        assert_eq!(t.ind(7), Some(11));
        assert_eq!(t.ind(2), Some(1));
        assert_eq!(t.ind(1), Some(12));
        assert_eq!(t.ind(0), None);
        let big = ctx(16_777_259);
        assert!(matches!(
            IndexTable::build(&big),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn character_examples() {
        let c = ctx(13);
        let t = IndexTable::build(&c).unwrap();
        let params = ExponentParams::new(&c, 3).unwrap();
        let v = t.character(&params, 1, 3).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let v = t.character(&params, 0, 7).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(
            t.character(&params, 1, 0).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        assert!(t.character(&params, 4, 1).is_err());
    }

    #[test]
    fn least_nonresidue_examples() {
        assert_eq!(ctx(13).least_nonresidue(3), Ok(2));
        assert_eq!(ctx(13).least_nonresidue(2), Ok(2));
        assert_eq!(ctx(7).least_nonresidue(3), Ok(2));
        // 2 is a quadratic residue mod 7; 3 is the least nonresidue.
        assert_eq!(ctx(7).least_nonresidue(2), Ok(3));
        assert!(ctx(13).least_nonresidue(5).is_err());
    }

    #[test]
    fn factorize_and_primality() {
        assert_eq!(factorize(1008), vec![(2, 4), (3, 2), (7, 1)]);
        assert_eq!(factorize(10006), vec![(2, 1), (5003, 1)]);
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        // Strong pseudoprime to several small bases.
        assert!(!is_prime(3_215_031_751));
        assert_eq!(isqrt(1009), 31);
        assert_eq!(inv_mod(5, 12), Some(5));
        assert_eq!(inv_mod(3, 12), None);
    }
}
