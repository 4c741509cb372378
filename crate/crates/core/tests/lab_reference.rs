use std::collections::HashSet;

use proptest::prelude::*;
use shiftbreak::field::{is_prime, subgroup_elements};
use shiftbreak::lab::*;
use shiftbreak::{ExponentParams, IndexTable, PrimeContext};

const PRIMES: [u64; 10] = [37, 41, 53, 61, 73, 97, 101, 109, 113, 127];

fn naive_hyperbola(p: u64, u: u64, v: u64, h: u64) -> u64 {
    let mut n = 0;
    for x in 1..=h {
        for y in 1..=h {
            n += u64::from((x + u) % p * ((y + u) % p) % p == v % p);
        }
    }
    n
}

fn naive_energy(p: u64, a: u64, h: u64) -> u64 {
    let mut n = 0;
    for x1 in 1..=h {
        for x2 in 1..=h {
            for x3 in 1..=h {
                for x4 in 1..=h {
                    let l = (a + x1) % p * ((a + x2) % p) % p;
                    let r = (a + x3) % p * ((a + x4) % p) % p;
                    n += u64::from(l == r);
                }
            }
        }
    }
    n
}

fn tuples(h: u64, nu: u32) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..nu {
        out = out
            .into_iter()
            .flat_map(|t| (1..=h).map(move |x| [t.clone(), vec![x]].concat()))
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn hyperbola_matches_double_loop(pi in 0usize..10, u in 0u64..200, v in 1u64..200, h in 1u64..36) {
        let p = PRIMES[pi];
        prop_assume!(v % p != 0);
        let ctx = PrimeContext::new(p).unwrap();
        prop_assert_eq!(hyperbola_count(&ctx, u, v, h).unwrap(), naive_hyperbola(p, u, v, h));
    }

    #[test]
    fn energy_matches_quadruple_loop(pi in 0usize..10, a in 0u64..200, h in 1u64..14) {
        let p = PRIMES[pi];
        let ctx = PrimeContext::new(p).unwrap();
        prop_assert_eq!(multiplicative_energy_count(&ctx, a, h).unwrap(), naive_energy(p, a, h));
    }

    #[test]
    fn product_counts_match_tuple_enumeration(
        pi in 0usize..10, nu in 1u32..=4, lambda in 1u64..200, s in 0u64..200, h in 1u64..9,
    ) {
        let p = PRIMES[pi];
        prop_assume!(lambda % p != 0);
        let ctx = PrimeContext::new(p).unwrap();
        let prod = |t: &Vec<u64>| t.iter().fold(1, |acc, &x| acc * ((x + s) % p) % p);
        let want = tuples(h, nu).iter().filter(|t| prod(t) == lambda % p).count() as u64;
        prop_assert_eq!(product_count_j(&ctx, nu, lambda, s, h).unwrap(), want);
        prop_assert_eq!(product_count_j_direct(&ctx, nu, lambda, s, h).unwrap(), want);
    }

    #[test]
    fn product_sets_match_tuple_enumeration(
        pi in 0usize..10, nu in 1u32..=3, s in 0u64..200, t in 0u64..200, h in 1u64..9, fractional: bool,
    ) {
        let p = PRIMES[pi];
        let ctx = PrimeContext::new(p).unwrap();
        prop_assume!(!fractional || s % p != t % p);
        let elem = |x: u64| -> Option<u64> {
            if fractional {
                let den = (x + t) % p;
                (den != 0).then(|| (x + s) % p * ctx.inv(den).unwrap() % p)
            } else {
                Some((x + s) % p)
            }
        };
        let want: HashSet<u64> = tuples(h, nu)
            .iter()
            .filter_map(|tup| tup.iter().try_fold(1u64, |acc, &x| elem(x).map(|a| acc * a % p)))
            .collect();
        let got = product_set_size(&ctx, nu, s, fractional.then_some(t), h).unwrap();
        prop_assert_eq!(got, want.len() as u64);
    }

    #[test]
    fn shift_intersection_matches_membership_scan(
        pi in 0usize..10, e_pick in 0usize..16, shifts in prop::collection::vec((1u64..200, 1u64..200), 1..4),
    ) {
        let p = PRIMES[pi];
        let ctx = PrimeContext::new(p).unwrap();
        let divisors: Vec<u64> = (1..p).filter(|e| (p - 1).is_multiple_of(*e)).collect();
        let params = ExponentParams::new(&ctx, divisors[e_pick % divisors.len()]).unwrap();
        let shifts: Vec<(u64, u64)> = shifts.into_iter().map(|(l, m)| (l % p, m % p)).collect();
        let mus: HashSet<u64> = shifts.iter().map(|s| s.1).collect();
        prop_assume!(mus.len() == shifts.len() && shifts.iter().all(|&(l, m)| l != 0 && m != 0));
        let g: HashSet<u64> = subgroup_elements(&ctx, &params).into_iter().collect();
        let mut want = g.clone();
        for &(l, m) in &shifts {
            let shifted: HashSet<u64> = g.iter().map(|&x| (l * x + m) % p).collect();
            want = want.intersection(&shifted).copied().collect();
        }
        prop_assert_eq!(subgroup_shift_intersection(&ctx, &params, &shifts).unwrap(), want.len() as u64);
    }

    #[test]
    fn spaced_partition_properties_hold(p_seed in 37u64..3000, kappa_milli in 0u64..200, density in 5u64..95, seed in any::<u64>()) {
        let p = (p_seed..).find(|&q| is_prime(q)).unwrap();
        let ctx = PrimeContext::new(p).unwrap();
        let kappa = kappa_milli as f64 / 1000.0;
        let mut state = seed | 1;
        let set: Vec<u64> = (0..p)
            .filter(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state % 100 < density
            })
            .collect();
        match spaced_partition(&ctx, &set, kappa) {
            Ok(part) => prop_assert!(check_spaced_partition(&ctx, &set, kappa, &part).all()),
            Err(shiftbreak::Error::TooSmall { .. }) => {
                prop_assert!((set.len() as f64) < 16.0 * (p as f64).powf(2.0 * kappa));
            }
            Err(other) => prop_assert!(false, "unexpected error {other}"),
        }
    }
}

#[test]
fn coset_runs_match_independent_scanner() {
    for p in (3..400u64).filter(|&p| is_prime(p)) {
        let ctx = PrimeContext::new(p).unwrap();
        for e in (1..p).filter(|e| (p - 1) % e == 0) {
            let params = ExponentParams::new(&ctx, e).unwrap();
            let g = subgroup_elements(&ctx, &params);
            let mut best = 0;
            for r in 1..p {
                let coset: HashSet<u64> = g.iter().map(|&x| x * r % p).collect();
                for x in 0..p {
                    let run = (1..p)
                        .take_while(|&k| coset.contains(&((x + k) % p)))
                        .count() as u64;
                    best = best.max(run);
                }
            }
            assert_eq!(
                longest_coset_run(&ctx, &params).unwrap(),
                best,
                "p={p} e={e}"
            );
        }
    }
}

#[test]
fn hyperbola_full_box_counts_units() {
    for p in (3..200u64).filter(|&p| is_prime(p)) {
        let ctx = PrimeContext::new(p).unwrap();
        assert_eq!(hyperbola_count(&ctx, 0, 1, p - 1).unwrap(), p - 1);
        assert_eq!(product_count_j(&ctx, 2, 1, 0, p - 1).unwrap(), p - 1);
    }
}

#[test]
fn character_sums_respect_envelopes() {
    for p in [37u64, 61, 101, 211, 1009] {
        let ctx = PrimeContext::new(p).unwrap();
        let table = IndexTable::build(&ctx).unwrap();
        for e in (1..p).filter(|e| (p - 1) % e == 0 && *e < p - 1) {
            let params = ExponentParams::new(&ctx, e).unwrap();
            let pf = p as f64;
            for j in 1..params.d().min(6) {
                assert!(char_sum_interval(&table, &params, j, p - 1).unwrap().norm() < 1e-9);
                let complete = char_sum_fraction(&table, &params, j, 3, 1, p).unwrap();
                assert!((complete.re + 1.0).abs() < 1e-9 && complete.im.abs() < 1e-9);
                for h in [1, p / 7 + 1, p / 2, p - 2] {
                    let v = char_sum_fraction(&table, &params, j, 5, 2, h).unwrap();
                    assert!(v.norm() <= 4.0 * pf.sqrt() * pf.ln());
                }
                for f in 1..4 {
                    let v = char_sum_shifted_power(&table, &params, j, f, 1).unwrap();
                    assert!(v.norm() <= 4.0 * f as f64 * pf.sqrt());
                }
            }
        }
    }
}

#[test]
fn psi_matches_trial_division() {
    let smooth = |mut n: u64, y: u64| {
        for q in 2..=y.max(1) {
            while n.is_multiple_of(q) && q > 1 {
                n /= q;
            }
        }
        n == 1
    };
    for x in [1u64, 2, 10, 99, 100, 1000, 5000] {
        for y in [1u64, 2, 3, 5, 7, 11, 31, 70, 71, 72, 100, 2000] {
            let want = (1..=x).filter(|&n| smooth(n, y)).count() as u64;
            assert_eq!(psi_count(x, y).unwrap(), want, "x={x} y={y}");
        }
    }
}

#[test]
fn smooth_subgroup_matches_index_gcd() {
    for p in (3..300u64).filter(|&p| is_prime(p)) {
        let ctx = PrimeContext::new(p).unwrap();
        let table = IndexTable::build(&ctx).unwrap();
        for y in 1..12u64.min(p) {
            let g = (1..=y).fold(p - 1, |acc, x| {
                shiftbreak::field::gcd(acc, table.ind(x).unwrap())
            });
            assert_eq!(smooth_subgroup_order(&ctx, y), (p - 1) / g, "p={p} y={y}");
        }
    }
}
