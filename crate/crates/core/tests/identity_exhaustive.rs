use shiftbreak::field::is_prime;
use shiftbreak::identity::{
    choose_h, exact_unknown_window, test_known_t, test_unknown_t, test_unknown_t_with_window,
    HPolicy, Variant, Verdict,
};
use shiftbreak::{ExponentParams, PrimeContext, ShiftOracle};

#[test]
fn exact_mode_decides_every_pair_for_small_primes() {
    let policy = HPolicy::default();
    for p in (5..64u64).filter(|&p| is_prime(p)) {
        let ctx = PrimeContext::new(p).unwrap();
        for e in (1..=(p - 1) / 2).filter(|e| (p - 1) % e == 0) {
            let params = ExponentParams::new(&ctx, e).unwrap();
            let h_known = choose_h(&ctx, &params, Variant::KnownT, &policy).unwrap();
            for s in 0..p {
                for t in 0..p {
                    let minus_t = ctx.neg(t);
                    let o = ShiftOracle::new(&ctx, &params, s, [minus_t]).unwrap();
                    let out = test_known_t(&o, t, &policy).unwrap();
                    assert_eq!(
                        out.verdict == Verdict::Equal,
                        s == t,
                        "known p={p} e={e} s={s} t={t}"
                    );
                    assert!(out.calls <= h_known);

                    let os = ShiftOracle::new(&ctx, &params, s, []).unwrap();
                    let ot = ShiftOracle::new(&ctx, &params, t, []).unwrap();
                    let out = test_unknown_t(&os, &ot, &policy).unwrap();
                    assert_eq!(
                        out.verdict == Verdict::Equal,
                        s == t,
                        "unknown p={p} e={e} s={s} t={t}"
                    );
                    assert_eq!(out.calls, 2 * out.probes);
                }
            }
        }
    }
}

#[test]
fn unknown_window_is_tight_and_monotone() {
    let ctx = PrimeContext::new(13).unwrap();
    let params = ExponentParams::new(&ctx, 6).unwrap();
    let h = exact_unknown_window(&ctx, &params).unwrap();
    let fooled_below = (0..13u64).any(|s| {
        (0..13u64).filter(|&t| t != s).any(|t| {
            let os = ShiftOracle::new(&ctx, &params, s, []).unwrap();
            let ot = ShiftOracle::new(&ctx, &params, t, []).unwrap();
            h > 0 && test_unknown_t_with_window(&os, &ot, h - 1).unwrap().verdict == Verdict::Equal
        })
    });
    assert!(h == 0 || fooled_below);
    for wider in h..12 {
        for s in 0..13u64 {
            for t in (0..13u64).filter(|&t| t != s) {
                let os = ShiftOracle::new(&ctx, &params, s, []).unwrap();
                let ot = ShiftOracle::new(&ctx, &params, t, []).unwrap();
                let out = test_unknown_t_with_window(&os, &ot, wider).unwrap();
                assert_eq!(out.verdict, Verdict::Distinct);
            }
        }
    }
}

#[test]
fn theoretical_windows_are_positive_and_capped() {
    for p in [101u64, 1009, 10007] {
        let ctx = PrimeContext::new(p).unwrap();
        for e in (1..=(p - 1) / 2).filter(|e| (p - 1) % e == 0) {
            let params = ExponentParams::new(&ctx, e).unwrap();
            for variant in [Variant::KnownT, Variant::UnknownT] {
                let h = choose_h(&ctx, &params, variant, &HPolicy::theoretical()).unwrap();
                assert!((1..p).contains(&h));
            }
        }
    }
}
