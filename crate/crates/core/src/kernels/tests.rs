use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn env(kernel: Kernel<f64>, gamma: Gamma<f64>, g: Profile<f64>, l: f64, c: f64, inv_delta: f64, d: f64) -> Envelope<f64> {
    Envelope::from_parts(kernel, gamma, Profile::Zero, g, l, c, inv_delta, d).unwrap()
}

/// Left Riemann sum with step `h` on `[a, b]`, independent of the adaptive rule.
fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let n = ((b - a) / h).round() as usize;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[test]
fn zero_kernel_zero_envelope() {
    let e = env(Kernel::zero(), Gamma::Log { scale: 2.0 }, Profile::Zero, 1.0, 1.0, 0.0, 0.0);
    for t in [0.0, 0.5, 3.0, 40.0] {
        assert_eq!(e.envelope(t), 0.0);
        assert_eq!(e.envelope_window(t, 2.0).unwrap(), 0.0);
    }
}

#[test]
fn envelope_reduces_to_majorant() {
    let e = env(Kernel::exponential(1.0, 1.0).unwrap(), Gamma::Const { value: 0.0 }, Profile::Zero, 1.0, 1.0, 0.0, 0.0);
    for t in [0.0, 0.7, 2.5, 9.0] {
        assert_relative_eq!(e.envelope(t), (-t).exp(), max_relative = 1e-12);
    }
}

#[test]
fn envelope_with_unit_gamma_and_unit_delta() {
    let e = env(Kernel::exponential(1.0, 1.0).unwrap(), Gamma::Const { value: 1.0 }, Profile::Zero, 1.0, 1.0, 1.0, 0.0);
    for t in [0.0, 0.3, 1.0, 4.0] {
        assert_relative_eq!(e.envelope(t), 6.0 * (-t).exp(), max_relative = 1e-8);
    }
}

#[test]
fn band_collapses_to_delay_plateau() {
    let e = env(Kernel::zero(), Gamma::Const { value: 0.0 }, Profile::Zero, 0.5, 1.3, 0.0, 2.0);
    assert_eq!(e.band(0.5), 1.3);
    assert_eq!(e.band(2.0), 1.3);
    assert_eq!(e.band(2.1), 0.0);
    assert_relative_eq!(e.band_mass(), 2.6, max_relative = 1e-12);
}

#[test]
fn band_substitution_and_mass() {
    let g = Profile::Exp { scale: 1.0, rate: 1.0 };
    let e = env(Kernel::exponential(1.0, 1.0).unwrap(), Gamma::Const { value: 1.0 }, g, 0.5, 1.0, 1.0, 0.0);
    for t in [0.1, 1.0, 3.0] {
        assert_relative_eq!(e.band(t), 7.0 * (-t).exp(), max_relative = 1e-8);
    }
    assert_relative_eq!(e.band_mass(), 7.0, max_relative = 1e-8);
    let q = riemann(|t| e.band(t), 0.0, 40.0, 1e-4);
    assert_relative_eq!(e.band_mass(), q, max_relative = 1e-5);
}

#[test]
fn generic_path_matches_riemann() {
    let k = Kernel::power_law(0.4, 3.5).unwrap();
    let gamma = Gamma::Log { scale: 1.5 };
    let e = env(k.clone(), gamma, Profile::Indicator { end: 1.0 }, 0.5, 0.7, 1.0, 0.5);
    for t in [0.0, 1.0, 5.0] {
        let inner = riemann(|s| gamma.value(s + 1.0) * k.majorant(t + s), 0.0, 4000.0, 1e-2);
        let tail_free = e.prefactor() * (k.majorant(t) + inner);
        assert_relative_eq!(e.envelope(t), tail_free, max_relative = 1e-3);
    }
    let q = riemann(|t| e.band(t), 0.0, 60.0, 1e-3) + e.band_mass() - e.band_mass_to(60.0).unwrap();
    assert_relative_eq!(e.band_mass(), q, max_relative = 1e-5);
}

#[test]
fn exponential_fast_path_agrees_with_table_kernel() {
    let knots: Vec<(f64, f64)> = (0..=800).map(|i| (i as f64 * 0.05, 0.3 * (-(i as f64) * 0.05).exp())).collect();
    let table = Kernel::table(knots).unwrap();
    let expk = Kernel::exponential(0.3, 1.0).unwrap();
    let gamma = Gamma::Log { scale: 2.0 };
    let a = env(expk, gamma, Profile::Zero, 0.5, 1.0, 1.0, 0.0);
    let b = env(table, gamma, Profile::Zero, 0.5, 1.0, 1.0, 0.0);
    for t in [0.0, 0.5, 2.0] {
        assert_relative_eq!(a.envelope(t), b.envelope(t), max_relative = 6e-2);
        assert!(b.envelope(t) >= a.envelope(t));
    }
}

#[test]
fn windowed_envelope_increases_to_full() {
    let e = env(Kernel::exponential(0.5, 1.0).unwrap(), Gamma::Log { scale: 3.0 }, Profile::Zero, 0.5, 1.0, 0.0, 0.0);
    let mut last = 0.0;
    for t2 in [0.0, 1.0, 2.0, 5.0, 20.0, 80.0] {
        let v = e.envelope_window(0.3, t2).unwrap();
        assert!(v >= last);
        last = v;
    }
    assert_relative_eq!(last, e.envelope(0.3), max_relative = 1e-8);
}

#[test]
fn log_gamma_integral_closed_form() {
    // ∫₀^i ln₊(s+1) ds = (i+1)ln(i+1) - i
    let gamma = Gamma::Log { scale: 1.0 };
    for i in [1.0f64, 3.0, 10.0] {
        let q = quad::piecewise(&|s: f64| gamma.value(s + 1.0), 0.0, i, &[]).unwrap();
        assert_relative_eq!(q, (i + 1.0) * (i + 1.0).ln() - i, max_relative = 1e-8);
        assert_relative_eq!(gamma.primitive(i), q, max_relative = 1e-8);
    }
}

#[test]
fn gamma_inverse_examples() {
    assert_eq!(Gamma::Linear { scale: 1.0 }.inverse(3.5), 3.5);
    assert_eq!(Gamma::Log { scale: 4.0 }.inverse(0.0), 0.0);
    assert_eq!(Gamma::Step { at: 1.0, low: 0.0, high: 2.0 }.inverse(1.0), 1.0);
    assert!(Gamma::Step { at: 1.0f64, low: 0.0, high: 2.0 }.inverse(3.0).is_infinite());
}

#[test]
fn table_majorant_running_max() {
    let k = Kernel::table(vec![(0.0, 0.2), (1.0, -1.0), (2.0, 0.5), (3.0, 0.1)]).unwrap();
    assert_eq!(k.majorant(0.0), 1.0);
    assert_eq!(k.majorant(1.5), 1.0);
    assert_eq!(k.majorant(2.2), 0.5);
    assert_eq!(k.majorant(3.0), 0.1);
    assert_eq!(k.majorant(3.5), 0.0);
    assert!(k.signed());
    let p = k.positive_part();
    assert!((0..300).all(|i| {
        let t = i as f64 * 0.01;
        (p.value(t) - k.positive(t)).abs() < 1e-12
    }));
    assert_relative_eq!(k.positive_mass(), riemann(|t| k.positive(t), 0.0, 3.0, 1e-5), max_relative = 1e-6);
}

#[test]
fn prop1_moment_bound_holds() {
    let k = Kernel::power_law(0.5, 5.0).unwrap();
    let e =
        Envelope::from_parts(k, Gamma::Log { scale: 2.0 }, Profile::Power { scale: 0.2, exponent: 4.5 }, Profile::Zero, 0.5, 1.0, 0.0, 0.0)
            .unwrap();
    for p in [0.0, 1.0, 2.0] {
        e.check_moments(p).unwrap();
        assert!(e.envelope_moment(p).unwrap() <= e.moment_bound(p).unwrap() * (1.0 + 1e-8));
    }
    assert!(e.check_moments(3.5).is_err());
}

#[test]
fn non_integrable_factor_named() {
    let k = Kernel::power_law(0.5, 1.5).unwrap();
    let err = Envelope::from_parts(k, Gamma::Linear { scale: 1.0 }, Profile::Zero, Profile::Zero, 0.5, 1.0, 0.0, 0.0).unwrap_err();
    assert!(matches!(err, Error::Integrability { factor: "hbar*gamma", .. }));
}

#[test]
fn band_mass_inverse_roundtrip() {
    let e = env(Kernel::exponential(0.3, 1.0).unwrap(), Gamma::Log { scale: 1.5 }, Profile::Indicator { end: 1.0 }, 1.0, 0.5, 1.0, 0.0);
    for m in [0.1, 0.7, 1.5] {
        let t = e.band_mass_inverse(m);
        assert_relative_eq!(e.band_mass_to(t).unwrap(), m, max_relative = 1e-9);
    }
    assert!(e.band_mass_inverse(e.band_mass() + 1.0).is_infinite());
}

#[test]
fn f32_envelope() {
    let e = Envelope::<f32>::from_parts(
        Kernel::exponential(1.0, 1.0).unwrap(),
        Gamma::Const { value: 1.0 },
        Profile::Zero,
        Profile::Exp { scale: 1.0, rate: 1.0 },
        0.5,
        1.0,
        1.0,
        0.0,
    )
    .unwrap();
    assert_relative_eq!(e.band_mass(), 7.0, max_relative = 1e-5);
}

#[test]
fn rate_validation() {
    let k = Kernel::exponential(0.6, 1.0).unwrap();
    let o = RateSpec::ordinary(Activation::Linear { base: 1.0, slope: 2.0 });
    assert!(o.validate(&k).is_err());
    let o = RateSpec::ordinary(Activation::Linear { base: 1.0, slope: 1.0 });
    o.validate(&k).unwrap();
    let ad = RateSpec::age_dependent(Activation::Linear { base: 1.0, slope: 1.0 }, Recovery::Hard { period: 1.0 }, 1.0);
    ad.validate(&k).unwrap();
    assert_eq!(ad.refractory_bound(), 0.0);
    let mismatch = RateSpec { setup: Setup::AD, ..RateSpec::ordinary(Activation::Linear { base: 1.0, slope: 1.0 }) };
    let msg = mismatch.validate(&k).unwrap_err().to_string();
    assert!(msg.contains("RateSpec.setup"));
}

#[test]
fn criteria_o_default_gamma() {
    let k = Kernel::exponential(0.3, 1.0).unwrap();
    let g = default_gamma(Setup::O, &k, 1.0, 2.0, false);
    let ch = exponential_threshold(0.3f64);
    assert!(g.far_log_ratio(3.0 / ch) > 1.0);
    assert!(Gamma::Linear { scale: 1.0 }.far_linear_ratio() > 0.0);
}

proptest! {
    #[test]
    fn gamma_inverse_equivalence(y in 0.0f64..20.0, t in 0.0f64..1e4, c in 0.1f64..5.0) {
        for g in [Gamma::Log { scale: c }, Gamma::Linear { scale: c }, Gamma::Step { at: c, low: 0.5, high: 3.0 }] {
            prop_assert_eq!(y <= g.value(t), g.inverse(y) <= t);
        }
    }

    #[test]
    fn envelope_monotone(t in 0.0f64..15.0, dt in 0.0f64..5.0, s in 0.0f64..10.0) {
        let e = env(Kernel::power_law(0.4, 4.0).unwrap(), Gamma::Log { scale: 1.5 }, Profile::Zero, 0.5, 1.0, 1.0, 0.0);
        let k = e.kernel();
        prop_assert!(k.majorant(t + dt) <= k.majorant(t));
        prop_assert!(k.majorant(t) >= k.value(t).abs());
        prop_assert!(e.envelope_window(t + dt, s).unwrap() <= e.envelope_window(t, s).unwrap() * (1.0 + 1e-9));
        prop_assert!(e.envelope_window(t, s).unwrap() <= e.envelope_window(t, s + dt).unwrap() * (1.0 + 1e-9));
        prop_assert!(e.band(t) >= 0.0);
    }

    #[test]
    fn table_majorant_dominates(vals in proptest::collection::vec(-2.0f64..2.0, 3..12), t in 0.0f64..12.0, dt in 0.0f64..3.0) {
        let knots: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        let k = Kernel::table(knots).unwrap();
        prop_assert!(k.majorant(t) >= k.value(t).abs() - 1e-12);
        prop_assert!(k.majorant(t + dt) <= k.majorant(t));
    }
}
