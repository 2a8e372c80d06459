use super::*;
use crate::kernels::{Activation, Recovery};
use crate::Profile;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn borel_mass_and_limits() {
    for m in [0.1, 0.5, 0.9] {
        let law = BorelLaw::new(m).unwrap();
        let s: f64 = law.table().iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "{m}: {s}");
    }
    let law = BorelLaw::new(0.5).unwrap();
    assert!((law.pmf(1) - (-0.5f64).exp()).abs() < 1e-15);
    // p(2) = e^{-2m} (2m) / 2
    assert!((law.pmf(2) - (-1.0f64).exp() * 0.5).abs() < 1e-15);
    assert_eq!(BorelLaw::new(0.0).unwrap().pmf(1), 1.0);
    assert!((BorelLaw::new(1e-9).unwrap().pmf(1) - 1.0).abs() < 1e-8);
    assert!(matches!(BorelLaw::new(1.0), Err(Error::Supercritical { .. })));
}

#[test]
fn borel_mean_and_threshold() {
    let law = BorelLaw::new(0.5).unwrap();
    let mean: f64 = law.table().iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    assert!((mean - 2.0).abs() < 1e-8);
    let ch = law.exp_threshold();
    assert!(law.mgf(0.9 * ch).is_some());
    assert!(law.mgf(1.1 * ch).is_none());
    // partial sums settle below the threshold and blow up above it
    let below = (law.mgf_partial(0.9 * ch, 2000), law.mgf_partial(0.9 * ch, 4000));
    assert!((below.1 - below.0).abs() < 1e-9 * below.0);
    let above = (law.mgf_partial(1.1 * ch, 2000), law.mgf_partial(1.1 * ch, 4000));
    assert!(above.1 > 10.0 * above.0 && above.1 > 1e6);
}

#[test]
fn empty_kernel_gives_single_nodes() {
    let off = Offspring::new(&Kernel::zero(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let c = simulate_cluster(&off, 3.0, &mut rng, TREE_CAP).unwrap();
        assert_eq!((c.size, c.extent), (1, 0.0));
    }
}

#[test]
fn cluster_size_mean_and_small_sizes() {
    let off = Offspring::new(&Kernel::exponential(0.5, 1.0).unwrap(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let sizes: Vec<u64> = (0..n).map(|_| simulate_cluster(&off, 0.0, &mut rng, TREE_CAP).unwrap().size).collect();
    let mean = sizes.iter().sum::<u64>() as f64 / n as f64;
    let var = sizes.iter().map(|&w| (w as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 2.0).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    let law = off.law();
    for k in 1..=3u64 {
        let f = sizes.iter().filter(|&&w| w == k).count() as f64 / n as f64;
        let p = law.pmf(k);
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{k}: {f} vs {p}");
    }
}

#[test]
fn tabulated_displacement_mean() {
    // power law 0.5 (1+t)^{-3}: normalized density 2(1+t)^{-3}, mean 1
    let k = Kernel::power_law(0.5, 3.0).unwrap();
    let off = Offspring::new(&k, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| off.displacement(&mut rng)).collect();
    let below = xs.iter().filter(|&&x| x <= 1.0).count() as f64 / n as f64;
    // P(X ≤ 1) = 1 − 1/4
    assert!((below - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / n as f64).sqrt(), "{below}");
}

#[test]
fn supercritical_tree_hits_cap() {
    let off = Offspring { m: 3.0, displacement: Displacement::None };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut capped = false;
    for _ in 0..20 {
        if let Err(Error::Cap { .. }) = simulate_cluster(&off, 0.0, &mut rng, 10_000) {
            capped = true;
        }
    }
    assert!(capped);
}

fn ad_rate(cap: f64, period: f64) -> RateSpec {
    RateSpec::age_dependent(Activation::Capped { base: 0.5, slope: 1.0, cap }, Recovery::Hard { period }, 1.0)
}

#[test]
fn stationary_ad_without_refractory_points() {
    let rate = RateSpec::age_dependent(Activation::Linear { base: 0.5, slope: 1.0 }, Recovery::Hard { period: 1.0 }, 1.0);
    let pi = PrmStream::new(1, tags::PI);
    let s = alpha0_stationary_ad(&rate, &Gamma::Log { scale: 1.5 }, &pi, 1000).unwrap();
    assert_eq!(s.alpha0, 1);
}

/// Direct definition over every window from `−burn` on.
fn stationary_oracle(gamma: &Gamma, pi: &PrmStream, k: f64, burn: i64) -> u64 {
    let count = |w: i64| pi.sample_strip(w as f64 - 1.0, w as f64, k).unwrap().into_iter().filter(|p| p.0 > w as f64 - 1.0).count();
    let counts: std::collections::HashMap<i64, usize> = ((-burn + 1)..200).map(|w| (w, count(w))).collect();
    (1..200u64).find(|&i| (0..(i as i64 + burn)).all(|j| counts[&(i as i64 - j)] as f64 <= gamma.value(j as f64))).unwrap()
}

#[test]
fn stationary_ad_matches_double_loop() {
    let rate = ad_rate(1.2, 0.5);
    let gamma = Gamma::Linear { scale: 1.0 };
    for seed in 0..100 {
        let pi = PrmStream::new(seed, tags::PI);
        let s = alpha0_stationary_ad(&rate, &gamma, &pi, 10_000).unwrap();
        assert_eq!(s.alpha0, stationary_oracle(&gamma, &pi, 1.2, s.burn_in as i64), "seed {seed}");
    }
}

fn o_setup() -> (Envelope, RateSpec) {
    let kernel = Kernel::exponential(0.3, 1.0).unwrap();
    let rate = RateSpec::ordinary(Activation::Linear { base: 0.5, slope: 1.0 });
    let gamma = crate::kernels::default_gamma(Setup::O, &kernel, 1.0, 1.0, false);
    (Envelope::new(kernel, &rate, gamma, Profile::Zero, 0.0).unwrap(), rate)
}

#[test]
fn gamma_star_substitution_bound() {
    let (env, _) = o_setup();
    let gamma = *env.gamma();
    let ch = exponential_threshold(0.3);
    let c0 = default_c0(&gamma, Assumption::A { p: 1.0 }, ch).unwrap();
    let hb = |t: f64| env.kernel().majorant(t);
    for u in [0.0, 0.3, 1.0, 4.0, 10.0] {
        let n = 40_000;
        let h = 0.005;
        let int: f64 = (0..n).map(|k| (k as f64 + 0.5) * h).map(|s| hb(u + s / c0) * gamma_star(&gamma, c0, s + 1.0)).sum::<f64>() * h;
        let lhs = int + hb(u) * gamma_star(&gamma, c0, 0.0);
        assert!(lhs <= env.envelope(u), "{u}: {lhs} vs {}", env.envelope(u));
    }
    for w in [0.5, 2.0, 7.0] {
        let t = gamma_star_inverse(&gamma, c0, w);
        assert!(gamma_star(&gamma, c0, t) >= w - 1e-12);
        assert!(gamma_star(&gamma, c0, t * (1.0 - 1e-9)) < w);
    }
}

#[test]
fn stationary_o_certified_and_light_tailed() {
    let (env, rate) = o_setup();
    let n = 400;
    let mut alphas = Vec::new();
    for seed in 0..n {
        let s = alpha0_stationary_o(&env, &rate, Assumption::A { p: 1.0 }, seed, 100_000).unwrap();
        assert!(s.certified, "seed {seed}");
        assert!(s.events.iter().all(|&t| t <= s.alpha0 as f64));
        alphas.push(s.alpha0 as f64);
    }
    let mean = alphas.iter().sum::<f64>() / n as f64;
    assert!(mean.is_finite() && mean >= 1.0);
    // survival at 4x the mean below the Markov bound
    let far = alphas.iter().filter(|&&a| a > 4.0 * mean).count() as f64 / n as f64;
    assert!(far <= 0.25);
}

proptest! {
    #[test]
    fn gamma_star_inverse_is_generalized_inverse(w in 0.0f64..30.0, c0 in 1.01f64..3.0, t in 0.0f64..1e3) {
        let g = Gamma::Log { scale: 4.0 };
        let inv = gamma_star_inverse(&g, c0, w);
        prop_assert_eq!(gamma_star(&g, c0, t) >= w, t >= inv);
    }
}
