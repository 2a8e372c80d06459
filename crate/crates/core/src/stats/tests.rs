use super::*;
use crate::kernels::{Activation, Envelope, Gamma, Kernel, Recovery};
use crate::renewal::presets;
use crate::reprocess::UpdateLaw;
use crate::{Profile, RateSpec};
use proptest::prelude::*;

fn grid_window(jumps: &[f64], m: f64, t0: f64, t1: f64, stat: WindowStat) -> f64 {
    let n = 200_000;
    let h = (t1 - t0) / n as f64;
    (0..n)
        .map(|i| {
            let s = t0 + (i as f64 + 0.5) * h;
            stat.apply(jumps.iter().filter(|&&x| x > s - m && x <= s).count()) * h
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn window_integral_matches_grid(mut jumps in prop::collection::vec(0.0f64..6.0, 0..12), m in 0.1f64..2.0, t0 in 0.0f64..3.0, len in 0.1f64..3.0) {
        jumps.sort_by(f64::total_cmp);
        for stat in [WindowStat::Count, WindowStat::AtLeast(2), WindowStat::Power(2.0)] {
            let exact = window_integral(&jumps, m, t0, t0 + len, stat);
            let approx = grid_window(&jumps, m, t0, t0 + len, stat);
            prop_assert!((exact - approx).abs() < 1e-3 * (1.0 + approx), "{exact} {approx}");
        }
    }
}

#[test]
fn window_count_integral_is_event_time_overlap() {
    // each event contributes |(t, t + m] ∩ (t0, t1]|
    let jumps = [0.5, 1.2, 1.3, 4.0];
    let (m, t0, t1) = (1.0, 1.0, 4.5);
    let direct: f64 = jumps.iter().map(|&t: &f64| ((t + m).min(t1) - t.max(t0)).max(0.0)).sum();
    assert!((window_integral(&jumps, m, t0, t1, WindowStat::Count) - direct).abs() < 1e-12);
    assert!(windowed_functional(&jumps, WindowStat::Count, 1.0, 1.5, 5.0).is_err());
    let per_unit = windowed_functional(&jumps, WindowStat::Count, 1.0, 2.0, 5.0).unwrap();
    assert_eq!(per_unit.len(), 5);
    assert!((per_unit.iter().sum::<f64>() - 4.0).abs() < 1e-12);
}

#[test]
fn functional_counts_and_constants() {
    let jumps = [0.5, 1.0, 2.5];
    assert_eq!(Functional::Count.over(&jumps, 0.5, 2.5), 2.0);
    assert_eq!(Functional::Constant(2.0).over(&jumps, 1.0, 4.0), 6.0);
    assert_eq!(Functional::Window { m: 0.5, stat: WindowStat::Count }.needed_delay(), 1.5);
}

#[test]
fn last_difference_of_paths() {
    assert_eq!(last_difference(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert_eq!(last_difference(&[1.0, 2.0, 5.0], &[1.5, 2.0, 5.0]), 1.5);
    assert_eq!(last_difference(&[1.0], &[1.0, 3.0]), 3.0);
}

#[test]
fn block_stat_hand_values() {
    // values 2, 4 on lengths 1, 3: rate 6/4, residuals 0.5, -0.5
    let s = block_stat(&[(2.0, 1.0), (4.0, 3.0)]);
    assert_eq!(s.rate, 1.5);
    assert_eq!(s.mu_rho, 2.0);
    assert!((s.sigma2 - 0.125).abs() < 1e-15);
    assert!(!s.degenerate);
    assert!(block_stat(&[(2.0, 1.0), (6.0, 3.0)]).degenerate);
}

#[test]
fn tau_law_detects_band_rescaling() {
    let mut cfg = presets::age_dependent(0.0).unwrap();
    let seeds: Vec<u64> = (0..1500).collect();
    let s = tau_law_sample(&cfg, &seeds, Start::Initial { scale: 0.0, age: 0.0 }).unwrap();
    let reports = tau_law_reports(&cfg, &s, 0.001).unwrap();
    for r in &reports {
        assert!(r.pass, "{}", r.line());
    }
    cfg.band_scale = 0.5;
    let s = tau_law_sample(&cfg, &seeds, Start::Initial { scale: 0.0, age: 0.0 }).unwrap();
    let reports = tau_law_reports(&cfg, &s, 0.001).unwrap();
    let freq = reports.iter().find(|r| r.name == "tau_infinite_frequency").unwrap();
    assert!(!freq.pass, "{}", freq.line());
}

fn coupling_config() -> RenewalConfig {
    let kernel = Kernel::exponential(0.2, 1.0).unwrap();
    let rate = RateSpec::age_dependent(Activation::Linear { base: 0.5, slope: 1.0 }, Recovery::Hard { period: 1.0 }, 1.0);
    let env = Envelope::new(kernel, &rate, Gamma::Log { scale: 1.5 }, Profile::Exp { scale: 0.5, rate: 1.0 }, 0.0).unwrap();
    RenewalConfig::new(env, rate, Assumption::A { p: 2.0 }, 0.0).unwrap()
}

#[test]
fn coupled_starts_agree_after_regeneration() {
    let cfg = coupling_config();
    let seeds: Vec<u64> = (0..200).collect();
    let starts = (Start::Initial { scale: 1.0, age: 0.0 }, Start::Initial { scale: -1.0, age: 3.0 });
    let (reports, runs) = coupling_experiment(&cfg, starts, &seeds, 20.0, 1.0).unwrap();
    for r in reports.iter().filter(|r| r.name != "coupling_time_moment") {
        assert!(r.pass, "{}", r.line());
    }
    assert!(runs.iter().any(|r| r.coupling_time > 0.0));
    let (same, _) = coupling_experiment(&cfg, (starts.0, starts.0), &seeds[..20], 5.0, 1.0).unwrap();
    assert!(same.iter().all(|r| r.pass));
}

#[test]
fn clt_on_event_counts() {
    let cfg = presets::age_dependent(1.0).unwrap();
    let plan = CltPlan { n_blocks: 4000, group: 20, batch_horizon: 40_000.0, batch_len: 200.0, alpha: 0.001 };
    let out = clt_time_average(&cfg, &Functional::Count, 11, &plan).unwrap();
    assert!(out.stat.rate > 0.0 && out.stat.sigma2 > 0.0);
    for r in &out.reports {
        assert!(r.pass, "{}", r.line());
    }
    for r in block_independence(&out.blocks, cfg.delay(), 0.001) {
        assert!(r.pass, "{}", r.line());
    }
    let constant = clt_time_average(&cfg, &Functional::Constant(1.0), 11, &CltPlan { n_blocks: 50, ..plan }).unwrap();
    assert!(constant.stat.degenerate);
    assert!(!constant.reports[0].gated);
}

#[test]
fn split_counts_are_independent_poisson() {
    for history in [false, true] {
        for r in split_independence(5, 4000, 1.0, history, 0.001).unwrap() {
            assert!(r.pass, "{}", r.line());
        }
    }
}

#[test]
fn report_csv_layout() {
    let r = TestReport::exact("x", 0, 3);
    let mut buf = Vec::new();
    write_reports_csv(&mut buf, &[r]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "test,statistic,p_value,n,pass\nx,0,1,3,true\n");
}

#[test]
fn borel_re_and_thinning_checks() {
    for r in borel_progeny_check(0.5, 20_000, 1, 0.001).unwrap() {
        assert!(r.pass, "{}", r.line());
    }
    for r in re_chain_check(UpdateLaw::Geometric { p: 0.5 }, 200_000, 10, 20_000, 2, 0.001).unwrap() {
        assert!(r.pass, "{}", r.line());
    }
    let kernel = Kernel::exponential(0.4, 2.0).unwrap();
    let rate = RateSpec::age_dependent(Activation::Capped { base: 0.5, slope: 1.0, cap: 3.0 }, Recovery::Exp { rate: 2.0 }, 1.0);
    let r = thinning_check(&kernel, &rate, 20.0, 100, 3).unwrap();
    assert!(r.pass, "{}", r.line());
}

#[test]
fn sequential_thinning_by_hand() {
    // ψ = min(1 + x₊, 2), h = e^{-t}: the first point at height 1 is kept, the
    // second at height 1.5 needs x ≥ 0.5
    let kernel = Kernel::exponential(1.0, 1.0).unwrap();
    let rate = RateSpec::ordinary(Activation::Capped { base: 1.0, slope: 1.0, cap: 2.0 });
    let kept = sequential_thinning(&[(0.5, 1.0), (0.9, 1.5), (3.0, 1.5)], &kernel, &rate, 0.0);
    assert_eq!(kept, vec![0.5, 0.9]);
}
