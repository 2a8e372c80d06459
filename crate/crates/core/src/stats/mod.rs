//! Statistics over regeneration blocks: exact-law checks of the band system,
//! coupling experiments, time-average CLT, functional CLT paths and moment
//! diagnostics.

pub mod hypothesis;

use crate::cluster::{simulate_cluster, Offspring};
use crate::error::invalid;
use crate::hawkes::{fmt_num, simulate_adhp, Signal};
use crate::prm::{keyed_rng, split, splitmix, tags, Point, PrmStream};
use crate::renewal::{
    blocks_until, iterate_regenerations, run_ensemble, run_system, start_signal, Assumption, Block, Diagnostics, RenewalConfig, Start,
    Streams,
};
use crate::reprocess::{REChain, UpdateLaw};
use crate::{RateSpec, Result};
use hypothesis::{
    anderson_darling_normal, chi2_gof, chi2_independence, correlation, dispersion, ks_one_sample, ks_two_sample, mean, variance,
};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;

/// One line of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: u64,
    pub pass: bool,
    /// Diagnostics that never fail a run have `gated = false`.
    pub gated: bool,
    pub note: String,
}

impl TestReport {
    fn new(name: &str, statistic: f64, p_value: f64, n: u64, pass: bool, note: impl Into<String>) -> Self {
        TestReport { name: name.into(), statistic, p_value, n, pass, gated: true, note: note.into() }
    }

    /// p-value test at level `alpha`.
    fn p_test(name: &str, o: hypothesis::Outcome, n: u64, alpha: f64) -> Self {
        Self::new(name, o.statistic, o.p_value, n, o.p_value >= alpha, format!("df={}", fmt_num(o.df)))
    }

    /// `|z| ≤ 3` check of an estimate against a target.
    fn z_test(name: &str, estimate: f64, target: f64, se: f64, n: u64) -> Self {
        let z = if se > 0.0 {
            (estimate - target) / se
        } else if estimate == target {
            0.0
        } else {
            f64::INFINITY
        };
        let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
        Self::new(name, z, p, n, z.abs() <= 3.0, format!("estimate={} target={} se={}", fmt_num(estimate), fmt_num(target), fmt_num(se)))
    }

    /// Zero-tolerance count of violations.
    fn exact(name: &str, failures: u64, n: u64) -> Self {
        let pass = failures == 0;
        Self::new(name, failures as f64, if pass { 1.0 } else { 0.0 }, n, pass, format!("{failures} of {n} failed"))
    }

    /// Pass/fail against a fixed threshold; the p-value column is 1 or 0.
    fn threshold(name: &str, statistic: f64, n: u64, pass: bool, note: impl Into<String>) -> Self {
        Self::new(name, statistic, if pass { 1.0 } else { 0.0 }, n, pass, note)
    }

    /// Sample correlation of `n` pairs against `3/√n`; the p-value treats `c√n` as standard normal.
    fn correlation(name: &str, c: f64, n: usize) -> Self {
        let bound = 3.0 / (n as f64).sqrt();
        let p = 2.0 * (1.0 - Normal::standard().cdf(c.abs() * (n as f64).sqrt()));
        Self::new(name, c, p, n as u64, c.abs() < bound, format!("bound {}", fmt_num(bound)))
    }

    fn diagnostic(mut self) -> Self {
        self.gated = false;
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{:<8} {:<32} stat={:<14} p={:<14} n={:<9} {}",
            if self.pass {
                "PASS"
            } else if self.gated {
                "FAIL"
            } else {
                "WARN"
            },
            self.name,
            fmt_num(self.statistic),
            fmt_num(self.p_value),
            self.n,
            self.note
        )
    }
}

/// CSV `test,statistic,p_value,n,pass`.
pub fn write_reports_csv<W: Write>(mut w: W, reports: &[TestReport]) -> std::io::Result<()> {
    writeln!(w, "test,statistic,p_value,n,pass")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{}", r.name, fmt_num(r.statistic), fmt_num(r.p_value), r.n, r.pass)?;
    }
    Ok(())
}

pub fn all_gated_pass(reports: &[TestReport]) -> bool {
    reports.iter().all(|r| r.pass || !r.gated)
}

/// Summand of a window functional: a function of the event count in `(s − m, s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowStat {
    Count,
    /// `1{count ≥ k}`
    AtLeast(usize),
    /// `count^q`
    Power(f64),
}

impl WindowStat {
    pub fn apply(&self, n: usize) -> f64 {
        match *self {
            WindowStat::Count => n as f64,
            WindowStat::AtLeast(k) => f64::from(u8::from(n >= k)),
            WindowStat::Power(q) => (n as f64).powf(q),
        }
    }
}

/// Additive path functional `G`, integrated over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `c` per unit time.
    Constant(f64),
    /// Event count.
    Count,
    /// `∫ T(Z(s − m, s]) ds`.
    Window { m: f64, stat: WindowStat },
}

impl Functional {
    /// Value on `(t0, t1]` of a path given by sorted event times.
    pub fn over(&self, jumps: &[f64], t0: f64, t1: f64) -> f64 {
        match *self {
            Functional::Constant(c) => c * (t1 - t0),
            Functional::Count => {
                let a = jumps.partition_point(|&s| s <= t0);
                let b = jumps.partition_point(|&s| s <= t1);
                (b - a) as f64
            }
            Functional::Window { m, stat } => window_integral(jumps, m, t0, t1, stat),
        }
    }

    /// Smallest delay for which per-block values see only their own block.
    pub fn needed_delay(&self) -> f64 {
        match *self {
            Functional::Window { m, .. } => m + 1.0,
            _ => 0.0,
        }
    }
}

/// `∫_{t0}^{t1} T(#{t_j ∈ (s − m, s]}) ds`, exact: the count only changes
/// at `t_j` and `t_j + m`.
pub fn window_integral(jumps: &[f64], m: f64, t0: f64, t1: f64, stat: WindowStat) -> f64 {
    if t1 <= t0 {
        return 0.0;
    }
    let lo = jumps.partition_point(|&s| s <= t0 - m);
    let hi = jumps.partition_point(|&s| s <= t1);
    let mut cuts: Vec<f64> = vec![t0, t1];
    for &s in &jumps[lo..hi] {
        for c in [s, s + m] {
            if c > t0 && c < t1 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let count = |s: f64| jumps.partition_point(|&x| x <= s) - jumps.partition_point(|&x| x <= s - m);
    cuts.windows(2).map(|w| stat.apply(count(0.5 * (w[0] + w[1]))) * (w[1] - w[0])).sum()
}

/// Per unit interval `(k−1, k]`, `k = 1..=⌊horizon⌋`, the integral of the window statistic.
pub fn windowed_functional(jumps: &[f64], stat: WindowStat, m: f64, delay: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(m > 0.0) || (delay - (m + 1.0)).abs() > 1e-12 {
        return Err(invalid("windowed functional", "needs m > 0 and D = m + 1"));
    }
    Ok((1..=horizon.floor() as u64).map(|k| window_integral(jumps, m, (k - 1) as f64, k as f64, stat)).collect())
}

/// Cycles of many independent systems.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TauLawSample {
    /// Finite `τ_n − α_{n−1}`.
    pub gaps: Vec<f64>,
    pub cycles: u64,
    pub infinite: u64,
    pub etas: Vec<u64>,
    pub diag: Diagnostics,
}

pub fn tau_law_sample(cfg: &RenewalConfig, seeds: &[u64], start: Start) -> Result<TauLawSample> {
    let mut s = TauLawSample::default();
    for out in run_ensemble(cfg, seeds, start) {
        let out = out?;
        for c in &out.cycles {
            s.cycles += 1;
            if c.tau_gap.is_finite() {
                s.gaps.push(c.tau_gap);
            } else {
                s.infinite += 1;
            }
        }
        s.etas.push(out.eta as u64);
        s.diag.merge(&out.diag);
    }
    Ok(s)
}

/// Exact-law checks against the band of the unmodified envelope, so a
/// rescaled band shows up as a failure.
pub fn tau_law_reports(cfg: &RenewalConfig, s: &TauLawSample, alpha: f64) -> Result<Vec<TestReport>> {
    let env = cfg.env();
    let mass = env.band_mass();
    let p = (-mass).exp();
    let n = s.cycles as f64;
    let phat = s.infinite as f64 / n;
    let mut out = vec![TestReport::z_test("tau_infinite_frequency", phat, p, (p * (1.0 - p) / n).sqrt(), s.cycles)];
    let cdf_err = std::cell::RefCell::new(None);
    let ks = ks_one_sample(&s.gaps, |t| match env.band_mass_to(t) {
        Ok(m) => -(-m).exp_m1() / -(-mass).exp_m1(),
        Err(e) => {
            cdf_err.replace(Some(e));
            f64::NAN
        }
    });
    if let Some(e) = cdf_err.into_inner() {
        return Err(e);
    }
    out.push(TestReport::p_test("tau_gap_ks", ks, s.gaps.len() as u64, alpha));
    let kmax = 40usize;
    let mut observed = vec![0u64; kmax];
    for &e in &s.etas {
        observed[(e as usize).min(kmax - 1)] += 1;
    }
    let mut probs: Vec<f64> = (0..kmax - 1).map(|k| p * (1.0 - p).powi(k as i32)).collect();
    probs.push((1.0 - p).powi(kmax as i32 - 1));
    out.push(TestReport::p_test("eta_geometric", chi2_gof(&observed, &probs, 5.0, 0), s.etas.len() as u64, alpha));
    out.extend(invariant_reports(&s.diag));
    Ok(out)
}

/// Pathwise band and envelope assertions.
pub fn invariant_reports(d: &Diagnostics) -> Vec<TestReport> {
    let mut band = TestReport::exact("band_invariant", d.band_violations, d.band_checks);
    band.note =
        format!("{} of {} candidates outside the band, worst excess {}", d.band_violations, d.band_checks, fmt_num(d.worst_band_excess));
    vec![band, TestReport::exact("envelope_certificate", d.envelope_violations, d.envelope_checks)]
}

/// One coupled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRun {
    pub seed: u64,
    pub alpha0: f64,
    pub rho: f64,
    /// Last time the two paths differ (0 when they never do).
    pub coupling_time: f64,
    /// Paths agree on `(ρ, ρ + tail]`.
    pub agree_after_rho: bool,
    /// Both starts produced the same regeneration time and the system's
    /// `Z*` matches a plain thinning run.
    pub consistent: bool,
}

/// Two processes from different starts on the same measure and `α₀`:
/// exact agreement after `ρ`, and the law of the coupling time.
pub fn coupling_experiment(
    cfg: &RenewalConfig,
    starts: (Start, Start),
    seeds: &[u64],
    tail: f64,
    p: f64,
) -> Result<(Vec<TestReport>, Vec<CouplingRun>)> {
    let runs: Vec<Result<CouplingRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let streams = Streams::new(seed, 0);
            let a = run_system(cfg, &streams, starts.0)?;
            let b = run_system(cfg, &streams, starts.1)?;
            let horizon = a.rho + tail;
            let path = |start: Start| -> Result<Vec<f64>> {
                let (signal, age) = start_signal(cfg, start)?;
                let mut cur = streams.pi.cursor();
                Ok(simulate_adhp(&mut cur, cfg.env().kernel(), cfg.rate(), signal, age, 0.0, 0.0, horizon)?.jumps)
            };
            let (x, y) = (path(starts.0)?, path(starts.1)?);
            let after = |v: &[f64]| v.iter().copied().filter(|&t| t > a.rho).collect::<Vec<_>>();
            let upto = |v: &[f64]| v.iter().copied().filter(|&t| t <= a.rho).collect::<Vec<_>>();
            let coupling_time = last_difference(&x, &y);
            Ok(CouplingRun {
                seed,
                alpha0: cfg.alpha0,
                rho: a.rho,
                coupling_time,
                agree_after_rho: after(&x) == after(&y),
                consistent: a.rho == b.rho && upto(&x) == a.zstar.jumps && upto(&y) == b.zstar.jumps,
            })
        })
        .collect();
    let runs: Vec<CouplingRun> = runs.into_iter().collect::<Result<_>>()?;
    let n = runs.len() as u64;
    let bad = runs.iter().filter(|r| !r.agree_after_rho).count() as u64;
    let inconsistent = runs.iter().filter(|r| !r.consistent).count() as u64;
    let late = runs.iter().filter(|r| r.coupling_time > r.rho).count() as u64;
    let mut reports = vec![
        TestReport::exact("coupling_exact", bad, n),
        TestReport::exact("coupling_consistency", inconsistent, n),
        TestReport::exact("coupling_before_rho", late, n),
    ];
    let t: Vec<f64> = runs.iter().map(|r| (r.coupling_time - r.alpha0).max(0.0).powf(p)).collect();
    reports.push(doubling_report("coupling_time_moment", &t));
    Ok((reports, runs))
}

fn last_difference(x: &[f64], y: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut last: f64 = 0.0;
    while i < x.len() || j < y.len() {
        match (x.get(i), y.get(j)) {
            (Some(a), Some(b)) if a == b => {
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) => {
                if a < b {
                    last = last.max(*a);
                    i += 1;
                } else {
                    last = last.max(*b);
                    j += 1;
                }
            }
            (Some(a), None) => {
                last = last.max(*a);
                i += 1;
            }
            (None, Some(b)) => {
                last = last.max(*b);
                j += 1;
            }
            (None, None) => break,
        }
    }
    last
}

/// Mean of the first half against the mean of the whole sample: ratio within 20%.
fn doubling_report(name: &str, values: &[f64]) -> TestReport {
    let half = mean(&values[..values.len() / 2]);
    let full = mean(values);
    let ratio = if half == 0.0 && full == 0.0 { 1.0 } else { half / full };
    let pass = ratio.is_finite() && (ratio - 1.0).abs() <= 0.2;
    TestReport::threshold(name, ratio, values.len() as u64, pass, format!("N-sample {} vs 2N-sample {}", fmt_num(half), fmt_num(full)))
}

/// Renewal-reward estimates from per-block `(value, length)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStat {
    pub n_blocks: usize,
    /// `E ρ₁`.
    pub mu_rho: f64,
    /// Invariant mean of `G` per unit time, `Σ values / Σ lengths`.
    pub rate: f64,
    pub rate_se: f64,
    /// `σ² = E[(S − rate·ρ)²] / E ρ`.
    pub sigma2: f64,
    pub sigma2_se: f64,
    pub degenerate: bool,
}

pub fn block_stat(pairs: &[(f64, f64)]) -> BlockStat {
    let n = pairs.len() as f64;
    let lens: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lbar = mean(&lens);
    let rate = pairs.iter().map(|p| p.0).sum::<f64>() / (lbar * n);
    let u: Vec<f64> = pairs.iter().map(|&(c, l)| (c - rate * l).powi(2)).collect();
    let ubar = mean(&u);
    let sigma2 = ubar / lbar;
    let cov_ul = u.iter().zip(&lens).map(|(a, b)| (a - ubar) * (b - lbar)).sum::<f64>() / (n - 1.0);
    let var = (variance(&u) - 2.0 * sigma2 * cov_ul + sigma2 * sigma2 * variance(&lens)) / (lbar * lbar);
    BlockStat {
        n_blocks: pairs.len(),
        mu_rho: lbar,
        rate,
        rate_se: (sigma2 / (n * lbar)).sqrt(),
        sigma2,
        sigma2_se: (var.max(0.0) / n).sqrt(),
        degenerate: sigma2 < 1e-12,
    }
}

fn block_pairs(blocks: &[Block], g: &Functional) -> Vec<(f64, f64)> {
    blocks.iter().map(|b| (g.over(&b.jumps, 0.0, b.rho), b.rho)).collect()
}

/// Sizes of the CLT experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltPlan {
    pub n_blocks: usize,
    /// Blocks per standardized replicate.
    pub group: usize,
    /// Length of the single batch-means run.
    pub batch_horizon: f64,
    pub batch_len: f64,
    pub alpha: f64,
}

pub struct CltResult {
    pub stat: BlockStat,
    pub batch_sigma2: f64,
    pub batch_se: f64,
    pub blocks: Vec<Block>,
    pub reports: Vec<TestReport>,
}

/// Time-average CLT from regeneration blocks, with a batch-means cross-check.
pub fn clt_time_average(cfg: &RenewalConfig, g: &Functional, seed: u64, plan: &CltPlan) -> Result<CltResult> {
    if cfg.delay() + 1e-12 < g.needed_delay() {
        return Err(invalid("functional", format!("window functional needs D >= {}", g.needed_delay())));
    }
    let start = Start::Initial { scale: 0.0, age: 0.0 };
    let blocks = iterate_regenerations(cfg, seed, plan.n_blocks + 1, start)?;
    let pairs = block_pairs(&blocks[1..], g);
    let stat = block_stat(&pairs);
    let mut reports = Vec::new();
    if stat.degenerate {
        let mut r =
            TestReport::threshold("clt_degenerate", stat.sigma2, pairs.len() as u64, false, "sigma2 is zero: functional is degenerate");
        r.gated = false;
        reports.push(r);
        return Ok(CltResult { stat, batch_sigma2: 0.0, batch_se: 0.0, blocks, reports });
    }
    let z: Vec<f64> = pairs
        .chunks_exact(plan.group)
        .map(|c| {
            let s: f64 = c.iter().map(|p| p.0 - stat.rate * p.1).sum();
            let l: f64 = c.iter().map(|p| p.1).sum();
            s / (stat.sigma2 * l).sqrt()
        })
        .collect();
    reports.push(TestReport::p_test("clt_normality", anderson_darling_normal(&z), z.len() as u64, plan.alpha));

    let (signal, age) = start_signal(cfg, start)?;
    let mut cur = PrmStream::new(seed, tags::AUX).cursor();
    let path = simulate_adhp(&mut cur, cfg.env().kernel(), cfg.rate(), signal, age, 0.0, 0.0, plan.batch_horizon)?;
    let nb = (plan.batch_horizon / plan.batch_len).floor() as usize;
    let batches: Vec<f64> = (1..nb).map(|k| g.over(&path.jumps, k as f64 * plan.batch_len, (k + 1) as f64 * plan.batch_len)).collect();
    let batch_sigma2 = variance(&batches) / plan.batch_len;
    let batch_se = batch_sigma2 * (2.0 / (batches.len() as f64 - 1.0)).sqrt();
    let mut r = TestReport::z_test("sigma2_agreement", stat.sigma2, batch_sigma2, stat.sigma2_se.hypot(batch_se), pairs.len() as u64);
    r.note = format!(
        "blocks {} ± {}, batch means {} ± {}",
        fmt_num(stat.sigma2),
        fmt_num(stat.sigma2_se),
        fmt_num(batch_sigma2),
        fmt_num(batch_se)
    );
    reports.push(r);
    let with_first = block_stat(&block_pairs(&blocks, g));
    reports.push(TestReport::z_test("centering_first_block", with_first.rate, stat.rate, stat.rate_se, blocks.len() as u64));
    Ok(CltResult { stat, batch_sigma2, batch_se, blocks, reports })
}

/// Sizes of the functional CLT experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcltPlan {
    /// Time scale `n`.
    pub n: f64,
    pub n_paths: usize,
    /// Points per path on `[0, 1]`.
    pub grid: usize,
}

/// Rows `(path, t, B)` of a path ensemble.
pub type PathRows = Vec<(usize, f64, f64)>;

/// Rescaled paths `B^n_t = (nσ²)^{-1/2} S_{nt}` as rows `(path, t, B)`.
pub fn functional_clt_paths(
    cfg: &RenewalConfig,
    g: &Functional,
    seed: u64,
    stat: &BlockStat,
    plan: &FcltPlan,
) -> Result<(PathRows, Vec<TestReport>)> {
    let start = Start::Initial { scale: 0.0, age: 0.0 };
    let n = plan.n;
    let scale = (n * stat.sigma2).sqrt();
    let paths: Vec<Result<Vec<f64>>> = (0..plan.n_paths)
        .into_par_iter()
        .map(|p| {
            let blocks = blocks_until(cfg, splitmix(seed ^ splitmix(p as u64 + 1)), n, start)?;
            let jumps: Vec<f64> = blocks.iter().flat_map(|b| b.jumps.iter().map(move |s| b.start + s)).collect();
            let s_at = |k: f64| g.over(&jumps, 0.0, k) - stat.rate * k;
            Ok((0..=plan.grid)
                .map(|i| {
                    let t = n * i as f64 / plan.grid as f64;
                    let (lo, hi) = (t.floor(), t.ceil());
                    let v = if hi == lo { s_at(lo) } else { s_at(lo) + (t - lo) * (s_at(hi) - s_at(lo)) };
                    v / scale
                })
                .collect())
        })
        .collect();
    let paths: Vec<Vec<f64>> = paths.into_iter().collect::<Result<_>>()?;
    let rows =
        paths.iter().enumerate().flat_map(|(p, v)| v.iter().enumerate().map(move |(i, &b)| (p, i as f64 / plan.grid as f64, b))).collect();
    let at = |t: f64| -> Vec<f64> {
        let i = (t * plan.grid as f64).round() as usize;
        paths.iter().map(|v| v[i]).collect()
    };
    let one = at(1.0);
    let mut reports = Vec::new();
    for t in [0.25, 0.5] {
        let x = at(t);
        let (r, se) = second_moment_ratio(&x, &one);
        reports.push(TestReport::z_test(if t == 0.25 { "fclt_variance_0.25" } else { "fclt_variance_0.5" }, r, t, se, plan.n_paths as u64));
    }
    let half = at(0.5);
    let incr: Vec<f64> = one.iter().zip(&half).map(|(a, b)| a - b).collect();
    let c = correlation(&half, &incr);
    reports.push(TestReport::correlation("fclt_increment_correlation", c, plan.n_paths));
    let origin = at(0.0).iter().filter(|&&b| b != 0.0).count() as u64;
    reports.push(TestReport::exact("fclt_origin", origin, plan.n_paths as u64));
    Ok((rows, reports))
}

/// `E x² / E y²` with a delta-method standard error.
fn second_moment_ratio(x: &[f64], y: &[f64]) -> (f64, f64) {
    let u: Vec<f64> = x.iter().map(|v| v * v).collect();
    let v: Vec<f64> = y.iter().map(|v| v * v).collect();
    let (ub, vb) = (mean(&u), mean(&v));
    let r = ub / vb;
    let n = u.len() as f64;
    let cov = u.iter().zip(&v).map(|(a, b)| (a - ub) * (b - vb)).sum::<f64>() / (n - 1.0);
    let var = (variance(&u) - 2.0 * r * cov + r * r * variance(&v)) / (vb * vb);
    (r, (var.max(0.0) / n).sqrt())
}

/// Running `S_k / √(2σ²k ln ln k)` over unit increments; never gated.
pub fn lil_envelope(increments: &[f64], rate: f64, sigma2: f64) -> TestReport {
    let mut s = 0.0;
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut n = 0u64;
    for (k, x) in increments.iter().enumerate() {
        s += x - rate;
        let kf = (k + 1) as f64;
        if kf < 16.0 {
            continue;
        }
        let r = if sigma2 > 0.0 { s / (2.0 * sigma2 * kf * kf.ln().ln()).sqrt() } else { 0.0 };
        hi = hi.max(r);
        lo = lo.min(r);
        n += 1;
    }
    let inside = hi <= 1.5 && lo >= -1.5;
    let note = format!("range [{}, {}], both signs {}, running max above 0.5 {}", fmt_num(lo), fmt_num(hi), lo < 0.0 && hi > 0.0, hi > 0.5);
    TestReport::threshold("lil_envelope", hi.abs().max(lo.abs()), n, inside, note).diagnostic()
}

/// Consecutive blocks: correlations, identical distribution and the delay gap.
pub fn block_independence(blocks: &[Block], delay: f64, alpha: f64) -> Vec<TestReport> {
    let b = &blocks[1..];
    let n = b.len();
    let counts: Vec<f64> = b.iter().map(|x| x.jumps.len() as f64).collect();
    let lens: Vec<f64> = b.iter().map(|x| x.rho).collect();
    let cc = correlation(&counts[..n - 1], &counts[1..]);
    let cl = correlation(&lens[..n - 1], &lens[1..]);
    let mut out = vec![
        TestReport::correlation("block_count_correlation", cc, n),
        TestReport::correlation("block_length_correlation", cl, n),
        TestReport::p_test("block_length_identical", ks_two_sample(&lens[..n / 2], &lens[n / 2..]), n as u64, alpha),
    ];
    let last_window = |x: &Block| x.jumps.iter().filter(|&&s| s > x.rho - delay - 1.0 && s <= x.rho - delay).count() as f64;
    let w: Vec<f64> = b.iter().map(last_window).collect();
    out.push(TestReport::p_test("block_terminal_window", ks_two_sample(&w[..n / 2], &w[n / 2..]), n as u64, alpha));
    let gaps = blocks.iter().filter(|x| x.jumps.iter().any(|&s| s > x.rho - delay)).count() as u64;
    out.push(TestReport::exact("block_delay_gap", gaps, blocks.len() as u64));
    out
}

/// Which moment of `ρ − α₀` to track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Power(f64),
    /// `E e^{s(ρ − α₀)}`
    Exp(f64),
}

impl Moment {
    pub fn for_assumption(a: Assumption) -> Self {
        match a {
            Assumption::A { p } => Moment::Power(p),
            Assumption::B => Moment::Exp(0.01),
        }
    }
}

/// Moment of `ρ − α₀` on `N` against `2N` runs.
pub fn moment_stability(cfg: &RenewalConfig, seeds: &[u64], moment: Moment) -> Result<(TestReport, Vec<f64>)> {
    let mut xs = Vec::with_capacity(seeds.len());
    for out in run_ensemble(cfg, seeds, Start::Initial { scale: 0.0, age: 0.0 }) {
        let out = out?;
        xs.push(out.rho - cfg.alpha0);
    }
    let values: Vec<f64> = xs
        .iter()
        .map(|&x| match moment {
            Moment::Power(p) => x.powf(p),
            Moment::Exp(s) => (s * x).exp(),
        })
        .collect();
    let name = match moment {
        Moment::Power(_) => "rho_power_moment",
        Moment::Exp(_) => "rho_exponential_moment",
    };
    Ok((doubling_report(name, &values), xs))
}

/// Splitting two measures along a predictable band: independence of the
/// lower and upper box counts and their Poisson dispersion. The band on
/// window `k` depends on the lower counts seen in window `k − 1`.
pub fn split_independence(seed: u64, n_windows: usize, height: f64, history: bool, alpha: f64) -> Result<Vec<TestReport>> {
    let pi = PrmStream::new(seed, tags::PI);
    let pibar = PrmStream::new(seed, tags::PI_BAR);
    let mut down_counts = Vec::with_capacity(n_windows);
    let mut up_counts = Vec::with_capacity(n_windows);
    let mut prev = 0u64;
    for k in 0..n_windows {
        let (lo, width) = if history { (0.2 + 0.3 * (prev % 3) as f64, 0.4 + 0.5 * (prev % 2) as f64) } else { (0.5, 0.7) };
        let f1 = move |s: f64| lo + 0.2 * (std::f64::consts::TAU * s).sin().abs();
        let f2 = move |s: f64| f1(s) + width;
        let zmax = lo + 0.2 + width + height;
        let t0 = k as f64;
        let sp = split(&pi, &pibar, &f1, &f2, (t0, t0 + 1.0), zmax)?;
        let down = sp.down.iter().filter(|p| p.0 > t0 && p.1 <= height).count() as u64;
        let up = sp.up.iter().filter(|p| p.0 > t0 && p.1 <= height).count() as u64;
        prev = sp.down.iter().filter(|p| p.0 > t0).count() as u64;
        down_counts.push(down);
        up_counts.push(up);
    }
    let cells = 6usize;
    let mut table = vec![vec![0u64; cells]; cells];
    for (&d, &u) in down_counts.iter().zip(&up_counts) {
        table[(d as usize).min(cells - 1)][(u as usize).min(cells - 1)] += 1;
    }
    let tag = if history { "history" } else { "static" };
    let n = n_windows as u64;
    Ok(vec![
        TestReport::p_test(&format!("split_independence_{tag}"), chi2_independence(&table), n, alpha),
        TestReport::p_test(&format!("split_down_dispersion_{tag}"), dispersion(&down_counts), n, alpha),
        TestReport::p_test(&format!("split_up_dispersion_{tag}"), dispersion(&up_counts), n, alpha),
    ])
}

/// Total progeny of subcritical clusters against the Borel law, plus the
/// mass kept by its truncation.
pub fn borel_progeny_check(m: f64, n_clusters: u64, seed: u64, alpha: f64) -> Result<Vec<TestReport>> {
    let off = Offspring::new(&crate::Kernel::exponential(m, 1.0)?, 1.0)?;
    let law = off.law();
    let table = law.table();
    let kept: f64 = table.iter().sum();
    // bins: sizes 1..=N, then the truncated tail
    let mut observed = vec![0u64; table.len() + 1];
    let mut rng = keyed_rng(seed, tags::AUX, 7, 0);
    for _ in 0..n_clusters {
        let c = simulate_cluster(&off, 0.0, &mut rng, crate::cluster::TREE_CAP)?;
        observed[(c.size as usize - 1).min(table.len())] += 1;
    }
    let mut probs = table.clone();
    probs.push((1.0 - kept).max(0.0));
    Ok(vec![
        TestReport::p_test("borel_progeny", chi2_gof(&observed, &probs, 5.0, 0), n_clusters, alpha),
        TestReport::threshold(
            "borel_truncated_mass",
            kept,
            table.len() as u64,
            kept >= 1.0 - 1e-9,
            format!("truncation at {}", table.len()),
        ),
    ])
}

/// Thinned occupation of the exchange chain against its invariant law, and
/// the return-time identity `E₀σ · μ(0) = 1`.
pub fn re_chain_check(law: UpdateLaw, steps: u64, thin: u64, returns: u64, seed: u64, alpha: f64) -> Result<Vec<TestReport>> {
    let mut chain = REChain::new(law, 0)?;
    let mut rng = keyed_rng(seed, tags::AUX, 8, 0);
    let cells = 40usize;
    let mut observed = vec![0u64; cells];
    for i in 1..=steps {
        let m = chain.advance(&mut rng) as usize;
        if i % thin == 0 {
            observed[m.min(cells - 1)] += 1;
        }
    }
    let mut probs = Vec::with_capacity(cells);
    for k in 0..cells as u64 - 1 {
        probs.push(chain.invariant_pmf(k)?);
    }
    probs.push(1.0 - chain.invariant_cdf(cells as u64 - 2)?);
    let n = observed.iter().sum::<u64>();
    let mut out = vec![TestReport::p_test("re_occupation", chi2_gof(&observed, &probs, 5.0, 0), n, alpha)];
    let sigma: Vec<f64> =
        (0..returns).map(|_| chain.return_time(0, &mut rng, crate::reprocess::RETURN_CAP).map(|s| s as f64)).collect::<Result<_>>()?;
    let mu0 = chain.invariant_pmf(0)?;
    let se = (variance(&sigma) / returns as f64).sqrt() * mu0;
    out.push(TestReport::z_test("re_kac", mean(&sigma) * mu0, 1.0, se, returns));
    Ok(out)
}

/// Sequential thinning from scratch: every point of the measure under a
/// global bound is kept iff its mark is below the intensity recomputed from
/// the full past.
pub fn sequential_thinning(points: &[Point], kernel: &crate::Kernel, rate: &RateSpec, age0: f64) -> Vec<f64> {
    let mut jumps: Vec<f64> = Vec::new();
    for &(t, z) in points {
        let x: f64 = jumps.iter().map(|&s| kernel.value(t - s)).sum();
        let age = jumps.last().map_or(age0 + t, |&s| t - s);
        if z <= rate.psi(x, age) {
            jumps.push(t);
        }
    }
    jumps
}

/// Event-for-event agreement of the state-based thinning with the
/// from-scratch oracle on `(0, horizon]`.
pub fn thinning_check(kernel: &crate::Kernel, rate: &RateSpec, horizon: f64, runs: u64, seed: u64) -> Result<TestReport> {
    let bound = rate.global_bound().ok_or_else(|| invalid("RateSpec", "thinning check needs a bounded rate"))?;
    let failures: Vec<Result<bool>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let pi = PrmStream::new(splitmix(seed ^ splitmix(i)), tags::PI);
            let points = pi.sample_strip(0.0, horizon, bound)?;
            let oracle = sequential_thinning(&points, kernel, rate, 0.0);
            let path = simulate_adhp(&mut pi.cursor(), kernel, rate, Signal::zero(), 0.0, 0.0, 0.0, horizon)?;
            Ok(path.jumps != oracle)
        })
        .collect();
    let bad = failures.into_iter().collect::<Result<Vec<bool>>>()?.into_iter().filter(|&b| b).count() as u64;
    Ok(TestReport::exact("thinning_oracle", bad, runs))
}

#[cfg(test)]
mod tests;
