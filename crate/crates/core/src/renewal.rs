//! The band system: lower process, stopping times `τ_n`, `α_n`, the index
//! `η`, the regeneration time `ρ = α_η + D`, and consecutive regeneration blocks.

use crate::error::invalid;
use crate::hawkes::{fmt_num, HawkesState, Path, Signal, MAX_BOUND};
use crate::kernels::{exponential_threshold, Setup};
use crate::prm::{keyed_rng, splitmix, tags, PointSource, PrmCursor, PrmStream, SplitDown};
use crate::{Envelope, Error, Gamma, Kernel, RateSpec, Result};
use rand::Rng;
use rayon::prelude::*;
use std::io::Write;

/// Remaining band mass below which the scan for a band point stops and the
/// rest is decided by one Bernoulli draw.
pub const TAIL_TOL: f64 = 1e-12;
/// Numerical slack of the pathwise band assertion.
pub const BAND_SLACK: f64 = 1e-9;
/// Both sides of a bracketing certificate below this value end the grid.
pub const CERT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caps {
    pub cycles: u64,
    /// Largest integer offset an `α` scan may try.
    pub scan: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { cycles: 1_000_000, scan: 1_000_000 }
    }
}

/// Integrability regime of `r`, `g`, `h̄` and the matching growth of `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assumption {
    /// Power tails with moment order `p`.
    A { p: f64 },
    /// Exponential tails.
    B,
}

#[derive(Debug, Clone)]
pub struct RenewalConfig {
    env: Envelope,
    rate: RateSpec,
    positive: Kernel,
    linear: RateSpec,
    assumption: Assumption,
    pub alpha0: f64,
    pub caps: Caps,
    /// Multiplies `F` everywhere; anything but 1 breaks the construction and
    /// exists only to check that the exact-law tests notice.
    pub band_scale: f64,
    cert_horizon: f64,
    cert_remaining: f64,
}

impl RenewalConfig {
    pub fn new(env: Envelope, rate: RateSpec, assumption: Assumption, alpha0: f64) -> Result<Self> {
        rate.validate(env.kernel())?;
        if env.lipschitz() != rate.lipschitz() || env.c_psi() != rate.c_psi() || env.g() != &rate.recovery_profile() {
            return Err(invalid("RenewalConfig", "envelope was built for a different rate function"));
        }
        if !(alpha0 >= 0.0 && alpha0.is_finite()) {
            return Err(invalid("RenewalConfig.alpha0", "must be finite and >= 0"));
        }
        let gamma = env.gamma();
        match assumption {
            Assumption::A { p } => {
                if !(p >= 0.0) {
                    return Err(invalid("RenewalConfig.p", "moment order must be >= 0"));
                }
                env.check_moments(p)?;
                match rate.setup {
                    Setup::O => {
                        let ch = exponential_threshold(env.kernel().positive_mass() * rate.lipschitz());
                        let ratio = gamma.far_log_ratio((p + 1.0) / ch);
                        if !(ratio > 1.0) {
                            return Err(invalid(
                                "GammaSchedule",
                                format!("setup O needs gamma(t) > (p+1) ln t / c_h eventually, ratio {ratio}"),
                            ));
                        }
                    }
                    Setup::AD => {
                        if !(gamma.far_log_ratio(1.0) > 0.0) {
                            return Err(invalid("GammaSchedule", "setup AD needs gamma to grow at least logarithmically"));
                        }
                    }
                }
            }
            Assumption::B => {
                use crate::kernels::quad::Decay;
                let light = |d: Decay<f64>| !matches!(d, Decay::Power(_));
                if !(light(env.kernel().decay()) && light(env.r().decay()) && light(env.g().decay())) {
                    return Err(invalid("RenewalConfig.assumption", "assumption B needs exponential tails of hbar, r and g"));
                }
                if !(gamma.degree() >= 1.0 && gamma.far_linear_ratio() > 0.0) {
                    return Err(invalid("GammaSchedule", "assumption B needs gamma to grow linearly"));
                }
            }
        }
        let (cert_horizon, cert_remaining) = certification(&env)?;
        Ok(RenewalConfig {
            positive: env.kernel().positive_part(),
            linear: rate.linear_dominator(),
            env,
            rate,
            assumption,
            alpha0,
            caps: Caps::default(),
            band_scale: 1.0,
            cert_horizon,
            cert_remaining,
        })
    }

    pub fn env(&self) -> &Envelope {
        &self.env
    }
    pub fn rate(&self) -> &RateSpec {
        &self.rate
    }
    pub fn setup(&self) -> Setup {
        self.rate.setup
    }
    pub fn assumption(&self) -> Assumption {
        self.assumption
    }
    pub fn delay(&self) -> f64 {
        self.env.delay()
    }
    /// `‖F‖₁` (times the band scale).
    pub fn band_mass(&self) -> f64 {
        self.band_scale * self.env.band_mass()
    }
    /// Offset up to which band points are searched explicitly.
    pub fn cert_horizon(&self) -> f64 {
        self.cert_horizon
    }
    fn band(&self, u: f64) -> f64 {
        self.band_scale * self.env.band(u)
    }
    fn band_sup(&self, u0: f64, u1: f64) -> f64 {
        self.band_scale * self.env.band_sup(u0, u1)
    }
}

/// Smallest offset `T ≥ D` (up to bisection precision) with `∫_T^∞ F ≤ TAIL_TOL`.
fn certification(env: &Envelope) -> Result<(f64, f64)> {
    let d = env.delay();
    let at_d = env.band_mass_from(d)?;
    if at_d <= TAIL_TOL {
        return Ok((d, at_d));
    }
    let mut hi = d + 1.0;
    while env.band_mass_from(hi)? > TAIL_TOL {
        hi = d + 2.0 * (hi - d);
        if hi > 1e9 {
            return Err(Error::Integrability { factor: "F", detail: "band tail never falls below tolerance".into() });
        }
    }
    let mut lo = d;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if env.band_mass_from(mid)? > TAIL_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, env.band_mass_from(hi)?))
}

/// Initial condition of the observed process `Z*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    /// `R*_t = scale · r(t)` with `|scale| ≤ 1`, initial age `age`.
    Initial { scale: f64, age: f64 },
    /// State right after a regeneration: `R*_t = −f(t + D)`, age `D`.
    Restart,
}

/// Driving measures of one system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Streams {
    pub pi: PrmStream,
    pub pibar: PrmStream,
    pub tail: u64,
}

impl Streams {
    pub fn new(seed: u64, block: u64) -> Self {
        Streams {
            pi: PrmStream::new(seed, tags::PI).derive(block),
            pibar: PrmStream::new(seed, tags::PI_BAR).derive(block),
            tail: splitmix(seed ^ splitmix(block ^ tags::TAIL)),
        }
    }
}

/// One cycle `(α_{n−1}, α_n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub start: f64,
    /// `τ_n − α_{n−1}`, infinite for the last cycle.
    pub tau_gap: f64,
    /// `α_n − τ_n`, infinite for the last cycle.
    pub alpha_gap: f64,
    /// Whether `Z*` jumps at `τ_n`.
    pub star_jump: bool,
}

/// Pathwise assertions collected while the system runs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub band_checks: u64,
    pub band_violations: u64,
    pub worst_band_excess: f64,
    pub envelope_checks: u64,
    pub envelope_violations: u64,
    /// Cycles whose band point was drawn beyond the explicit search horizon.
    pub tail_draws: u64,
    /// `Z*(ρ − D, ρ] ≠ 0` occurrences.
    pub gap_violations: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.band_checks += o.band_checks;
        self.band_violations += o.band_violations;
        self.worst_band_excess = self.worst_band_excess.max(o.worst_band_excess);
        self.envelope_checks += o.envelope_checks;
        self.envelope_violations += o.envelope_violations;
        self.tail_draws += o.tail_draws;
        self.gap_violations += o.gap_violations;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalOutcome {
    /// `α₀, …, α_η`.
    pub alphas: Vec<f64>,
    /// `τ₁, …, τ_{η+1}`; the last entry is infinite.
    pub taus: Vec<f64>,
    pub eta: usize,
    pub rho: f64,
    pub cycles: Vec<CycleRecord>,
    /// `Z*` on `(0, ρ]`.
    pub zstar: Path,
    pub streams: Streams,
    pub diag: Diagnostics,
}

/// Sum of kernel translates `u ↦ Σ h(at + u − s)` over fixed jumps.
struct Superposition<'k> {
    kernel: &'k Kernel,
    jumps: Vec<f64>,
    at: f64,
    exp_sum: Option<(f64, f64, f64)>,
}

impl<'k> Superposition<'k> {
    fn new(kernel: &'k Kernel, jumps: &[f64], at: f64) -> Self {
        let exp_sum = kernel.exp_params().map(|(a, b)| (a, b, jumps.iter().map(|&s| (-b * (at - s)).exp()).sum()));
        Superposition { kernel, jumps: jumps.to_vec(), at, exp_sum }
    }
    fn value(&self, u: f64) -> f64 {
        if let Some((a, b, s)) = self.exp_sum {
            return a * s * (-b * u).exp();
        }
        self.jumps.iter().map(|&s| self.kernel.value(self.at + u - s)).sum()
    }
    fn majorant(&self, u: f64) -> f64 {
        if let Some((a, b, s)) = self.exp_sum {
            return a.abs() * s * (-b * u).exp();
        }
        self.jumps.iter().map(|&s| self.kernel.majorant(self.at + u - s)).sum()
    }
}

/// Certifies `lhs(u) ≤ rhs(u)` for all `u > 0` when `upper ≥ lhs` and `rhs`
/// are decreasing: `upper(u_k) ≤ rhs(u_{k+1})` on a geometric grid. A failing
/// cell is split in `REFINE` pieces; a piece that still fails is accepted only
/// on a pointwise check at both ends (relative slack `1e-9`).
pub fn bracket_certificate(upper: &dyn Fn(f64) -> f64, lhs: &dyn Fn(f64) -> f64, rhs: &dyn Fn(f64) -> f64) -> bool {
    const REFINE: usize = 16;
    let pointwise = |u: f64| lhs(u) <= rhs(u) * (1.0 + 1e-9) + 1e-300;
    let cell = |a: f64, b: f64| -> bool {
        if upper(a) <= rhs(b) {
            return true;
        }
        if !pointwise(a) {
            return false;
        }
        let h = (b - a) / REFINE as f64;
        (0..REFINE).all(|k| {
            let (x, y) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            upper(x) <= rhs(y) || pointwise(y)
        })
    };
    let mut u = 0.0;
    loop {
        if upper(u) < CERT_FLOOR && rhs(u) < CERT_FLOOR {
            return true;
        }
        if u > 1e12 {
            return false;
        }
        let next = u + (0.01 * u).max(1e-3);
        if !cell(u, next) {
            return false;
        }
        u = next;
    }
}

/// Condition `Σ_{s ≤ i} h₊(t − s) ≤ rhs(t − i)` for all `t > i` (jumps relative to the cycle start).
pub fn dominated_after(positive: &Kernel, jumps: &[f64], i: f64, rhs: &dyn Fn(f64) -> f64) -> bool {
    let sup = Superposition::new(positive, jumps, i);
    bracket_certificate(&|u| sup.majorant(u), &|u| sup.value(u), rhs)
}

/// `α`-offset under (AD): the first `i > ⌈τ_gap⌉` at which the exchange chain
/// `M_i = (M_{i−1} − 1) ∨ ⌈γ⁻¹(N(i−1, i])⌉` sits at zero. `counts(i)` is `N(i−1, i]`.
pub fn scan_alpha_ad(gamma: &Gamma, counts: &mut dyn FnMut(u64) -> Result<u64>, tau_gap: f64, cap: u64) -> Result<u64> {
    let first = tau_gap.ceil() as u64 + 1;
    let mut m: u64 = 0;
    let mut trail = Vec::new();
    for i in 1..=cap {
        let g = gamma.inverse(counts(i)? as f64).ceil();
        let x = if g.is_finite() { g as u64 } else { u64::MAX / 2 };
        m = m.saturating_sub(1).max(x);
        if trail.len() == 16 {
            trail.remove(0);
        }
        trail.push(m);
        if i >= first && m == 0 {
            return Ok(i);
        }
    }
    Err(Error::Cap { what: "alpha scan (AD)", cap, detail: format!("; last M values {trail:?}") })
}

/// `α`-offset under (O): simulates the dominating linear process on the lower
/// measure `down` plus the Dirac at `τ_gap`, and returns the first integer
/// `i > ⌈τ_gap⌉` with both the tail-domination and the count condition.
pub fn scan_alpha_o<S: PointSource + ?Sized>(cfg: &RenewalConfig, down: &mut S, origin: f64, tau_gap: f64) -> Result<u64> {
    let env = &cfg.env;
    let signal = Signal::decreasing(move |t: f64| env.envelope(t - origin));
    let mut zn = HawkesState::new(&cfg.positive, &cfg.linear, signal, origin, 0.0, 0.0);
    let tau = origin + tau_gap;
    let mut t = origin;
    while let Some(c) = zn.next_candidate(down, t, tau)? {
        t = c.t;
    }
    zn.push(tau);
    t = tau;
    let first = tau_gap.ceil() as u64 + 1;
    for i in first..=cfg.caps.scan {
        let target = origin + i as f64;
        while let Some(c) = zn.next_candidate(down, t, target)? {
            t = c.t;
        }
        t = target;
        let rel: Vec<f64> = zn.jumps().iter().map(|s| s - origin).collect();
        if rel.len() as f64 <= env.gamma().primitive(i as f64) {
            let rhs = env.window_fn((i - 1) as f64)?;
            if dominated_after(&cfg.positive, &rel, i as f64, &|u| rhs(u)) {
                return Ok(i);
            }
        }
    }
    Err(Error::Cap { what: "alpha scan (O)", cap: cfg.caps.scan, detail: String::new() })
}

struct Hit {
    t: f64,
    star_jump: bool,
}

/// Joint thinning of the lower process `z` and `Z*` on `(from, end]`; with
/// `detect`, stops at the first point in the band `(λ, λ + F]`.
#[allow(clippy::too_many_arguments)]
fn joint_scan(
    cfg: &RenewalConfig,
    cur: &mut PrmCursor,
    z: &mut HawkesState,
    star: &mut HawkesState,
    a: f64,
    from: f64,
    end: f64,
    detect: bool,
    diag: &mut Diagnostics,
) -> Result<Option<Hit>> {
    let mut t = from;
    while t < end {
        let t1 = (t + 1.0).min(end);
        let bz = z.intensity_upper(t, t1);
        let bs = star.intensity_upper(t, t1);
        let bound = (bz + cfg.band_sup(t - a, t1 - a)).max(bs);
        if !(bound.is_finite() && bound <= MAX_BOUND) {
            return Err(Error::Domination { t });
        }
        let Some((s, mark)) = cur.first_in(t, t1, bound)? else {
            t = t1;
            continue;
        };
        let lam = z.intensity(s);
        let lam_star = star.intensity(s);
        if lam > bz * (1.0 + 1e-12) + 1e-12 || lam_star > bs * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Domination { t: s });
        }
        let width = cfg.band(s - a);
        check_band(diag, lam, lam_star, width);
        let star_jump = mark <= lam_star;
        if star_jump {
            star.push(s);
        }
        if mark <= lam {
            z.push(s);
        } else if detect && mark <= lam + width {
            return Ok(Some(Hit { t: s, star_jump }));
        }
        t = s;
    }
    Ok(None)
}

fn check_band(diag: &mut Diagnostics, lam: f64, lam_star: f64, width: f64) {
    diag.band_checks += 1;
    let d = lam_star - lam;
    let excess = (-d).max(d - width);
    if excess > BAND_SLACK {
        diag.band_violations += 1;
        diag.worst_band_excess = diag.worst_band_excess.max(excess);
    }
}

/// Envelope check `|Σ_{s ≤ at} h(t − s) + R*_t| ≤ bound(t − at)` for all `t > at`.
fn envelope_holds(kernel: &Kernel, star: &HawkesState, at: f64, bound: &dyn Fn(f64) -> f64) -> bool {
    let upto = star.jumps().partition_point(|&s| s <= at);
    let sup = Superposition::new(kernel, &star.jumps()[..upto], at);
    let sig = star.signal();
    bracket_certificate(&|u| sup.majorant(u) + sig.value(at + u).abs(), &|u| (sup.value(u) + sig.value(at + u)).abs(), bound)
}

/// Initial signal `R*` and age of `Z*` for a start.
pub fn start_signal(cfg: &RenewalConfig, start: Start) -> Result<(Signal<'_>, f64)> {
    let env = &cfg.env;
    match start {
        Start::Initial { scale, age } => {
            if !(scale.abs() <= 1.0 && age >= 0.0) {
                return Err(invalid("Start", "needs |scale| <= 1 and age >= 0"));
            }
            let r = *env.r();
            let sig = if scale > 0.0 {
                Signal::decreasing(move |t: f64| scale * r.value(t))
            } else if scale < 0.0 {
                Signal::increasing(move |t: f64| scale * r.value(t))
            } else {
                Signal::zero()
            };
            Ok((sig, age))
        }
        Start::Restart => {
            let d = env.delay();
            Ok((Signal::increasing(move |t: f64| -env.envelope(t + d)), d))
        }
    }
}

fn star_state(cfg: &RenewalConfig, start: Start) -> Result<HawkesState<'_>> {
    let (signal, age) = start_signal(cfg, start)?;
    Ok(HawkesState::new(cfg.env.kernel(), &cfg.rate, signal, 0.0, age, 0.0))
}

/// Runs the band system from `α₀` until the first cycle without a band point.
pub fn run_system(cfg: &RenewalConfig, streams: &Streams, start: Start) -> Result<RenewalOutcome> {
    let env = &cfg.env;
    let kernel = env.kernel();
    let d = env.delay();
    let mut diag = Diagnostics::default();
    let mut star = star_state(cfg, start)?;

    let mut cur = streams.pi.cursor();
    let mut t = 0.0;
    while let Some(c) = star.next_candidate(&mut cur, t, cfg.alpha0)? {
        t = c.t;
    }
    let initial_ok = match start {
        Start::Initial { .. } => envelope_holds(kernel, &star, cfg.alpha0, &|u| env.r().value(u)),
        Start::Restart => envelope_holds(kernel, &star, cfg.alpha0, &|u| env.envelope(u)),
    };
    if !initial_ok {
        return Err(invalid("RenewalConfig.alpha0", "initial signal exceeds its bound after alpha0"));
    }

    let mut alphas = vec![cfg.alpha0];
    let mut taus = Vec::new();
    let mut cycles = Vec::new();
    let scale = cfg.band_scale;
    loop {
        let n = cycles.len() as u64 + 1;
        if n > cfg.caps.cycles {
            return Err(Error::Cap {
                what: "renewal cycles",
                cap: cfg.caps.cycles,
                detail: format!("; expected about {:.3e} cycles", cfg.band_mass().exp()),
            });
        }
        let a = *alphas.last().unwrap();
        let mut z = HawkesState::new(kernel, &cfg.rate, Signal::increasing(move |t: f64| -env.envelope(t - a)), a, 0.0, d);
        let end = a + cfg.cert_horizon;
        let mut hit = joint_scan(cfg, &mut cur, &mut z, &mut star, a, a, end, true, &mut diag)?;
        if hit.is_none() {
            let mut rng = keyed_rng(streams.tail, tags::TAIL, n, 0);
            let rem = scale * cfg.cert_remaining;
            let p_point = -(-rem).exp_m1();
            if rng.random::<f64>() < p_point {
                diag.tail_draws += 1;
                let e = -(1.0 - rng.random::<f64>() * p_point).ln();
                let tau = a + tail_position(cfg, rem - e)?;
                joint_scan(cfg, &mut cur, &mut z, &mut star, a, end, tau, false, &mut diag)?;
                let lam = z.intensity(tau);
                let lam_star = star.intensity(tau);
                let width = cfg.band(tau - a);
                check_band(&mut diag, lam, lam_star, width);
                let mark = lam + rng.random::<f64>() * width;
                let star_jump = mark <= lam_star;
                if star_jump {
                    star.push(tau);
                }
                hit = Some(Hit { t: tau, star_jump });
            }
        }
        let Some(hit) = hit else {
            taus.push(f64::INFINITY);
            cycles.push(CycleRecord { start: a, tau_gap: f64::INFINITY, alpha_gap: f64::INFINITY, star_jump: false });
            let rho = a + d;
            if star.jumps().iter().any(|&s| s > a && s <= rho) {
                diag.gap_violations += 1;
            }
            let upto = star.jumps().partition_point(|&s| s <= rho);
            let zstar = Path::new(0.0, rho, star.jumps()[..upto].to_vec());
            let eta = taus.len() - 1;
            return Ok(RenewalOutcome { alphas, taus, eta, rho, cycles, zstar, streams: *streams, diag });
        };
        let tau = hit.t;
        let tau_gap = tau - a;
        let band = |s: f64| {
            if s > a && s <= tau {
                let l = z.intensity_past(s);
                (l, l + scale * env.band(s - a))
            } else {
                (0.0, 0.0)
            }
        };
        let mut down = SplitDown::new(streams.pi, streams.pibar, &band);
        let offset = match cfg.rate.setup {
            Setup::AD => {
                let k = cfg.rate.refractory_bound();
                let mut counts = |i: u64| -> Result<u64> {
                    if k <= 0.0 {
                        return Ok(0);
                    }
                    let (lo, hi) = (a + (i - 1) as f64, a + i as f64);
                    let mut c = 0;
                    let mut s = lo;
                    while let Some(p) = down.first_in(s, hi, k)? {
                        c += 1;
                        s = p.0;
                    }
                    Ok(c)
                };
                scan_alpha_ad(env.gamma(), &mut counts, tau_gap, cfg.caps.scan)?
            }
            Setup::O => scan_alpha_o(cfg, &mut down, a, tau_gap)?,
        };
        let alpha = a + offset as f64;
        let mut s = tau;
        while let Some(c) = star.next_candidate(&mut cur, s, alpha)? {
            s = c.t;
        }
        diag.envelope_checks += 1;
        if !envelope_holds(kernel, &star, alpha, &|u| env.envelope(u)) {
            diag.envelope_violations += 1;
        }
        taus.push(tau);
        alphas.push(alpha);
        cycles.push(CycleRecord { start: a, tau_gap, alpha_gap: alpha - tau, star_jump: hit.star_jump });
    }
}

/// Offset `u ≥ T_cert` with `∫_u^∞ F = tail` (bisection on the directly computed tail).
fn tail_position(cfg: &RenewalConfig, tail: f64) -> Result<f64> {
    let from = |u: f64| -> Result<f64> { Ok(cfg.band_scale * cfg.env.band_mass_from(u)?) };
    let mut lo = cfg.cert_horizon;
    let mut hi = lo + 1.0;
    while from(hi)? > tail {
        hi = lo + 2.0 * (hi - lo);
        if hi > 1e12 {
            return Ok(hi);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if from(mid)? > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Independent systems for many seeds, returned in seed order.
pub fn run_ensemble(cfg: &RenewalConfig, seeds: &[u64], start: Start) -> Vec<Result<RenewalOutcome>> {
    seeds.par_iter().map(|&seed| run_system(cfg, &Streams::new(seed, 0), start)).collect()
}

/// Path segment between consecutive regeneration times.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: usize,
    /// Global time at which the block starts.
    pub start: f64,
    /// Block length `ρ_i`.
    pub rho: f64,
    /// Event times relative to `start`, all in `(0, ρ_i]`.
    pub jumps: Vec<f64>,
    pub eta: usize,
    pub cycles: Vec<CycleRecord>,
    pub diag: Diagnostics,
}

/// Block 0 from `start`, then `n_blocks − 1` blocks restarted from the
/// regenerated state, each on its own pair of measures.
pub fn iterate_regenerations(cfg: &RenewalConfig, seed: u64, n_blocks: usize, start: Start) -> Result<Vec<Block>> {
    if n_blocks == 0 {
        return Err(invalid("n_blocks", "must be >= 1"));
    }
    let mut restart = cfg.clone();
    restart.alpha0 = 0.0;
    let outs: Vec<Result<RenewalOutcome>> = (0..n_blocks)
        .into_par_iter()
        .map(|i| {
            let streams = Streams::new(seed, i as u64);
            if i == 0 {
                run_system(cfg, &streams, start)
            } else {
                run_system(&restart, &streams, Start::Restart)
            }
        })
        .collect();
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut clock = 0.0;
    for (index, out) in outs.into_iter().enumerate() {
        let out = out?;
        blocks.push(Block { index, start: clock, rho: out.rho, jumps: out.zstar.jumps, eta: out.eta, cycles: out.cycles, diag: out.diag });
        clock += out.rho;
    }
    Ok(blocks)
}

/// Consecutive blocks until their total length reaches `horizon`, generated
/// in parallel batches; identical to a prefix of [`iterate_regenerations`].
pub fn blocks_until(cfg: &RenewalConfig, seed: u64, horizon: f64, start: Start) -> Result<Vec<Block>> {
    let mut restart = cfg.clone();
    restart.alpha0 = 0.0;
    let mut blocks: Vec<Block> = Vec::new();
    let mut clock = 0.0;
    let mut idle = 0u64;
    let batch = rayon::current_num_threads().max(1) * 2;
    while clock < horizon {
        let from = blocks.len();
        let outs: Vec<Result<RenewalOutcome>> = (from..from + batch)
            .into_par_iter()
            .map(|i| {
                let streams = Streams::new(seed, i as u64);
                if i == 0 {
                    run_system(cfg, &streams, start)
                } else {
                    run_system(&restart, &streams, Start::Restart)
                }
            })
            .collect();
        for (k, out) in outs.into_iter().enumerate() {
            if clock >= horizon {
                break;
            }
            let out = out?;
            blocks.push(Block {
                index: from + k,
                start: clock,
                rho: out.rho,
                jumps: out.zstar.jumps,
                eta: out.eta,
                cycles: out.cycles,
                diag: out.diag,
            });
            clock += out.rho;
            idle = if out.rho > 0.0 { 0 } else { idle + 1 };
        }
        if idle > cfg.caps.cycles {
            return Err(Error::Cap { what: "consecutive empty blocks", cap: cfg.caps.cycles, detail: "; use a positive delay".into() });
        }
    }
    Ok(blocks)
}

/// Rows `seed,cycle,tau_gap,alpha_gap,eta,rho`.
pub fn write_cycles_csv<W: Write>(mut w: W, rows: &[(u64, &RenewalOutcome)], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(w, "seed,cycle,tau_gap,alpha_gap,eta,rho")?;
    }
    for (seed, out) in rows {
        for (k, c) in out.cycles.iter().enumerate() {
            writeln!(w, "{},{},{},{},{},{}", seed, k + 1, fmt_num(c.tau_gap), fmt_num(c.alpha_gap), out.eta, fmt_num(out.rho))?;
        }
    }
    Ok(())
}

/// Small configurations with known band mass, used by the CLI defaults and tests.
pub mod presets {
    use super::*;
    use crate::kernels::{Activation, Recovery};
    use crate::Profile;

    /// (AD): `h = 0.2e^{-t}`, `ψ = (0.5 + x₊)·1{a > 1}`, `δ = 1`, `γ = 1.5 ln₊`, `r = 0`.
    pub fn age_dependent(delay: f64) -> Result<RenewalConfig> {
        let kernel = Kernel::exponential(0.2, 1.0)?;
        let rate = RateSpec::age_dependent(Activation::Linear { base: 0.5, slope: 1.0 }, Recovery::Hard { period: 1.0 }, 1.0);
        let env = Envelope::new(kernel, &rate, Gamma::Log { scale: 1.5 }, Profile::Zero, delay)?;
        RenewalConfig::new(env, rate, Assumption::A { p: 2.0 }, 0.0)
    }

    /// (AD) with a capped rate and short refractory period, so that
    /// the exchange chain sees nonzero counts.
    pub fn age_dependent_capped(delay: f64) -> Result<RenewalConfig> {
        let kernel = Kernel::exponential(0.2, 1.0)?;
        let rate = RateSpec::age_dependent(Activation::Capped { base: 0.5, slope: 1.0, cap: 1.5 }, Recovery::Hard { period: 0.5 }, 1.0);
        let env = Envelope::new(kernel, &rate, Gamma::Log { scale: 1.5 }, Profile::Zero, delay)?;
        RenewalConfig::new(env, rate, Assumption::A { p: 2.0 }, 0.0)
    }

    /// (AD) under the exponential-tail assumption with `γ(t) = t`.
    pub fn age_dependent_light(delay: f64) -> Result<RenewalConfig> {
        let kernel = Kernel::exponential(0.2, 1.0)?;
        let rate = RateSpec::age_dependent(Activation::Linear { base: 0.5, slope: 1.0 }, Recovery::Hard { period: 1.0 }, 1.0);
        let env = Envelope::new(kernel, &rate, Gamma::Linear { scale: 1.0 }, Profile::Zero, delay)?;
        RenewalConfig::new(env, rate, Assumption::B, 0.0)
    }

    /// (O): `h = 0.3e^{-t}`, `ψ = 0.5 + x₊`, `γ` the default logarithmic schedule for `p`.
    pub fn ordinary(p: f64, delay: f64) -> Result<RenewalConfig> {
        let kernel = Kernel::exponential(0.3, 1.0)?;
        let rate = RateSpec::ordinary(Activation::Linear { base: 0.5, slope: 1.0 });
        let gamma = crate::kernels::default_gamma(Setup::O, &kernel, 1.0, p, false);
        let env = Envelope::new(kernel, &rate, gamma, Profile::Zero, delay)?;
        RenewalConfig::new(env, rate, Assumption::A { p }, 0.0)
    }
}
