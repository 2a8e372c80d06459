//! Thinning simulation of (age-dependent, possibly delayed) Hawkes processes.

use crate::prm::PointSource;
use crate::{Error, Kernel, RateSpec, Result};
use std::io::Write;

/// Memory contributions below this majorant value are dropped for
/// non-exponential kernels; their total is added to every dominating bound.
pub const TRUNCATION: f64 = 1e-13;
/// Largest dominating intensity a single window may use.
pub const MAX_BOUND: f64 = 1e5;

/// Realized simple point process on `(origin, horizon]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub origin: f64,
    pub horizon: f64,
    pub jumps: Vec<f64>,
}

impl Path {
    pub fn new(origin: f64, horizon: f64, jumps: Vec<f64>) -> Self {
        debug_assert!(jumps.windows(2).all(|w| w[0] < w[1]));
        Path { origin, horizon, jumps }
    }

    /// `Z(a, b]`.
    pub fn count(&self, a: f64, b: f64) -> usize {
        if b <= a {
            return 0;
        }
        self.jumps.partition_point(|&s| s <= b) - self.jumps.partition_point(|&s| s <= a)
    }

    /// Jumps in `(a, b]`.
    pub fn slice(&self, a: f64, b: f64) -> &[f64] {
        let i = self.jumps.partition_point(|&s| s <= a);
        let j = self.jumps.partition_point(|&s| s <= b);
        &self.jumps[i..j.max(i)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t")?;
        for &t in &self.jumps {
            writeln!(w, "{}", fmt_num(t))?;
        }
        Ok(())
    }
}

/// Number formatting shared by every CSV writer: 12 significant digits, `inf` for infinities.
pub fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.11e}", x);
    let v: f64 = s.parse().expect("round trip");
    let digits = (11 - v.abs().log10().floor() as i32).clamp(0, 30) as usize;
    let mut out = format!("{:.*}", digits, v);
    if out.contains('.') {
        out = out.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    out
}

/// Monotonicity class of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Zero,
    Increasing,
    Decreasing,
}

/// Initial signal `R_t`, a monotone function that tends to zero.
pub struct Signal<'a> {
    f: Option<Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>>,
    shape: Shape,
}

impl std::fmt::Debug for Signal<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signal({:?})", self.shape)
    }
}

impl<'a> Signal<'a> {
    pub fn zero() -> Self {
        Signal { f: None, shape: Shape::Zero }
    }
    pub fn increasing(f: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        Signal { f: Some(Box::new(f)), shape: Shape::Increasing }
    }
    pub fn decreasing(f: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        Signal { f: Some(Box::new(f)), shape: Shape::Decreasing }
    }
    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn value(&self, t: f64) -> f64 {
        self.f.as_ref().map_or(0.0, |f| f(t))
    }
    /// `sup R` on `[t0, t1]`.
    pub fn upper(&self, t0: f64, t1: f64) -> f64 {
        match self.shape {
            Shape::Zero => 0.0,
            Shape::Increasing => self.value(t1),
            Shape::Decreasing => self.value(t0),
        }
    }
}

/// Exact memory `Σ_{s_j < t} h(t − s_j) + R(t)`.
pub fn memory_at(path: &Path, kernel: &Kernel, signal: &Signal, t: f64) -> f64 {
    path.jumps.iter().take_while(|&&s| s < t).map(|&s| kernel.value(t - s)).sum::<f64>() + signal.value(t)
}

/// Left-limit age at `t`: `A₀ + t − origin` before the first jump.
pub fn age_at(path: &Path, age0: f64, t: f64) -> f64 {
    let i = path.jumps.partition_point(|&s| s < t);
    if i == 0 {
        age0 + t - path.origin
    } else {
        t - path.jumps[i - 1]
    }
}

/// Proposed point of the driving measure together with its thinning decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub t: f64,
    pub z: f64,
    pub lambda: f64,
    pub bound: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy)]
struct ExpState {
    amplitude: f64,
    rate: f64,
    /// `Σ e^{-b(t_ref - s)}` over jumps `≤ t_ref`.
    sum: f64,
    t_ref: f64,
}

/// Incremental state of one Hawkes process: memory, age and intensity.
///
/// Queries must move forward in time except for [`HawkesState::intensity_past`].
pub struct HawkesState<'a> {
    kernel: &'a Kernel,
    rate: &'a RateSpec,
    signal: Signal<'a>,
    origin: f64,
    age0: f64,
    quiet_until: f64,
    jumps: Vec<f64>,
    exp: Option<ExpState>,
    live: usize,
}

impl<'a> HawkesState<'a> {
    /// Process started at `origin` with age `age0`, no jumps on `(origin, origin + delay]`.
    pub fn new(kernel: &'a Kernel, rate: &'a RateSpec, signal: Signal<'a>, origin: f64, age0: f64, delay: f64) -> Self {
        let exp = kernel.exp_params().map(|(amplitude, rate)| ExpState { amplitude, rate, sum: 0.0, t_ref: origin });
        HawkesState { kernel, rate, signal, origin, age0, quiet_until: origin + delay, jumps: Vec::new(), exp, live: 0 }
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }
    pub fn origin(&self) -> f64 {
        self.origin
    }
    pub fn signal(&self) -> &Signal<'a> {
        &self.signal
    }
    pub fn kernel(&self) -> &Kernel {
        self.kernel
    }

    pub fn into_path(self, horizon: f64) -> Path {
        Path::new(self.origin, horizon, self.jumps)
    }

    /// Records a jump at `s` (after every existing jump).
    pub fn push(&mut self, s: f64) {
        debug_assert!(self.jumps.last().is_none_or(|&l| l < s));
        if let Some(e) = self.exp.as_mut() {
            e.sum = e.sum * (-e.rate * (s - e.t_ref)).exp() + 1.0;
            e.t_ref = s;
        }
        self.jumps.push(s);
    }

    fn advance_live(&mut self, t: f64) {
        while self.live < self.jumps.len() && self.kernel.majorant(t - self.jumps[self.live]) < TRUNCATION {
            self.live += 1;
        }
    }

    fn dropped_mass(&self, t: f64) -> f64 {
        if self.live == 0 {
            0.0
        } else {
            self.live as f64 * self.kernel.majorant(t - self.jumps[self.live - 1])
        }
    }

    /// Memory without the signal, left limit at `t`.
    fn kernel_sum(&mut self, t: f64) -> f64 {
        if let Some(e) = self.exp {
            let mut s = e.sum * (-e.rate * (t - e.t_ref)).exp();
            if self.jumps.last() == Some(&t) {
                s -= 1.0;
            }
            return e.amplitude * s;
        }
        self.advance_live(t);
        self.jumps[self.live..].iter().take_while(|&&s| s < t).map(|&s| self.kernel.value(t - s)).sum()
    }

    /// `Σ_{s ≤ t} h̄(t − s)`, a bound on the kernel part of the memory after `t`.
    fn majorant_sum(&mut self, t: f64) -> f64 {
        if let Some(e) = self.exp {
            return e.amplitude.abs() * e.sum * (-e.rate * (t - e.t_ref)).exp();
        }
        self.advance_live(t);
        let live: f64 = self.jumps[self.live..].iter().take_while(|&&s| s <= t).map(|&s| self.kernel.majorant(t - s)).sum();
        live + self.dropped_mass(t)
    }

    /// Left-limit memory `X_t`.
    pub fn memory(&mut self, t: f64) -> f64 {
        self.kernel_sum(t) + self.signal.value(t)
    }

    /// Bound of `X` on `(t0, t1]` assuming no jumps there.
    pub fn memory_upper(&mut self, t0: f64, t1: f64) -> f64 {
        self.majorant_sum(t0) + self.signal.upper(t0, t1)
    }

    /// Left-limit age `A_t`.
    pub fn age(&self, t: f64) -> f64 {
        match self.jumps.last() {
            Some(&l) if l < t => t - l,
            Some(_) => {
                let i = self.jumps.partition_point(|&s| s < t);
                if i == 0 {
                    self.age0 + t - self.origin
                } else {
                    t - self.jumps[i - 1]
                }
            }
            None => self.age0 + t - self.origin,
        }
    }

    fn age_after(&self, t: f64) -> f64 {
        match self.jumps.last() {
            Some(&l) if l <= t => t - l,
            _ => self.age0 + t - self.origin,
        }
    }

    /// `λ_t = ψ(X_t, A_t)`, zero during the delay.
    pub fn intensity(&mut self, t: f64) -> f64 {
        if t <= self.quiet_until {
            return 0.0;
        }
        let x = self.memory(t);
        self.rate.psi(x, self.age(t))
    }

    /// Dominating intensity on `(t0, t1]` assuming no jumps there.
    pub fn intensity_upper(&mut self, t0: f64, t1: f64) -> f64 {
        if t1 <= self.quiet_until {
            return 0.0;
        }
        let x = self.memory_upper(t0, t1);
        let a = self.age_after(t0) + (t1 - t0);
        self.rate.psi(x, a)
    }

    /// Intensity at an already simulated time, by direct summation.
    pub fn intensity_past(&self, t: f64) -> f64 {
        if t <= self.quiet_until {
            return 0.0;
        }
        let i = self.jumps.partition_point(|&s| s < t);
        let x: f64 = self.jumps[..i].iter().map(|&s| self.kernel.value(t - s)).sum::<f64>() + self.signal.value(t);
        let a = if i == 0 { self.age0 + t - self.origin } else { t - self.jumps[i - 1] };
        self.rate.psi(x, a)
    }

    /// Next candidate of `src` in `(from, until]` under a dominating bound,
    /// accepting it as a jump when `z ≤ λ`. Windows have length at most one.
    pub fn next_candidate<S: PointSource + ?Sized>(&mut self, src: &mut S, from: f64, until: f64) -> Result<Option<Candidate>> {
        let mut t = from.max(self.origin);
        if t < self.quiet_until {
            t = self.quiet_until.min(until);
        }
        while t < until {
            let t1 = (t + 1.0).min(until);
            let bound = self.intensity_upper(t, t1);
            if !(bound.is_finite() && bound <= MAX_BOUND) {
                return Err(Error::Domination { t });
            }
            match src.first_in(t, t1, bound)? {
                None => t = t1,
                Some((s, z)) => {
                    let lambda = self.intensity(s);
                    if lambda > bound * (1.0 + 1e-12) + 1e-12 {
                        return Err(Error::Domination { t: s });
                    }
                    let accepted = z <= lambda;
                    if accepted {
                        self.push(s);
                    }
                    return Ok(Some(Candidate { t: s, z, lambda, bound, accepted }));
                }
            }
        }
        Ok(None)
    }
}

/// Thinning solution on `(origin, horizon]`: a jump at every point `(s, z)`
/// of `src` with `z ≤ λ_s`. The first `delay` time units are jump free.
#[allow(clippy::too_many_arguments)]
pub fn simulate_adhp<S: PointSource + ?Sized>(
    src: &mut S,
    kernel: &Kernel,
    rate: &RateSpec,
    signal: Signal,
    age0: f64,
    delay: f64,
    origin: f64,
    horizon: f64,
) -> Result<Path> {
    if !horizon.is_finite() {
        return Err(crate::error::invalid("horizon", "must be finite"));
    }
    let mut st = HawkesState::new(kernel, rate, signal, origin, age0, delay);
    let mut t = origin;
    while let Some(c) = st.next_candidate(src, t, horizon)? {
        t = c.t;
    }
    Ok(st.into_path(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Activation, Recovery};
    use crate::prm::{tags, PrmStream};
    use proptest::prelude::*;

    fn poisson_rate(c: f64) -> RateSpec {
        RateSpec::ordinary(Activation::Linear { base: c, slope: 0.0 })
    }

    #[test]
    fn memory_and_age_examples() {
        let k = Kernel::exponential(1.0, 1.0).unwrap();
        let empty = Path::new(0.0, 10.0, vec![]);
        assert_eq!(memory_at(&empty, &k, &Signal::zero(), 3.0), 0.0);
        let one = Path::new(0.0, 10.0, vec![1.0]);
        assert!((memory_at(&one, &k, &Signal::zero(), 2.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(age_at(&empty, 2.0, 3.0), 5.0);
        let j = Path::new(0.0, 10.0, vec![1.5]);
        assert_eq!(age_at(&j, 0.0, 2.0), 0.5);
        // left limit at the jump itself
        assert_eq!(age_at(&j, 0.0, 1.5), 1.5);
        assert_eq!(j.count(0.0, 1.5), 1);
        assert_eq!(j.count(1.5, 3.0), 0);
    }

    #[test]
    fn csv_format() {
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(123456.7890123456), "123456.789012");
        let mut buf = Vec::new();
        Path::new(0.0, 1.0, vec![0.25, 0.5]).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t\n0.25\n0.5\n");
    }

    #[test]
    fn homogeneous_poisson_rate() {
        let c = 1.3;
        let k = Kernel::zero();
        let r = poisson_rate(c);
        let mut src = PrmStream::new(5, tags::PI).cursor();
        let p = simulate_adhp(&mut src, &k, &r, Signal::zero(), 0.0, 0.0, 0.0, 1e4).unwrap();
        let rate = p.jumps.len() as f64 / 1e4;
        assert!((rate - c).abs() < 3.0 * (c * 1e4).sqrt() / 1e4, "{rate}");
    }

    #[test]
    fn refractory_renewal_gaps() {
        let (c, d) = (2.0, 0.5);
        let k = Kernel::zero();
        let r = RateSpec::age_dependent(Activation::Capped { base: c, slope: 0.0, cap: c }, Recovery::Hard { period: d }, 0.5);
        let mut src = PrmStream::new(9, tags::PI).cursor();
        let p = simulate_adhp(&mut src, &k, &r, Signal::zero(), 10.0, 0.0, 0.0, 2.2e4).unwrap();
        let gaps: Vec<f64> = p.jumps.windows(2).map(|w| w[1] - w[0]).take(10_000).collect();
        assert_eq!(gaps.len(), 10_000);
        assert!(gaps.iter().all(|&g| g >= d));
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let se = (1.0 / c) / (gaps.len() as f64).sqrt();
        assert!((mean - (d + 1.0 / c)).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn linear_mean_intensity() {
        let (c, l) = (1.0, 0.5);
        let k = Kernel::exponential(1.0, 1.0).unwrap();
        let r = RateSpec::ordinary(Activation::Linear { base: c, slope: l });
        let horizon = 2e4;
        let mut src = PrmStream::new(21, tags::PI).cursor();
        let p = simulate_adhp(&mut src, &k, &r, Signal::zero(), 0.0, 0.0, 0.0, horizon).unwrap();
        // batch means for the standard error
        let nb = 100;
        let w = horizon / nb as f64;
        let counts: Vec<f64> = (0..nb).map(|i| p.count(i as f64 * w, (i + 1) as f64 * w) as f64 / w).collect();
        let mean = counts.iter().sum::<f64>() / nb as f64;
        let var = counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nb - 1) as f64;
        let se = (var / nb as f64).sqrt();
        // Euler integration of the first-moment renewal equation m = c + L ∫ h(t-s) m(s) ds
        let dt: f64 = 1e-3;
        let (mut m, mut conv) = (c, 0.0);
        for _ in 0..60_000 {
            conv = conv * (-dt).exp() + m * dt;
            m = c + l * conv;
        }
        assert!((m - c / (1.0 - l)).abs() < 1e-2);
        assert!((mean - m).abs() < 3.0 * se + 1e-2, "{mean} vs {m} (se {se})");
    }

    #[test]
    fn delay_suppresses_jumps() {
        let k = Kernel::zero();
        let r = poisson_rate(3.0);
        let mut src = PrmStream::new(2, tags::PI).cursor();
        let p = simulate_adhp(&mut src, &k, &r, Signal::zero(), 0.0, 4.0, 10.0, 30.0).unwrap();
        assert!(p.jumps.iter().all(|&s| s > 14.0));
        assert!(!p.jumps.is_empty());
    }

    #[test]
    fn explosive_config_reports_domination() {
        let k = Kernel::exponential(5.0, 0.1).unwrap();
        let r = RateSpec::ordinary(Activation::Linear { base: 1.0, slope: 1.0 });
        let mut src = PrmStream::new(2, tags::PI).cursor();
        let e = simulate_adhp(&mut src, &k, &r, Signal::zero(), 0.0, 0.0, 0.0, 1e3);
        assert!(matches!(e, Err(Error::Domination { .. })));
    }

    fn run_and_compare(kernel: Kernel, seed: u64) {
        let r = RateSpec::age_dependent(Activation::Capped { base: 0.7, slope: 1.0, cap: 4.0 }, Recovery::Exp { rate: 2.0 }, 1.0);
        let sig = Signal::decreasing(|t: f64| 0.5 * (-t).exp());
        let mut st = HawkesState::new(&kernel, &r, sig, 0.0, 0.3, 0.0);
        let mut src = PrmStream::new(seed, tags::PI).cursor();
        let mut t = 0.0;
        let sig2 = Signal::decreasing(|t: f64| 0.5 * (-t).exp());
        while let Some(c) = st.next_candidate(&mut src, t, 40.0).unwrap() {
            t = c.t;
            let p = Path::new(0.0, 40.0, st.jumps().to_vec());
            let direct = memory_at(&p, &kernel, &sig2, c.t);
            assert!((st.memory(c.t) - direct).abs() < 1e-10);
            assert!((c.lambda - r.psi(direct, age_at(&p, 0.3, c.t))).abs() < 1e-10);
            assert!(c.lambda <= r.c_psi() + r.lipschitz() * direct.max(0.0) + 1e-12);
            assert!(c.lambda <= c.bound + 1e-12);
        }
    }

    #[test]
    fn exponential_state_matches_direct_sum() {
        for seed in 0..20 {
            run_and_compare(Kernel::exponential(0.8, 1.5).unwrap(), seed);
            run_and_compare(Kernel::exponential(-0.6, 0.7).unwrap(), seed);
        }
    }

    #[test]
    fn table_and_power_kernels_run() {
        let tab = Kernel::table(vec![(0.0, 0.5), (1.0, -0.2), (2.0, 0.3), (4.0, 0.0)]).unwrap();
        for seed in 0..10 {
            run_and_compare(tab.clone(), seed);
            run_and_compare(Kernel::power_law(0.4, 3.0).unwrap(), seed);
        }
    }

    proptest! {
        #[test]
        fn linear_dominates_nonlinear(seed in 0u64..300) {
            let k = Kernel::exponential(0.4, 1.0).unwrap();
            let r = RateSpec::age_dependent(Activation::Capped { base: 1.0, slope: 1.0, cap: 3.0 }, Recovery::Hard { period: 0.2 }, 0.5);
            let lin = r.linear_dominator();
            let kp = k.positive_part();
            let a = simulate_adhp(&mut PrmStream::new(seed, tags::PI).cursor(), &k, &r, Signal::zero(), 1.0, 0.0, 0.0, 30.0).unwrap();
            let b = simulate_adhp(&mut PrmStream::new(seed, tags::PI).cursor(), &kp, &lin, Signal::zero(), 1.0, 0.0, 0.0, 30.0).unwrap();
            prop_assert!(a.jumps.iter().all(|s| b.jumps.binary_search_by(|x| x.total_cmp(s)).is_ok()));
        }
    }
}
