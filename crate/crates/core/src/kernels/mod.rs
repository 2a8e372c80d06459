//! Deterministic ingredients of the band construction: the weight function
//! and its decreasing majorant, the growth schedule, the initial-signal and
//! age-recovery profiles, the rate function, and the envelope / band-width
//! pair built from them.

pub mod quad;

use crate::error::invalid;
use crate::{Error, Result, Scalar};
use quad::Decay;

/// Which subcriticality mechanism the configuration relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    /// Ordinary nonlinear Hawkes: `‖h₊‖₁ < 1/L`.
    O,
    /// Age-dependent with a refractory bound `ψ ≤ K` for ages `≤ δ`.
    AD,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm<T> {
    Exponential {
        amplitude: T,
        rate: T,
    },
    /// `amplitude · (1 + t)^(-exponent)`
    PowerLaw {
        amplitude: T,
        exponent: T,
    },
    /// Linear interpolation between knots, zero beyond the last one.
    Table {
        knots: Vec<(T, T)>,
    },
}

/// Weight function `h` with its decreasing majorant `h̄(t) = sup_{s≥t}|h(s)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    form: KernelForm<T>,
    suffix_max: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn zero() -> Self {
        Self::exponential(T::zero(), T::one()).unwrap()
    }

    pub fn exponential(amplitude: T, rate: T) -> Result<Self> {
        if !(rate > T::zero() && amplitude.is_finite() && rate.is_finite()) {
            return Err(invalid("Kernel", format!("exponential needs finite amplitude and rate > 0, got ({amplitude}, {rate})")));
        }
        Ok(Kernel { form: KernelForm::Exponential { amplitude, rate }, suffix_max: Vec::new() })
    }

    pub fn power_law(amplitude: T, exponent: T) -> Result<Self> {
        if !(exponent > T::one() && amplitude.is_finite()) {
            return Err(invalid("Kernel", format!("power law needs exponent > 1, got {exponent}")));
        }
        Ok(Kernel { form: KernelForm::PowerLaw { amplitude, exponent }, suffix_max: Vec::new() })
    }

    pub fn table(knots: Vec<(T, T)>) -> Result<Self> {
        if knots.len() < 2 || knots[0].0 != T::zero() {
            return Err(invalid("Kernel", "table needs at least two knots starting at t=0"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) || knots.iter().any(|k| !(k.0.is_finite() && k.1.is_finite())) {
            return Err(invalid("Kernel", "table knots must be finite with strictly increasing times"));
        }
        let mut suffix_max = vec![T::zero(); knots.len()];
        let mut run = T::zero();
        for (i, k) in knots.iter().enumerate().rev() {
            run = run.max(k.1.abs());
            suffix_max[i] = run;
        }
        Ok(Kernel { form: KernelForm::Table { knots }, suffix_max })
    }

    pub fn form(&self) -> &KernelForm<T> {
        &self.form
    }

    /// `(amplitude, rate)` when the kernel is exponential.
    pub fn exp_params(&self) -> Option<(T, T)> {
        match self.form {
            KernelForm::Exponential { amplitude, rate } => Some((amplitude, rate)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            KernelForm::Exponential { amplitude, .. } | KernelForm::PowerLaw { amplitude, .. } => *amplitude == T::zero(),
            KernelForm::Table { knots } => knots.iter().all(|k| k.1 == T::zero()),
        }
    }

    /// Whether `h` takes negative values somewhere.
    pub fn signed(&self) -> bool {
        match &self.form {
            KernelForm::Exponential { amplitude, .. } | KernelForm::PowerLaw { amplitude, .. } => *amplitude < T::zero(),
            KernelForm::Table { knots } => knots.iter().any(|k| k.1 < T::zero()),
        }
    }

    pub fn value(&self, t: T) -> T {
        if t < T::zero() {
            return T::zero();
        }
        match &self.form {
            KernelForm::Exponential { amplitude, rate } => *amplitude * (-*rate * t).exp(),
            KernelForm::PowerLaw { amplitude, exponent } => *amplitude * (T::one() + t).powf(-*exponent),
            KernelForm::Table { knots } => {
                let last = knots[knots.len() - 1];
                if t > last.0 {
                    return T::zero();
                }
                let k = knots.partition_point(|p| p.0 <= t).saturating_sub(1).min(knots.len() - 2);
                let (t0, v0) = knots[k];
                let (t1, v1) = knots[k + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn positive(&self, t: T) -> T {
        self.value(t).max(T::zero())
    }

    /// Decreasing majorant of `|h|`.
    pub fn majorant(&self, t: T) -> T {
        let t = t.max(T::zero());
        match &self.form {
            KernelForm::Exponential { amplitude, rate } => amplitude.abs() * (-*rate * t).exp(),
            KernelForm::PowerLaw { amplitude, exponent } => amplitude.abs() * (T::one() + t).powf(-*exponent),
            KernelForm::Table { knots } => {
                let n = knots.len();
                if t > knots[n - 1].0 {
                    return T::zero();
                }
                let k = knots.partition_point(|p| p.0 <= t).saturating_sub(1);
                if k + 1 >= n {
                    return self.suffix_max[n - 1];
                }
                knots[k].1.abs().max(self.suffix_max[k + 1])
            }
        }
    }

    /// Kernel `h₊ = max(h, 0)`.
    pub fn positive_part(&self) -> Kernel<T> {
        match &self.form {
            KernelForm::Exponential { amplitude, rate } => Self::exponential(amplitude.max(T::zero()), *rate).unwrap(),
            KernelForm::PowerLaw { amplitude, exponent } => Self::power_law(amplitude.max(T::zero()), *exponent).unwrap(),
            KernelForm::Table { knots } => {
                let mut out: Vec<(T, T)> = Vec::with_capacity(knots.len() * 2);
                for w in knots.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    out.push((t0, v0.max(T::zero())));
                    if (v0 < T::zero()) != (v1 < T::zero()) && v0 != T::zero() && v1 != T::zero() {
                        let tc = t0 + (t1 - t0) * v0 / (v0 - v1);
                        if tc > t0 && tc < t1 {
                            out.push((tc, T::zero()));
                        }
                    }
                }
                let last = knots[knots.len() - 1];
                out.push((last.0, last.1.max(T::zero())));
                Self::table(out).unwrap()
            }
        }
    }

    /// `‖h₊‖₁`.
    pub fn positive_mass(&self) -> T {
        match &self.form {
            KernelForm::Exponential { amplitude, rate } => amplitude.max(T::zero()) / *rate,
            KernelForm::PowerLaw { amplitude, exponent } => amplitude.max(T::zero()) / (*exponent - T::one()),
            KernelForm::Table { .. } => match &self.positive_part().form {
                KernelForm::Table { knots } => {
                    knots.windows(2).fold(T::zero(), |acc, w| acc + (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / T::lit(2.0))
                }
                _ => unreachable!(),
            },
        }
    }

    /// Tail class of the majorant.
    pub fn decay(&self) -> Decay<T> {
        if self.is_zero() {
            return Decay::Zero;
        }
        match &self.form {
            KernelForm::Exponential { rate, .. } => Decay::Exp(*rate),
            KernelForm::PowerLaw { exponent, .. } => Decay::Power(*exponent),
            KernelForm::Table { knots } => Decay::Compact(knots[knots.len() - 1].0),
        }
    }

    /// Piecewise-constant cells `(start, end, value)` of `h̄` for table kernels.
    pub fn majorant_cells(&self) -> Option<Vec<(T, T, T)>> {
        match &self.form {
            KernelForm::Table { knots } => {
                Some(knots.windows(2).enumerate().map(|(k, w)| (w[0].0, w[1].0, w[0].1.abs().max(self.suffix_max[k + 1]))).collect())
            }
            _ => None,
        }
    }

    /// Kink points of `h` and `h̄` (table knots).
    pub fn breakpoints(&self) -> Vec<T> {
        match &self.form {
            KernelForm::Table { knots } => knots.iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }
}

/// Increasing right-continuous growth schedule `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma<T> {
    /// `scale · ln₊ t`
    Log {
        scale: T,
    },
    /// `scale · t`
    Linear {
        scale: T,
    },
    Const {
        value: T,
    },
    /// `low` on `[0, at)`, `high` from `at` on.
    Step {
        at: T,
        low: T,
        high: T,
    },
}

impl<T: Scalar> Gamma<T> {
    pub fn value(&self, t: T) -> T {
        match *self {
            Gamma::Log { scale } => scale * t.max(T::one()).ln(),
            Gamma::Linear { scale } => scale * t.max(T::zero()),
            Gamma::Const { value } => value,
            Gamma::Step { at, low, high } => {
                if t < at {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// `inf{s ≥ 0 : γ(s) ≥ y}`; `∞` when `y` exceeds `sup γ`.
    pub fn inverse(&self, y: T) -> T {
        if y <= self.value(T::zero()) {
            return T::zero();
        }
        match *self {
            Gamma::Log { scale } => (y / scale).exp(),
            Gamma::Linear { scale } => y / scale,
            Gamma::Const { .. } => T::infinity(),
            Gamma::Step { at, high, .. } => {
                if y <= high {
                    at
                } else {
                    T::infinity()
                }
            }
        }
    }

    /// `∫₀^x γ(s+1) ds` in closed form.
    pub fn primitive(&self, x: T) -> T {
        if x <= T::zero() {
            return T::zero();
        }
        let one = T::one();
        match *self {
            Gamma::Log { scale } => scale * ((x + one) * (x + one).ln() - x),
            Gamma::Linear { scale } => scale * (x * x / T::lit(2.0) + x),
            Gamma::Const { value } => value * x,
            Gamma::Step { at, low, high } => {
                let c = (at - one).max(T::zero());
                low * x.min(c) + high * (x - c).max(T::zero())
            }
        }
    }

    /// Polynomial degree used to degrade tail classes (a logarithm counts as 0.1).
    pub fn degree(&self) -> T {
        match self {
            Gamma::Log { .. } => T::lit(0.1),
            Gamma::Linear { .. } => T::one(),
            _ => T::zero(),
        }
    }

    pub fn breakpoints(&self) -> Vec<T> {
        match *self {
            Gamma::Step { at, .. } => vec![at],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Gamma::Log { scale } | Gamma::Linear { scale } => scale > T::zero() && scale.is_finite(),
            Gamma::Const { value } => value >= T::zero() && value.is_finite(),
            Gamma::Step { at, low, high } => at >= T::zero() && low >= T::zero() && high >= low,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("GammaSchedule", format!("{:?} is not a nonnegative increasing schedule", self)))
        }
    }

    /// Minimum of `γ(t)/(weight·ln t)` over a far grid, a proxy for the liminf.
    pub fn far_log_ratio(&self, weight: T) -> T {
        far_grid::<T>().map(|t| self.value(t) / (weight * t.ln())).fold(T::infinity(), |a, b| a.min(b))
    }

    /// Minimum of `γ(t)/t` over a far grid.
    pub fn far_linear_ratio(&self) -> T {
        far_grid::<T>().map(|t| self.value(t) / t).fold(T::infinity(), |a, b| a.min(b))
    }
}

fn far_grid<T: Scalar>() -> impl Iterator<Item = T> {
    (3..=12).map(|e| T::lit(10f64.powi(e)))
}

/// Decreasing nonnegative profile, used for the initial-signal bound `r` and
/// the age-recovery function `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile<T> {
    Zero,
    Exp {
        scale: T,
        rate: T,
    },
    /// `scale · (1 + t)^(-exponent)`
    Power {
        scale: T,
        exponent: T,
    },
    /// `1{t ≤ end}`
    Indicator {
        end: T,
    },
}

impl<T: Scalar> Profile<T> {
    pub fn value(&self, t: T) -> T {
        match *self {
            Profile::Zero => T::zero(),
            Profile::Exp { scale, rate } => scale * (-rate * t).exp(),
            Profile::Power { scale, exponent } => scale * (T::one() + t).powf(-exponent),
            Profile::Indicator { end } => {
                if t <= end {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `∫_a^b`, with `b = ∞` allowed.
    pub fn integral(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        match *self {
            Profile::Zero => T::zero(),
            Profile::Exp { scale, rate } => {
                let hi = if b.is_infinite() { T::zero() } else { (-rate * b).exp() };
                scale * ((-rate * a).exp() - hi) / rate
            }
            Profile::Power { scale, exponent } => {
                let k = exponent - T::one();
                if k <= T::zero() && b.is_infinite() {
                    return T::infinity();
                }
                let hi = if b.is_infinite() { T::zero() } else { (T::one() + b).powf(-k) };
                scale * ((T::one() + a).powf(-k) - hi) / k
            }
            Profile::Indicator { end } => (b.min(end) - a).max(T::zero()),
        }
    }

    pub fn decay(&self) -> Decay<T> {
        match *self {
            Profile::Zero => Decay::Zero,
            Profile::Exp { scale, .. } | Profile::Power { scale, .. } if scale == T::zero() => Decay::Zero,
            Profile::Exp { rate, .. } => Decay::Exp(rate),
            Profile::Power { exponent, .. } => Decay::Power(exponent),
            Profile::Indicator { end } => Decay::Compact(end),
        }
    }

    pub fn breakpoints(&self) -> Vec<T> {
        match *self {
            Profile::Indicator { end } => vec![end],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        let ok = match *self {
            Profile::Zero => true,
            Profile::Exp { scale, rate } => scale >= T::zero() && rate > T::zero(),
            Profile::Power { scale, exponent } => scale >= T::zero() && exponent > T::zero(),
            Profile::Indicator { end } => end >= T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(name, format!("{:?} is not a nonnegative decreasing profile", self)))
        }
    }
}

/// Input-dependence `l(x)` of the rate function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T> {
    /// `base + slope · x₊`
    Linear { base: T, slope: T },
    /// `min(base + slope · x₊, cap)`
    Capped { base: T, slope: T, cap: T },
}

/// Age factor `φ(a) ∈ [0, 1]` of the rate function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recovery<T> {
    None,
    /// `1{a > period}`
    Hard {
        period: T,
    },
    /// `1 - e^{-rate·a}`
    Exp {
        rate: T,
    },
}

/// Rate function `ψ(x, a) = l(x)·φ(a)` with its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec<T> {
    pub activation: Activation<T>,
    pub recovery: Recovery<T>,
    pub setup: Setup,
    /// Refractory length (reciprocal integer) under (AD); `∞` under (O).
    pub delta: T,
}

impl<T: Scalar> RateSpec<T> {
    pub fn ordinary(activation: Activation<T>) -> Self {
        RateSpec { activation, recovery: Recovery::None, setup: Setup::O, delta: T::infinity() }
    }

    pub fn age_dependent(activation: Activation<T>, recovery: Recovery<T>, delta: T) -> Self {
        RateSpec { activation, recovery, setup: Setup::AD, delta }
    }

    fn level(&self, x: T) -> T {
        match self.activation {
            Activation::Linear { base, slope } => base + slope * x.max(T::zero()),
            Activation::Capped { base, slope, cap } => (base + slope * x.max(T::zero())).min(cap),
        }
    }

    fn age_factor(&self, a: T) -> T {
        match self.recovery {
            Recovery::None => T::one(),
            Recovery::Hard { period } => {
                if a > period {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Recovery::Exp { rate } => T::one() - (-rate * a).exp(),
        }
    }

    pub fn psi(&self, x: T, age: T) -> T {
        self.level(x) * self.age_factor(age)
    }

    /// `L`.
    pub fn lipschitz(&self) -> T {
        match self.activation {
            Activation::Linear { slope, .. } | Activation::Capped { slope, .. } => slope,
        }
    }

    /// `c_ψ`, the constant in `ψ(y, b) ≤ c_ψ + L·y₊`.
    pub fn c_psi(&self) -> T {
        match self.activation {
            Activation::Linear { base, .. } | Activation::Capped { base, .. } => base,
        }
    }

    /// Recovery profile `g` with `1 - φ ≤ g`.
    pub fn recovery_profile(&self) -> Profile<T> {
        match self.recovery {
            Recovery::None => Profile::Zero,
            Recovery::Hard { period } => Profile::Indicator { end: period },
            Recovery::Exp { rate } => Profile::Exp { scale: T::one(), rate },
        }
    }

    /// `K = sup{ψ(x, a) : a ≤ δ}`, infinite when no such bound exists.
    pub fn refractory_bound(&self) -> T {
        if !self.delta.is_finite() {
            return T::infinity();
        }
        if let Recovery::Hard { period } = self.recovery {
            if period >= self.delta {
                return T::zero();
            }
        }
        match self.activation {
            Activation::Capped { cap, .. } => cap * self.age_factor(self.delta),
            Activation::Linear { .. } => T::infinity(),
        }
    }

    /// Global upper bound of `ψ`, when it is bounded.
    pub fn global_bound(&self) -> Option<T> {
        match self.activation {
            Activation::Capped { cap, .. } => Some(cap),
            Activation::Linear { slope, base } if slope == T::zero() => Some(base),
            _ => None,
        }
    }

    /// `ψ_L(x) = c_ψ + L·x₊` as an ordinary rate.
    pub fn linear_dominator(&self) -> RateSpec<T> {
        RateSpec::ordinary(Activation::Linear { base: self.c_psi(), slope: self.lipschitz() })
    }

    /// Checks constants, setup conditions and grid spot-checks of monotonicity
    /// and sublinearity.
    pub fn validate(&self, kernel: &Kernel<T>) -> Result<()> {
        let (base, slope) = match self.activation {
            Activation::Linear { base, slope } => (base, slope),
            Activation::Capped { base, slope, cap } => {
                if cap < base {
                    return Err(invalid("RateSpec", "cap below base level"));
                }
                (base, slope)
            }
        };
        if !(base > T::zero() && slope >= T::zero()) {
            return Err(invalid("RateSpec", "needs c_psi > 0 and L >= 0"));
        }
        match self.recovery {
            Recovery::Hard { period } if period < T::zero() => return Err(invalid("RateSpec", "negative refractory period")),
            Recovery::Exp { rate } if rate <= T::zero() => return Err(invalid("RateSpec", "recovery rate must be positive")),
            _ => {}
        }
        match self.setup {
            Setup::O => {
                if self.recovery != Recovery::None {
                    return Err(invalid("RateSpec.setup", "setup O has no age dependence; use recovery = none"));
                }
                if self.delta.is_finite() {
                    return Err(invalid("RateSpec.setup", "setup O uses delta = inf"));
                }
                if !(kernel.positive_mass() * slope < T::one()) {
                    return Err(invalid(
                        "RateSpec.setup",
                        format!("setup O needs ||h+||_1 * L < 1, got {}", kernel.positive_mass() * slope),
                    ));
                }
            }
            Setup::AD => {
                let inv = T::one() / self.delta;
                if !(self.delta > T::zero() && (inv - inv.round()).abs() < T::lit(1e-6) && inv.round() >= T::one()) {
                    return Err(invalid("RateSpec.setup", "setup AD needs delta = 1/n"));
                }
                if !self.refractory_bound().is_finite() {
                    return Err(invalid("RateSpec.setup", "setup AD needs psi bounded for ages <= delta"));
                }
            }
        }
        let xs = [-5.0, -1.0, 0.0, 0.3, 1.0, 4.0, 20.0].map(T::lit);
        let ages = [0.0, 0.05, 0.5, 1.0, 2.0, 10.0].map(T::lit);
        let (c, l) = (self.c_psi(), self.lipschitz());
        for (i, &x) in xs.iter().enumerate() {
            for (j, &a) in ages.iter().enumerate() {
                let v = self.psi(x, a);
                if v > c + l * x.max(T::zero()) + T::lit(1e-12) {
                    return Err(invalid("RateSpec", format!("sublinearity fails at ({x}, {a})")));
                }
                if i > 0 && v < self.psi(xs[i - 1], a) || j > 0 && v < self.psi(x, ages[j - 1]) {
                    return Err(invalid("RateSpec", format!("psi not increasing at ({x}, {a})")));
                }
                if self.setup == Setup::AD && a <= self.delta && v > self.refractory_bound() {
                    return Err(invalid("RateSpec", format!("refractory bound fails at ({x}, {a})")));
                }
            }
        }
        Ok(())
    }
}

/// The envelope `f(t₁, t₂)` and the band width `F`.
#[derive(Debug, Clone)]
pub struct Envelope<T> {
    kernel: Kernel<T>,
    gamma: Gamma<T>,
    r: Profile<T>,
    g: Profile<T>,
    lipschitz: T,
    c_psi: T,
    inv_delta: T,
    delay: T,
    prefactor: T,
    /// `∫₀^∞ γ(s+1)e^{-bs}ds` for exponential kernels.
    weight_inf: Option<T>,
    f_decay: Decay<T>,
    band_mass: T,
}

impl<T: Scalar> Envelope<T> {
    pub fn new(kernel: Kernel<T>, rate: &RateSpec<T>, gamma: Gamma<T>, r: Profile<T>, delay: T) -> Result<Self> {
        let inv_delta = if rate.delta.is_finite() { T::one() / rate.delta } else { T::zero() };
        Self::from_parts(kernel, gamma, r, rate.recovery_profile(), rate.lipschitz(), rate.c_psi(), inv_delta, delay)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kernel: Kernel<T>,
        gamma: Gamma<T>,
        r: Profile<T>,
        g: Profile<T>,
        lipschitz: T,
        c_psi: T,
        inv_delta: T,
        delay: T,
    ) -> Result<Self> {
        gamma.validate()?;
        r.validate("r")?;
        g.validate("g")?;
        if !(delay >= T::zero() && delay.is_finite()) {
            return Err(invalid("EnvelopeFns", "delay must be finite and >= 0"));
        }
        let hbar = kernel.decay();
        if !hbar.weighted(gamma.degree()).integrable() {
            return Err(Error::Integrability { factor: "hbar*gamma", detail: format!("{:?} against {:?}", hbar, gamma) });
        }
        let f_decay = integrated(hbar, gamma.degree()).slower(r.decay());
        if !integrated(hbar, gamma.degree()).integrable() {
            return Err(Error::Integrability { factor: "hbar*gamma (outer)", detail: format!("{:?}", hbar) });
        }
        if !r.decay().integrable() {
            return Err(Error::Integrability { factor: "r", detail: format!("{:?}", r) });
        }
        if !g.decay().integrable() {
            return Err(Error::Integrability { factor: "g", detail: format!("{:?}", g) });
        }
        let mut env = Envelope {
            prefactor: gamma.value(T::zero()) + T::one() + inv_delta,
            kernel,
            gamma,
            r,
            g,
            lipschitz,
            c_psi,
            inv_delta,
            delay,
            weight_inf: None,
            f_decay,
            band_mass: T::zero(),
        };
        if let Some((_, rate)) = env.kernel.exp_params() {
            env.weight_inf = Some(env.exp_weight(T::infinity(), rate)?);
        }
        let mass = env.band_mass_to(T::infinity())?;
        if !mass.is_finite() {
            return Err(Error::Integrability { factor: "F", detail: "band mass is not finite".into() });
        }
        env.band_mass = mass;
        Ok(env)
    }

    fn exp_weight(&self, t2: T, rate: T) -> Result<T> {
        let gamma = self.gamma;
        let w = move |s: T| gamma.value(s + T::one()) * (-rate * s).exp();
        let breaks: Vec<T> = gamma.breakpoints().into_iter().map(|b| b - T::one()).collect();
        if t2.is_infinite() {
            quad::semi_infinite(&w, T::zero(), Decay::Exp(rate).weighted(gamma.degree()), &breaks)
        } else {
            quad::piecewise(&w, T::zero(), t2, &breaks)
        }
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }
    pub fn gamma(&self) -> &Gamma<T> {
        &self.gamma
    }
    pub fn r(&self) -> &Profile<T> {
        &self.r
    }
    pub fn g(&self) -> &Profile<T> {
        &self.g
    }
    pub fn delay(&self) -> T {
        self.delay
    }
    pub fn lipschitz(&self) -> T {
        self.lipschitz
    }
    pub fn c_psi(&self) -> T {
        self.c_psi
    }
    /// `δ⁻¹`, zero under setup (O).
    pub fn inv_delta(&self) -> T {
        self.inv_delta
    }
    /// `γ(0) + 1 + δ⁻¹`.
    pub fn prefactor(&self) -> T {
        self.prefactor
    }

    /// `f(t₁) = f(t₁, ∞)`.
    pub fn envelope(&self, t1: T) -> T {
        self.envelope_window(t1, T::infinity()).expect("integrability validated at construction")
    }

    /// `f(t₁, t₂) = (γ(0)+1+δ⁻¹)(h̄(t₁) + ∫₀^{t₂} γ(s+1)h̄(t₁+s)ds) + r(t₁)`.
    pub fn envelope_window(&self, t1: T, t2: T) -> Result<T> {
        let t1 = t1.max(T::zero());
        let hb = self.kernel.majorant(t1);
        let inner = if let (Some((_, rate)), Some(winf)) = (self.kernel.exp_params(), self.weight_inf) {
            let w = if t2.is_infinite() { winf } else { self.exp_weight(t2, rate)? };
            hb * w
        } else {
            self.inner_integral(t1, t2)?
        };
        Ok(self.prefactor * (hb + inner) + self.r.value(t1))
    }

    fn inner_integral(&self, t1: T, t2: T) -> Result<T> {
        if self.kernel.is_zero() || t2 <= T::zero() {
            return Ok(T::zero());
        }
        let (kernel, gamma) = (&self.kernel, self.gamma);
        if let Some(cells) = kernel.majorant_cells() {
            let mut acc = T::zero();
            for (a, b, v) in cells {
                let lo = (a - t1).max(T::zero());
                let hi = (b - t1).min(t2);
                if hi > lo {
                    acc = acc + v * (gamma.primitive(hi) - gamma.primitive(lo));
                }
            }
            return Ok(acc);
        }
        let w = |s: T| gamma.value(s + T::one()) * kernel.majorant(t1 + s);
        let mut breaks: Vec<T> = gamma.breakpoints().into_iter().map(|b| b - T::one()).collect();
        breaks.extend(kernel.breakpoints().into_iter().map(|b| b - t1));
        let decay = match kernel.decay() {
            Decay::Compact(end) => Decay::Compact(end - t1),
            d => d.weighted(gamma.degree()),
        };
        let v =
            if t2.is_infinite() { quad::semi_infinite(&w, T::zero(), decay, &breaks) } else { quad::piecewise(&w, T::zero(), t2, &breaks) };
        v.map_err(|_| Error::Integrability { factor: "gamma(s+1)*hbar(t1+s)", detail: format!("at t1={t1}") })
    }

    /// `t₁ ↦ f(t₁, t₂)` for a fixed window; the window integral is computed
    /// once for exponential kernels.
    pub fn window_fn(&self, t2: T) -> Result<Box<dyn Fn(T) -> T + Send + Sync + '_>> {
        if let Some((_, rate)) = self.kernel.exp_params() {
            let w = if t2.is_infinite() { self.weight_inf.expect("set for exponential kernels") } else { self.exp_weight(t2, rate)? };
            return Ok(Box::new(move |t1: T| {
                let t1 = t1.max(T::zero());
                self.prefactor * self.kernel.majorant(t1) * (T::one() + w) + self.r.value(t1)
            }));
        }
        Ok(Box::new(move |t1: T| self.envelope_window(t1, t2).expect("integrability validated at construction")))
    }

    /// `F^pre(t) = 2L f(t) + c_ψ g(t)`.
    pub fn band_pre(&self, t: T) -> T {
        T::lit(2.0) * self.lipschitz * self.envelope(t) + self.c_psi * self.g.value(t)
    }

    /// Band width `F(t)`.
    pub fn band(&self, t: T) -> T {
        if t <= self.delay {
            self.c_psi + self.lipschitz * self.envelope(t)
        } else {
            self.band_pre(t)
        }
    }

    /// Upper bound of `F` on `[u0, u1]`.
    pub fn band_sup(&self, u0: T, u1: T) -> T {
        let u0 = u0.max(T::zero());
        let mut s = T::zero();
        if u0 <= self.delay {
            s = self.c_psi + self.lipschitz * self.envelope(u0);
        }
        if u1 > self.delay {
            let a = u0.max(self.delay);
            s = s.max(T::lit(2.0) * self.lipschitz * self.envelope(a) + self.c_psi * self.g.value(a));
        }
        s
    }

    /// `∫_a^b f`, `b = ∞` allowed.
    pub fn envelope_integral(&self, a: T, b: T) -> Result<T> {
        if b <= a {
            return Ok(T::zero());
        }
        let rpart = self.r.integral(a, b);
        if let (Some((amp, rate)), Some(winf)) = (self.kernel.exp_params(), self.weight_inf) {
            let hi = if b.is_infinite() { T::zero() } else { (-rate * b).exp() };
            let hpart = amp.abs() * ((-rate * a).exp() - hi) / rate;
            return Ok(self.prefactor * (T::one() + winf) * hpart + rpart);
        }
        let f = |t: T| self.envelope(t) - self.r.value(t);
        let breaks = self.kernel.breakpoints();
        let hpart = if b.is_infinite() {
            let d = integrated(self.kernel.decay(), self.gamma.degree());
            quad::semi_infinite(&f, a, d, &breaks)?
        } else {
            quad::piecewise(&f, a, b, &breaks)?
        };
        Ok(hpart + rpart)
    }

    /// `∫₀^t F`.
    pub fn band_mass_to(&self, t: T) -> Result<T> {
        let d = self.delay;
        let u = t.min(d);
        let mut m = self.c_psi * u + self.lipschitz * self.envelope_integral(T::zero(), u)?;
        if t > d {
            m = m + T::lit(2.0) * self.lipschitz * self.envelope_integral(d, t)? + self.c_psi * self.g.integral(d, t);
        }
        Ok(m)
    }

    /// `∫_t^∞ F`, computed directly so that small tails keep their precision.
    pub fn band_mass_from(&self, t: T) -> Result<T> {
        let d = self.delay;
        let mut m = T::zero();
        if t < d {
            m = self.c_psi * (d - t) + self.lipschitz * self.envelope_integral(t, d)?;
        }
        let u = t.max(d);
        Ok(m + T::lit(2.0) * self.lipschitz * self.envelope_integral(u, T::infinity())? + self.c_psi * self.g.integral(u, T::infinity()))
    }

    /// `‖F‖₁`.
    pub fn band_mass(&self) -> T {
        self.band_mass
    }

    /// Smallest `t` with `∫₀^t F ≥ mass` (bisection); `∞` if `mass ≥ ‖F‖₁`.
    pub fn band_mass_inverse(&self, mass: T) -> T {
        if mass >= self.band_mass {
            return T::infinity();
        }
        if mass <= T::zero() {
            return T::zero();
        }
        let mut hi = T::one();
        while self.band_mass_to(hi).unwrap() < mass {
            hi = hi * T::lit(2.0);
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if self.band_mass_to(mid).unwrap() < mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        hi
    }

    /// Tail class of `f` (and of `F`).
    pub fn envelope_decay(&self) -> Decay<T> {
        self.f_decay
    }

    /// `∫₀^∞ t^p f(t) dt`.
    pub fn envelope_moment(&self, p: T) -> Result<T> {
        let d = self.f_decay.weighted(p);
        if !d.integrable() {
            return Err(Error::Integrability { factor: "t^p f", detail: format!("p={p}, class {:?}", self.f_decay) });
        }
        let f = |t: T| t.powf(p) * self.envelope(t);
        quad::semi_infinite(&f, T::zero(), d, &self.kernel.breakpoints())
    }

    /// The change-of-variables bound on `∫ t^p f`:
    /// `P(∫ t^p h̄ + (p+1)⁻¹ ∫ u^{p+1} γ(u+1) h̄(u) du) + ∫ t^p r`.
    pub fn moment_bound(&self, p: T) -> Result<T> {
        let hb = self.kernel.decay();
        let k = &self.kernel;
        let gamma = self.gamma;
        let br = k.breakpoints();
        let a = quad::semi_infinite(&|t: T| t.powf(p) * k.majorant(t), T::zero(), hb.weighted(p), &br)?;
        let deg = p + T::one() + gamma.degree();
        if !hb.weighted(deg).integrable() {
            return Err(Error::Integrability { factor: "u^(p+1) gamma(u+1) hbar(u)", detail: format!("p={p}") });
        }
        let b = quad::semi_infinite(
            &|u: T| u.powf(p + T::one()) * gamma.value(u + T::one()) * k.majorant(u),
            T::zero(),
            hb.weighted(deg),
            &br,
        )?;
        let r = self.r;
        let c = quad::semi_infinite(&|t: T| t.powf(p) * r.value(t), T::zero(), r.decay().weighted(p), &r.breakpoints())?;
        Ok(self.prefactor * (a + b / (p + T::one())) + c)
    }

    /// Moment hypotheses under assumption (A): `t^p r`, `t^p g` and
    /// `t^{p+1} γ(t+1) h̄(t)` integrable.
    pub fn check_moments(&self, p: T) -> Result<()> {
        if !self.r.decay().weighted(p).integrable() {
            return Err(Error::Integrability { factor: "t^p r", detail: format!("p={p}") });
        }
        if !self.g.decay().weighted(p).integrable() {
            return Err(Error::Integrability { factor: "t^p g", detail: format!("p={p}") });
        }
        let deg = p + T::one() + self.gamma.degree();
        if !self.kernel.decay().weighted(deg).integrable() {
            return Err(Error::Integrability { factor: "t^(p+1) gamma(t+1) hbar(t)", detail: format!("p={p}") });
        }
        Ok(())
    }
}

/// Tail class of `t ↦ ∫₀^∞ γ(s+1) h̄(t+s) ds` given the class of `h̄`.
fn integrated<T: Scalar>(d: Decay<T>, deg: T) -> Decay<T> {
    match d {
        Decay::Power(k) => Decay::Power(k - T::one() - deg),
        Decay::Exp(c) => Decay::Exp(c * T::lit(0.9)),
        x => x,
    }
}

/// Default growth schedule: `C·ln₊` with `C` 10% above the setup (O) bound
/// `(p+1)/c_h`, or `t` under the exponential-moment assumption.
pub fn default_gamma<T: Scalar>(setup: Setup, kernel: &Kernel<T>, lipschitz: T, p: T, exponential: bool) -> Gamma<T> {
    if exponential {
        return Gamma::Linear { scale: T::one() };
    }
    match setup {
        Setup::O => {
            let ch = exponential_threshold(kernel.positive_mass() * lipschitz);
            Gamma::Log { scale: T::lit(1.1) * (p + T::one()) / ch }
        }
        Setup::AD => Gamma::Log { scale: T::lit(1.5) },
    }
}

/// Threshold `c_h = m − ln m − 1` beyond which the total progeny of a
/// Poisson(m) branching process has no exponential moment.
pub fn exponential_threshold<T: Scalar>(m: T) -> T {
    if m <= T::zero() {
        return T::infinity();
    }
    m - m.ln() - T::one()
}

#[cfg(test)]
mod tests;
