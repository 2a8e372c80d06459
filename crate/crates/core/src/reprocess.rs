//! Random exchange chain `M_i = (M_{i−1} − 1) ∨ X_i` on ℕ₀.

use crate::error::invalid;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use statrs::distribution::{DiscreteCDF, Poisson as PoissonCdf};

pub const RETURN_CAP: u64 = 100_000_000;
/// Product terms beyond this many are folded into an analytic tail.
const DIRECT_TERMS: u64 = 1_000_000;

/// Law of the (already ceiled) update variable on ℕ₀.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateLaw {
    Const(u64),
    /// Uniform on `{lo, …, hi}`.
    Uniform {
        lo: u64,
        hi: u64,
    },
    /// `P(X = k) = p(1−p)^k`.
    Geometric {
        p: f64,
    },
    Poisson {
        mean: f64,
    },
    /// `⌈E⌉` for `E ~ Exp(rate)`.
    CeilExp {
        rate: f64,
    },
    /// `⌊Y⌋` with `P(Y > y) = (1+y)^{-shape}`.
    Pareto {
        shape: f64,
    },
    /// Explicit pmf on `0, 1, …`.
    Table(Vec<f64>),
}

impl UpdateLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            UpdateLaw::Const(_) => true,
            UpdateLaw::Uniform { lo, hi } => lo <= hi,
            UpdateLaw::Geometric { p } => *p > 0.0 && *p <= 1.0,
            UpdateLaw::Poisson { mean } => *mean >= 0.0 && mean.is_finite(),
            UpdateLaw::CeilExp { rate } => *rate > 0.0 && rate.is_finite(),
            UpdateLaw::Pareto { shape } => *shape > 0.0,
            UpdateLaw::Table(p) => !p.is_empty() && p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("UpdateLaw", format!("{self:?} is not a law on the nonnegative integers")))
        }
    }

    /// `F(k) = P(X ≤ k)`.
    pub fn cdf(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            UpdateLaw::Const(c) => f64::from(u8::from(k >= *c)),
            UpdateLaw::Uniform { lo, hi } => {
                if k < *lo {
                    0.0
                } else {
                    ((k.min(*hi) - lo + 1) as f64) / ((hi - lo + 1) as f64)
                }
            }
            UpdateLaw::Geometric { p } => 1.0 - (1.0 - p).powf(kf + 1.0),
            UpdateLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    1.0
                } else {
                    PoissonCdf::new(*mean).expect("validated").cdf(k)
                }
            }
            UpdateLaw::CeilExp { rate } => -(-rate * kf).exp_m1(),
            UpdateLaw::Pareto { shape } => 1.0 - (2.0 + kf).powf(-shape),
            UpdateLaw::Table(p) => p.iter().take(k as usize + 1).sum::<f64>().min(1.0),
        }
    }

    /// `P(X > k)`, computed without cancellation where possible.
    pub fn survival(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            UpdateLaw::Geometric { p } => (1.0 - p).powf(kf + 1.0),
            UpdateLaw::Poisson { mean } if *mean > 0.0 => PoissonCdf::new(*mean).expect("validated").sf(k),
            UpdateLaw::CeilExp { rate } => (-rate * kf).exp(),
            UpdateLaw::Pareto { shape } => (2.0 + kf).powf(-shape),
            UpdateLaw::Table(p) => p.iter().skip(k as usize + 1).sum(),
            _ => 1.0 - self.cdf(k),
        }
    }

    /// Upper bound on `Σ_{k ≥ n} P(X > k)`.
    pub fn tail_sum(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self {
            UpdateLaw::Const(c) => c.saturating_sub(n) as f64,
            UpdateLaw::Uniform { hi, .. } => (n..*hi).map(|k| self.survival(k)).sum(),
            UpdateLaw::Geometric { p } => (1.0 - p).powf(nf + 1.0) / p,
            UpdateLaw::CeilExp { rate } => (-rate * nf).exp() / -(-rate).exp_m1(),
            UpdateLaw::Pareto { shape } => {
                if *shape <= 1.0 {
                    f64::INFINITY
                } else {
                    (2.0 + nf).powf(-shape) + (2.0 + nf).powf(1.0 - shape) / (shape - 1.0)
                }
            }
            UpdateLaw::Poisson { mean } => {
                // geometric domination of Poisson tails once k exceeds the mean
                let mut s = 0.0;
                let mut k = n;
                loop {
                    let t = self.survival(k);
                    s += t;
                    // past 2·mean successive survival terms at least halve
                    if k as f64 > 2.0 * mean && t < 1e-18 {
                        return s + t;
                    }
                    k += 1;
                }
            }
            UpdateLaw::Table(p) => (n..p.len() as u64).map(|k| self.survival(k)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.tail_sum(0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            UpdateLaw::Const(c) => *c,
            UpdateLaw::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            UpdateLaw::Geometric { p } => Geometric::new(*p).expect("validated").sample(rng),
            UpdateLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    0
                } else {
                    Poisson::new(*mean).expect("validated").sample(rng) as u64
                }
            }
            UpdateLaw::CeilExp { rate } => {
                let u: f64 = rng.random();
                (-(1.0 - u).ln() / rate).ceil() as u64
            }
            UpdateLaw::Pareto { shape } => {
                let u: f64 = rng.random();
                let y = (1.0 - u).powf(-1.0 / shape) - 1.0;
                if y >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    y.floor() as u64
                }
            }
            UpdateLaw::Table(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, &q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        return k as u64;
                    }
                }
                (p.len() - 1) as u64
            }
        }
    }
}

/// `(M − 1) ∨ X` on ℕ₀.
pub fn step(m: u64, x: u64) -> u64 {
    m.saturating_sub(1).max(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct REChain {
    pub law: UpdateLaw,
    pub state: u64,
}

impl REChain {
    pub fn new(law: UpdateLaw, start: u64) -> Result<Self> {
        law.validate()?;
        Ok(REChain { law, state: start })
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        self.state = step(self.state, self.law.sample(rng));
        self.state
    }

    /// `σ = inf{n ≥ 1 : M_n = 0}` from `start`.
    pub fn return_time<R: Rng + ?Sized>(&self, start: u64, rng: &mut R, cap: u64) -> Result<u64> {
        let mut m = start;
        for n in 1..=cap {
            m = step(m, self.law.sample(rng));
            if m == 0 {
                return Ok(n);
            }
        }
        Err(Error::Cap { what: "return time", cap, detail: "; the chain may be null recurrent".into() })
    }

    /// `μ[0, n] = Π_{k ≥ n} F(k)`, with the product beyond a cutoff replaced by
    /// `exp(−Σ (1 − F))`.
    pub fn invariant_cdf(&self, n: u64) -> Result<f64> {
        let law = &self.law;
        if !law.mean().is_finite() {
            return Err(invalid("UpdateLaw", "the invariant law needs a finite mean update"));
        }
        let mut log = 0.0;
        let mut k = n;
        let end = n + DIRECT_TERMS;
        loop {
            if law.tail_sum(k) < 1e-12 {
                break;
            }
            if k >= end {
                // −ln F ≈ 1 − F up to (1 − F)², summed
                log -= law.tail_sum(k);
                break;
            }
            let f = law.cdf(k);
            if f <= 0.0 {
                return Ok(0.0);
            }
            log += if f > 0.5 { (-law.survival(k)).ln_1p() } else { f.ln() };
            k += 1;
        }
        Ok(log.exp())
    }

    /// `μ(n)`.
    pub fn invariant_pmf(&self, n: u64) -> Result<f64> {
        let hi = self.invariant_cdf(n)?;
        Ok(if n == 0 { hi } else { hi - self.invariant_cdf(n - 1)? })
    }

    /// Right-hand side of the hitting-time identity for `φ(x) = x`:
    /// `ν(0) E₀σ + E₁σ · Σ_i P(ν > i) Π_{k<i} F(k)`.
    pub fn hitting_identity(&self, start: &UpdateLaw, e0: f64, e1: f64) -> f64 {
        start.cdf(0) * e0 + e1 * self.identity_weight(start)
    }

    /// `Σ_i P(ν > i) Π_{k<i} F(k)`.
    pub fn identity_weight(&self, start: &UpdateLaw) -> f64 {
        let mut prod = 1.0;
        let mut s = 0.0;
        let mut i = 0u64;
        loop {
            let sv = start.survival(i);
            s += sv * prod;
            if start.tail_sum(i + 1) * prod < 1e-14 || i > 10_000_000 {
                return s;
            }
            prod *= self.law.cdf(i);
            i += 1;
        }
    }
}

/// Occupation counts of states `0..k` (last bin collects `≥ k−1`) over `steps` moves.
pub fn occupation<R: Rng + ?Sized>(chain: &mut REChain, steps: u64, k: usize, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; k];
    for _ in 0..steps {
        let m = chain.advance(rng) as usize;
        counts[m.min(k - 1)] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(0, 0), 0);
        assert_eq!(step(5, 3), 4);
        assert_eq!(step(2, 7), 7);
    }

    #[test]
    fn return_time_examples() {
        let c = REChain::new(UpdateLaw::Const(0), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(c.return_time(0, &mut rng, 100).unwrap(), 1);
        assert_eq!(c.return_time(7, &mut rng, 100).unwrap(), 7);
        let stuck = REChain::new(UpdateLaw::Const(3), 0).unwrap();
        assert!(matches!(stuck.return_time(0, &mut rng, 50), Err(Error::Cap { .. })));
    }

    #[test]
    fn invariant_examples() {
        let zero = REChain::new(UpdateLaw::Const(0), 0).unwrap();
        assert_eq!(zero.invariant_cdf(0).unwrap(), 1.0);
        let coin = REChain::new(UpdateLaw::Uniform { lo: 0, hi: 1 }, 0).unwrap();
        assert!((coin.invariant_cdf(0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(coin.invariant_cdf(1).unwrap(), 1.0);
        let shifted = REChain::new(UpdateLaw::Uniform { lo: 2, hi: 4 }, 0).unwrap();
        assert_eq!(shifted.invariant_cdf(1).unwrap(), 0.0);
    }

    #[test]
    fn invariant_balance_and_monotone() {
        for law in [UpdateLaw::Geometric { p: 0.3 }, UpdateLaw::Poisson { mean: 2.5 }, UpdateLaw::Pareto { shape: 2.5 }] {
            let c = REChain::new(law.clone(), 0).unwrap();
            let mut prev = 0.0;
            for x in 0..30 {
                let lo = c.invariant_cdf(x).unwrap();
                let hi = c.invariant_cdf(x + 1).unwrap();
                assert!((lo - law.cdf(x) * hi).abs() < 1e-10, "{law:?} {x}");
                assert!(lo >= prev);
                prev = lo;
            }
            assert!(c.invariant_cdf(100_000).unwrap() > 1.0 - 1e-4);
        }
    }

    #[test]
    fn kac_for_geometric_updates() {
        let c = REChain::new(UpdateLaw::Geometric { p: 0.4 }, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| c.return_time(0, &mut rng, RETURN_CAP).unwrap() as f64).collect();
        let (m, se) = mean_se(&xs);
        let want = 1.0 / c.invariant_cdf(0).unwrap();
        assert!((m - want).abs() < 3.0 * se, "{m} vs {want} ± {se}");
    }

    #[test]
    fn hitting_time_identity() {
        let c = REChain::new(UpdateLaw::Poisson { mean: 0.8 }, 0).unwrap();
        let nu = UpdateLaw::Geometric { p: 0.35 };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 60_000;
        let direct: Vec<f64> = (0..n)
            .map(|_| {
                let s = nu.sample(&mut rng);
                c.return_time(s, &mut rng, RETURN_CAP).unwrap() as f64
            })
            .collect();
        let e0: Vec<f64> = (0..n).map(|_| c.return_time(0, &mut rng, RETURN_CAP).unwrap() as f64).collect();
        let e1: Vec<f64> = (0..n).map(|_| c.return_time(1, &mut rng, RETURN_CAP).unwrap() as f64).collect();
        let (d, sd) = mean_se(&direct);
        let (a, sa) = mean_se(&e0);
        let (b, sb) = mean_se(&e1);
        let w = c.identity_weight(&nu);
        let rhs = c.hitting_identity(&nu, a, b);
        let se = (sd * sd + (nu.cdf(0) * sa).powi(2) + (w * sb).powi(2)).sqrt();
        assert!((d - rhs).abs() < 3.0 * se, "{d} vs {rhs} ± {se}");
    }

    #[test]
    fn moment_stability_under_doubling() {
        // E X^3 < ∞, start with exponential moments: E σ² finite
        let c = REChain::new(UpdateLaw::Pareto { shape: 3.5 }, 0).unwrap();
        let nu = UpdateLaw::Geometric { p: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut sample = |n: usize| -> f64 {
            (0..n)
                .map(|_| {
                    let s = nu.sample(&mut rng);
                    (c.return_time(s, &mut rng, RETURN_CAP).unwrap() as f64).powi(2)
                })
                .sum::<f64>()
                / n as f64
        };
        let (a, b) = (sample(50_000), sample(100_000));
        assert!((a / b - 1.0).abs() < 0.2, "{a} {b}");
    }

    proptest! {
        #[test]
        fn step_is_max_of_decrement_and_draw(m in 0u64..1000, x in 0u64..1000) {
            let s = step(m, x);
            prop_assert!(s >= x && s + 1 >= m && (s == x || s + 1 == m));
        }

        #[test]
        fn cdf_survival_complement(p in 0.05f64..0.95, k in 0u64..60) {
            for law in [UpdateLaw::Geometric { p }, UpdateLaw::CeilExp { rate: p }, UpdateLaw::Poisson { mean: 5.0 * p }] {
                prop_assert!((law.cdf(k) + law.survival(k) - 1.0).abs() < 1e-12);
            }
        }
    }
}
