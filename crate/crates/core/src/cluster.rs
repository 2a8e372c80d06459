//! Branching representation of linear Hawkes processes: total-progeny law,
//! cluster simulation, and stopping times for a stationary start.

use crate::error::invalid;
use crate::kernels::quad;
use crate::kernels::{exponential_threshold, Setup};
use crate::prm::{keyed_rng, tags, PointSource, PrmStream};
use crate::renewal::{dominated_after, scan_alpha_ad, Assumption};
use crate::{Envelope, Error, Gamma, Kernel, RateSpec, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use statrs::function::gamma::ln_gamma;

/// Tail mass left out of a truncated progeny table.
pub const BOREL_TAIL: f64 = 1e-12;
pub const TREE_CAP: u64 = 10_000_000;

/// Total progeny of a Poisson(m) Galton-Watson tree, root included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorelLaw {
    m: f64,
}

impl BorelLaw {
    pub fn new(m: f64) -> Result<Self> {
        if !(m >= 0.0) {
            return Err(invalid("BorelLaw", format!("mean offspring must be >= 0, got {m}")));
        }
        if m >= 1.0 {
            return Err(Error::Supercritical { m });
        }
        Ok(BorelLaw { m })
    }

    pub fn mean_offspring(&self) -> f64 {
        self.m
    }

    /// `c_h`: `E e^{cW} < ∞` iff `c ≤ c_h`.
    pub fn exp_threshold(&self) -> f64 {
        exponential_threshold(self.m)
    }

    /// `P(W = n) = e^{-mn}(mn)^{n-1}/n!`, evaluated in log space.
    pub fn pmf(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if self.m == 0.0 {
            return if n == 1 { 1.0 } else { 0.0 };
        }
        let nf = n as f64;
        ((nf - 1.0) * (nf * self.m).ln() - nf * self.m - ln_gamma(nf + 1.0)).exp()
    }

    /// Bound on successive pmf ratios, `m e^{1−m} < 1`.
    fn ratio_bound(&self) -> f64 {
        self.m * (1.0 - self.m).exp()
    }

    /// Smallest `N` whose tail bound `p(N) q/(1 − q)` is below [`BOREL_TAIL`].
    pub fn truncation(&self) -> u64 {
        let q = self.ratio_bound();
        let mut n = 1;
        while self.pmf(n) * q / (1.0 - q) > BOREL_TAIL {
            n += 1;
        }
        n
    }

    /// `p(1), …, p(N)` at the adaptive truncation.
    pub fn table(&self) -> Vec<f64> {
        (1..=self.truncation()).map(|n| self.pmf(n)).collect()
    }

    /// `Σ_{n ≤ nmax} e^{cn} p(n)`.
    pub fn mgf_partial(&self, c: f64, nmax: u64) -> f64 {
        (1..=nmax).map(|n| (c * n as f64 + self.pmf(n).ln()).exp()).sum()
    }

    /// `E e^{cW}` when finite (`c < c_h`), by summing until the terms are negligible.
    pub fn mgf(&self, c: f64) -> Option<f64> {
        if self.m == 0.0 {
            return Some(c.exp());
        }
        let r = c.exp() * self.ratio_bound();
        if !(r < 1.0) {
            return None;
        }
        let mut s = 0.0;
        let mut n = 1u64;
        loop {
            let t = (c * n as f64 + self.pmf(n).ln()).exp();
            s += t;
            if t * r / (1.0 - r) < 1e-14 * s {
                return Some(s);
            }
            n += 1;
        }
    }
}

/// Displacement law `h₊/‖h₊‖₁` of an offspring.
#[derive(Debug, Clone)]
enum Displacement {
    None,
    Exp(Exp<f64>),
    /// Cumulative table `(t, F(t))` inverted by linear interpolation.
    Table(Vec<(f64, f64)>),
}

/// Offspring mechanism of the linear process `c_ψ + L·∫h₊ dZ`.
#[derive(Debug, Clone)]
pub struct Offspring {
    m: f64,
    displacement: Displacement,
}

impl Offspring {
    pub fn new(kernel: &Kernel, lipschitz: f64) -> Result<Self> {
        let k = kernel.positive_part();
        let mass = k.positive_mass();
        let m = lipschitz * mass;
        BorelLaw::new(m)?;
        let displacement = if m == 0.0 {
            Displacement::None
        } else if let Some((_, b)) = k.exp_params() {
            Displacement::Exp(Exp::new(b).map_err(|e| invalid("Kernel", e.to_string()))?)
        } else {
            Displacement::Table(cdf_table(&k, mass)?)
        };
        Ok(Offspring { m, displacement })
    }

    pub fn mean(&self) -> f64 {
        self.m
    }

    pub fn law(&self) -> BorelLaw {
        BorelLaw { m: self.m }
    }

    fn displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.displacement {
            Displacement::None => 0.0,
            Displacement::Exp(e) => e.sample(rng),
            Displacement::Table(t) => {
                let u: f64 = rng.random();
                let k = t.partition_point(|p| p.1 < u).clamp(1, t.len() - 1);
                let ((t0, f0), (t1, f1)) = (t[k - 1], t[k]);
                if f1 > f0 {
                    t0 + (t1 - t0) * (u - f0) / (f1 - f0)
                } else {
                    t1
                }
            }
        }
    }
}

fn cdf_table(k: &Kernel, mass: f64) -> Result<Vec<(f64, f64)>> {
    let h = |t: f64| k.positive(t);
    let mut grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.025).collect();
    let mut t = 10.0;
    while t < 1e7 {
        t *= 1.02;
        grid.push(t);
    }
    grid.extend(k.breakpoints());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let breaks = k.breakpoints();
    let mut out = vec![(0.0, 0.0)];
    let mut acc = 0.0;
    for w in grid.windows(2) {
        acc += quad::piecewise(&h, w[0], w[1], &breaks)?;
        out.push((w[1], (acc / mass).min(1.0)));
        if acc >= mass * (1.0 - 1e-12) {
            break;
        }
    }
    out.last_mut().unwrap().1 = 1.0;
    Ok(out)
}

/// One cluster: the root and all its descendants.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub root: f64,
    /// Event times, root first, in generation order.
    pub times: Vec<f64>,
    /// Total size `W`, root included.
    pub size: u64,
    /// Right extent `Y = max time − root`.
    pub extent: f64,
}

pub fn simulate_cluster<R: Rng + ?Sized>(off: &Offspring, root: f64, rng: &mut R, cap: u64) -> Result<Cluster> {
    let poisson = if off.m > 0.0 { Some(Poisson::new(off.m).map_err(|e| invalid("Offspring", e.to_string()))?) } else { None };
    let mut times = vec![root];
    let mut next = 0;
    while next < times.len() {
        let parent = times[next];
        next += 1;
        if let Some(p) = &poisson {
            let k = p.sample(rng) as u64;
            for _ in 0..k {
                times.push(parent + off.displacement(rng));
            }
        }
        if times.len() as u64 > cap {
            return Err(Error::Cap { what: "cluster size", cap, detail: format!("; mean offspring {} looks supercritical", off.m) });
        }
    }
    let extent = times.iter().fold(0.0f64, |a, &t| a.max(t - root));
    Ok(Cluster { root, size: times.len() as u64, times, extent })
}

/// Linear process on unit windows: roots Poisson(`base`) per window, one
/// keyed generator per window index.
#[derive(Debug, Clone)]
pub struct ClusterField {
    pub seed: u64,
    pub base: f64,
    pub offspring: Offspring,
}

/// Clusters rooted in one window `(k−1, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowClusters {
    pub clusters: Vec<Cluster>,
    /// `Ȳ_k`, the largest extent.
    pub max_extent: f64,
    /// `W̄_k`, the total size.
    pub total: u64,
}

impl ClusterField {
    pub fn window(&self, k: i64) -> Result<WindowClusters> {
        let mut rng = keyed_rng(self.seed, tags::AUX, k as u64, 1);
        let n = if self.base > 0.0 {
            Poisson::new(self.base).map_err(|e| invalid("ClusterField", e.to_string()))?.sample(&mut rng) as u64
        } else {
            0
        };
        let mut roots: Vec<f64> = (0..n).map(|_| k as f64 - rng.random::<f64>()).collect();
        roots.sort_by(f64::total_cmp);
        let mut clusters = Vec::with_capacity(roots.len());
        for r in roots {
            clusters.push(simulate_cluster(&self.offspring, r, &mut rng, TREE_CAP)?);
        }
        let max_extent = clusters.iter().fold(0.0f64, |a, c| a.max(c.extent));
        let total = clusters.iter().map(|c| c.size).sum();
        Ok(WindowClusters { clusters, max_extent, total })
    }
}

/// `c₀` of the stationary scan: 2 under assumption (B); under (A) 1.05, or the
/// midpoint to the largest admissible value when that is below 1.05.
pub fn default_c0(gamma: &Gamma, assumption: Assumption, ch: f64) -> Result<f64> {
    match assumption {
        Assumption::B => Ok(2.0),
        Assumption::A { p } => {
            let largest = gamma.far_log_ratio((p + 1.0) / ch);
            if !(largest > 1.0) {
                return Err(invalid("GammaSchedule", format!("no c0 > 1 with gamma >= c0 (p+1) ln t / c_h, ratio {largest}")));
            }
            Ok(if largest >= 1.05 { 1.05 } else { 0.5 * (1.0 + largest) })
        }
    }
}

/// `γ*(t) = γ(t/c₀ − 1)/c₀` for `t ≥ c₀`, zero before.
pub fn gamma_star(gamma: &Gamma, c0: f64, t: f64) -> f64 {
    if t / c0 >= 1.0 {
        gamma.value(t / c0 - 1.0) / c0
    } else {
        0.0
    }
}

/// `inf{t ≥ 0 : γ*(t) ≥ w}`.
pub fn gamma_star_inverse(gamma: &Gamma, c0: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let g = gamma.inverse(c0 * w);
    if g.is_finite() {
        c0 * (g + 1.0)
    } else {
        f64::INFINITY
    }
}

/// Stationary-start stopping time and what was needed to get it.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStart {
    pub alpha0: u64,
    /// Windows before `−burn_in` are ignored.
    pub burn_in: u64,
    /// Events of the dominating linear process up to `α₀` (setup O), for the
    /// direct envelope check.
    pub events: Vec<f64>,
    /// Whether the direct envelope inequality certified at `α₀` (always true under AD).
    pub certified: bool,
}

/// Burn-in for (AD): `Σ_{j > T} P(Poisson(K) > γ(j)) ≤ 1e-10`.
fn burn_in_ad(gamma: &Gamma, k: f64) -> u64 {
    use statrs::distribution::{DiscreteCDF, Poisson as P};
    if k <= 0.0 {
        return 0;
    }
    let pois = P::new(k).expect("positive mean");
    let exceed = |j: u64| {
        let g = gamma.value(j as f64);
        if g < 0.0 {
            1.0
        } else {
            pois.sf(g.floor() as u64)
        }
    };
    let mut t: u64 = 1;
    loop {
        // tail beyond t bounded by a doubling sum of the (decreasing) exceedance
        let mut tail = 0.0;
        let mut j = t;
        while j < (1 << 40) {
            tail += exceed(j) * j as f64;
            j *= 2;
        }
        if tail <= 1e-10 || t >= 1 << 20 {
            return t;
        }
        t *= 2;
    }
}

/// Burn-in for (O): expected memory from clusters rooted before `−T` below `1e-10·f(0)`.
fn burn_in_o(env: &Envelope, base: f64, m: f64) -> Result<u64> {
    let k = env.kernel().positive_part();
    let scale = 1e-10 * env.envelope(0.0).max(1e-300);
    let per_root = base / (1.0 - m);
    let tail = |t: f64| -> Result<f64> { quad::semi_infinite(&|s: f64| k.majorant(s), t, k.decay(), &k.breakpoints()) };
    let mut t = 1.0;
    while per_root * tail(t)? > scale {
        t *= 2.0;
        if t > 1e7 {
            return Err(Error::Integrability { factor: "h+", detail: "burn-in for the stationary start exceeds 1e7".into() });
        }
    }
    Ok(t.ceil() as u64)
}

/// `α₀^I` for a stationary start under (AD): the first `i > 0` with
/// `N(i−j−1, i−j] ≤ γ(j)` for all `j ≥ 0`, `N` the points of `pi` with mark `≤ K`.
pub fn alpha0_stationary_ad(rate: &RateSpec, gamma: &Gamma, pi: &PrmStream, cap: u64) -> Result<StationaryStart> {
    if rate.setup != Setup::AD {
        return Err(invalid("RateSpec.setup", "stationary AD start needs setup AD"));
    }
    let k = rate.refractory_bound();
    let burn = burn_in_ad(gamma, k);
    let mut cur = pi.cursor();
    let offset = burn as f64;
    let mut counts = |i: u64| -> Result<u64> {
        if k <= 0.0 {
            return Ok(0);
        }
        let hi = i as f64 - offset;
        let mut s = hi - 1.0;
        let mut c = 0;
        while let Some(p) = cur.first_in(s, hi, k)? {
            c += 1;
            s = p.0;
        }
        Ok(c)
    };
    let i = scan_alpha_ad(gamma, &mut counts, offset, cap.saturating_add(burn))?;
    Ok(StationaryStart { alpha0: i - burn, burn_in: burn, events: Vec::new(), certified: true })
}

/// `ᾱ₀` for a stationary start under (O): the first `i > 0` with
/// `Ȳ_{i−j} ≤ (1 − 1/c₀) j` and `W̄_{i−j} ≤ γ*(j)` for all `j ≥ 0`, over the
/// cluster field of the dominating linear process.
pub fn alpha0_stationary_o(env: &Envelope, rate: &RateSpec, assumption: Assumption, seed: u64, cap: u64) -> Result<StationaryStart> {
    if rate.setup != Setup::O {
        return Err(invalid("RateSpec.setup", "stationary O start needs setup O"));
    }
    let off = Offspring::new(env.kernel(), rate.lipschitz())?;
    let ch = off.law().exp_threshold();
    let c0 = default_c0(env.gamma(), assumption, ch)?;
    let field = ClusterField { seed, base: rate.c_psi(), offspring: off };
    let burn = burn_in_o(env, field.base, field.offspring.mean())?;
    let first = -(burn as i64) + 1;
    let mut m: u64 = 0;
    let mut events = Vec::new();
    let mut k = first;
    loop {
        if k > cap as i64 {
            return Err(Error::Cap { what: "stationary alpha scan (O)", cap, detail: format!("; burn-in {burn}") });
        }
        let w = field.window(k)?;
        let need_y = (w.max_extent / (1.0 - 1.0 / c0)).ceil();
        let need_w = gamma_star_inverse(env.gamma(), c0, w.total as f64).ceil();
        let need = need_y.max(need_w);
        let x = if need.is_finite() { need as u64 } else { u64::MAX / 2 };
        m = m.saturating_sub(1).max(x);
        events.extend(w.clusters.iter().flat_map(|c| c.times.iter().copied()));
        if k >= 1 && m == 0 {
            break;
        }
        k += 1;
    }
    let alpha0 = k as u64;
    events.retain(|&t| t <= alpha0 as f64);
    events.sort_by(f64::total_cmp);
    let kp = env.kernel().positive_part();
    let certified = dominated_after(&kp, &events, alpha0 as f64, &|u| env.envelope(u));
    Ok(StationaryStart { alpha0, burn_in: burn, events, certified })
}

#[cfg(test)]
mod tests;
