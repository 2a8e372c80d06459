//! `key = value` run configuration with `[section]` headers.
//!
//! Every value is a word list; parameterized specs are written as a name
//! followed by numbers, e.g. `kernel = exp 0.2 1`.

use crate::kernels::{default_gamma, Activation, KernelForm, Recovery};
use crate::renewal::{Assumption, RenewalConfig, Start};
use crate::reprocess::UpdateLaw;
use crate::stats::{Functional, WindowStat};
use crate::{Envelope, Gamma, Kernel, Profile, RateSpec, Setup};
use std::collections::BTreeMap;

/// Documented defaults; also the reference for which keys exist.
pub const DEFAULT_CONFIG: &str = "\
[model]
setup = AD
kernel = exp 0.2 1
activation = linear 0.5 1
recovery = hard 1
# refractory length 1/n under AD; `auto` is 1 under AD and inf under O
delta = auto
# log <scale> | linear <scale> | const <v> | step <at> <low> <high> | default
gamma = log 1.5
# zero | exp <scale> <rate> | power <scale> <exponent> | indicator <end>
r = exp 0.5 1
delay = 0
assumption = A
p = 2
# a number, or `stationary`
alpha0 = 0

[run]
seed = 1
out = out
# 0 uses every core
threads = 0
horizon = 100
systems = 1000
blocks = 1000
# initial <scale> <age> | restart
start = initial 0 0

[coupling]
first = initial 1 0
second = initial -1 2
pairs = 1000
tail = 50

[clt]
# count | constant <c> | window <m> count | window <m> atleast <k> | window <m> power <q>
functional = count
blocks = 20000
group = 20
batch_horizon = 200000
batch_len = 500
fclt_n = 2000
fclt_paths = 1000
fclt_grid = 20
lil_horizon = 1000000

[re]
# const <k> | uniform <lo> <hi> | geometric <p> | poisson <mean> | ceilexp <rate> | pareto <shape>
law = geometric 0.5
steps = 1000000
thin = 10
returns = 100000

[verify]
alpha = 0.01
tau_cycles = 10000
blocks = 10000
borel_m = 0.5
borel_clusters = 100000
thinning_runs = 1000
thinning_horizon = 20
thinning_cap = 5
split_windows = 20000
split_height = 1
moment_runs = 2000
";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub setup: Setup,
    pub kernel: Kernel,
    pub activation: Activation<f64>,
    pub recovery: Recovery<f64>,
    /// `None` picks the setup's natural value.
    pub delta: Option<f64>,
    pub gamma: Option<Gamma>,
    pub r: Profile,
    pub delay: f64,
    pub assumption: Assumption,
    pub p: f64,
    /// `None` for the stationary start.
    pub alpha0: Option<f64>,

    pub seed: u64,
    pub out: String,
    pub threads: usize,
    pub horizon: f64,
    pub systems: u64,
    pub blocks: usize,
    pub start: Start,

    pub coupling_first: Start,
    pub coupling_second: Start,
    pub coupling_pairs: u64,
    pub coupling_tail: f64,

    pub functional: Functional,
    pub clt_blocks: usize,
    pub clt_group: usize,
    pub batch_horizon: f64,
    pub batch_len: f64,
    pub fclt_n: f64,
    pub fclt_paths: usize,
    pub fclt_grid: usize,
    pub lil_horizon: f64,

    pub re_law: UpdateLaw,
    pub re_steps: u64,
    pub re_thin: u64,
    pub re_returns: u64,

    pub alpha: f64,
    pub tau_cycles: u64,
    pub verify_blocks: usize,
    pub borel_m: f64,
    pub borel_clusters: u64,
    pub thinning_runs: u64,
    pub thinning_horizon: f64,
    pub thinning_cap: f64,
    pub split_windows: usize,
    pub split_height: f64,
    pub moment_runs: u64,
}

fn table(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(format!("{section}.{}", k.trim()), v.trim().to_string());
            }
            None => errors.push(format!("line {}: expected key = value, got `{line}`", i + 1)),
        }
    }
    map
}

struct Reader<'a> {
    values: &'a BTreeMap<String, String>,
    errors: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        &self.values[key]
    }

    fn fail<T: Default>(&mut self, key: &str, msg: impl std::fmt::Display) -> T {
        self.errors.push(format!("{key}: {msg}"));
        T::default()
    }

    fn num(&mut self, key: &str) -> f64 {
        match self.raw(key).parse::<f64>() {
            Ok(v) if !v.is_nan() => v,
            _ => self.fail(key, format!("expected a number, got `{}`", self.raw(key))),
        }
    }

    fn int(&mut self, key: &str) -> u64 {
        let s = self.raw(key).to_string();
        match s
            .parse::<u64>()
            .ok()
            .or_else(|| s.parse::<f64>().ok().filter(|v| *v >= 0.0 && v.fract() == 0.0 && *v < 1.8e19).map(|v| v as u64))
        {
            Some(v) => v,
            None => self.fail(key, format!("expected a nonnegative integer, got `{s}`")),
        }
    }

    fn positive(&mut self, key: &str) -> u64 {
        let v = self.int(key);
        if v == 0 {
            self.errors.push(format!("{key}: must be positive"));
        }
        v
    }

    /// Spec name and its numeric arguments.
    fn spec(&mut self, key: &str) -> Option<(String, Vec<f64>)> {
        let mut words = self.raw(key).split_whitespace();
        let name = words.next().unwrap_or("").to_ascii_lowercase();
        let mut args = Vec::new();
        for w in words {
            match w.parse::<f64>() {
                Ok(v) => args.push(v),
                Err(_) => {
                    self.errors.push(format!("{key}: `{w}` is not a number"));
                    return None;
                }
            }
        }
        Some((name, args))
    }

    fn arity(&mut self, key: &str, name: &str, args: &[f64], n: usize) -> bool {
        if args.len() != n {
            self.errors.push(format!("{key}: `{name}` takes {n} argument(s), got {}", args.len()));
            return false;
        }
        true
    }

    fn kernel(&mut self, key: &str) -> Kernel {
        let Some((name, a)) = self.spec(key) else { return Kernel::zero() };
        let built = match name.as_str() {
            "zero" if self.arity(key, &name, &a, 0) => Ok(Kernel::zero()),
            "exp" if self.arity(key, &name, &a, 2) => Kernel::exponential(a[0], a[1]),
            "power" if self.arity(key, &name, &a, 2) => Kernel::power_law(a[0], a[1]),
            "table" if a.len() >= 4 && a.len() % 2 == 0 => Kernel::table(a.chunks(2).map(|c| (c[0], c[1])).collect()),
            "table" => return self.fail_kernel(key, "table takes pairs `t h` (at least two)"),
            "zero" | "exp" | "power" => return Kernel::zero(),
            other => return self.fail_kernel(key, format!("unknown kernel `{other}`")),
        };
        built.unwrap_or_else(|e| self.fail_kernel(key, e))
    }

    fn fail_kernel(&mut self, key: &str, msg: impl std::fmt::Display) -> Kernel {
        self.errors.push(format!("{key}: {msg}"));
        Kernel::zero()
    }

    fn activation(&mut self, key: &str) -> Activation<f64> {
        let fallback = Activation::Linear { base: 1.0, slope: 0.0 };
        let Some((name, a)) = self.spec(key) else { return fallback };
        match name.as_str() {
            "linear" if self.arity(key, &name, &a, 2) => Activation::Linear { base: a[0], slope: a[1] },
            "capped" if self.arity(key, &name, &a, 3) => Activation::Capped { base: a[0], slope: a[1], cap: a[2] },
            "linear" | "capped" => fallback,
            other => {
                self.errors.push(format!("{key}: unknown activation `{other}`"));
                fallback
            }
        }
    }

    fn recovery(&mut self, key: &str) -> Recovery<f64> {
        let Some((name, a)) = self.spec(key) else { return Recovery::None };
        match name.as_str() {
            "none" if self.arity(key, &name, &a, 0) => Recovery::None,
            "hard" if self.arity(key, &name, &a, 1) => Recovery::Hard { period: a[0] },
            "exp" if self.arity(key, &name, &a, 1) => Recovery::Exp { rate: a[0] },
            "none" | "hard" | "exp" => Recovery::None,
            other => {
                self.errors.push(format!("{key}: unknown recovery `{other}`"));
                Recovery::None
            }
        }
    }

    fn gamma(&mut self, key: &str) -> Option<Gamma> {
        let (name, a) = self.spec(key)?;
        match name.as_str() {
            "default" if self.arity(key, &name, &a, 0) => None,
            "log" if self.arity(key, &name, &a, 1) => Some(Gamma::Log { scale: a[0] }),
            "linear" if self.arity(key, &name, &a, 1) => Some(Gamma::Linear { scale: a[0] }),
            "const" if self.arity(key, &name, &a, 1) => Some(Gamma::Const { value: a[0] }),
            "step" if self.arity(key, &name, &a, 3) => Some(Gamma::Step { at: a[0], low: a[1], high: a[2] }),
            "default" | "log" | "linear" | "const" | "step" => None,
            other => {
                self.errors.push(format!("{key}: unknown gamma `{other}`"));
                None
            }
        }
    }

    fn profile(&mut self, key: &str) -> Profile {
        let Some((name, a)) = self.spec(key) else { return Profile::Zero };
        match name.as_str() {
            "zero" if self.arity(key, &name, &a, 0) => Profile::Zero,
            "exp" if self.arity(key, &name, &a, 2) => Profile::Exp { scale: a[0], rate: a[1] },
            "power" if self.arity(key, &name, &a, 2) => Profile::Power { scale: a[0], exponent: a[1] },
            "indicator" if self.arity(key, &name, &a, 1) => Profile::Indicator { end: a[0] },
            "zero" | "exp" | "power" | "indicator" => Profile::Zero,
            other => {
                self.errors.push(format!("{key}: unknown profile `{other}`"));
                Profile::Zero
            }
        }
    }

    fn start(&mut self, key: &str) -> Start {
        let fallback = Start::Initial { scale: 0.0, age: 0.0 };
        let Some((name, a)) = self.spec(key) else { return fallback };
        match name.as_str() {
            "initial" if self.arity(key, &name, &a, 2) => Start::Initial { scale: a[0], age: a[1] },
            "restart" if self.arity(key, &name, &a, 0) => Start::Restart,
            "initial" | "restart" => fallback,
            other => {
                self.errors.push(format!("{key}: unknown start `{other}`"));
                fallback
            }
        }
    }

    fn functional(&mut self, key: &str) -> Functional {
        let words: Vec<String> = self.raw(key).split_whitespace().map(str::to_ascii_lowercase).collect();
        let w: Vec<&str> = words.iter().map(String::as_str).collect();
        let num = |s: &str| s.parse::<f64>().ok();
        let parsed = match w.as_slice() {
            ["count"] => Some(Functional::Count),
            ["constant", c] => num(c).map(Functional::Constant),
            ["window", m, "count"] => num(m).map(|m| Functional::Window { m, stat: WindowStat::Count }),
            ["window", m, "atleast", k] => {
                num(m).zip(k.parse::<usize>().ok()).map(|(m, k)| Functional::Window { m, stat: WindowStat::AtLeast(k) })
            }
            ["window", m, "power", q] => num(m).zip(num(q)).map(|(m, q)| Functional::Window { m, stat: WindowStat::Power(q) }),
            _ => None,
        };
        parsed.unwrap_or_else(|| {
            self.errors.push(format!("{key}: cannot read functional `{}`", self.raw(key)));
            Functional::Count
        })
    }

    fn law(&mut self, key: &str) -> UpdateLaw {
        let fallback = UpdateLaw::Const(0);
        let Some((name, a)) = self.spec(key) else { return fallback };
        let law = match name.as_str() {
            "const" if self.arity(key, &name, &a, 1) => UpdateLaw::Const(a[0] as u64),
            "uniform" if self.arity(key, &name, &a, 2) => UpdateLaw::Uniform { lo: a[0] as u64, hi: a[1] as u64 },
            "geometric" if self.arity(key, &name, &a, 1) => UpdateLaw::Geometric { p: a[0] },
            "poisson" if self.arity(key, &name, &a, 1) => UpdateLaw::Poisson { mean: a[0] },
            "ceilexp" if self.arity(key, &name, &a, 1) => UpdateLaw::CeilExp { rate: a[0] },
            "pareto" if self.arity(key, &name, &a, 1) => UpdateLaw::Pareto { shape: a[0] },
            "const" | "uniform" | "geometric" | "poisson" | "ceilexp" | "pareto" => return fallback,
            other => {
                self.errors.push(format!("{key}: unknown update law `{other}`"));
                return fallback;
            }
        };
        if let Err(e) = law.validate() {
            self.errors.push(format!("{key}: {e}"));
        }
        law
    }
}

impl RunConfig {
    /// Reads a config over the defaults. All problems are reported together.
    pub fn parse(text: &str) -> Result<RunConfig, Vec<String>> {
        let mut errors = Vec::new();
        let mut values = table(DEFAULT_CONFIG, &mut errors);
        for (k, v) in table(text, &mut errors) {
            match values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => errors.push(format!("{k}: unknown key")),
            }
        }
        let mut r = Reader { values: &values, errors: &mut errors };
        let setup = match r.raw("model.setup").to_ascii_uppercase().as_str() {
            "AD" => Setup::AD,
            "O" => Setup::O,
            other => r.fail::<Option<Setup>>("model.setup", format!("expected AD or O, got `{other}`")).unwrap_or(Setup::AD),
        };
        let p = r.num("model.p");
        let assumption = match r.raw("model.assumption").to_ascii_uppercase().as_str() {
            "A" => Assumption::A { p },
            "B" => Assumption::B,
            other => r.fail::<Option<Assumption>>("model.assumption", format!("expected A or B, got `{other}`")).unwrap_or(Assumption::B),
        };
        let alpha0 = match r.raw("model.alpha0") {
            "stationary" => None,
            _ => Some(r.num("model.alpha0")),
        };
        let delta = match r.raw("model.delta") {
            "auto" => None,
            "inf" => Some(f64::INFINITY),
            _ => Some(r.num("model.delta")),
        };
        let cfg = RunConfig {
            setup,
            kernel: r.kernel("model.kernel"),
            activation: r.activation("model.activation"),
            recovery: r.recovery("model.recovery"),
            delta,
            gamma: r.gamma("model.gamma"),
            r: r.profile("model.r"),
            delay: r.num("model.delay"),
            assumption,
            p,
            alpha0,
            seed: r.int("run.seed"),
            out: r.raw("run.out").to_string(),
            threads: r.int("run.threads") as usize,
            horizon: r.num("run.horizon"),
            systems: r.positive("run.systems"),
            blocks: r.int("run.blocks") as usize,
            start: r.start("run.start"),
            coupling_first: r.start("coupling.first"),
            coupling_second: r.start("coupling.second"),
            coupling_pairs: r.positive("coupling.pairs"),
            coupling_tail: r.num("coupling.tail"),
            functional: r.functional("clt.functional"),
            clt_blocks: r.positive("clt.blocks") as usize,
            clt_group: r.positive("clt.group") as usize,
            batch_horizon: r.num("clt.batch_horizon"),
            batch_len: r.num("clt.batch_len"),
            fclt_n: r.num("clt.fclt_n"),
            fclt_paths: r.positive("clt.fclt_paths") as usize,
            fclt_grid: r.positive("clt.fclt_grid") as usize,
            lil_horizon: r.num("clt.lil_horizon"),
            re_law: r.law("re.law"),
            re_steps: r.positive("re.steps"),
            re_thin: r.positive("re.thin"),
            re_returns: r.positive("re.returns"),
            alpha: r.num("verify.alpha"),
            tau_cycles: r.positive("verify.tau_cycles"),
            verify_blocks: r.positive("verify.blocks") as usize,
            borel_m: r.num("verify.borel_m"),
            borel_clusters: r.positive("verify.borel_clusters"),
            thinning_runs: r.positive("verify.thinning_runs"),
            thinning_horizon: r.num("verify.thinning_horizon"),
            thinning_cap: r.num("verify.thinning_cap"),
            split_windows: r.positive("verify.split_windows") as usize,
            split_height: r.num("verify.split_height"),
            moment_runs: r.positive("verify.moment_runs"),
        };
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            errors.push("verify.alpha: must lie in (0, 1)".into());
        }
        if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
            errors.push("run.horizon: must be positive and finite".into());
        }
        if !(cfg.batch_len > 0.0 && cfg.batch_horizon >= 3.0 * cfg.batch_len) {
            errors.push("clt.batch_len: needs batch_len > 0 and at least three batches".into());
        }
        if cfg.clt_blocks < 2 * cfg.clt_group {
            errors.push("clt.blocks: needs at least two groups of blocks".into());
        }
        if !(cfg.fclt_n >= cfg.fclt_grid as f64) {
            errors.push("clt.fclt_n: must be at least fclt_grid".into());
        }
        if errors.is_empty() {
            if let Err(e) = cfg.model() {
                errors.push(e.to_string());
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }

    pub fn rate(&self) -> RateSpec {
        let delta = self.delta.unwrap_or(match self.setup {
            Setup::AD => 1.0,
            Setup::O => f64::INFINITY,
        });
        RateSpec { activation: self.activation, recovery: self.recovery, setup: self.setup, delta }
    }

    /// The renewal configuration with every cross-field check applied.
    pub fn model(&self) -> crate::Result<RenewalConfig> {
        let rate = self.rate();
        rate.validate(&self.kernel)?;
        let gamma = self.gamma.unwrap_or_else(|| {
            let exponential = matches!(self.kernel.form(), KernelForm::Exponential { .. });
            default_gamma(self.setup, &self.kernel, rate.lipschitz(), self.p, exponential)
        });
        let env = Envelope::new(self.kernel.clone(), &rate, gamma, self.r, self.delay)?;
        RenewalConfig::new(env, rate, self.assumption, self.alpha0.unwrap_or(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.setup, Setup::AD);
        assert_eq!(c.assumption, Assumption::A { p: 2.0 });
        assert_eq!(c.coupling_pairs, 1000);
        assert_eq!(c.functional, Functional::Count);
    }

    #[test]
    fn errors_are_aggregated() {
        let e = RunConfig::parse("[model]\nkernel = exp 1\nfoo = 3\n[run]\nseed = -1\n").unwrap_err();
        assert_eq!(e.len(), 3, "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("model.kernel")));
        assert!(e.iter().any(|m| m.starts_with("model.foo")));
        assert!(e.iter().any(|m| m.starts_with("run.seed")));
    }

    #[test]
    fn setup_mismatch_names_rate_setup() {
        let e = RunConfig::parse("[model]\nsetup = O\n").unwrap_err();
        assert!(e.iter().any(|m| m.contains("RateSpec.setup")), "{e:?}");
        let ok = RunConfig::parse("[model]\nsetup = O\nrecovery = none\nkernel = exp 0.3 1\ngamma = default\n").unwrap();
        assert!(ok.rate().delta.is_infinite());
        let e = RunConfig::parse("[model]\nsetup = O\nrecovery = none\ndelta = 1\n").unwrap_err();
        assert!(e.iter().any(|m| m.contains("RateSpec.setup")), "{e:?}");
    }
}
