//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a gated verification failed, 2 configuration
//! error, 3 simulation error. The log level comes from `HREGEN_LOG`.

pub mod config;

use crate::cluster::{alpha0_stationary_ad, alpha0_stationary_o};
use crate::hawkes::{fmt_num, simulate_adhp};
use crate::kernels::Activation;
use crate::prm::{tags, PrmStream};
use crate::renewal::{iterate_regenerations, run_system, start_signal, write_cycles_csv, RenewalConfig, RenewalOutcome, Start, Streams};
use crate::reprocess::{occupation, REChain};
use crate::stats::{self, all_gated_pass, write_reports_csv, CltPlan, FcltPlan, Moment, TestReport};
use crate::{Error, RateSpec, Setup};
use clap::{Parser, Subcommand};
pub use config::{RunConfig, DEFAULT_CONFIG};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const EXIT_GATED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hregen", version, about = "Regeneration times and block statistics for Hawkes processes")]
pub struct Cli {
    /// Config file of `key = value` lines in `[section]`s; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overrides `run.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Runs a single verification suite.
    #[arg(long, global = true)]
    pub only: Option<String>,
    /// Halves the band `F`; breaks the construction on purpose.
    #[arg(long, global = true, hide = true)]
    pub debug_halve_band: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Thinning simulation of one path; writes `events.csv`.
    Simulate,
    /// Band systems over many seeds; writes `cycles.csv` and `blocks.csv`.
    Renewal,
    /// Coupled starts on a shared measure; writes `coupling.csv` and `reports.csv`.
    Coupling,
    /// Time-average and functional CLT from regeneration blocks.
    Clt,
    /// Random exchange chain occupation and return times.
    ReChain,
    /// Runs the verification suites; exit 1 if a gated test fails.
    Verify,
    /// Prints the default config.
    Defaults,
}

/// Verification suites, in run order.
pub const SUITES: [&str; 10] = ["tau", "coupling", "blocks", "borel", "re", "thinning", "split", "clt", "fclt", "moments"];

enum Failure {
    Config(Vec<String>),
    Simulation(String),
    Gated,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Simulation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Simulation(format!("io: {e}"))
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("HREGEN_LOG", "warn")).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(Failure::Config(errs)) => {
            eprintln!("configuration error:");
            for e in errs {
                eprintln!("  {e}");
            }
            EXIT_CONFIG
        }
        Err(Failure::Simulation(e)) => {
            eprintln!("simulation error: {e}");
            EXIT_SIMULATION
        }
        Err(Failure::Gated) => EXIT_GATED,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Config(vec![format!("{}: {e}", p.display())]))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text).map_err(Failure::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.display().to_string();
    }
    if let Some(s) = &cli.only {
        if !SUITES.contains(&s.as_str()) {
            return Err(Failure::Config(vec![format!("--only: unknown suite `{s}`, expected one of {}", SUITES.join(", "))]));
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.command == Command::Defaults {
        print!("{DEFAULT_CONFIG}");
        return Ok(());
    }
    let cfg = load(cli)?;
    let mut model = cfg.model().map_err(|e| Failure::Config(vec![e.to_string()]))?;
    if cli.debug_halve_band {
        model.band_scale = 0.5;
    }
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(|e| Failure::Simulation(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &model, &out),
        Command::Renewal => cmd_renewal(&cfg, &model, &out),
        Command::Coupling => finish(cmd_coupling(&cfg, &model, &out)?, &out),
        Command::Clt => finish(cmd_clt(&cfg, &model, &out)?, &out),
        Command::ReChain => finish(cmd_re_chain(&cfg, &out)?, &out),
        Command::Verify => finish(cmd_verify(&cfg, &model, cli.only.as_deref(), &out)?, &out),
        Command::Defaults => Ok(()),
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `reports.csv`, prints the summary, and maps gated failures to exit 1.
fn finish(reports: Vec<TestReport>, out: &Path) -> Result<(), Failure> {
    let mut w = create(out, "reports.csv")?;
    write_reports_csv(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        println!("{}", r.line());
    }
    let gated = reports.iter().filter(|r| r.gated).count();
    let failed: Vec<&TestReport> = reports.iter().filter(|r| r.gated && !r.pass).collect();
    println!("{} of {} gated tests passed", gated - failed.len(), gated);
    if all_gated_pass(&reports) {
        Ok(())
    } else {
        for r in failed {
            eprintln!("failed: {}", r.line());
        }
        Err(Failure::Gated)
    }
}

fn seeds(cfg: &RunConfig, n: u64) -> Vec<u64> {
    (0..n).map(|i| cfg.seed.wrapping_add(i)).collect()
}

fn cmd_simulate(cfg: &RunConfig, model: &RenewalConfig, out: &Path) -> Result<(), Failure> {
    let (signal, age) = start_signal(model, cfg.start)?;
    let mut cur = PrmStream::new(cfg.seed, tags::PI).cursor();
    let path = simulate_adhp(&mut cur, model.env().kernel(), model.rate(), signal, age, 0.0, 0.0, cfg.horizon)?;
    let mut w = create(out, "events.csv")?;
    path.write_csv(&mut w)?;
    w.flush()?;
    println!("{} events on (0, {}]", path.jumps.len(), fmt_num(cfg.horizon));
    Ok(())
}

/// Config for one seed; the stationary start depends on the seed's measure.
fn seeded_model(cfg: &RunConfig, model: &RenewalConfig, seed: u64) -> crate::Result<RenewalConfig> {
    if cfg.alpha0.is_some() {
        return Ok(model.clone());
    }
    let cap = model.caps.scan;
    let start = match model.setup() {
        Setup::AD => alpha0_stationary_ad(model.rate(), model.env().gamma(), &Streams::new(seed, 0).pi, cap)?,
        Setup::O => alpha0_stationary_o(model.env(), model.rate(), model.assumption(), seed, cap)?,
    };
    let mut m = model.clone();
    m.alpha0 = start.alpha0 as f64;
    Ok(m)
}

fn cmd_renewal(cfg: &RunConfig, model: &RenewalConfig, out: &Path) -> Result<(), Failure> {
    let ids = seeds(cfg, cfg.systems);
    let outs: Vec<crate::Result<RenewalOutcome>> =
        ids.par_iter().map(|&s| run_system(&seeded_model(cfg, model, s)?, &Streams::new(s, 0), cfg.start)).collect();
    let outs: Vec<RenewalOutcome> = outs.into_iter().collect::<crate::Result<_>>()?;
    let rows: Vec<(u64, &RenewalOutcome)> = ids.iter().copied().zip(outs.iter()).collect();
    let mut w = create(out, "cycles.csv")?;
    write_cycles_csv(&mut w, &rows, true)?;
    w.flush()?;
    let cycles: usize = outs.iter().map(|o| o.eta + 1).sum();
    let p = (-model.env().band_mass()).exp();
    println!(
        "{} systems, {} cycles; tau = inf in {} of cycles, exp(-||F||) = {}",
        outs.len(),
        cycles,
        fmt_num(outs.len() as f64 / cycles as f64),
        fmt_num(p)
    );
    if cfg.blocks > 0 {
        let blocks = iterate_regenerations(&seeded_model(cfg, model, cfg.seed)?, cfg.seed, cfg.blocks, cfg.start)?;
        let mut w = create(out, "blocks.csv")?;
        writeln!(w, "block,start,rho,events,eta")?;
        for b in &blocks {
            writeln!(w, "{},{},{},{},{}", b.index, fmt_num(b.start), fmt_num(b.rho), b.jumps.len(), b.eta)?;
        }
        w.flush()?;
        let mean = blocks.iter().map(|b| b.rho).sum::<f64>() / blocks.len() as f64;
        println!("{} blocks, mean length {}", blocks.len(), fmt_num(mean));
    }
    Ok(())
}

fn moment_exponent(model: &RenewalConfig) -> f64 {
    match model.assumption() {
        crate::renewal::Assumption::A { p } => p,
        crate::renewal::Assumption::B => 1.0,
    }
}

fn coupling_reports(cfg: &RunConfig, model: &RenewalConfig, out: &Path) -> Result<Vec<TestReport>, Failure> {
    let ids = seeds(cfg, cfg.coupling_pairs);
    let starts = (cfg.coupling_first, cfg.coupling_second);
    let (reports, runs) = stats::coupling_experiment(model, starts, &ids, cfg.coupling_tail, moment_exponent(model))?;
    let mut w = create(out, "coupling.csv")?;
    writeln!(w, "seed,alpha0,rho,coupling_time,agree")?;
    for r in &runs {
        writeln!(w, "{},{},{},{},{}", r.seed, fmt_num(r.alpha0), fmt_num(r.rho), fmt_num(r.coupling_time), r.agree_after_rho)?;
    }
    w.flush()?;
    Ok(reports)
}

fn cmd_coupling(cfg: &RunConfig, model: &RenewalConfig, out: &Path) -> Result<Vec<TestReport>, Failure> {
    coupling_reports(cfg, model, out)
}

fn clt_plan(cfg: &RunConfig) -> CltPlan {
    CltPlan { n_blocks: cfg.clt_blocks, group: cfg.clt_group, batch_horizon: cfg.batch_horizon, batch_len: cfg.batch_len, alpha: cfg.alpha }
}

/// Time-average CLT, block checks and the LIL diagnostic.
fn clt_reports(cfg: &RunConfig, model: &RenewalConfig, with_blocks: bool) -> Result<(Vec<TestReport>, stats::BlockStat), Failure> {
    let res = stats::clt_time_average(model, &cfg.functional, cfg.seed, &clt_plan(cfg))?;
    let mut reports = res.reports;
    println!(
        "rate {} ± {}, sigma2 {} ± {}, mean block length {}",
        fmt_num(res.stat.rate),
        fmt_num(res.stat.rate_se),
        fmt_num(res.stat.sigma2),
        fmt_num(res.stat.sigma2_se),
        fmt_num(res.stat.mu_rho)
    );
    if with_blocks {
        reports.extend(stats::block_independence(&res.blocks, model.delay(), cfg.alpha));
    }
    Ok((reports, res.stat))
}

fn lil_report(cfg: &RunConfig, model: &RenewalConfig, stat: &stats::BlockStat) -> Result<TestReport, Failure> {
    let (signal, age) = start_signal(model, Start::Initial { scale: 0.0, age: 0.0 })?;
    let mut cur = PrmStream::new(cfg.seed, tags::AUX).derive(1).cursor();
    let path = simulate_adhp(&mut cur, model.env().kernel(), model.rate(), signal, age, 0.0, 0.0, cfg.lil_horizon)?;
    let incr: Vec<f64> = (1..=cfg.lil_horizon.floor() as u64).map(|k| cfg.functional.over(&path.jumps, (k - 1) as f64, k as f64)).collect();
    Ok(stats::lil_envelope(&incr, stat.rate, stat.sigma2))
}

fn fclt_reports(cfg: &RunConfig, model: &RenewalConfig, stat: &stats::BlockStat, out: &Path) -> Result<Vec<TestReport>, Failure> {
    let plan = FcltPlan { n: cfg.fclt_n, n_paths: cfg.fclt_paths, grid: cfg.fclt_grid };
    let (rows, mut reports) = stats::functional_clt_paths(model, &cfg.functional, cfg.seed, stat, &plan)?;
    let mut w = create(out, "fclt_paths.csv")?;
    writeln!(w, "path_id,t,B")?;
    for (p, t, b) in rows {
        writeln!(w, "{p},{},{}", fmt_num(t), fmt_num(b))?;
    }
    w.flush()?;
    reports.push(lil_report(cfg, model, stat)?);
    Ok(reports)
}

fn cmd_clt(cfg: &RunConfig, model: &RenewalConfig, out: &Path) -> Result<Vec<TestReport>, Failure> {
    let (mut reports, stat) = clt_reports(cfg, model, false)?;
    if !stat.degenerate {
        reports.extend(fclt_reports(cfg, model, &stat, out)?);
    }
    Ok(reports)
}

fn cmd_re_chain(cfg: &RunConfig, out: &Path) -> Result<Vec<TestReport>, Failure> {
    let mut chain = REChain::new(cfg.re_law.clone(), 0)?;
    let mut rng = crate::prm::keyed_rng(cfg.seed, tags::AUX, 9, 0);
    let k = 40;
    let counts = occupation(&mut chain, cfg.re_steps, k, &mut rng);
    let mut w = create(out, "occupation.csv")?;
    writeln!(w, "state,observed,expected")?;
    for (i, c) in counts.iter().enumerate() {
        let p = if i + 1 < k { chain.invariant_pmf(i as u64)? } else { 1.0 - chain.invariant_cdf(i as u64 - 1)? };
        writeln!(w, "{i},{c},{}", fmt_num(p * cfg.re_steps as f64))?;
    }
    w.flush()?;
    Ok(stats::re_chain_check(cfg.re_law.clone(), cfg.re_steps, cfg.re_thin, cfg.re_returns, cfg.seed, cfg.alpha)?)
}

/// Bounded version of the model's rate, for the thinning oracle.
fn capped(rate: &RateSpec, cap: f64) -> RateSpec {
    let activation = match rate.activation {
        Activation::Linear { base, slope } => Activation::Capped { base, slope, cap: cap.max(base) },
        a => a,
    };
    RateSpec { activation, ..rate.clone() }
}

fn cmd_verify(cfg: &RunConfig, model: &RenewalConfig, only: Option<&str>, out: &Path) -> Result<Vec<TestReport>, Failure> {
    let mut reports = Vec::new();
    let mut clt_stat = None;
    for suite in SUITES {
        if only.is_some_and(|o| o != suite) {
            continue;
        }
        log::info!("suite {suite}");
        let start = std::time::Instant::now();
        let got = match suite {
            "tau" => tau_suite(cfg, model)?,
            "coupling" => coupling_reports(cfg, model, out)?,
            "blocks" => {
                let blocks = iterate_regenerations(model, cfg.seed, cfg.verify_blocks + 1, Start::Initial { scale: 0.0, age: 0.0 })?;
                stats::block_independence(&blocks, model.delay(), cfg.alpha)
            }
            "borel" => stats::borel_progeny_check(cfg.borel_m, cfg.borel_clusters, cfg.seed, cfg.alpha)?,
            "re" => stats::re_chain_check(cfg.re_law.clone(), cfg.re_steps, cfg.re_thin, cfg.re_returns, cfg.seed, cfg.alpha)?,
            "thinning" => {
                let rate = capped(model.rate(), cfg.thinning_cap);
                vec![stats::thinning_check(model.env().kernel(), &rate, cfg.thinning_horizon, cfg.thinning_runs, cfg.seed)?]
            }
            "split" => {
                let mut r = stats::split_independence(cfg.seed, cfg.split_windows, cfg.split_height, false, cfg.alpha)?;
                r.extend(stats::split_independence(cfg.seed, cfg.split_windows, cfg.split_height, true, cfg.alpha)?);
                r
            }
            "clt" => {
                let (r, stat) = clt_reports(cfg, model, false)?;
                clt_stat = Some(stat);
                r
            }
            "fclt" => {
                let stat = match clt_stat {
                    Some(s) => s,
                    None => clt_reports(cfg, model, false)?.1,
                };
                if stat.degenerate {
                    Vec::new()
                } else {
                    fclt_reports(cfg, model, &stat, out)?
                }
            }
            "moments" => {
                let ids = seeds(cfg, cfg.moment_runs);
                vec![stats::moment_stability(model, &ids, Moment::for_assumption(model.assumption()))?.0]
            }
            _ => unreachable!("suite list"),
        };
        log::info!("suite {suite} done in {:.1}s", start.elapsed().as_secs_f64());
        reports.extend(got);
    }
    Ok(reports)
}

/// Runs systems in seed order until the requested number of cycles is reached.
fn tau_suite(cfg: &RunConfig, model: &RenewalConfig) -> Result<Vec<TestReport>, Failure> {
    let start = Start::Initial { scale: 0.0, age: 0.0 };
    let mut sample = stats::TauLawSample::default();
    let mut next = 0u64;
    let batch = 1024u64;
    while sample.cycles < cfg.tau_cycles {
        let ids: Vec<u64> = (next..next + batch).map(|i| cfg.seed.wrapping_add(i)).collect();
        let s = stats::tau_law_sample(model, &ids, start)?;
        sample.gaps.extend(s.gaps);
        sample.cycles += s.cycles;
        sample.infinite += s.infinite;
        sample.etas.extend(s.etas);
        sample.diag.merge(&s.diag);
        next += batch;
    }
    Ok(stats::tau_law_reports(model, &sample, cfg.alpha)?)
}
