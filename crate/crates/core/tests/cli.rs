use std::path::Path;
use std::process::{Command, Output};

fn hregen(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hregen")).args(args).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap()
}

const POISSON: &str = "\
[model]
setup = O
kernel = zero
activation = linear 2 0
recovery = none
gamma = log 1
r = zero
[run]
horizon = 500
";

#[test]
fn poisson_simulation_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = hregen(dir.path(), POISSON, &["simulate", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/events.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t"));
    let n = lines.count() as f64;
    // Poisson(1000): four standard deviations
    assert!((n - 1000.0).abs() < 4.0 * 1000f64.sqrt(), "{n} events");
}

#[test]
fn setup_rate_mismatch_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hregen(dir.path(), "[model]\nsetup = O\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("RateSpec.setup"));
    let out = hregen(dir.path(), "[model]\nkernel = exp -1\n[run]\nsystems = 0\n", &["renewal"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.kernel") && err.contains("run.systems"), "{err}");
}

#[test]
fn fixed_seed_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = "[run]\nsystems = 200\nblocks = 50\nthreads = 1\nhorizon = 200\n";
    for cmd in ["simulate", "renewal"] {
        assert_eq!(hregen(a.path(), cfg, &[cmd, "--seed", "9"]).status.code(), Some(0));
    }
    let cfg_many = cfg.replace("threads = 1", "threads = 3");
    for cmd in ["simulate", "renewal"] {
        assert_eq!(hregen(b.path(), &cfg_many, &[cmd, "--seed", "9"]).status.code(), Some(0));
    }
    for f in ["events.csv", "cycles.csv", "blocks.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn empty_band_cycles_are_single() {
    let dir = tempfile::tempdir().unwrap();
    let out = hregen(dir.path(), &format!("{POISSON}systems = 20\nblocks = 0\n"), &["renewal"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/cycles.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,cycle,tau_gap,alpha_gap,eta,rho"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!((f[2], f[4]), ("inf", "0"), "{r}");
    }
}

#[test]
fn verify_single_suite_and_broken_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = hregen(dir.path(), "", &["verify", "--only", "borel"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/reports.csv")).unwrap();
    assert!(csv.starts_with("test,statistic,p_value,n,pass\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("borel_")), "{csv}");

    let out = hregen(dir.path(), "", &["verify", "--only", "tau", "--debug-halve-band"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed: FAIL     tau_infinite_frequency"));

    let out = hregen(dir.path(), "", &["verify", "--only", "nothing"]);
    assert_eq!(out.status.code(), Some(2));
}
