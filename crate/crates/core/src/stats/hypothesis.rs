//! Goodness-of-fit and independence tests with p-values.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Statistic with its p-value and degrees of freedom (where meaningful).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample Kolmogorov-Smirnov against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Outcome {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Outcome { statistic: d, p_value: ks_p(d, n), df: n }
}

/// Two-sample Kolmogorov-Smirnov.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Outcome {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Outcome { statistic: d, p_value: ks_p(d, n * m / (n + m)), df: n * m / (n + m) }
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df).expect("positive df").cdf(x)
}

/// Pearson goodness of fit; adjacent bins are merged until every expected
/// count is at least `min_expected`. `ddof` parameters were estimated.
pub fn chi2_gof(observed: &[u64], probs: &[f64], min_expected: f64, ddof: usize) -> Outcome {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        acc.0 += o as f64;
        acc.1 += p * n as f64;
        if acc.1 >= min_expected {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    let stat: f64 = bins.iter().map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 }).sum();
    let df = bins.len() as f64 - 1.0 - ddof as f64;
    Outcome { statistic: stat, p_value: chi2_sf(stat, df), df }
}

/// Pearson test of independence on a contingency table (empty rows and
/// columns dropped).
pub fn chi2_independence(table: &[Vec<u64>]) -> Outcome {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncol = rows.first().map_or(0, |r| r.len());
    let colsum: Vec<u64> = (0..ncol).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&j| colsum[j] > 0).collect();
    let total: u64 = colsum.iter().sum();
    let mut stat = 0.0;
    for r in &rows {
        let rs: u64 = r.iter().sum();
        for &j in &cols {
            let e = rs as f64 * colsum[j] as f64 / total as f64;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    let df = ((rows.len() as f64) - 1.0) * ((cols.len() as f64) - 1.0);
    Outcome { statistic: stat, p_value: chi2_sf(stat, df), df }
}

/// Anderson-Darling normality test with estimated mean and variance.
pub fn anderson_darling_normal(sample: &[f64]) -> Outcome {
    let n = sample.len();
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let phi = Normal::standard();
    let mut s = 0.0;
    for i in 0..n {
        let a = phi.cdf(z[i]).clamp(1e-300, 1.0);
        let b = (1.0 - phi.cdf(z[n - 1 - i])).clamp(1e-300, 1.0);
        s += (2 * i + 1) as f64 * (a.ln() + b.ln());
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    Outcome { statistic: a, p_value: p.clamp(0.0, 1.0), df: nf }
}

/// Index-of-dispersion test for a Poisson sample, two-sided.
pub fn dispersion(counts: &[u64]) -> Outcome {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let d = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / mean;
    let df = n - 1.0;
    let lower = ChiSquared::new(df).expect("positive df").cdf(d);
    Outcome { statistic: d, p_value: (2.0 * lower.min(1.0 - lower)).min(1.0), df }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
