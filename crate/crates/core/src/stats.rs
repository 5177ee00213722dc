//! Correlation and false-discovery-rate machinery for the evaluation
//! experiments: Pearson r with an exact two-tailed t-test p-value, and the
//! two-level Benjamini-Hochberg procedure (within one training run over the
//! three social variables, then across runs).

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} paired observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("input vectors have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("undefined correlation: constant input")]
    ConstantInput,
    #[error("p-value {value} outside [0, 1]")]
    InvalidP { value: f64 },
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n-1) standard deviation, for describing variability across
/// independent runs.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    math::sqrt(ss / (xs.len() - 1) as f64)
}

/// Pearson correlation with a two-tailed p-value from the exact
/// t-distribution: t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom,
/// evaluated through the regularized incomplete beta function so that tail
/// probabilities far below machine-epsilon-of-1 remain accurate.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: n });
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let r = (sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0);

    let df = (n - 2) as f64;
    let one_minus_r2 = 1.0 - r * r;
    let p = if one_minus_r2 <= 0.0 {
        0.0
    } else {
        let t2 = r * r * df / one_minus_r2;
        // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
        betai(df / 2.0, 0.5, df / (df + t2))
    };
    Ok((r, p))
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = core::f64::consts::PI;
        return math::ln(pi / (math::sin(pi * x))) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * math::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * math::ln(t) - t + math::ln(acc)
}

/// Continued-fraction core of the incomplete beta function (modified
/// Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * math::ln(x)
        + b * math::ln(1.0 - x);
    let bt = math::exp(ln_bt);
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Standard single-level Benjamini-Hochberg: mark significant the tests
/// whose p-values are among the k smallest, where k is the largest rank
/// with p_(k) <= k * alpha / m. Returns per-input flags in input order.
pub fn benjamini_hochberg(pvals: &[f64], alpha: f64) -> Result<Vec<bool>, StatsError> {
    validate_pvals(pvals)?;
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].partial_cmp(&pvals[j]).unwrap());
    let mut k = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if pvals[idx] <= (rank + 1) as f64 * alpha / m as f64 {
            k = rank + 1;
        }
    }
    let mut out = alloc::vec![false; m];
    for &idx in order.iter().take(k) {
        out[idx] = true;
    }
    Ok(out)
}

/// Outcome of the within-run correction over one run's p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinRun {
    /// Per-input significance at the given alpha, in input order.
    pub significant: Vec<bool>,
    /// Smallest alpha at which at least one test would pass, i.e.
    /// min over ranks k of m * p_(k) / k. This is the run's summary value
    /// fed to the across-run correction.
    pub min_alpha: f64,
}

/// First-level correction: BH over one training run's p-values (one per
/// social variable) plus the run's minimal passing alpha.
pub fn bh_within_run(pvals: &[f64], alpha: f64) -> Result<WithinRun, StatsError> {
    let significant = benjamini_hochberg(pvals, alpha)?;
    let m = pvals.len() as f64;
    let mut sorted: Vec<f64> = pvals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_alpha = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| m * p / (i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(WithinRun {
        significant,
        min_alpha,
    })
}

/// Second-level correction across runs: treat each run's min_alpha as that
/// run's p-value and find the largest k with alpha_(k) < k * alpha / n
/// (strict). Returns k and per-run significance flags in input order.
pub fn multi_run_significance(
    min_alphas: &[f64],
    alpha: f64,
) -> Result<(usize, Vec<bool>), StatsError> {
    validate_pvals(min_alphas)?;
    let n = min_alphas.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| min_alphas[i].partial_cmp(&min_alphas[j]).unwrap());
    let mut k = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if min_alphas[idx] < (rank + 1) as f64 * alpha / n as f64 {
            k = rank + 1;
        }
    }
    let mut flags = alloc::vec![false; n];
    for &idx in order.iter().take(k) {
        flags[idx] = true;
    }
    Ok((k, flags))
}

fn validate_pvals(pvals: &[f64]) -> Result<(), StatsError> {
    for &p in pvals {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::InvalidP { value: p });
        }
    }
    Ok(())
}
