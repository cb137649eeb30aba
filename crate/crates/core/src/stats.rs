//! One-sided t-tests, exact Wilcoxon signed-rank tests and their reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Significance level for every verdict.
pub const ALPHA: f64 = 0.05;

/// Largest sample the exact Wilcoxon distribution is computed for.
pub const WILCOXON_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Less,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSampleT,
    PairedT,
    Wilcoxon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignCounts {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl SignCounts {
    pub fn of(values: &[f64]) -> Self {
        let mut s = Self::default();
        for &v in values {
            match v.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => s.positive += 1,
                Some(std::cmp::Ordering::Less) => s.negative += 1,
                _ => s.zero += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub hypothesis: String,
    pub test: TestKind,
    pub direction: Direction,
    pub n: usize,
    /// t, or W⁺ (sum of positive ranks) for Wilcoxon.
    pub statistic: f64,
    pub df: Option<f64>,
    /// One-sided p-value in `direction`.
    pub p_value: f64,
    /// Cohen's d (d_z for paired differences); absent for Wilcoxon.
    pub effect_size: Option<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Two-sided 95% Student interval for the mean.
    pub ci95: [f64; 2],
    pub signs: SignCounts,
    pub confirmed: bool,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom")
}

/// Student t CDF with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    student(df).cdf(t)
}

fn ci95(mean: f64, sd: f64, n: usize) -> [f64; 2] {
    if n < 2 {
        return [mean, mean];
    }
    let q = student((n - 1) as f64).inverse_cdf(0.975);
    let half = q * sd / (n as f64).sqrt();
    [mean - half, mean + half]
}

fn check_sample(hypothesis: &str, values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Invalid(format!("{hypothesis}: a t-test needs at least two values")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{hypothesis}: non-finite value")));
    }
    Ok(())
}

fn t_report(hypothesis: &str, test: TestKind, values: &[f64], direction: Direction) -> Result<TestReport> {
    check_sample(hypothesis, values)?;
    let n = values.len();
    let (mean, sd) = mean_sd(values);
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::ZeroVariance(hypothesis.to_string()));
    }
    let df = (n - 1) as f64;
    let t = mean / (sd / (n as f64).sqrt());
    let p_value = match direction {
        Direction::Less => student_t_cdf(t, df),
        Direction::Greater => student_t_cdf(-t, df),
    };
    Ok(TestReport {
        hypothesis: hypothesis.to_string(),
        test,
        direction,
        n,
        statistic: t,
        df: Some(df),
        p_value,
        effect_size: Some(mean / sd),
        mean,
        sd,
        ci95: ci95(mean, sd, n),
        signs: SignCounts::of(values),
        confirmed: p_value < ALPHA,
    })
}

/// One-sided one-sample t-test of the mean against zero.
pub fn t_test_one_sample(hypothesis: &str, values: &[f64], direction: Direction) -> Result<TestReport> {
    t_report(hypothesis, TestKind::OneSampleT, values, direction)
}

/// One-sided paired t-test on `a − b`.
pub fn t_test_paired(hypothesis: &str, a: &[f64], b: &[f64], direction: Direction) -> Result<TestReport> {
    t_report(hypothesis, TestKind::PairedT, &paired_differences(hypothesis, a, b)?, direction)
}

pub fn paired_differences(hypothesis: &str, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("{hypothesis}: paired samples of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Exact one-sided Wilcoxon signed-rank test; zero values are dropped first.
///
/// The null distribution of W⁺ is counted over all 2ⁿ sign assignments using
/// doubled mid-ranks, so ties among |values| are handled exactly.
pub fn wilcoxon_signed_rank(hypothesis: &str, values: &[f64], direction: Direction) -> Result<TestReport> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{hypothesis}: non-finite value")));
    }
    let nz: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Err(Error::ZeroVariance(format!("{hypothesis}: all differences are zero")));
    }
    if n > WILCOXON_MAX_N {
        return Err(Error::Invalid(format!("{hypothesis}: exact Wilcoxon limited to n ≤ {WILCOXON_MAX_N}, got {n}")));
    }
    let ranks2 = doubled_abs_ranks(&nz);
    let w2: usize = nz.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, &r)| r).sum();
    let total2: usize = ranks2.iter().sum();
    let mut counts = vec![0u64; total2 + 1];
    counts[0] = 1;
    for &r in &ranks2 {
        for s in (r..=total2).rev() {
            counts[s] += counts[s - r];
        }
    }
    let tail: u64 = match direction {
        Direction::Less => counts[..=w2].iter().sum(),
        Direction::Greater => counts[w2..].iter().sum(),
    };
    let p_value = tail as f64 / (1u64 << n) as f64;
    let (mean, sd) = if n >= 2 { mean_sd(&nz) } else { (nz[0], 0.0) };
    Ok(TestReport {
        hypothesis: hypothesis.to_string(),
        test: TestKind::Wilcoxon,
        direction,
        n,
        statistic: w2 as f64 / 2.0,
        df: None,
        p_value,
        effect_size: None,
        mean,
        sd,
        ci95: ci95(mean, sd, n),
        signs: SignCounts::of(values),
        confirmed: p_value < ALPHA,
    })
}

/// Twice the mid-rank of each |value| among all |values|.
fn doubled_abs_ranks(values: &[f64]) -> Vec<usize> {
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut r = vec![0; abs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        idx[i..=j].iter().for_each(|&k| r[k] = i + j + 2);
        i = j + 1;
    }
    r
}
