//! Paired and two-sample significance tests and speaker-level CV folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus_io::Gender;

/// Largest sample size for which the Wilcoxon p-value is exact by default.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WilcoxonMethod {
    /// Exact for `n <= 25`, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences actually ranked.
    pub n: usize,
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank_with(pairs, WilcoxonMethod::Auto)
}

/// Two-sided Wilcoxon signed-rank test on `a_i - b_i`, zeros discarded.
///
/// The exact p-value is the fraction of the `2^n` equally likely sign
/// assignments whose `min(W+, W-)` is at most the observed one, counted by
/// dynamic programming over doubled (integer) midranks. The approximation is
/// normal with tie-corrected variance and a 0.5 continuity correction.
pub fn wilcoxon_signed_rank_with(
    pairs: &[(f64, f64)],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::InsufficientData("no pairs".into()));
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::DegenerateTest(
            "all differences are zero".into(),
        ));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let exact = match method {
        WilcoxonMethod::Auto => n <= WILCOXON_EXACT_MAX_N,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p = if exact {
        // doubled ranks are integers even with half-integer midranks
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let doubled_total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; doubled_total + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let observed = doubled
            .iter()
            .zip(&diffs)
            .filter(|(_, d)| **d > 0.0)
            .map(|(r, _)| *r)
            .sum::<usize>();
        let observed_min = observed.min(doubled_total - observed);
        let extreme: f64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s).min(doubled_total - *s) <= observed_min)
            .map(|(_, c)| c)
            .sum();
        extreme / 2f64.powi(n as i32)
    } else {
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
            let t = j as f64;
            tie_term += t * t * t - t;
            i += j;
        }
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return Err(StatsError::DegenerateTest("zero variance".into()));
        }
        let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        n,
        p: p.min(1.0),
        exact,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "samples of size {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    if qa + qb == 0.0 {
        return Err(StatsError::DegenerateTest(
            "both samples have zero variance".into(),
        ));
    }
    let t = (ma - mb) / (qa + qb).sqrt();
    let df =
        (qa + qb).powi(2) / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist =
        StudentsT::new(0.0, 1.0, df).map_err(|e| StatsError::DegenerateTest(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTestResult { t, df, p })
}

/// `**` below 0.001, `*` below 0.05, empty otherwise.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stdev: f64,
}

/// Mean and sample (n-1) standard deviation.
pub fn summarize_cv(values: &[f64]) -> Result<Summary, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "{} values",
            values.len()
        )));
    }
    let (mean, var) = mean_var(values);
    Ok(Summary {
        mean,
        stdev: var.sqrt(),
    })
}

/// Speaker-disjoint folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSpec {
    pub k: usize,
    pub folds: Vec<BTreeSet<String>>,
    pub gender: BTreeMap<String, Gender>,
}

impl FoldSpec {
    pub fn fold_of(&self, speaker: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(speaker))
    }

    /// Largest `|#F in fold - fold_size * global F fraction|` (same for M).
    pub fn max_gender_deviation(&self) -> f64 {
        let total = self.gender.len() as f64;
        let mut worst: f64 = 0.0;
        for g in [Gender::F, Gender::M] {
            let global = self.gender.values().filter(|x| **x == g).count() as f64 / total;
            for fold in &self.folds {
                let count = fold.iter().filter(|s| self.gender[*s] == g).count() as f64;
                worst = worst.max((count - fold.len() as f64 * global).abs());
            }
        }
        worst
    }
}

/// Shuffles each gender separately with one seeded ChaCha8 stream, then deals
/// F, M and unknown speakers round-robin, continuing the fold cursor between
/// groups so fold sizes differ by at most one.
pub fn cv_folds(
    speakers: &[(String, Gender)],
    k: usize,
    seed: u64,
) -> Result<FoldSpec, StatsError> {
    if k < 2 {
        return Err(StatsError::InvalidConfig(format!(
            "k must be >= 2, got {k}"
        )));
    }
    let gender: BTreeMap<String, Gender> = speakers.iter().cloned().collect();
    if gender.len() != speakers.len() {
        return Err(StatsError::InvalidConfig("duplicate speaker id".into()));
    }
    if speakers.len() < k {
        return Err(StatsError::InvalidConfig(format!(
            "{} speakers for {k} folds",
            speakers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![BTreeSet::new(); k];
    let mut cursor = 0;
    for g in [Gender::F, Gender::M, Gender::Unknown] {
        let mut group: Vec<&String> = gender
            .iter()
            .filter(|(_, x)| **x == g)
            .map(|(s, _)| s)
            .collect();
        group.shuffle(&mut rng);
        for s in group {
            folds[cursor % k].insert(s.clone());
            cursor += 1;
        }
    }
    Ok(FoldSpec { k, folds, gender })
}
