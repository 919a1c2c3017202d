//! Rank-based tests: Kruskal-Wallis, Dunn's post-hoc comparisons and the
//! Wilcoxon signed-rank test, with the distribution tails they need.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest signed-rank sample evaluated by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} groups, got {got}")]
    TooFewGroups { need: usize, got: usize },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("all differences are zero; the test carries no information")]
    NoInformation,
    #[error("non-finite value in input")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KruskalWallis,
    Dunn,
    WilcoxonExact,
    WilcoxonNormal,
}

impl Method {
    pub fn short(self) -> &'static str {
        match self {
            Method::KruskalWallis => "KW",
            Method::Dunn => "DT",
            Method::WilcoxonExact | Method::WilcoxonNormal => "WSR",
        }
    }
}

/// Statistic (χ², Z or W), degrees of freedom where defined, and p-value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
}

impl std::fmt::Display for TestResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.method {
            Method::KruskalWallis => "chi2",
            Method::Dunn => "Z",
            _ => "W",
        };
        write!(f, "{}; {}={:.4}", self.method.short(), name, self.statistic)?;
        if let Some(df) = self.df {
            write!(f, ", df={df}")?;
        }
        write!(f, ", p={:.4}", self.p_value)
    }
}

/// Pooled observations with mid-ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedData {
    pub values: Vec<f64>,
    /// Group index of each value.
    pub labels: Vec<usize>,
    pub ranks: Vec<f64>,
    /// Size of every run of tied values (including runs of 1).
    pub tie_sizes: Vec<usize>,
}

impl RankedData {
    /// `Σ (t³ − t)` over tie runs.
    pub fn tie_sum(&self) -> f64 {
        self.tie_sizes.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rank sum of one group.
    pub fn rank_sum(&self, group: usize) -> f64 {
        self.labels
            .iter()
            .zip(&self.ranks)
            .filter(|(l, _)| **l == group)
            .map(|(_, r)| r)
            .sum()
    }
}

fn rank_labelled(values: Vec<f64>, labels: Vec<usize>) -> RankedData {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let mid = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = mid;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    RankedData { values, labels, ranks, tie_sizes }
}

/// Mid-ranks of a single sample.
pub fn rank_with_ties(values: &[f64]) -> RankedData {
    rank_labelled(values.to_vec(), vec![0; values.len()])
}

/// Mid-ranks of several samples pooled together.
pub fn rank_groups<G: AsRef<[f64]>>(groups: &[G]) -> RankedData {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        values.extend_from_slice(group.as_ref());
        labels.extend(std::iter::repeat_n(g, group.as_ref().len()));
    }
    rank_labelled(values, labels)
}

fn check_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<(), StatsError> {
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { need: 2, got: groups.len() });
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n < 3 {
        return Err(StatsError::TooFewObservations { need: 3, got: n });
    }
    Ok(())
}

/// Kruskal-Wallis H with tie correction; p from the χ² tail with `k − 1` df.
///
/// When every value is identical the statistic is 0 and p is 1.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<TestResult, StatsError> {
    check_groups(groups)?;
    let ranked = rank_groups(groups);
    let n = ranked.len() as f64;
    let df = (groups.len() - 1) as f64;
    let correction = 1.0 - ranked.tie_sum() / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(TestResult { method: Method::KruskalWallis, statistic: 0.0, df: Some(df), p_value: 1.0 });
    }
    let centre = (n + 1.0) / 2.0;
    let spread: f64 = groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let ni = group.as_ref().len() as f64;
            let mean_rank = ranked.rank_sum(g) / ni;
            ni * (mean_rank - centre).powi(2)
        })
        .sum();
    let h = 12.0 / (n * (n + 1.0)) * spread / correction;
    Ok(TestResult {
        method: Method::KruskalWallis,
        statistic: h,
        df: Some(df),
        p_value: chi_squared_sf(h, df),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    None,
    #[default]
    Bonferroni,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DunnComparison {
    pub group_a: usize,
    pub group_b: usize,
    /// `statistic` is Z = (R̄_a − R̄_b)/σ; `p_value` is adjusted.
    pub result: TestResult,
    pub p_unadjusted: f64,
    pub adjustment: Adjustment,
}

/// Dunn's pairwise comparisons on pooled mid-ranks, two-sided.
pub fn dunn_test<G: AsRef<[f64]>>(groups: &[G], adjustment: Adjustment) -> Result<Vec<DunnComparison>, StatsError> {
    check_groups(groups)?;
    let ranked = rank_groups(groups);
    let n = ranked.len() as f64;
    let k = groups.len();
    let pairs = (k * (k - 1) / 2) as f64;
    let base = n * (n + 1.0) / 12.0 - ranked.tie_sum() / (12.0 * (n - 1.0));
    let mean_ranks: Vec<f64> = (0..k)
        .map(|g| ranked.rank_sum(g) / groups[g].as_ref().len() as f64)
        .collect();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let na = groups[a].as_ref().len() as f64;
            let nb = groups[b].as_ref().len() as f64;
            let var = base * (1.0 / na + 1.0 / nb);
            let (z, p) = if var > 0.0 {
                let z = (mean_ranks[a] - mean_ranks[b]) / var.sqrt();
                (z, (2.0 * normal_sf(z.abs())).min(1.0))
            } else {
                (0.0, 1.0)
            };
            let adjusted = match adjustment {
                Adjustment::None => p,
                Adjustment::Bonferroni => (p * pairs).min(1.0),
            };
            out.push(DunnComparison {
                group_a: a,
                group_b: b,
                result: TestResult { method: Method::Dunn, statistic: z, df: None, p_value: adjusted },
                p_unadjusted: p,
                adjustment,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Drop zero differences before ranking.
    #[default]
    Wilcoxon,
    /// Rank zeros with the rest, then drop them.
    Pratt,
}

/// Wilcoxon signed-rank test on paired differences, two-sided, zeros dropped.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(differences, ZeroMethod::Wilcoxon)
}

/// Signed-rank test with an explicit zero policy.
///
/// `W = min(W⁺, W⁻)`. Up to [`WILCOXON_EXACT_MAX`] nonzero differences the
/// p-value is exact over all `2ⁿ` sign assignments; beyond that it uses the
/// tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank_with(differences: &[f64], zeros: ZeroMethod) -> Result<TestResult, StatsError> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let magnitudes: Vec<f64> = match zeros {
        ZeroMethod::Wilcoxon => differences.iter().filter(|d| **d != 0.0).map(|d| d.abs()).collect(),
        ZeroMethod::Pratt => differences.iter().map(|d| d.abs()).collect(),
    };
    let ranked = rank_with_ties(&magnitudes);
    let signed: Vec<(f64, f64)> = match zeros {
        ZeroMethod::Wilcoxon => differences.iter().filter(|d| **d != 0.0).copied().zip(ranked.ranks.iter().copied()).collect(),
        ZeroMethod::Pratt => differences
            .iter()
            .copied()
            .zip(ranked.ranks.iter().copied())
            .filter(|(d, _)| *d != 0.0)
            .collect(),
    };
    if signed.is_empty() {
        return Err(StatsError::NoInformation);
    }
    let w_plus = signed.iter().filter(|(d, _)| *d > 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let w_minus = signed.iter().filter(|(d, _)| *d < 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let w = w_plus.min(w_minus);
    let ranks: Vec<f64> = signed.iter().map(|(_, r)| *r).collect();
    let n = ranks.len();

    if n <= WILCOXON_EXACT_MAX {
        return Ok(TestResult {
            method: Method::WilcoxonExact,
            statistic: w,
            df: None,
            p_value: signed_rank_exact_p(&ranks, w),
        });
    }

    let total: f64 = ranks.iter().sum();
    let mean = total / 2.0;
    let var = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestResult {
        method: Method::WilcoxonNormal,
        statistic: w,
        df: None,
        p_value: (2.0 * normal_sf(z)).min(1.0),
    })
}

/// Two-sided exact p: share of sign assignments whose `min(W⁺, W⁻)` is at most
/// `w`. Mid-ranks are half-integers, so the distribution is tabulated over
/// doubled ranks with integer counts.
fn signed_rank_exact_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &d in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + d] += counts[s];
            }
        }
        reach += d;
    }
    let w2 = (2.0 * w).round() as usize;
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s).min(total - s) <= w2)
        .map(|(_, c)| c)
        .sum();
    hits as f64 / (1u64 << ranks.len()) as f64
}

/// Variance of the signed-rank sum with tie correction, `n(n+1)(2n+1)/24 − Σ(t³−t)/48`.
pub fn signed_rank_variance(n: usize, tie_sum: f64) -> f64 {
    let n = n as f64;
    n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_sum / 48.0
}

// ---------------------------------------------------------------------------
// Distribution tails

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..1000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper tail of the χ² distribution.
pub fn chi_squared_sf(x: f64, df: f64) -> f64 {
    regularized_gamma_q(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Complementary error function, via `erfc(x) = Q(½, x²)` for `x ≥ 0`.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        regularized_gamma_q(0.5, x * x)
    } else {
        2.0 - regularized_gamma_q(0.5, x * x)
    }
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}
