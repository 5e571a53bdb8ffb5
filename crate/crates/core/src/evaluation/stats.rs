//! Aggregation of similarity and CCR ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::gamma::ln_gamma;

use super::listening::{ProbeKind, RatingRecord, SimilarityCategory, TestKind, TestManifest};
use crate::corpus::Style;
use crate::error::{Error, Result};

/// P(|T| > t) for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (t * t / df).ln_1p()).exp()
}

/// The `p`-quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0 && df > 0.0, "t_quantile needs p in (0, 1) and df > 0");
    if p == 0.5 {
        return 0.0;
    }
    let tail = 2.0 * p.min(1.0 - p);
    let x = inv_beta_reg(df / 2.0, 0.5, tail);
    let mut t = (df * (1.0 - x) / x).sqrt();
    // polish: solve t_two_sided_p(t) = tail
    for _ in 0..50 {
        let f = t_two_sided_p(t, df) - tail;
        let step = f / (2.0 * t_pdf(t, df));
        t += step;
        if step.abs() <= 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    if p < 0.5 {
        -t
    } else {
        t
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityObservation {
    pub system: String,
    pub reference: Style,
    pub category: SimilarityCategory,
}

/// Ratings of similarity system pairs, resolved against the manifest.
/// Probe pairs and out-of-range values are ignored.
pub fn similarity_observations(manifest: &TestManifest, ratings: &[RatingRecord]) -> Vec<SimilarityObservation> {
    let pairs = manifest.pair_index();
    ratings
        .iter()
        .filter_map(|r| {
            let p = pairs.get(r.pair_id.as_str())?;
            if p.test_kind != TestKind::Similarity || p.probe_kind != ProbeKind::System {
                return None;
            }
            Some(SimilarityObservation {
                system: p.system.clone()?,
                reference: p.reference_style,
                category: SimilarityCategory::from_code(r.value)?,
            })
        })
        .collect()
}

/// Every (system, reference) combination the manifest asks about.
pub fn similarity_cells(manifest: &TestManifest) -> Vec<(String, Style)> {
    let mut cells: Vec<(String, Style)> = manifest
        .pairs
        .iter()
        .filter(|p| p.test_kind == TestKind::Similarity && p.probe_kind == ProbeKind::System)
        .filter_map(|p| Some((p.system.clone()?, p.reference_style)))
        .collect();
    cells.sort();
    cells.dedup();
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAggregate {
    pub system: String,
    pub reference: Style,
    pub n: usize,
    /// Indexed by category code.
    pub counts: [usize; 4],
    pub percentages: [f64; 4],
}

impl SimilarityAggregate {
    pub fn percentage(&self, c: SimilarityCategory) -> f64 {
        self.percentages[c.code() as usize]
    }

    pub fn same_percentage(&self) -> f64 {
        SimilarityCategory::ALL.iter().filter(|c| c.is_same()).map(|&c| self.percentage(c)).sum()
    }
}

pub fn similarity_percentages(counts: [usize; 4]) -> Option<[f64; 4]> {
    let n: usize = counts.iter().sum();
    (n > 0).then(|| counts.map(|c| 100.0 * c as f64 / n as f64))
}

/// Category percentages per (system, reference) cell, in `cells` order.
pub fn aggregate_similarity(
    observations: &[SimilarityObservation],
    cells: &[(String, Style)],
) -> Result<Vec<SimilarityAggregate>> {
    let mut counts: BTreeMap<(&str, Style), [usize; 4]> = BTreeMap::new();
    for o in observations {
        counts.entry((o.system.as_str(), o.reference)).or_default()[o.category.code() as usize] += 1;
    }
    cells
        .iter()
        .map(|(system, reference)| {
            let c = counts.get(&(system.as_str(), *reference)).copied().unwrap_or_default();
            let percentages =
                similarity_percentages(c).ok_or_else(|| Error::NoRatings(format!("{system} (vs {reference} reference)")))?;
            Ok(SimilarityAggregate { system: system.clone(), reference: *reference, n: c.iter().sum(), counts: c, percentages })
        })
        .collect()
}

/// A CCR judgment: positive scores favour `second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcrObservation {
    pub first: String,
    pub second: String,
    pub score: i32,
}

pub fn ccr_observations(manifest: &TestManifest, ratings: &[RatingRecord]) -> Vec<CcrObservation> {
    let pairs = manifest.pair_index();
    ratings
        .iter()
        .filter_map(|r| {
            let p = pairs.get(r.pair_id.as_str())?;
            (p.test_kind == TestKind::Ccr && p.probe_kind == ProbeKind::System && TestKind::Ccr.value_range().contains(&r.value))
                .then(|| CcrObservation { first: p.first_label.clone(), second: p.second_label.clone(), score: r.value })
        })
        .collect()
}

/// Every rating of pair (A, B) with score s counts +s for B and -s for A.
pub fn pool_ccr(observations: &[CcrObservation]) -> BTreeMap<String, Vec<f64>> {
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for o in observations {
        pooled.entry(o.second.clone()).or_default().push(o.score as f64);
        pooled.entry(o.first.clone()).or_default().push(-o.score as f64);
    }
    pooled
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    #[default]
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcrConfig {
    pub confidence: f64,
    pub correction: Correction,
}

impl Default for CcrConfig {
    fn default() -> Self {
        CcrConfig { confidence: 0.95, correction: Correction::Bonferroni }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrSystemScore {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub t_critical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// All pooled scores are equal, so the interval has zero width.
    pub degenerate: bool,
}

/// Welch test of `higher` against `lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrComparison {
    pub higher: String,
    pub lower: String,
    pub difference: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcrAggregate {
    pub config: CcrConfig,
    /// Per-interval level after correction.
    pub interval_confidence: f64,
    /// Ordered by mean, highest first.
    pub scores: Vec<CcrSystemScore>,
    pub comparisons: Vec<CcrComparison>,
}

impl CcrAggregate {
    pub fn order(&self) -> Vec<&str> {
        self.scores.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn score(&self, label: &str) -> Option<&CcrSystemScore> {
        self.scores.iter().find(|s| s.label == label)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&CcrComparison> {
        self.comparisons.iter().find(|c| (c.higher == a && c.lower == b) || (c.higher == b && c.lower == a))
    }
}

fn welch(a: &CcrSystemScore, b: &CcrSystemScore) -> (f64, f64, f64) {
    let (va, vb) = (a.sd * a.sd / a.n as f64, b.sd * b.sd / b.n as f64);
    let diff = a.mean - b.mean;
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return (if diff == 0.0 { 0.0 } else { f64::INFINITY }, (a.n + b.n - 2) as f64, p);
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n as f64 - 1.0) + vb * vb / (b.n as f64 - 1.0));
    (t, df, t_two_sided_p(t, df))
}

/// Pools ratings per system with sign reordering, then reports per-system
/// means with two-sided t intervals and pairwise Welch tests. With
/// Bonferroni correction the interval level is 1 - (1 - confidence) / k for
/// k systems and p-values are multiplied by the number of pairs.
pub fn aggregate_ccr(observations: &[CcrObservation], config: &CcrConfig) -> Result<CcrAggregate> {
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(Error::Config("confidence must be in (0, 1)".into()));
    }
    let pooled = pool_ccr(observations);
    if pooled.is_empty() {
        return Err(Error::Empty("no CCR ratings"));
    }
    let k = pooled.len();
    let alpha = 1.0 - config.confidence;
    let (alpha_ci, n_pairs) = match config.correction {
        Correction::None => (alpha, 1.0),
        Correction::Bonferroni => (alpha / k as f64, (k * (k - 1) / 2).max(1) as f64),
    };
    let mut scores = pooled
        .into_iter()
        .map(|(label, xs)| {
            if xs.len() < 2 {
                return Err(Error::Insufficient(format!("system `{label}` has {} CCR rating(s), at least 2 needed", xs.len())));
            }
            let (mean, sd) = mean_sd(&xs);
            let t_critical = t_quantile(1.0 - alpha_ci / 2.0, xs.len() as f64 - 1.0);
            let half = t_critical * sd / (xs.len() as f64).sqrt();
            Ok(CcrSystemScore {
                label,
                n: xs.len(),
                mean,
                sd,
                t_critical,
                ci_low: mean - half,
                ci_high: mean + half,
                degenerate: sd == 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.label.cmp(&b.label)));
    let mut comparisons = Vec::new();
    for (i, a) in scores.iter().enumerate() {
        for b in &scores[i + 1..] {
            let (t, df, p) = welch(a, b);
            let p_adjusted = (p * n_pairs).min(1.0);
            comparisons.push(CcrComparison {
                higher: a.label.clone(),
                lower: b.label.clone(),
                difference: a.mean - b.mean,
                t,
                df,
                p,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }
    Ok(CcrAggregate { config: *config, interval_confidence: 1.0 - alpha_ci, scores, comparisons })
}
