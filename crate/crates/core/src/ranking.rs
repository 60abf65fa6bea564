//! Ranked feature lists and the similarity measures used to compare them:
//! top-k overlap, extrapolated rank-biased overlap, and Kendall's tau.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearModel;

/// Genes ordered by coefficient magnitude, ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedFeatureList {
    pub source: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedFeatureList {
    /// Checks ordering, uniqueness and score sanity of a deserialized list.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, (id, score)) in self.entries.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("ranking `{}` repeats gene `{id}`", self.source)));
            }
            if !(score.is_finite() && *score >= 0.0) {
                return Err(Error::Invalid(format!(
                    "ranking `{}`: score {score} for `{id}` is not a non-negative number",
                    self.source
                )));
            }
            if i > 0 {
                let (prev_id, prev) = &self.entries[i - 1];
                if score > prev || (score == prev && id < prev_id) {
                    return Err(Error::Invalid(format!(
                        "ranking `{}` is not ordered at position {i} (`{prev_id}` before `{id}`)",
                        self.source
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

pub fn rank_features(model: &LinearModel, gene_ids: &[String], source: impl Into<String>) -> Result<RankedFeatureList> {
    if gene_ids.len() != model.theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gene ids for {} coefficients",
            gene_ids.len(),
            model.theta.len()
        )));
    }
    let mut entries: Vec<(String, f64)> = gene_ids
        .iter()
        .zip(&model.theta)
        .map(|(g, t)| (g.clone(), t.abs()))
        .collect();
    entries.sort_by(|(ga, sa), (gb, sb)| sb.total_cmp(sa).then_with(|| ga.cmp(gb)));
    let ranked = RankedFeatureList {
        source: source.into(),
        entries,
    };
    ranked.validate()?;
    Ok(ranked)
}

/// `|top_k(a) ∩ top_k(b)| / k`.
pub fn top_k_overlap(a: &RankedFeatureList, b: &RankedFeatureList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("k must be positive".into()));
    }
    if k > a.len() || k > b.len() {
        return Err(Error::Invalid(format!(
            "k = {k} exceeds list length ({} and {})",
            a.len(),
            b.len()
        )));
    }
    let head: HashSet<&str> = a.ids().take(k).collect();
    let shared = b.ids().take(k).filter(|id| head.contains(id)).count();
    Ok(shared as f64 / k as f64)
}

/// Extrapolated rank-biased overlap with persistence `p`, truncated at the
/// shorter list:
///
/// `(1 − p) Σ_{d=1..k} p^{d−1} A_d + p^k A_k`, with `A_d` the fraction of
/// shared items among the two depth-`d` prefixes.
pub fn rbo_ext(a: &RankedFeatureList, b: &RankedFeatureList, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Invalid(format!("RBO persistence must lie in (0, 1), got {p}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("RBO needs non-empty rankings".into()));
    }
    let k = a.len().min(b.len());
    let mut seen_a = HashSet::with_capacity(k);
    let mut seen_b = HashSet::with_capacity(k);
    let mut overlap = 0usize;
    let mut weight = 1.0;
    let mut sum = 0.0;
    let mut agreement = 0.0;
    let mut all_agree = true;
    for (depth, (x, y)) in a.ids().zip(b.ids()).enumerate() {
        if x == y {
            overlap += 1;
        } else {
            overlap += usize::from(seen_b.contains(x)) + usize::from(seen_a.contains(y));
        }
        seen_a.insert(x);
        seen_b.insert(y);
        agreement = overlap as f64 / (depth + 1) as f64;
        all_agree &= overlap == depth + 1;
        sum += weight * agreement;
        weight *= p;
    }
    if all_agree {
        return Ok(1.0);
    }
    // `weight` is now p^k.
    Ok(((1.0 - p) * sum + weight * agreement).clamp(0.0, 1.0))
}

/// Kendall's tau between the two rankings restricted to their common items
/// (relative order preserved): `(concordant − discordant) / (n(n−1)/2)`.
pub fn kendall_tau(a: &RankedFeatureList, b: &RankedFeatureList) -> Result<f64> {
    let in_b: HashSet<&str> = b.ids().collect();
    let common: Vec<&str> = a.ids().filter(|id| in_b.contains(id)).collect();
    let n = common.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "Kendall tau needs at least 2 shared items, got {n}"
        )));
    }
    let in_common: HashSet<&str> = common.iter().copied().collect();
    let position_in_b: HashMap<&str, usize> = b
        .ids()
        .filter(|id| in_common.contains(id))
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    // Walking `a`'s order, every inversion in b-positions is a discordant pair.
    let mut sequence: Vec<usize> = common.iter().map(|id| position_in_b[id]).collect();
    let discordant = count_inversions(&mut sequence) as f64;
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((pairs - 2.0 * discordant) / pairs)
}

/// Merge-sort inversion count; sorts `values` in place.
fn count_inversions(values: &mut [usize]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inversions = count_inversions(&mut values[..mid]) + count_inversions(&mut values[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if values[i] <= values[j] {
            merged.push(values[i]);
            i += 1;
        } else {
            merged.push(values[j]);
            inversions += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&values[i..mid]);
    merged.extend_from_slice(&values[j..n]);
    values.copy_from_slice(&merged);
    inversions
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "top10")]
    Top10,
    #[serde(rename = "top50")]
    Top50,
    #[serde(rename = "rbo")]
    RboExt,
    #[serde(rename = "tau")]
    KendallTau,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Top10, Metric::Top50, Metric::RboExt, Metric::KendallTau];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Top10 => "top10",
            Metric::Top50 => "top50",
            Metric::RboExt => "rbo",
            Metric::KendallTau => "tau",
        }
    }

    /// Closed range of attainable values.
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::KendallTau => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn evaluate(self, a: &RankedFeatureList, b: &RankedFeatureList, rbo_p: f64) -> Result<f64> {
        match self {
            Metric::Top10 => top_k_overlap(a, b, 10),
            Metric::Top50 => top_k_overlap(a, b, 50),
            Metric::RboExt => rbo_ext(a, b, rbo_p),
            Metric::KendallTau => kendall_tau(a, b),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top10" => Ok(Metric::Top10),
            "top50" => Ok(Metric::Top50),
            "rbo" => Ok(Metric::RboExt),
            "tau" => Ok(Metric::KendallTau),
            other => Err(Error::Invalid(format!(
                "unknown metric `{other}` (expected top10, top50, rbo or tau)"
            ))),
        }
    }
}

/// A list in the given order with descending dummy scores.
pub fn ranking_from_ids<S: AsRef<str>>(source: &str, ids: &[S]) -> RankedFeatureList {
    let n = ids.len();
    RankedFeatureList {
        source: source.to_string(),
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_ref().to_string(), (n - i) as f64))
            .collect(),
    }
}
