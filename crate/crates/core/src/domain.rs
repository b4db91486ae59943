//! Shared domain types, the multiplicative fusion rule and deterministic
//! top-m selection.
//!
//! Every stage of the cascade reduces to the same two steps: fuse the
//! per-objective scores of each item into one number, then keep the `m`
//! items with the largest fused score. Ties on the fused score are broken by
//! ascending `item_id` so that repeated runs select identical sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ItemId = u64;
pub type RequestId = u64;

/// An ad in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: ItemId,
    pub features: Vec<f64>,
    pub init_bid: f64,
}

impl Item {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.init_bid > 0.0 && self.init_bid.is_finite()) {
            return Err(Error::data(format!(
                "item {}: init_bid must be positive and finite, got {}",
                self.item_id, self.init_bid
            )));
        }
        if self.features.len() != dim {
            return Err(Error::data(format!(
                "item {}: expected {dim} features, got {}",
                self.item_id,
                self.features.len()
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("item {}: non-finite feature", self.item_id)));
        }
        Ok(())
    }
}

/// A user request together with the pre-ranking set handed over by retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: RequestId,
    pub user_features: Vec<f64>,
    pub preranking_set: Vec<ItemId>,
}

impl Request {
    pub fn validate(&self) -> Result<()> {
        if self.preranking_set.is_empty() {
            return Err(Error::data(format!(
                "request {}: empty pre-ranking set",
                self.request_id
            )));
        }
        let mut seen = self.preranking_set.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data(format!(
                "request {}: duplicate item ids in pre-ranking set",
                self.request_id
            )));
        }
        Ok(())
    }
}

/// Per-objective scores of one item, keyed by objective name.
pub type ObjectiveScores = BTreeMap<String, f64>;

/// An item after scoring and sorting within one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub item_id: ItemId,
    pub scores: ObjectiveScores,
    pub fused: f64,
    /// 1-based position after sorting by `fused`.
    pub rank_pos: usize,
}

/// Funnel sizes: `n` items enter pre-ranking, `c` reach ranking, `k` win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSizes {
    pub n: usize,
    pub c: usize,
    pub k: usize,
}

impl StageSizes {
    pub fn new(n: usize, c: usize, k: usize) -> Result<Self> {
        let sizes = StageSizes { n, c, k };
        sizes.validate("sizes")?;
        Ok(sizes)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config(format!("{path}.k"), "must be at least 1"));
        }
        if self.k > self.c {
            return Err(Error::config(
                format!("{path}.k"),
                format!("k ({}) exceeds {path}.c ({})", self.k, self.c),
            ));
        }
        if self.c > self.n {
            return Err(Error::config(
                format!("{path}.c"),
                format!("c ({}) exceeds {path}.n ({})", self.c, self.n),
            ));
        }
        Ok(())
    }
}

/// Product of a declared list of objectives, e.g. eCPM = bid * pCTR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionRule {
    objectives: Vec<String>,
}

impl FusionRule {
    pub fn product<S: Into<String>>(objectives: impl IntoIterator<Item = S>) -> Result<Self> {
        let objectives: Vec<String> = objectives.into_iter().map(Into::into).collect();
        if objectives.is_empty() {
            return Err(Error::config("fusion.objectives", "must name at least one objective"));
        }
        let mut sorted = objectives.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("fusion.objectives", "duplicate objective name"));
        }
        Ok(FusionRule { objectives })
    }

    /// Identity on a single objective, used by single-objective RCS.
    pub fn identity(objective: impl Into<String>) -> Self {
        FusionRule {
            objectives: vec![objective.into()],
        }
    }

    /// Objective names in declaration order.
    pub fn objectives(&self) -> &[String] {
        &self.objectives
    }
}

/// Fuse the named objectives of `scores` by multiplication.
pub fn fuse(scores: &ObjectiveScores, rule: &FusionRule) -> Result<f64> {
    let mut fused = 1.0;
    for name in &rule.objectives {
        let value = *scores.get(name).ok_or_else(|| {
            Error::config("fusion.objectives", format!("objective `{name}` has no score"))
        })?;
        if !value.is_finite() {
            return Err(Error::data(format!("objective `{name}` has non-finite score {value}")));
        }
        fused *= value;
    }
    Ok(fused)
}

/// Descending by score, ties by ascending id. Scores must be non-NaN.
pub fn score_order(a: (f64, ItemId), b: (f64, ItemId)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .expect("scores are finite")
        .then_with(|| a.1.cmp(&b.1))
}

/// Sort `(score, id)` pairs into ranking order.
pub fn sort_by_score(entries: &mut [(f64, ItemId)]) {
    entries.sort_by(|a, b| score_order(*a, *b));
}

/// Ids of the `m` highest fused scores, best first.
pub fn rank_top(scored: &[ScoredItem], m: usize) -> Vec<ItemId> {
    let mut entries: Vec<(f64, ItemId)> = scored.iter().map(|s| (s.fused, s.item_id)).collect();
    sort_by_score(&mut entries);
    entries.into_iter().take(m).map(|(_, id)| id).collect()
}

/// Build [`ScoredItem`]s for one stage: fuse, sort and assign `rank_pos`.
pub fn score_and_rank(
    items: Vec<(ItemId, ObjectiveScores)>,
    rule: &FusionRule,
) -> Result<Vec<ScoredItem>> {
    let mut scored = items
        .into_iter()
        .map(|(item_id, scores)| {
            let fused = fuse(&scores, rule)?;
            Ok(ScoredItem {
                item_id,
                scores,
                fused,
                rank_pos: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| score_order((a.fused, a.item_id), (b.fused, b.item_id)));
    for (pos, s) in scored.iter_mut().enumerate() {
        s.rank_pos = pos + 1;
    }
    Ok(scored)
}
