//! Ranking Consistency Score.
//!
//! `K_r` is the top `k` of the simulator log by `g_score`, `C_r` the top `c`
//! of the service log by `g'_score`, both with ascending-id tie breaks. The
//! two logs are hash-joined on `(request_id, item_id)`, the in-process
//! equivalent of a `LEFT JOIN` of the ideal win set onto the competitive set.
//!
//! * macro: mean over requests of `|K_r ∩ C_r| / |K_r|`
//! * micro: `sum |K_r ∩ C_r| / sum |K_r|` (every row weighted `pv = 1`)
//!
//! The two agree whenever every request has the same `|K_r|`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cascade::{ServiceRecord, SimulatorRecord};
use crate::domain::{sort_by_score, ItemId, RequestId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcsMode {
    #[default]
    Macro,
    Micro,
}

impl RcsMode {
    pub fn name(self) -> &'static str {
        match self {
            RcsMode::Macro => "macro",
            RcsMode::Micro => "micro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestCoverage {
    pub request_id: RequestId,
    /// `|K_r ∩ C_r|`
    pub hits: usize,
    /// `|K_r|`
    pub ideal: usize,
}

impl RequestCoverage {
    pub fn ratio(&self) -> f64 {
        self.hits as f64 / self.ideal as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcsReport {
    pub k: usize,
    pub c: usize,
    pub rcs_macro: f64,
    pub rcs_micro: f64,
    pub per_request: Vec<RequestCoverage>,
}

impl RcsReport {
    pub fn value(&self, mode: RcsMode) -> f64 {
        match mode {
            RcsMode::Macro => self.rcs_macro,
            RcsMode::Micro => self.rcs_micro,
        }
    }

    pub fn requests(&self) -> usize {
        self.per_request.len()
    }

    /// Reduce per-request coverages in request-id order.
    pub fn from_coverage(k: usize, c: usize, mut per_request: Vec<RequestCoverage>) -> Result<Self> {
        if per_request.is_empty() {
            return Err(Error::data("RCS over an empty request set"));
        }
        per_request.sort_by_key(|r| r.request_id);
        if let Some(bad) = per_request.iter().find(|r| r.ideal == 0) {
            return Err(Error::data(format!(
                "request {} has an empty ideal win set",
                bad.request_id
            )));
        }
        let n = per_request.len() as f64;
        let rcs_macro = per_request.iter().map(RequestCoverage::ratio).sum::<f64>() / n;
        let hits: usize = per_request.iter().map(|r| r.hits).sum();
        let ideal: usize = per_request.iter().map(|r| r.ideal).sum();
        Ok(RcsReport {
            k,
            c,
            rcs_macro,
            rcs_micro: hits as f64 / ideal as f64,
            per_request,
        })
    }
}

type Ranked = BTreeMap<RequestId, Vec<(f64, ItemId)>>;

fn group<R>(
    rows: &[R],
    key: impl Fn(&R) -> (RequestId, ItemId),
    score: impl Fn(&R) -> Result<f64>,
) -> Result<Ranked> {
    let mut out: Ranked = BTreeMap::new();
    for row in rows {
        let (req, item) = key(row);
        let s = score(row)?;
        if !s.is_finite() {
            return Err(Error::data(format!(
                "request {req} item {item}: non-finite score {s}"
            )));
        }
        out.entry(req).or_default().push((s, item));
    }
    for entries in out.values_mut() {
        sort_by_score(entries);
    }
    Ok(out)
}

fn check_alignment(service: &Ranked, sim: &Ranked) -> Result<()> {
    let only_service: Vec<RequestId> = service.keys().filter(|r| !sim.contains_key(r)).copied().collect();
    let only_sim: Vec<RequestId> = sim.keys().filter(|r| !service.contains_key(r)).copied().collect();
    if only_service.is_empty() && only_sim.is_empty() {
        return Ok(());
    }
    let sample = |ids: &[RequestId]| {
        ids.iter().take(5).map(ToString::to_string).collect::<Vec<_>>().join(",")
    };
    Err(Error::data(format!(
        "misaligned logs: {} request(s) only in the service log [{}], {} only in the simulator log [{}]",
        only_service.len(),
        sample(&only_service),
        only_sim.len(),
        sample(&only_sim)
    )))
}

fn coverage(service: &Ranked, sim: &Ranked, k: usize, c: usize) -> Result<RcsReport> {
    if k == 0 {
        return Err(Error::data("k must be at least 1 (empty ideal win set)"));
    }
    if k > c {
        return Err(Error::config("evaluation.k", format!("k ({k}) exceeds c ({c})")));
    }
    check_alignment(service, sim)?;
    let per_request = sim
        .iter()
        .map(|(&request_id, ranked)| {
            let competitive: HashSet<ItemId> = service[&request_id].iter().take(c).map(|e| e.1).collect();
            let ideal: Vec<ItemId> = ranked.iter().take(k).map(|e| e.1).collect();
            RequestCoverage {
                request_id,
                hits: ideal.iter().filter(|id| competitive.contains(id)).count(),
                ideal: ideal.len(),
            }
        })
        .collect();
    RcsReport::from_coverage(k, c, per_request)
}

/// RCS from the two logs under the fused scores.
pub fn rcs(service: &[ServiceRecord], sim: &[SimulatorRecord], k: usize, c: usize) -> Result<RcsReport> {
    let s = group(service, |r| (r.request_id, r.item_id), |r| Ok(r.g_score))?;
    let m = group(sim, |r| (r.request_id, r.item_id), |r| Ok(r.g_score))?;
    coverage(&s, &m, k, c)
}

/// RCS with the fusion replaced by the identity on one objective.
pub fn single_objective_rcs(
    service: &[ServiceRecord],
    sim: &[SimulatorRecord],
    objective: &str,
    k: usize,
    c: usize,
) -> Result<RcsReport> {
    let lookup = |scores: &crate::domain::ObjectiveScores| {
        scores
            .get(objective)
            .copied()
            .ok_or_else(|| Error::config("evaluation.objective", format!("unknown objective `{objective}`")))
    };
    let s = group(service, |r| (r.request_id, r.item_id), |r| lookup(&r.scores))?;
    let m = group(sim, |r| (r.request_id, r.item_id), |r| lookup(&r.scores))?;
    coverage(&s, &m, k, c)
}

/// Win sets implied by the logs: the top `k`, by simulator score, of each
/// request's competitive set. Returned as `(request_id, item_id)` pairs.
pub fn win_sets(
    service: &[ServiceRecord],
    sim: &[SimulatorRecord],
    k: usize,
    c: usize,
) -> Result<Vec<(RequestId, ItemId)>> {
    let s = group(service, |r| (r.request_id, r.item_id), |r| Ok(r.g_score))?;
    let m = group(sim, |r| (r.request_id, r.item_id), |r| Ok(r.g_score))?;
    check_alignment(&s, &m)?;
    let mut out = Vec::new();
    for (&req, ranked) in &s {
        let competitive: HashSet<ItemId> = ranked.iter().take(c).map(|e| e.1).collect();
        out.extend(
            m[&req]
                .iter()
                .filter(|e| competitive.contains(&e.1))
                .take(k)
                .map(|e| (req, e.1)),
        );
    }
    Ok(out)
}
