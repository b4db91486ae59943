use serde::Serialize;

use super::rcs::{rcs, RcsMode};
use crate::cascade::{run_stream, substitute_with_rank, Pipeline};
use crate::domain::Request;
use crate::error::{Error, Result};
use crate::world::World;

/// Label of the row that swaps every pre-ranking slot at once.
pub const ALL_SLOTS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisRow {
    pub slot: String,
    pub prerank_rule: String,
    pub rcs_before: f64,
    pub rcs_after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisTable {
    pub k: usize,
    pub c: usize,
    pub mode: RcsMode,
    pub rows: Vec<DiagnosisRow>,
}

fn pipeline_rcs(p: &Pipeline, world: &World, requests: &[Request], mode: RcsMode) -> Result<f64> {
    let logs = run_stream(p, world, requests)?;
    let report = rcs(&logs.service_records(), &logs.simulator_records(), p.sizes.k, p.sizes.c)?;
    Ok(report.value(mode))
}

/// Swap each pre-ranking slot for its ranking counterpart, one at a time and
/// then all together, and record how RCS moves. Rows follow the fusion
/// rule's declaration order.
pub fn diagnose(
    base: &Pipeline,
    world: &World,
    requests: &[Request],
    mode: RcsMode,
) -> Result<DiagnosisTable> {
    let slots = base.slots().to_vec();
    if slots.len() < 2 {
        return Err(Error::config(
            "fusion.objectives",
            "diagnosis needs at least two substitutable slots",
        ));
    }
    let before = pipeline_rcs(base, world, requests, mode)?;
    let mut rows = Vec::with_capacity(slots.len() + 1);
    let mut all = base.clone();
    for slot in &slots {
        let swapped = substitute_with_rank(base, slot)?;
        all = substitute_with_rank(&all, slot)?;
        let after = pipeline_rcs(&swapped, world, requests, mode)?;
        rows.push(DiagnosisRow {
            slot: slot.clone(),
            prerank_rule: swapped.describe_prerank(),
            rcs_before: before,
            rcs_after: after,
            delta: after - before,
        });
    }
    let after = pipeline_rcs(&all, world, requests, mode)?;
    rows.push(DiagnosisRow {
        slot: ALL_SLOTS.to_string(),
        prerank_rule: all.describe_prerank(),
        rcs_before: before,
        rcs_after: after,
        delta: after - before,
    });
    Ok(DiagnosisTable {
        k: base.sizes.k,
        c: base.sizes.c,
        mode,
        rows,
    })
}
