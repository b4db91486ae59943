//! Line-oriented log formats.
//!
//! Every log is JSONL: one UTF-8 record per line, `\n` terminated, keys in a
//! fixed order. Reals are written with 17 significant digits so that parsing
//! and re-serializing a log reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::cascade::{ServiceRecord, SimulatorRecord};
use crate::domain::{Item, ItemId, ObjectiveScores, Request, RequestId};
use crate::error::{Error, Result};
use crate::world::ExposureRecord;

/// Render a finite real with 17 significant digits, `%.17g`-style but
/// keeping trailing zeros so every value has the same precision:
/// `3.2000000000000002`, `1.0000000000000000`, `1.2500000000000000e-05`.
pub fn fmt_real(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::data(format!("cannot serialize non-finite value {v}")));
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..17).contains(&exp) {
        Ok(format!("{v:.*}", (16 - exp) as usize))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        Ok(format!("{mantissa}e{sign}{:02}", exp.abs()))
    }
}

fn push_real(out: &mut String, v: f64) -> Result<()> {
    out.push_str(&fmt_real(v)?);
    Ok(())
}

fn push_key(out: &mut String, key: &str) {
    out.push_str(&serde_json::to_string(key).expect("strings serialize"));
    out.push(':');
}

fn push_scores(out: &mut String, scores: &ObjectiveScores) -> Result<()> {
    out.push('{');
    for (i, (name, v)) in scores.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_key(out, name);
        push_real(out, *v)?;
    }
    out.push('}');
    Ok(())
}

fn push_reals(out: &mut String, values: &[f64]) -> Result<()> {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_real(out, *v)?;
    }
    out.push(']');
    Ok(())
}

fn record_line(
    request_id: RequestId,
    item_id: ItemId,
    scores: &ObjectiveScores,
    g_score: f64,
    pos_key: &str,
    pos: usize,
) -> Result<String> {
    let mut out = format!("{{\"request_id\":{request_id},\"item_id\":{item_id},\"pv\":1,\"scores\":");
    push_scores(&mut out, scores)?;
    out.push_str(",\"g_score\":");
    push_real(&mut out, g_score)?;
    out.push_str(&format!(",\"{pos_key}\":{pos}}}"));
    Ok(out)
}

pub fn service_line(r: &ServiceRecord) -> Result<String> {
    record_line(r.request_id, r.item_id, &r.scores, r.g_score, "pre_rank_pos", r.pre_rank_pos)
}

pub fn simulator_line(r: &SimulatorRecord) -> Result<String> {
    record_line(r.request_id, r.item_id, &r.scores, r.g_score, "rank_pos", r.rank_pos)
}

pub fn exposure_line(r: &ExposureRecord) -> String {
    format!(
        "{{\"request_id\":{},\"item_id\":{},\"click\":{}}}",
        r.request_id,
        r.item_id,
        u8::from(r.click)
    )
}

pub fn item_line(item: &Item) -> Result<String> {
    let mut out = format!("{{\"item_id\":{},\"init_bid\":", item.item_id);
    push_real(&mut out, item.init_bid)?;
    out.push_str(",\"features\":");
    push_reals(&mut out, &item.features)?;
    out.push('}');
    Ok(out)
}

pub fn request_line(req: &Request) -> Result<String> {
    let mut out = format!("{{\"request_id\":{},\"user_features\":", req.request_id);
    push_reals(&mut out, &req.user_features)?;
    out.push_str(",\"preranking_set\":[");
    for (i, id) in req.preranking_set.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&id.to_string());
    }
    out.push_str("]}");
    Ok(out)
}

/// Write `lines` to `path`, one per line.
pub fn write_lines<I>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = Result<String>>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        let line = line?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse every line of a JSONL file; errors carry the file and line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceLine {
    request_id: RequestId,
    item_id: ItemId,
    pv: u64,
    scores: BTreeMap<String, f64>,
    g_score: f64,
    pre_rank_pos: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulatorLine {
    request_id: RequestId,
    item_id: ItemId,
    pv: u64,
    scores: BTreeMap<String, f64>,
    g_score: f64,
    rank_pos: usize,
}

fn check_pv(pv: u64, path: &Path, row: usize) -> Result<()> {
    if pv != 1 {
        return Err(Error::data(format!("{}:{}: pv must be 1, got {pv}", path.display(), row + 1)));
    }
    Ok(())
}

pub fn write_service_log(path: &Path, records: &[ServiceRecord]) -> Result<()> {
    write_lines(path, records.iter().map(service_line))
}

pub fn write_simulator_log(path: &Path, records: &[SimulatorRecord]) -> Result<()> {
    write_lines(path, records.iter().map(simulator_line))
}

pub fn write_exposure_log(path: &Path, records: &[ExposureRecord]) -> Result<()> {
    write_lines(path, records.iter().map(|r| Ok(exposure_line(r))))
}

pub fn read_service_log(path: &Path) -> Result<Vec<ServiceRecord>> {
    read_jsonl::<ServiceLine>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            check_pv(l.pv, path, i)?;
            Ok(ServiceRecord {
                request_id: l.request_id,
                item_id: l.item_id,
                scores: l.scores,
                g_score: l.g_score,
                pre_rank_pos: l.pre_rank_pos,
            })
        })
        .collect()
}

pub fn read_simulator_log(path: &Path) -> Result<Vec<SimulatorRecord>> {
    read_jsonl::<SimulatorLine>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            check_pv(l.pv, path, i)?;
            Ok(SimulatorRecord {
                request_id: l.request_id,
                item_id: l.item_id,
                scores: l.scores,
                g_score: l.g_score,
                rank_pos: l.rank_pos,
            })
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExposureLine {
    request_id: RequestId,
    item_id: ItemId,
    click: u8,
}

pub fn read_exposure_log(path: &Path) -> Result<Vec<ExposureRecord>> {
    read_jsonl::<ExposureLine>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| match l.click {
            0 | 1 => Ok(ExposureRecord {
                request_id: l.request_id,
                item_id: l.item_id,
                click: l.click == 1,
            }),
            other => Err(Error::data(format!(
                "{}:{}: click must be 0 or 1, got {other}",
                path.display(),
                i + 1
            ))),
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemLine {
    item_id: ItemId,
    init_bid: f64,
    features: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestLine {
    request_id: RequestId,
    user_features: Vec<f64>,
    preranking_set: Vec<ItemId>,
}

pub fn read_corpus(path: &Path) -> Result<Vec<Item>> {
    Ok(read_jsonl::<ItemLine>(path)?
        .into_iter()
        .map(|l| Item {
            item_id: l.item_id,
            features: l.features,
            init_bid: l.init_bid,
        })
        .collect())
}

pub fn read_requests(path: &Path) -> Result<Vec<Request>> {
    read_jsonl::<RequestLine>(path)?
        .into_iter()
        .map(|l| {
            let req = Request {
                request_id: l.request_id,
                user_features: l.user_features,
                preranking_set: l.preranking_set,
            };
            req.validate()?;
            Ok(req)
        })
        .collect()
}
