//! Two-stage cascade execution and the shadow simulator.
//!
//! For each request the service path scores the whole pre-ranking set with
//! the pre-ranking sources, keeps the top `c` as the competitive set, scores
//! those with the ranking sources and keeps the top `k` as the win set. The
//! simulator path scores the whole pre-ranking set with the ranking sources
//! and keeps the top `k` as the ideal win set.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{
    rank_top, score_and_rank, FusionRule, ItemId, ObjectiveScores, Request, RequestId, ScoredItem,
    StageSizes,
};
use crate::error::{Error, Result};
use crate::model::{Link, Predictor};
use crate::world::{sigmoid, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidKind {
    Init,
    Opt,
}

/// Where one objective's score comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSource {
    Bid(BidKind),
    /// `scale * link(predictor(phi))`.
    Model {
        name: String,
        predictor: Arc<Predictor>,
        link: Link,
        scale: f64,
    },
    /// Hand-set scores per item, for fixtures.
    Table {
        name: String,
        values: Arc<BTreeMap<ItemId, f64>>,
    },
}

impl ScoreSource {
    pub fn model(name: impl Into<String>, predictor: Arc<Predictor>, link: Link) -> Self {
        ScoreSource::Model {
            name: name.into(),
            predictor,
            link,
            scale: 1.0,
        }
    }

    pub fn table(name: impl Into<String>, values: impl IntoIterator<Item = (ItemId, f64)>) -> Self {
        ScoreSource::Table {
            name: name.into(),
            values: Arc::new(values.into_iter().collect()),
        }
    }

    /// Multiply every score of a model source by `factor`.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        match self {
            ScoreSource::Model {
                name,
                predictor,
                link,
                scale,
            } => Ok(ScoreSource::Model {
                name,
                predictor,
                link,
                scale: scale * factor,
            }),
            ScoreSource::Table { name, values } => Ok(ScoreSource::Table {
                name,
                values: Arc::new(values.iter().map(|(&k, &v)| (k, v * factor)).collect()),
            }),
            ScoreSource::Bid(_) => Err(Error::config("pipeline", "bid sources cannot be rescaled")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScoreSource::Bid(BidKind::Init) => "init".into(),
            ScoreSource::Bid(BidKind::Opt) => "opt".into(),
            ScoreSource::Model { name, scale, .. } if *scale != 1.0 => format!("{name}*{scale}"),
            ScoreSource::Model { name, .. } | ScoreSource::Table { name, .. } => name.clone(),
        }
    }

    fn needs_phi(&self) -> bool {
        matches!(self, ScoreSource::Model { .. } | ScoreSource::Bid(BidKind::Opt))
    }

    fn score(&self, world: &World, item_id: ItemId, init_bid: f64, phi: &[f64]) -> Result<f64> {
        match self {
            ScoreSource::Bid(BidKind::Init) => Ok(init_bid),
            ScoreSource::Bid(BidKind::Opt) => Ok(world.truth.opt_bid_phi(init_bid, phi)),
            ScoreSource::Model {
                predictor,
                link,
                scale,
                ..
            } => {
                let logit = predictor.forward(phi);
                Ok(scale
                    * match link {
                        Link::Sigmoid => sigmoid(logit),
                        Link::Exp => logit.exp(),
                    })
            }
            ScoreSource::Table { name, values } => values
                .get(&item_id)
                .copied()
                .ok_or_else(|| Error::data(format!("score table `{name}` has no item {item_id}"))),
        }
    }
}

/// Objective name -> source for one stage.
pub type StageSources = BTreeMap<String, ScoreSource>;

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub prerank: StageSources,
    pub rank: StageSources,
    pub fusion: FusionRule,
    pub sizes: StageSizes,
}

impl Pipeline {
    pub fn new(
        prerank: StageSources,
        rank: StageSources,
        fusion: FusionRule,
        sizes: StageSizes,
    ) -> Result<Self> {
        let p = Pipeline {
            prerank,
            rank,
            fusion,
            sizes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.sizes.validate("pipeline.sizes")?;
        for (stage, sources) in [("prerank", &self.prerank), ("rank", &self.rank)] {
            let mut declared: Vec<&String> = self.fusion.objectives().iter().collect();
            declared.sort();
            let present: Vec<&String> = sources.keys().collect();
            if declared != present {
                return Err(Error::config(
                    format!("pipeline.{stage}"),
                    format!("objectives {present:?} do not match fusion objectives {declared:?}"),
                ));
            }
        }
        Ok(())
    }

    /// Slot names in fusion declaration order.
    pub fn slots(&self) -> &[String] {
        self.fusion.objectives()
    }

    /// Human-readable rule such as `init*logloss`.
    pub fn describe_prerank(&self) -> String {
        describe(&self.prerank, &self.fusion)
    }

    pub fn describe_rank(&self) -> String {
        describe(&self.rank, &self.fusion)
    }
}

fn describe(sources: &StageSources, fusion: &FusionRule) -> String {
    fusion
        .objectives()
        .iter()
        .map(|o| sources[o].label())
        .collect::<Vec<_>>()
        .join("*")
}

/// Copy of `pipeline` with one pre-ranking slot replaced.
pub fn substitute(pipeline: &Pipeline, objective: &str, replacement: ScoreSource) -> Result<Pipeline> {
    let mut out = pipeline.clone();
    let slot = out
        .prerank
        .get_mut(objective)
        .ok_or_else(|| Error::config("pipeline.prerank", format!("no slot named `{objective}`")))?;
    *slot = replacement;
    Ok(out)
}

/// Replace a pre-ranking slot with the ranking stage's source for it.
pub fn substitute_with_rank(pipeline: &Pipeline, objective: &str) -> Result<Pipeline> {
    let replacement = pipeline
        .rank
        .get(objective)
        .cloned()
        .ok_or_else(|| Error::config("pipeline.rank", format!("no slot named `{objective}`")))?;
    substitute(pipeline, objective, replacement)
}

/// Pre-ranking log row: the online service's view of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRecord {
    pub request_id: RequestId,
    pub item_id: ItemId,
    pub scores: ObjectiveScores,
    pub g_score: f64,
    pub pre_rank_pos: usize,
}

/// Simulator log row: ranking sources applied to the whole pre-ranking set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorRecord {
    pub request_id: RequestId,
    pub item_id: ItemId,
    pub scores: ObjectiveScores,
    pub g_score: f64,
    pub rank_pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestOutcome {
    pub service: Vec<ServiceRecord>,
    pub competitive: Vec<ItemId>,
    pub win: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorOutcome {
    pub records: Vec<SimulatorRecord>,
    pub ideal: Vec<ItemId>,
}

/// Per-item inputs shared by both stages.
struct ItemContext {
    item_id: ItemId,
    init_bid: f64,
    phi: Vec<f64>,
}

fn contexts(req: &Request, world: &World, need_phi: bool) -> Result<Vec<ItemContext>> {
    req.preranking_set
        .iter()
        .map(|&id| {
            let item = world.item(id)?;
            Ok(ItemContext {
                item_id: id,
                init_bid: item.init_bid,
                phi: if need_phi {
                    world.phi(&req.user_features, item)
                } else {
                    Vec::new()
                },
            })
        })
        .collect()
}

fn score_stage<'a>(
    sources: &StageSources,
    world: &World,
    items: impl Iterator<Item = &'a ItemContext>,
) -> Result<Vec<(ItemId, ObjectiveScores)>> {
    items
        .map(|ctx| {
            let scores = sources
                .iter()
                .map(|(name, src)| Ok((name.clone(), src.score(world, ctx.item_id, ctx.init_bid, &ctx.phi)?)))
                .collect::<Result<ObjectiveScores>>()?;
            Ok((ctx.item_id, scores))
        })
        .collect()
}

fn needs_phi(p: &Pipeline) -> bool {
    p.prerank.values().chain(p.rank.values()).any(ScoreSource::needs_phi)
}

fn service_path(
    req: &Request,
    pipeline: &Pipeline,
    world: &World,
    ctx: &[ItemContext],
) -> Result<(RequestOutcome, Vec<ScoredItem>)> {
    let pre = score_and_rank(score_stage(&pipeline.prerank, world, ctx.iter())?, &pipeline.fusion)?;
    let competitive = rank_top(&pre, pipeline.sizes.c);
    let by_id: HashMap<ItemId, &ItemContext> = ctx.iter().map(|c| (c.item_id, c)).collect();
    let rank_scored = score_and_rank(
        score_stage(&pipeline.rank, world, competitive.iter().map(|id| by_id[id]))?,
        &pipeline.fusion,
    )?;
    let win = rank_top(&rank_scored, pipeline.sizes.k);
    let service = pre
        .iter()
        .map(|s| ServiceRecord {
            request_id: req.request_id,
            item_id: s.item_id,
            scores: s.scores.clone(),
            g_score: s.fused,
            pre_rank_pos: s.rank_pos,
        })
        .collect();
    Ok((
        RequestOutcome {
            service,
            competitive,
            win,
        },
        pre,
    ))
}

fn simulator_path(
    req: &Request,
    pipeline: &Pipeline,
    world: &World,
    ctx: &[ItemContext],
) -> Result<SimulatorOutcome> {
    let ranked = score_and_rank(score_stage(&pipeline.rank, world, ctx.iter())?, &pipeline.fusion)?;
    let ideal = rank_top(&ranked, pipeline.sizes.k);
    let records = ranked
        .into_iter()
        .map(|s| SimulatorRecord {
            request_id: req.request_id,
            item_id: s.item_id,
            scores: s.scores,
            g_score: s.fused,
            rank_pos: s.rank_pos,
        })
        .collect();
    Ok(SimulatorOutcome { records, ideal })
}

/// Serve one request through the cascade.
pub fn run_request(req: &Request, pipeline: &Pipeline, world: &World) -> Result<RequestOutcome> {
    let ctx = contexts(req, world, needs_phi(pipeline))?;
    Ok(service_path(req, pipeline, world, &ctx)?.0)
}

/// Replay one request on the simulator.
pub fn run_simulator(req: &Request, pipeline: &Pipeline, world: &World) -> Result<SimulatorOutcome> {
    let ctx = contexts(req, world, needs_phi(pipeline))?;
    simulator_path(req, pipeline, world, &ctx)
}

/// Both paths of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRun {
    pub request_id: RequestId,
    pub service: RequestOutcome,
    pub simulator: SimulatorOutcome,
}

pub fn run_both(req: &Request, pipeline: &Pipeline, world: &World) -> Result<RequestRun> {
    let ctx = contexts(req, world, needs_phi(pipeline))?;
    Ok(RequestRun {
        request_id: req.request_id,
        service: service_path(req, pipeline, world, &ctx)?.0,
        simulator: simulator_path(req, pipeline, world, &ctx)?,
    })
}

/// Service and simulator logs of a request stream, in request order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamLogs {
    pub runs: Vec<RequestRun>,
}

impl StreamLogs {
    pub fn service_records(&self) -> Vec<ServiceRecord> {
        self.runs.iter().flat_map(|r| r.service.service.iter().cloned()).collect()
    }

    pub fn simulator_records(&self) -> Vec<SimulatorRecord> {
        self.runs.iter().flat_map(|r| r.simulator.records.iter().cloned()).collect()
    }
}

/// Run every request; requests are independent and evaluated in parallel,
/// results come back sorted by request id.
pub fn run_stream(pipeline: &Pipeline, world: &World, requests: &[Request]) -> Result<StreamLogs> {
    pipeline.validate()?;
    let mut runs = requests
        .par_iter()
        .map(|req| run_both(req, pipeline, world))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.request_id);
    Ok(StreamLogs { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Item;
    use crate::world::{GroundTruth, Interaction, WorldConfig};

    /// Three items carrying the toy example's bids; pCTRs come from tables.
    pub(crate) fn toy_world() -> World {
        let config = WorldConfig {
            d: 1,
            d_u: 1,
            corpus_size: 3,
            requests_per_epoch: 1,
            eval_requests: 0,
            sizes: StageSizes { n: 3, c: 2, k: 1 },
            interaction: Interaction::Concat,
            ..WorldConfig::default()
        };
        let corpus = [8.0, 6.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &bid)| Item {
                item_id: i as ItemId + 1,
                features: vec![0.0],
                init_bid: bid,
            })
            .collect();
        World {
            config,
            corpus,
            truth: GroundTruth {
                interaction: Interaction::Concat,
                w_ctr: vec![0.0; 2],
                b_ctr: 0.0,
                w_opt: vec![0.0; 2],
            },
        }
    }

    pub(crate) fn toy_pipeline(c: usize, k: usize) -> Pipeline {
        let pre = [
            ("bid".to_string(), ScoreSource::Bid(BidKind::Init)),
            ("pctr".to_string(), ScoreSource::table("pre-pctr", [(1, 0.4), (2, 0.5), (3, 0.6)])),
        ];
        let rank = [
            ("bid".to_string(), ScoreSource::Bid(BidKind::Init)),
            ("pctr".to_string(), ScoreSource::table("rank-pctr", [(1, 0.2), (2, 0.5), (3, 0.8)])),
        ];
        Pipeline::new(
            pre.into(),
            rank.into(),
            FusionRule::product(["bid", "pctr"]).unwrap(),
            StageSizes { n: 3, c, k },
        )
        .unwrap()
    }

    fn toy_request() -> Request {
        Request {
            request_id: 0,
            user_features: vec![0.0],
            preranking_set: vec![1, 2, 3],
        }
    }

    // World item lookup is by index, so shift ids for the fixture.
    fn shifted_world() -> World {
        let mut w = toy_world();
        w.corpus.insert(
            0,
            Item {
                item_id: 0,
                features: vec![0.0],
                init_bid: 1.0,
            },
        );
        w
    }

    #[test]
    fn toy_example_funnel() {
        let world = shifted_world();
        let out = run_request(&toy_request(), &toy_pipeline(2, 1), &world).unwrap();
        assert_eq!(out.competitive, vec![1, 2]);
        assert_eq!(out.win, vec![2]);
        let fused: Vec<f64> = out.service.iter().map(|r| r.g_score).collect();
        assert_eq!(fused, vec![8.0 * 0.4, 6.0 * 0.5, 4.0 * 0.6]);
    }

    #[test]
    fn toy_example_simulator() {
        let world = shifted_world();
        let sim = run_simulator(&toy_request(), &toy_pipeline(2, 1), &world).unwrap();
        assert_eq!(sim.ideal, vec![3]);
        let sim = run_simulator(&toy_request(), &toy_pipeline(2, 2), &world).unwrap();
        assert_eq!(sim.ideal, vec![3, 2]);
        let sim = run_simulator(&toy_request(), &toy_pipeline(3, 3), &world).unwrap();
        assert_eq!(sim.ideal, vec![3, 2, 1]);
        let ranks: Vec<usize> = sim.records.iter().map(|r| r.rank_pos).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn full_competitive_set_recovers_ideal() {
        let world = shifted_world();
        let run = run_both(&toy_request(), &toy_pipeline(3, 2), &world).unwrap();
        assert_eq!(run.service.win, run.simulator.ideal);
    }

    #[test]
    fn substitution() {
        let base = toy_pipeline(2, 1);
        let fixed = substitute_with_rank(&base, "pctr").unwrap();
        assert_ne!(fixed, base);
        assert_eq!(fixed.prerank["pctr"], base.rank["pctr"]);
        assert_eq!(fixed.prerank["bid"], base.prerank["bid"]);
        assert!(substitute_with_rank(&base, "cvr").is_err());
        let same = substitute(&base, "bid", base.prerank["bid"].clone()).unwrap();
        assert_eq!(same, base);
        let world = shifted_world();
        let a = run_both(&toy_request(), &base, &world).unwrap();
        let b = run_both(&toy_request(), &same, &world).unwrap();
        assert_eq!(a, b);
        let out = run_request(&toy_request(), &fixed, &world).unwrap();
        assert_eq!(out.competitive, vec![3, 2]);
    }

    #[test]
    fn unknown_item_is_a_data_error() {
        let world = shifted_world();
        let mut req = toy_request();
        req.preranking_set.push(99);
        assert!(matches!(
            run_request(&req, &toy_pipeline(2, 1), &world),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn mismatched_objectives_are_rejected() {
        let mut p = toy_pipeline(2, 1);
        p.prerank.remove("bid");
        assert!(p.validate().is_err());
    }

    #[test]
    fn describe_rules() {
        let p = toy_pipeline(2, 1);
        assert_eq!(p.describe_prerank(), "init*pre-pctr");
        assert_eq!(p.describe_rank(), "init*rank-pctr");
    }
}
