//! Experiment harness: training sets per regime, tier training, pipeline
//! assembly and log evaluation. The CLI commands are thin file-backed
//! wrappers around these functions; [`run_experiment`] chains them in memory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{run_both, run_stream, Pipeline, ScoreSource, ServiceRecord, SimulatorRecord, StageSources, StreamLogs};
use crate::config::{ExperimentConfig, FixtureConfig, FusionConfig, PipelineSpec, SourceSpec, TierConfig, TrainingSet};
use crate::domain::{score_and_rank, ItemId, ObjectiveScores, Request, RequestId, StageSizes};
use crate::error::{Error, Result};
use crate::metrics::{
    auc, calibration_report, diagnose, rcs, score_histogram, single_objective_rcs, total_variation, win_sets,
    CalibrationReport, DiagnosisTable, RcsMode,
};
use crate::model::{
    nested_mask, train, ChunkScheme, Checkpoint, CheckpointMeta, Dataset, FeatureTable, Group, Link, LossKind,
    Predictor, Sample,
};
use crate::rng;
use crate::world::{sample_click, sample_win_clicks, ExposureRecord, Stream, World};

/// Trained models by tier name.
pub type ModelSet = BTreeMap<String, Checkpoint>;

#[derive(Debug, Clone)]
pub struct TrainedTier {
    pub checkpoint: Checkpoint,
    pub loss_trace: Vec<f64>,
}

/// Feature rows for a request stream: users in stream order, items by id.
pub fn feature_table(world: &World, requests: &[Request]) -> FeatureTable {
    FeatureTable {
        interaction: world.config.interaction,
        users: requests.iter().map(|r| r.user_features.clone()).collect(),
        items: world.corpus.iter().map(|i| i.features.clone()).collect(),
    }
}

fn user_index(requests: &[Request]) -> HashMap<RequestId, u32> {
    requests.iter().enumerate().map(|(i, r)| (r.request_id, i as u32)).collect()
}

fn lookup_user(index: &HashMap<RequestId, u32>, request_id: RequestId) -> Result<u32> {
    index
        .get(&request_id)
        .copied()
        .ok_or_else(|| Error::data(format!("log refers to request {request_id}, which is not in the training stream")))
}

/// Clicks drawn from the true CTR on `per_request` uniformly chosen items of
/// every pre-ranking set: abundant, unbiased labels for the teacher.
pub fn teacher_dataset(world: &World, requests: &[Request], per_request: usize) -> Result<Dataset> {
    let seed = world.config.seed;
    let groups = requests
        .par_iter()
        .enumerate()
        .map(|(u, req)| {
            let n = req.preranking_set.len();
            if per_request > n {
                return Err(Error::config(
                    "data.teacher_items_per_request",
                    format!("{per_request} exceeds the pre-ranking set size {n}"),
                ));
            }
            let mut pick = rng::stream(seed, "teacher-items", req.request_id);
            let mut clicks = rng::stream(seed, "teacher-clicks", req.request_id);
            let mut chosen = index::sample(&mut pick, n, per_request).into_vec();
            chosen.sort_unstable();
            chosen
                .into_iter()
                .map(|pos| {
                    let item_id = req.preranking_set[pos];
                    let phi = world.phi(&req.user_features, world.item(item_id)?);
                    let click = sample_click(world.truth.true_ctr_phi(&phi), &mut clicks)?;
                    Ok(Sample {
                        user: u as u32,
                        item: item_id as u32,
                        target: f64::from(u8::from(click)),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::Pointwise(groups.into_iter().flatten().collect()))
}

/// Logs of the exposure pipeline over the training stream, restricted to
/// each request's competitive set, plus the clicked win-set exposures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLogs {
    pub service: Vec<ServiceRecord>,
    pub simulator: Vec<SimulatorRecord>,
    pub exposures: Vec<ExposureRecord>,
}

pub fn training_logs(pipeline: &Pipeline, world: &World, requests: &[Request]) -> Result<TrainingLogs> {
    pipeline.validate()?;
    let c = pipeline.sizes.c;
    let parts = requests
        .par_iter()
        .map(|req| {
            let run = run_both(req, pipeline, world)?;
            let competitive: HashSet<ItemId> = run.service.competitive.iter().copied().collect();
            let service: Vec<ServiceRecord> = run
                .service
                .service
                .into_iter()
                .filter(|r| r.pre_rank_pos <= c)
                .collect();
            let simulator: Vec<SimulatorRecord> = run
                .simulator
                .records
                .into_iter()
                .filter(|r| competitive.contains(&r.item_id))
                .collect();
            let exposures = sample_win_clicks(world, req, &run.service.win)?;
            Ok((service, simulator, exposures))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut logs = TrainingLogs::default();
    for (s, m, e) in parts {
        logs.service.extend(s);
        logs.simulator.extend(m);
        logs.exposures.extend(e);
    }
    Ok(logs)
}

/// Win-set exposures with their clicks, for the logloss tiers.
pub fn win_set_dataset(exposures: &[ExposureRecord], requests: &[Request]) -> Result<Dataset> {
    let users = user_index(requests);
    exposures
        .iter()
        .map(|e| {
            Ok(Sample {
                user: lookup_user(&users, e.request_id)?,
                item: e.item_id as u32,
                target: f64::from(u8::from(e.click)),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Dataset::Pointwise)
}

/// Competitive-set members per request, in pre-ranking order.
fn competitive_sets(service: &[ServiceRecord]) -> BTreeMap<RequestId, Vec<ItemId>> {
    let mut out: BTreeMap<RequestId, Vec<(usize, ItemId)>> = BTreeMap::new();
    for r in service {
        out.entry(r.request_id).or_default().push((r.pre_rank_pos, r.item_id));
    }
    out.into_iter()
        .map(|(req, mut items)| {
            items.sort_unstable();
            (req, items.into_iter().map(|(_, id)| id).collect())
        })
        .collect()
}

/// Competitive-set items with the teacher's logit as the regression target.
pub fn distill_dataset(
    teacher: &Predictor,
    world: &World,
    requests: &[Request],
    service: &[ServiceRecord],
) -> Result<Dataset> {
    let users = user_index(requests);
    let sets: Vec<(RequestId, Vec<ItemId>)> = competitive_sets(service).into_iter().collect();
    let parts = sets
        .par_iter()
        .map(|(req_id, items)| {
            let u = lookup_user(&users, *req_id)?;
            let user = &requests[u as usize].user_features;
            items
                .iter()
                .map(|&item_id| {
                    let phi = world.phi(user, world.item(item_id)?);
                    Ok(Sample {
                        user: u,
                        item: item_id as u32,
                        target: teacher.forward(&phi),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::Pointwise(parts.into_iter().flatten().collect()))
}

/// Competitive sets ordered by the LTR target `rank_prob * opt_bid /
/// init_bid` (read from the simulator log) and cut into chunks.
pub fn ltr_dataset(
    world: &World,
    requests: &[Request],
    service: &[ServiceRecord],
    simulator: &[SimulatorRecord],
    fusion: &FusionConfig,
    scheme: ChunkScheme,
) -> Result<Dataset> {
    let users = user_index(requests);
    let rank_scores: HashMap<(RequestId, ItemId), &ObjectiveScores> =
        simulator.iter().map(|r| ((r.request_id, r.item_id), &r.scores)).collect();
    let mut groups = Vec::new();
    for (req_id, items) in competitive_sets(service) {
        let mut targets = items
            .iter()
            .map(|&item_id| {
                let scores = rank_scores.get(&(req_id, item_id)).ok_or_else(|| {
                    Error::data(format!("simulator log lacks request {req_id} item {item_id}"))
                })?;
                let get = |name: &str| {
                    scores
                        .get(name)
                        .copied()
                        .ok_or_else(|| Error::data(format!("simulator log has no `{name}` score")))
                };
                let init = world.item(item_id)?.init_bid;
                let t = crate::model::ltr_target(get(&fusion.model)?, get(&fusion.bid)?, init)?;
                Ok((t.0, item_id))
            })
            .collect::<Result<Vec<_>>>()?;
        crate::domain::sort_by_score(&mut targets);
        let labels = scheme.labels(targets.len())?;
        groups.push(Group {
            user: lookup_user(&users, req_id)?,
            members: targets.iter().zip(labels).map(|(&(_, id), y)| (id as u32, y)).collect(),
        });
    }
    Ok(Dataset::Groups(groups))
}

/// Seed of the feature order shared by every tier, so masks are nested.
pub fn feature_order_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, "feature-order", 0)
}

/// Inputs a tier may need beyond the world.
#[derive(Debug, Clone, Copy, Default)]
pub struct TierInputs<'a> {
    pub teacher: Option<&'a Predictor>,
    pub logs: Option<&'a TrainingLogs>,
}

/// Build a tier's training set and fit it.
pub fn train_tier(
    cfg: &ExperimentConfig,
    tier: &TierConfig,
    world: &World,
    requests: &[Request],
    inputs: TierInputs<'_>,
) -> Result<TrainedTier> {
    let phi_dim = world.config.phi_dim();
    let need = |what: &str| Error::data(format!("tier `{}` needs {what}", tier.name));
    let data = match (tier.data, tier.train.loss_kind) {
        (TrainingSet::PrerankingLabels, _) => teacher_dataset(world, requests, cfg.data.teacher_items_per_request)?,
        (TrainingSet::WinSet, _) => win_set_dataset(&inputs.logs.ok_or_else(|| need("the exposure log"))?.exposures, requests)?,
        (TrainingSet::CompetitiveSet, LossKind::Distill) => {
            let logs = inputs.logs.ok_or_else(|| need("the competitive-set logs"))?;
            let teacher = inputs.teacher.ok_or_else(|| need("the teacher model"))?;
            distill_dataset(teacher, world, requests, &logs.service)?
        }
        (TrainingSet::CompetitiveSet, _) => {
            let logs = inputs.logs.ok_or_else(|| need("the competitive-set logs"))?;
            let scheme = ChunkScheme::for_chunks(tier.train.chunks, world.config.sizes.k);
            ltr_dataset(world, requests, &logs.service, &logs.simulator, &cfg.fusion, scheme)?
        }
    };
    if data.is_empty() {
        return Err(Error::data(format!("tier `{}` has an empty training set", tier.name)));
    }
    let mask = nested_mask(phi_dim, tier.mask_fraction, feature_order_seed(cfg.seed))?;
    let mut dims = vec![phi_dim];
    dims.extend(&tier.hidden);
    dims.push(1);
    let init = Predictor::init(dims, mask, rng::derive_seed(cfg.seed, &format!("init:{}", tier.name), 0))?;
    let mut train_cfg = tier.train.clone();
    train_cfg.seed = rng::derive_seed(cfg.seed, &format!("shuffle:{}", tier.name), tier.train.seed);
    let table = feature_table(world, requests);
    let outcome = train(init, &table, &data, &train_cfg)?;
    let chunk_boundary = (train_cfg.loss_kind == LossKind::Ranknet && train_cfg.chunks == 2)
        .then_some(world.config.sizes.k);
    Ok(TrainedTier {
        checkpoint: Checkpoint {
            meta: CheckpointMeta {
                tier: tier.name.clone(),
                link: Link::for_loss(train_cfg.loss_kind),
                mask_fraction: outcome.predictor.mask_fraction(),
                train: train_cfg,
                chunk_boundary,
                training_set: tier.data.name().to_string(),
                training_samples: data.len(),
            },
            predictor: outcome.predictor,
        },
        loss_trace: outcome.loss_trace,
    })
}

fn source(spec: &SourceSpec, models: &ModelSet) -> Result<ScoreSource> {
    match spec {
        SourceSpec::Bid(kind) => Ok(ScoreSource::Bid(*kind)),
        SourceSpec::Model { tier, scale } => {
            let ckpt = models
                .get(tier)
                .ok_or_else(|| Error::data(format!("tier `{tier}` has no trained model")))?;
            let src = ScoreSource::model(tier.clone(), Arc::new(ckpt.predictor.clone()), ckpt.meta.link);
            if *scale == 1.0 {
                Ok(src)
            } else {
                src.scaled(*scale)
            }
        }
    }
}

/// Assemble a runnable pipeline from a spec and trained models.
pub fn build_pipeline(cfg: &ExperimentConfig, spec: &PipelineSpec, models: &ModelSet) -> Result<Pipeline> {
    let stage = |specs: &BTreeMap<String, SourceSpec>| -> Result<StageSources> {
        specs.iter().map(|(name, s)| Ok((name.clone(), source(s, models)?))).collect()
    };
    Pipeline::new(stage(&spec.prerank)?, stage(&spec.rank)?, cfg.fusion.rule()?, cfg.world.sizes)
}

/// Tiers in training order: label-trained tiers (the teacher) first, then
/// the rest in declaration order.
pub fn training_order(cfg: &ExperimentConfig) -> Vec<&TierConfig> {
    let (first, rest): (Vec<&TierConfig>, Vec<&TierConfig>) =
        cfg.tiers.iter().partition(|t| t.data == TrainingSet::PrerankingLabels);
    first.into_iter().chain(rest).collect()
}

/// Train every tier in memory.
pub fn train_all(cfg: &ExperimentConfig, world: &World) -> Result<(ModelSet, BTreeMap<String, Vec<f64>>)> {
    let requests = world.requests(Stream::Train)?;
    let mut models = ModelSet::new();
    let mut traces = BTreeMap::new();
    let mut logs: Option<TrainingLogs> = None;
    for tier in training_order(cfg) {
        if tier.data != TrainingSet::PrerankingLabels && logs.is_none() {
            let exposure = build_pipeline(cfg, &cfg.pipeline_spec(&cfg.data.exposure_pipeline)?, &models)?;
            logs = Some(training_logs(&exposure, world, &requests)?);
        }
        let inputs = TierInputs {
            teacher: models.get(&cfg.evaluation.teacher).map(|c| &c.predictor),
            logs: logs.as_ref(),
        };
        let trained = train_tier(cfg, tier, world, &requests, inputs)?;
        traces.insert(tier.name.clone(), trained.loss_trace);
        models.insert(tier.name.clone(), trained.checkpoint);
    }
    Ok((models, traces))
}

/// Win-set clicks of an evaluation run, for label-based metrics.
pub fn eval_clicks(world: &World, requests: &[Request], logs: &StreamLogs) -> Result<Vec<ExposureRecord>> {
    let by_id: HashMap<RequestId, &Request> = requests.iter().map(|r| (r.request_id, r)).collect();
    let parts = logs
        .runs
        .par_iter()
        .map(|run| {
            let req = by_id
                .get(&run.request_id)
                .ok_or_else(|| Error::data(format!("unknown request {}", run.request_id)))?;
            sample_win_clicks(world, req, &run.service.win)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Evaluation settings resolved from the config (and CLI overrides).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub sizes: StageSizes,
    pub k_grid: Vec<usize>,
    pub c_grid: Vec<usize>,
    pub mode: RcsMode,
    pub ece_buckets: usize,
    pub histogram_buckets: usize,
    /// Objectives in declaration order; the last is the model objective.
    pub objectives: Vec<String>,
    pub model_objective: String,
}

impl EvalParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        EvalParams {
            sizes: cfg.world.sizes,
            k_grid: cfg.evaluation.k_grid.clone(),
            c_grid: cfg.evaluation.c_grid.clone(),
            mode: cfg.evaluation.mode,
            ece_buckets: cfg.evaluation.ece_buckets,
            histogram_buckets: cfg.evaluation.histogram_buckets,
            objectives: vec![cfg.fusion.bid.clone(), cfg.fusion.model.clone()],
            model_objective: cfg.fusion.model.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub k: usize,
    pub c: usize,
    pub rcs_macro: f64,
    pub rcs_micro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleObjectiveRcs {
    pub objective: String,
    pub k: usize,
    pub c: usize,
    pub rcs_macro: f64,
    pub rcs_micro: f64,
}

/// Pre-rank vs rank score histograms of the model objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histograms {
    pub buckets: usize,
    pub prerank_set_pre: Vec<f64>,
    pub prerank_set_rank: Vec<f64>,
    pub win_set_pre: Vec<f64>,
    pub win_set_rank: Vec<f64>,
    pub tv_prerank_set: f64,
    pub tv_win_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEvaluation {
    pub pipeline: String,
    pub requests: usize,
    /// RCS at the world's own `(k, c)`.
    pub primary: GridPoint,
    pub grid: Vec<GridPoint>,
    pub single_objective: Vec<SingleObjectiveRcs>,
    /// Proxy calibration of the pre-ranking model objective against the
    /// ranking model over the whole pre-ranking set; `None` when the
    /// pre-ranking scores are not probabilities.
    pub calibration: Option<CalibrationReport>,
    /// AUC of the pre-ranking model score on win-set clicks.
    pub auc: Option<f64>,
    pub histograms: Option<Histograms>,
}

impl PipelineEvaluation {
    pub fn rcs(&self, mode: RcsMode) -> f64 {
        match mode {
            RcsMode::Macro => self.primary.rcs_macro,
            RcsMode::Micro => self.primary.rcs_micro,
        }
    }

    pub fn ece(&self) -> Option<f64> {
        self.calibration.as_ref().map(|c| c.ece)
    }

    pub fn pcoc(&self) -> Option<f64> {
        self.calibration.as_ref().map(|c| c.pcoc)
    }

    pub fn single_objective(&self, objective: &str) -> Option<f64> {
        self.single_objective
            .iter()
            .find(|s| s.objective == objective)
            .map(|s| s.rcs_macro)
    }
}

fn is_probability(v: f64) -> bool {
    (0.0..1.0).contains(&v)
}

/// Every metric of one pipeline's logs.
pub fn evaluate_logs(
    pipeline: &str,
    service: &[ServiceRecord],
    simulator: &[SimulatorRecord],
    clicks: &[ExposureRecord],
    params: &EvalParams,
) -> Result<PipelineEvaluation> {
    let point = |k, c| -> Result<GridPoint> {
        let r = rcs(service, simulator, k, c)?;
        Ok(GridPoint {
            k,
            c,
            rcs_macro: r.rcs_macro,
            rcs_micro: r.rcs_micro,
        })
    };
    let (k, c) = (params.sizes.k, params.sizes.c);
    let primary = point(k, c)?;
    let mut grid = Vec::new();
    for &gk in &params.k_grid {
        for &gc in &params.c_grid {
            if gk <= gc {
                grid.push(point(gk, gc)?);
            }
        }
    }
    let single_objective = params
        .objectives
        .iter()
        .map(|o| {
            let r = single_objective_rcs(service, simulator, o, k, c)?;
            Ok(SingleObjectiveRcs {
                objective: o.clone(),
                k,
                c,
                rcs_macro: r.rcs_macro,
                rcs_micro: r.rcs_micro,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let model = params.model_objective.as_str();
    let score = |scores: &ObjectiveScores| {
        scores
            .get(model)
            .copied()
            .ok_or_else(|| Error::data(format!("log has no `{model}` score")))
    };
    let pre: HashMap<(RequestId, ItemId), f64> = service
        .iter()
        .map(|r| Ok(((r.request_id, r.item_id), score(&r.scores)?)))
        .collect::<Result<_>>()?;
    // pairs in simulator-log order so that results do not depend on hashing
    let mut pairs = Vec::with_capacity(simulator.len());
    for r in simulator {
        let p = pre.get(&(r.request_id, r.item_id)).ok_or_else(|| {
            Error::data(format!(
                "request {} item {} is in the simulator log only",
                r.request_id, r.item_id
            ))
        })?;
        pairs.push(((r.request_id, r.item_id), *p, score(&r.scores)?));
    }
    let calibrated = pairs.iter().all(|&(_, p, q)| is_probability(p) && is_probability(q));
    let (calibration, histograms) = if calibrated {
        let p_hat: Vec<f64> = pairs.iter().map(|x| x.1).collect();
        let p_ref: Vec<f64> = pairs.iter().map(|x| x.2).collect();
        let report = calibration_report(&p_hat, &p_ref, params.ece_buckets)?;
        let win: HashSet<(RequestId, ItemId)> = win_sets(service, simulator, k, c)?.into_iter().collect();
        let (w_hat, w_ref): (Vec<f64>, Vec<f64>) =
            pairs.iter().filter(|x| win.contains(&x.0)).map(|x| (x.1, x.2)).unzip();
        let b = params.histogram_buckets;
        let h = Histograms {
            buckets: b,
            prerank_set_pre: score_histogram(&p_hat, b)?,
            prerank_set_rank: score_histogram(&p_ref, b)?,
            win_set_pre: score_histogram(&w_hat, b)?,
            win_set_rank: score_histogram(&w_ref, b)?,
            tv_prerank_set: 0.0,
            tv_win_set: 0.0,
        };
        let h = Histograms {
            tv_prerank_set: total_variation(&h.prerank_set_pre, &h.prerank_set_rank)?,
            tv_win_set: total_variation(&h.win_set_pre, &h.win_set_rank)?,
            ..h
        };
        (Some(report), Some(h))
    } else {
        (None, None)
    };

    let (labels, scores): (Vec<bool>, Vec<f64>) = clicks
        .iter()
        .map(|e| {
            pre.get(&(e.request_id, e.item_id))
                .map(|&s| (e.click, s))
                .ok_or_else(|| Error::data(format!("click on request {} item {} not in the service log", e.request_id, e.item_id)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let auc = auc(&labels, &scores).ok();

    let requests = service.iter().map(|r| r.request_id).collect::<HashSet<_>>().len();
    Ok(PipelineEvaluation {
        pipeline: pipeline.to_string(),
        requests,
        primary,
        grid,
        single_objective,
        calibration,
        auc,
        histograms,
    })
}

/// Simulate one pipeline over the evaluation stream and evaluate it.
pub fn simulate_and_evaluate(
    cfg: &ExperimentConfig,
    world: &World,
    models: &ModelSet,
    spec: &str,
    requests: &[Request],
) -> Result<PipelineEvaluation> {
    let pipeline = build_pipeline(cfg, &cfg.pipeline_spec(spec)?, models)?;
    let logs = run_stream(&pipeline, world, requests)?;
    let clicks = eval_clicks(world, requests, &logs)?;
    evaluate_logs(
        spec,
        &logs.service_records(),
        &logs.simulator_records(),
        &clicks,
        &EvalParams::from_config(cfg),
    )
}

/// Substitution diagnosis of a pipeline over the evaluation stream.
pub fn diagnose_pipeline(
    cfg: &ExperimentConfig,
    world: &World,
    models: &ModelSet,
    spec: &str,
    requests: &[Request],
) -> Result<DiagnosisTable> {
    let pipeline = build_pipeline(cfg, &cfg.pipeline_spec(spec)?, models)?;
    diagnose(&pipeline, world, requests, cfg.evaluation.mode)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub seed: u64,
    pub models: ModelSet,
    pub loss_traces: BTreeMap<String, Vec<f64>>,
    /// One entry per configured pipeline, in config order.
    pub evaluations: Vec<PipelineEvaluation>,
    pub diagnosis: Option<DiagnosisTable>,
}

impl ExperimentOutcome {
    pub fn evaluation(&self, pipeline: &str) -> Option<&PipelineEvaluation> {
        self.evaluations.iter().find(|e| e.pipeline == pipeline)
    }
}

/// generate -> train -> simulate -> evaluate (-> diagnose), in memory.
pub fn run_experiment(cfg: &ExperimentConfig, with_diagnosis: bool) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let world = World::generate(cfg.world.clone())?;
    let (models, loss_traces) = train_all(cfg, &world)?;
    let requests = world.requests(Stream::Eval)?;
    let evaluations = cfg
        .evaluation
        .pipelines
        .iter()
        .map(|p| simulate_and_evaluate(cfg, &world, &models, p, &requests))
        .collect::<Result<Vec<_>>>()?;
    let diagnosis = if with_diagnosis {
        Some(diagnose_pipeline(cfg, &world, &models, &cfg.evaluation.diagnose_pipeline, &requests)?)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        seed: cfg.seed,
        models,
        loss_traces,
        evaluations,
        diagnosis,
    })
}

/// Service and simulator logs of a hand-set fixture request.
pub fn fixture_logs(fixture: &FixtureConfig, fusion: &FusionConfig) -> Result<(Vec<ServiceRecord>, Vec<SimulatorRecord>)> {
    let rule = fusion.rule()?;
    let pre = score_and_rank(
        fixture.items.iter().map(|i| (i.item_id, i.prerank.clone())).collect(),
        &rule,
    )?;
    let rank = score_and_rank(
        fixture.items.iter().map(|i| (i.item_id, i.rank.clone())).collect(),
        &rule,
    )?;
    let service = pre
        .into_iter()
        .map(|s| ServiceRecord {
            request_id: fixture.request_id,
            item_id: s.item_id,
            scores: s.scores,
            g_score: s.fused,
            pre_rank_pos: s.rank_pos,
        })
        .collect();
    let simulator = rank
        .into_iter()
        .map(|s| SimulatorRecord {
            request_id: fixture.request_id,
            item_id: s.item_id,
            scores: s.scores,
            g_score: s.fused,
            rank_pos: s.rank_pos,
        })
        .collect();
    Ok((service, simulator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FixtureItem;

    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_experiment();
        cfg.world.d = 6;
        cfg.world.d_u = 6;
        cfg.world.corpus_size = 300;
        cfg.world.requests_per_epoch = 60;
        cfg.world.eval_requests = 20;
        cfg.world.sizes = StageSizes { n: 40, c: 10, k: 3 };
        cfg.data.teacher_items_per_request = 20;
        cfg.evaluation.k_grid = vec![3];
        cfg.evaluation.c_grid = vec![5, 10];
        for t in &mut cfg.tiers {
            t.hidden = vec![4];
            t.train.epochs = 2;
        }
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn tiny_experiment_runs_and_is_deterministic() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg, true).unwrap();
        let b = run_experiment(&cfg, true).unwrap();
        assert_eq!(a.evaluations, b.evaluations);
        assert_eq!(a.loss_traces, b.loss_traces);
        assert_eq!(a.evaluations.len(), cfg.evaluation.pipelines.len());
        let perfect = a.evaluation("rank-as-prerank").unwrap();
        assert!(perfect.grid.iter().all(|g| g.rcs_macro == 1.0 && g.rcs_micro == 1.0));
        assert!(a.evaluation("ltr").unwrap().calibration.is_none());
        let diag = a.diagnosis.unwrap();
        assert_eq!(diag.rows.last().unwrap().rcs_after, 1.0);
        let small = &a.models["logloss-small"];
        assert!((small.meta.mask_fraction - 0.1).abs() < 0.05);
        assert_eq!(a.models["ltr"].meta.chunk_boundary, Some(3));
    }

    #[test]
    fn teacher_dataset_counts() {
        let cfg = tiny_config();
        let world = World::generate(cfg.world.clone()).unwrap();
        let requests = world.requests(Stream::Train).unwrap();
        let data = teacher_dataset(&world, &requests, 20).unwrap();
        assert_eq!(data.len(), 60 * 20);
        assert!(teacher_dataset(&world, &requests, 41).is_err());
    }

    #[test]
    fn ltr_groups_follow_the_target_order() {
        let cfg = tiny_config();
        let world = World::generate(cfg.world.clone()).unwrap();
        let requests = world.requests(Stream::Train).unwrap();
        let mut models = ModelSet::new();
        let teacher = train_tier(&cfg, cfg.teacher().unwrap(), &world, &requests, TierInputs::default()).unwrap();
        models.insert("rank".into(), teacher.checkpoint);
        let exposure = build_pipeline(&cfg, &cfg.pipeline_spec("rank-as-prerank").unwrap(), &models).unwrap();
        let logs = training_logs(&exposure, &world, &requests).unwrap();
        assert_eq!(logs.service.len(), 60 * 10);
        assert_eq!(logs.simulator.len(), 60 * 10);
        assert_eq!(logs.exposures.len(), 60 * 3);
        let Dataset::Groups(groups) = ltr_dataset(&world, &requests, &logs.service, &logs.simulator, &cfg.fusion, ChunkScheme::Boundary(3)).unwrap() else {
            panic!("expected groups")
        };
        assert_eq!(groups.len(), 60);
        let g = &groups[0];
        let labels: Vec<u32> = g.members.iter().map(|m| m.1).collect();
        assert_eq!(labels, [2, 2, 2, 1, 1, 1, 1, 1, 1, 1]);
        // ordering by the target, recomputed independently from the simulator log
        let req = requests[g.user as usize].request_id;
        let target = |item: u32| {
            let r = logs
                .simulator
                .iter()
                .find(|r| r.request_id == req && r.item_id == u64::from(item))
                .unwrap();
            r.scores["pctr"] * r.scores["bid"] / world.corpus[item as usize].init_bid
        };
        assert!(g.members.windows(2).all(|w| target(w[0].0) >= target(w[1].0)));
    }

    #[test]
    fn fixture_logs_reproduce_the_toy_table() {
        let item = |id, pre_bid, pre_ctr, rank_bid, rank_ctr| FixtureItem {
            item_id: id,
            prerank: [("bid".to_string(), pre_bid), ("pctr".to_string(), pre_ctr)].into(),
            rank: [("bid".to_string(), rank_bid), ("pctr".to_string(), rank_ctr)].into(),
        };
        let fixture = FixtureConfig {
            request_id: 0,
            items: vec![item(1, 8.0, 0.4, 8.0, 0.2), item(2, 6.0, 0.5, 6.0, 0.5), item(3, 4.0, 0.6, 4.0, 0.8)],
        };
        let (service, sim) = fixture_logs(&fixture, &FusionConfig::default()).unwrap();
        let g: Vec<f64> = service.iter().map(|r| r.g_score).collect();
        assert_eq!(g, [3.2, 3.0, 2.4]);
        let g: Vec<(u64, f64)> = sim.iter().map(|r| (r.item_id, r.g_score)).collect();
        assert_eq!(g, [(3, 3.2), (2, 3.0), (1, 1.6)]);
    }
}
