//! File-backed commands behind the `cascade` binary.
//!
//! Every command is a pure function of the config and the files that earlier
//! commands left under the output directory:
//!
//! ```text
//! <out>/world/{manifest.json, corpus.jsonl, truth.json, requests_train.jsonl, requests_eval.jsonl}
//! <out>/models/<tier>.ckpt, <out>/models/<tier>.loss.csv
//! <out>/logs/<stream>/<pipeline>/{service, simulator, clicks}.jsonl
//! <out>/eval/<pipeline>/{metrics, calibration, histograms}.csv
//! <out>/diagnose/<pipeline>.csv
//! <out>/report/{summary.csv, summary.md, rcs_trend.svg, histograms_<pipeline>.svg}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::run_stream;
use crate::config::{slug, ExperimentConfig, TrainingSet};
use crate::domain::Request;
use crate::error::{Error, Result};
use crate::experiment::{
    build_pipeline, diagnose_pipeline, eval_clicks, evaluate_logs, fixture_logs, train_tier, training_logs,
    training_order, EvalParams, ModelSet, TierInputs, TrainingLogs,
};
use crate::logs;
use crate::metrics::RcsMode;
use crate::model::Checkpoint;
use crate::report;
use crate::world::{GroundTruth, Stream, World};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "CASCADE_OUT_DIR";
/// Log directory name used for fixture configs.
pub const FIXTURE_PIPELINE: &str = "fixture";

/// A loaded config plus the directory all artifacts live under.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Self {
        Context { cfg, out: out.into() }
    }

    /// Load a config (or the bundled default), apply a seed override and pick
    /// the output directory: explicit flag, then `CASCADE_OUT_DIR`, then the
    /// config's `output_dir`.
    pub fn load(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = match config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default_experiment(),
        };
        if let Some(seed) = seed {
            cfg = cfg.with_seed(seed);
        }
        let out = out
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Context { cfg, out })
    }

    pub fn world_dir(&self) -> PathBuf {
        self.out.join("world")
    }

    pub fn checkpoint_path(&self, tier: &str) -> PathBuf {
        self.out.join("models").join(format!("{tier}.ckpt"))
    }

    pub fn loss_path(&self, tier: &str) -> PathBuf {
        self.out.join("models").join(format!("{tier}.loss.csv"))
    }

    pub fn log_dir(&self, stream: Stream, pipeline: &str) -> PathBuf {
        self.out.join("logs").join(stream.name()).join(slug(pipeline))
    }

    pub fn eval_dir(&self, pipeline: &str) -> PathBuf {
        self.out.join("eval").join(slug(pipeline))
    }

    pub fn diagnosis_path(&self, pipeline: &str) -> PathBuf {
        self.out.join("diagnose").join(format!("{}.csv", slug(pipeline)))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    /// Pipelines evaluated and reported, in config order.
    pub fn pipelines(&self) -> Vec<String> {
        if self.cfg.fixture.is_some() {
            vec![FIXTURE_PIPELINE.to_string()]
        } else {
            self.cfg.evaluation.pipelines.clone()
        }
    }
}

fn missing(path: &Path, hint: impl Into<String>) -> Error {
    Error::MissingPrerequisite {
        path: path.to_path_buf(),
        hint: hint.into(),
    }
}

fn require(path: &Path, hint: impl Into<String>) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(path, hint))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Seed, world settings and SHA-256 digests of every generated file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    /// The world section the files were generated from; `null` for fixtures.
    pub world: serde_json::Value,
    pub files: BTreeMap<String, String>,
}

fn world_json(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    if cfg.fixture.is_some() {
        return Ok(serde_json::Value::Null);
    }
    serde_json::to_value(&cfg.world).map_err(|e| Error::data(format!("world config does not serialize: {e}")))
}

/// File names in the manifest are relative to the output directory.
fn write_manifest(ctx: &Context, files: &[PathBuf]) -> Result<Manifest> {
    let cfg = &ctx.cfg;
    let mut digests = BTreeMap::new();
    for f in files {
        let name = f
            .strip_prefix(&ctx.out)
            .unwrap_or(f)
            .to_string_lossy()
            .replace('\\', "/");
        digests.insert(name, digest(f)?);
    }
    let manifest = Manifest {
        seed: cfg.seed,
        world: world_json(cfg)?,
        files: digests,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::data(e.to_string()))?;
    text.push('\n');
    write_file(&ctx.world_dir().join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

fn requests_file(stream: Stream) -> String {
    format!("requests_{}.jsonl", stream.name())
}

/// Write the world files (or, for a fixture config, the fixture logs) and
/// a manifest with their digests.
pub fn cmd_generate(ctx: &Context) -> Result<Manifest> {
    ctx.cfg.validate()?;
    if let Some(fixture) = &ctx.cfg.fixture {
        let (service, simulator) = fixture_logs(fixture, &ctx.cfg.fusion)?;
        let logs_dir = ctx.log_dir(Stream::Eval, FIXTURE_PIPELINE);
        let files = [
            logs_dir.join("service.jsonl"),
            logs_dir.join("simulator.jsonl"),
            logs_dir.join("clicks.jsonl"),
        ];
        logs::write_service_log(&files[0], &service)?;
        logs::write_simulator_log(&files[1], &simulator)?;
        logs::write_exposure_log(&files[2], &[])?;
        return write_manifest(ctx, &files);
    }
    let dir = ctx.world_dir();
    let world = World::generate(ctx.cfg.world.clone())?;
    let corpus = dir.join("corpus.jsonl");
    logs::write_lines(&corpus, world.corpus.iter().map(logs::item_line))?;
    let truth = dir.join("truth.json");
    let mut text = serde_json::to_string_pretty(&world.truth).map_err(|e| Error::data(e.to_string()))?;
    text.push('\n');
    write_file(&truth, text.as_bytes())?;
    let mut files = vec![corpus, truth];
    for stream in [Stream::Train, Stream::Eval] {
        let path = dir.join(requests_file(stream));
        logs::write_lines(&path, world.requests(stream)?.iter().map(logs::request_line))?;
        files.push(path);
    }
    write_manifest(ctx, &files)
}

const GENERATE_HINT: &str = "run `cascade generate` first";

/// Read the world files back, checking they belong to this config.
pub fn load_world(ctx: &Context) -> Result<World> {
    let dir = ctx.world_dir();
    let manifest_path = dir.join("manifest.json");
    require(&manifest_path, GENERATE_HINT)?;
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", manifest_path.display())))?;
    if manifest.seed != ctx.cfg.seed || manifest.world != world_json(&ctx.cfg)? {
        return Err(Error::data(format!(
            "{} was generated from a different config (seed {} vs {}); rerun `cascade generate`",
            dir.display(),
            manifest.seed,
            ctx.cfg.seed
        )));
    }
    for (name, want) in &manifest.files {
        let path = ctx.out.join(name);
        require(&path, GENERATE_HINT)?;
        if &digest(&path)? != want {
            return Err(Error::data(format!(
                "{} does not match its manifest digest; rerun `cascade generate`",
                path.display()
            )));
        }
    }
    let corpus = logs::read_corpus(&dir.join("corpus.jsonl"))?;
    let truth_path = dir.join("truth.json");
    let text = std::fs::read_to_string(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    let truth: GroundTruth =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", truth_path.display())))?;
    World::from_parts(ctx.cfg.world.clone(), corpus, truth)
}

pub fn load_requests(ctx: &Context, stream: Stream) -> Result<Vec<Request>> {
    let path = ctx.world_dir().join(requests_file(stream));
    require(&path, GENERATE_HINT)?;
    logs::read_requests(&path)
}

fn no_fixture(ctx: &Context, verb: &str) -> Result<()> {
    if ctx.cfg.fixture.is_some() {
        return Err(Error::config(
            "fixture",
            format!("`{verb}` needs a generated world; fixture configs support generate, evaluate and report"),
        ));
    }
    Ok(())
}

/// Load the checkpoints a set of tiers needs.
pub fn load_models<'a>(ctx: &Context, tiers: impl IntoIterator<Item = &'a String>) -> Result<ModelSet> {
    let mut models = ModelSet::new();
    for tier in tiers {
        let path = ctx.checkpoint_path(tier);
        require(&path, format!("run `cascade train --tier {tier}` first"))?;
        models.insert(tier.clone(), Checkpoint::load(&path)?);
    }
    Ok(models)
}

fn pipeline_models(ctx: &Context, spec: &str) -> Result<ModelSet> {
    let spec = ctx.cfg.pipeline_spec(spec)?;
    load_models(ctx, &spec.tiers())
}

fn read_training_logs(ctx: &Context) -> Result<TrainingLogs> {
    let pipeline = &ctx.cfg.data.exposure_pipeline;
    let dir = ctx.log_dir(Stream::Train, pipeline);
    let hint = format!("run `cascade simulate --pipeline {pipeline} --stream train` first");
    let paths = ["service.jsonl", "simulator.jsonl", "clicks.jsonl"].map(|f| dir.join(f));
    for p in &paths {
        require(p, hint.clone())?;
    }
    Ok(TrainingLogs {
        service: logs::read_service_log(&paths[0])?,
        simulator: logs::read_simulator_log(&paths[1])?,
        exposures: logs::read_exposure_log(&paths[2])?,
    })
}

fn write_training_logs(dir: &Path, logs_: &TrainingLogs) -> Result<()> {
    logs::write_service_log(&dir.join("service.jsonl"), &logs_.service)?;
    logs::write_simulator_log(&dir.join("simulator.jsonl"), &logs_.simulator)?;
    logs::write_exposure_log(&dir.join("clicks.jsonl"), &logs_.exposures)
}

/// What one tier's training produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub tier: String,
    pub checkpoint: PathBuf,
    pub samples: usize,
    pub loss_trace: Vec<f64>,
}

fn train_one(ctx: &Context, world: &World, requests: &[Request], tier_name: &str) -> Result<TrainSummary> {
    let cfg = &ctx.cfg;
    let tier = cfg.tier(tier_name)?;
    let needs_logs = tier.data != TrainingSet::PrerankingLabels;
    let logs_ = if needs_logs { Some(read_training_logs(ctx)?) } else { None };
    let needs_teacher = tier.train.loss_kind == crate::model::LossKind::Distill;
    let teacher = if needs_teacher {
        Some(load_models(ctx, [&cfg.evaluation.teacher])?)
    } else {
        None
    };
    let inputs = TierInputs {
        teacher: teacher
            .as_ref()
            .and_then(|m| m.get(&cfg.evaluation.teacher))
            .map(|c| &c.predictor),
        logs: logs_.as_ref(),
    };
    let trained = train_tier(cfg, tier, world, requests, inputs)?;
    let path = ctx.checkpoint_path(tier_name);
    write_file(&path, &trained.checkpoint.to_bytes())?;
    report::write_loss_trace_csv(&ctx.loss_path(tier_name), &trained.loss_trace)?;
    Ok(TrainSummary {
        tier: tier_name.to_string(),
        checkpoint: path,
        samples: trained.checkpoint.meta.training_samples,
        loss_trace: trained.loss_trace,
    })
}

/// Train one tier, or with `tier = None` every tier in training order,
/// simulating the exposure pipeline's training logs when they are absent.
pub fn cmd_train(ctx: &Context, tier: Option<&str>) -> Result<Vec<TrainSummary>> {
    ctx.cfg.validate()?;
    no_fixture(ctx, "train")?;
    let world = load_world(ctx)?;
    let requests = load_requests(ctx, Stream::Train)?;
    if let Some(tier) = tier {
        return Ok(vec![train_one(ctx, &world, &requests, tier)?]);
    }
    let mut out = Vec::new();
    for t in training_order(&ctx.cfg) {
        let needs_logs = t.data != TrainingSet::PrerankingLabels;
        let log_dir = ctx.log_dir(Stream::Train, &ctx.cfg.data.exposure_pipeline);
        if needs_logs && !log_dir.join("clicks.jsonl").exists() {
            cmd_simulate(ctx, &ctx.cfg.data.exposure_pipeline, Stream::Train)?;
        }
        out.push(train_one(ctx, &world, &requests, &t.name)?);
    }
    Ok(out)
}

/// Counts of what a simulation wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub pipeline: String,
    pub dir: PathBuf,
    pub requests: usize,
    pub service_records: usize,
    pub simulator_records: usize,
    pub clicks: usize,
}

/// Simulate one pipeline over a request stream. The training stream keeps
/// competitive-set records only (what distillation and LTR train on); the
/// evaluation stream keeps every pre-ranking item.
pub fn cmd_simulate(ctx: &Context, pipeline: &str, stream: Stream) -> Result<SimulateSummary> {
    ctx.cfg.validate()?;
    no_fixture(ctx, "simulate")?;
    let world = load_world(ctx)?;
    let requests = load_requests(ctx, stream)?;
    let models = pipeline_models(ctx, pipeline)?;
    let built = build_pipeline(&ctx.cfg, &ctx.cfg.pipeline_spec(pipeline)?, &models)?;
    let logs_ = match stream {
        Stream::Train => training_logs(&built, &world, &requests)?,
        Stream::Eval => {
            let run = run_stream(&built, &world, &requests)?;
            TrainingLogs {
                service: run.service_records(),
                simulator: run.simulator_records(),
                exposures: eval_clicks(&world, &requests, &run)?,
            }
        }
    };
    let dir = ctx.log_dir(stream, pipeline);
    write_training_logs(&dir, &logs_)?;
    Ok(SimulateSummary {
        pipeline: pipeline.to_string(),
        dir,
        requests: requests.len(),
        service_records: logs_.service.len(),
        simulator_records: logs_.simulator.len(),
        clicks: logs_.exposures.len(),
    })
}

/// Optional `(k, c)` grid overrides for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridOverride {
    pub k: Option<Vec<usize>>,
    pub c: Option<Vec<usize>>,
}

fn eval_params(ctx: &Context, grid: &GridOverride) -> Result<EvalParams> {
    let mut params = EvalParams::from_config(&ctx.cfg);
    if let Some(k) = &grid.k {
        params.k_grid = k.clone();
    }
    if let Some(c) = &grid.c {
        params.c_grid = c.clone();
    }
    if params.k_grid.is_empty() || params.c_grid.is_empty() {
        return Err(Error::config("--k/--c", "grids must be non-empty"));
    }
    if let Some(i) = params.k_grid.iter().position(|&k| k < 1) {
        return Err(Error::config(format!("--k[{i}]"), "must be at least 1"));
    }
    if let Some(i) = params.c_grid.iter().position(|&c| c > params.sizes.n) {
        return Err(Error::config(
            format!("--c[{i}]"),
            format!("c ({}) exceeds world.sizes.n ({})", params.c_grid[i], params.sizes.n),
        ));
    }
    Ok(params)
}

/// Evaluate the simulated evaluation logs of each pipeline (all configured
/// pipelines when `pipeline` is `None`) and write the metric CSVs.
pub fn cmd_evaluate(
    ctx: &Context,
    pipeline: Option<&str>,
    grid: &GridOverride,
) -> Result<Vec<crate::experiment::PipelineEvaluation>> {
    ctx.cfg.validate()?;
    let params = eval_params(ctx, grid)?;
    let pipelines = match pipeline {
        Some(p) => vec![p.to_string()],
        None => ctx.pipelines(),
    };
    let mut out = Vec::new();
    for p in pipelines {
        let dir = ctx.log_dir(Stream::Eval, &p);
        let hint = if ctx.cfg.fixture.is_some() {
            "run `cascade generate` first".to_string()
        } else {
            format!("run `cascade simulate --pipeline {p}` first")
        };
        let paths = ["service.jsonl", "simulator.jsonl", "clicks.jsonl"].map(|f| dir.join(f));
        for path in &paths {
            require(path, hint.clone())?;
        }
        let service = logs::read_service_log(&paths[0])?;
        let simulator = logs::read_simulator_log(&paths[1])?;
        let clicks = logs::read_exposure_log(&paths[2])?;
        let evaluation = evaluate_logs(&p, &service, &simulator, &clicks, &params)?;
        let eval_dir = ctx.eval_dir(&p);
        report::write_metrics_csv(&eval_dir.join("metrics.csv"), &report::metric_rows(&evaluation))?;
        report::write_calibration_csv(&eval_dir.join("calibration.csv"), &evaluation)?;
        report::write_histograms_csv(&eval_dir.join("histograms.csv"), &report::histogram_rows(&evaluation))?;
        out.push(evaluation);
    }
    Ok(out)
}

/// Substitution diagnosis of a pipeline (default: the configured one).
pub fn cmd_diagnose(ctx: &Context, pipeline: Option<&str>) -> Result<crate::metrics::DiagnosisTable> {
    ctx.cfg.validate()?;
    no_fixture(ctx, "diagnose")?;
    let pipeline = pipeline.unwrap_or(&ctx.cfg.evaluation.diagnose_pipeline);
    let world = load_world(ctx)?;
    let requests = load_requests(ctx, Stream::Eval)?;
    let models = pipeline_models(ctx, pipeline)?;
    let table = diagnose_pipeline(&ctx.cfg, &world, &models, pipeline, &requests)?;
    report::write_diagnosis_csv(&ctx.diagnosis_path(pipeline), &table)?;
    Ok(table)
}

/// Files written by the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub rows: Vec<report::SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Summary table and plots from the evaluation CSVs of every configured
/// pipeline, in config order.
pub fn cmd_report(ctx: &Context) -> Result<ReportSummary> {
    ctx.cfg.validate()?;
    let pipelines = ctx.pipelines();
    let absent: Vec<String> = pipelines
        .iter()
        .flat_map(|p| ["metrics.csv", "histograms.csv"].map(|f| ctx.eval_dir(p).join(f)))
        .filter(|f| !f.exists())
        .map(|f| f.display().to_string())
        .collect();
    if !absent.is_empty() {
        return Err(missing(
            &ctx.out.join("eval"),
            format!("run `cascade evaluate` first; absent: {}", absent.join(", ")),
        ));
    }
    let objectives = vec![ctx.cfg.fusion.bid.clone(), ctx.cfg.fusion.model.clone()];
    let mode_metric = match ctx.cfg.evaluation.mode {
        RcsMode::Macro => "rcs_macro",
        RcsMode::Micro => "rcs_micro",
    };
    let dir = ctx.report_dir();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for p in &pipelines {
        let metrics = report::read_metrics_csv(&ctx.eval_dir(p).join("metrics.csv"))?;
        rows.push(report::SummaryRow::from_metrics(p, &metrics, &objectives, mode_metric)?);
        let hist = report::read_histograms_csv(&ctx.eval_dir(p).join("histograms.csv"))?;
        let path = dir.join(format!("histograms_{}.svg", slug(p)));
        write_file(&path, report::histogram_svg(&format!("{p}: pre-rank vs rank scores"), &hist).as_bytes())?;
        files.push(path);
    }
    let summary = dir.join("summary.csv");
    report::write_summary_csv(&summary, &rows)?;
    let md = dir.join("summary.md");
    write_file(&md, report::summary_markdown(&rows).as_bytes())?;
    let trend = dir.join("rcs_trend.svg");
    write_file(&trend, report::trend_svg("RCS by pre-ranking pipeline", &rows).as_bytes())?;
    files.splice(0..0, [summary, md, trend]);
    Ok(ReportSummary { rows, files })
}
