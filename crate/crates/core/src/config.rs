//! Experiment configuration (TOML) and pipeline specifications.
//!
//! A pipeline spec names the pre-ranking source of every fused objective;
//! the ranking stage is always `opt` bid times the teacher tier.
//!
//! * `logloss` — shorthand for `bid=init,pctr=logloss`
//! * `rank-as-prerank` — the ranking stage copied into pre-ranking
//! * `bid=opt,pctr=distill*2` — explicit sources; `*λ` rescales a model

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::BidKind;
use crate::domain::{FusionRule, ItemId};
use crate::error::{Error, Result};
use crate::metrics::RcsMode;
use crate::model::TrainConfig;
use crate::world::WorldConfig;

/// Pipeline spec that serves the ranking stage at pre-ranking.
pub const RANK_AS_PRERANK: &str = "rank-as-prerank";

const DEFAULT_TOML: &str = include_str!("../configs/default.toml");

/// Which samples a tier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingSet {
    /// Clicks drawn from the true CTR over a sample of the whole pre-ranking
    /// set (the teacher's oracle-rich regime).
    PrerankingLabels,
    /// Clicked exposures of the win set.
    WinSet,
    /// The competitive set with teacher scores attached.
    CompetitiveSet,
}

impl TrainingSet {
    pub fn name(self) -> &'static str {
        match self {
            TrainingSet::PrerankingLabels => "preranking-labels",
            TrainingSet::WinSet => "win-set",
            TrainingSet::CompetitiveSet => "competitive-set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    pub name: String,
    /// Share of feature coordinates the tier may see; masks are nested.
    pub mask_fraction: f64,
    /// Hidden layer widths.
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub data: TrainingSet,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Objective scored by a bid source.
    pub bid: String,
    /// Objective scored by a learned model.
    pub model: String,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            bid: "bid".into(),
            model: "pctr".into(),
        }
    }
}

impl FusionConfig {
    /// eCPM-style product, bid first.
    pub fn rule(&self) -> Result<FusionRule> {
        FusionRule::product([self.bid.clone(), self.model.clone()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Pre-ranking items labelled per training request for the teacher.
    pub teacher_items_per_request: usize,
    /// Pipeline whose win sets produce the exposure log and whose
    /// competitive sets feed distillation and LTR.
    pub exposure_pipeline: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            teacher_items_per_request: 100,
            exposure_pipeline: RANK_AS_PRERANK.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Tier that serves as the ranking model.
    pub teacher: String,
    pub k_grid: Vec<usize>,
    pub c_grid: Vec<usize>,
    pub mode: RcsMode,
    pub ece_buckets: usize,
    pub histogram_buckets: usize,
    /// Pipelines simulated and reported, in report order.
    pub pipelines: Vec<String>,
    pub diagnose_pipeline: String,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            teacher: "rank".into(),
            k_grid: vec![10],
            c_grid: vec![20, 50, 100],
            mode: RcsMode::Macro,
            ece_buckets: crate::metrics::DEFAULT_BUCKETS,
            histogram_buckets: crate::metrics::DEFAULT_BUCKETS,
            pipelines: Vec::new(),
            diagnose_pipeline: "logloss".into(),
        }
    }
}

/// One hand-set item of a fixture world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureItem {
    pub item_id: ItemId,
    pub prerank: BTreeMap<String, f64>,
    pub rank: BTreeMap<String, f64>,
}

/// A single request with hand-set scores, such as the three-ad toy example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureConfig {
    pub request_id: u64,
    pub items: Vec<FixtureItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub tiers: Vec<TierConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub fixture: Option<FixtureConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The shipped default experiment (`configs/default.toml`).
    pub fn default_experiment() -> Self {
        Self::from_toml(DEFAULT_TOML).expect("bundled default config is valid")
    }

    /// Parse and validate. The top-level seed is copied into the world.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("config byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.world.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Replace the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.world.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tier(&self, name: &str) -> Result<&TierConfig> {
        self.tiers
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::config("tiers", format!("no tier named `{name}`")))
    }

    pub fn teacher(&self) -> Result<&TierConfig> {
        self.tier(&self.evaluation.teacher)
    }

    /// Parse a pipeline spec against this config's tiers and objectives.
    pub fn pipeline_spec(&self, spec: &str) -> Result<PipelineSpec> {
        PipelineSpec::parse(spec, &self.fusion, &self.evaluation.teacher, &self.tier_names())
    }

    pub fn tier_names(&self) -> Vec<String> {
        self.tiers.iter().map(|t| t.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.rule()?;
        if let Some(fixture) = &self.fixture {
            return validate_fixture(fixture, &self.fusion);
        }
        self.world.validate()?;
        let mut seen = BTreeSet::new();
        for (i, t) in self.tiers.iter().enumerate() {
            let path = format!("tiers[{i}]");
            if t.name.is_empty() || t.name.contains(['=', ',', '*', '/']) {
                return Err(Error::config(
                    format!("{path}.name"),
                    format!("`{}` is not a valid tier name", t.name),
                ));
            }
            if ["init", "opt", RANK_AS_PRERANK].contains(&t.name.as_str()) {
                return Err(Error::config(format!("{path}.name"), format!("`{}` is reserved", t.name)));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(Error::config(format!("{path}.name"), format!("duplicate tier `{}`", t.name)));
            }
            if !(0.0..=1.0).contains(&t.mask_fraction) {
                return Err(Error::config(format!("{path}.mask_fraction"), "must lie in [0, 1]"));
            }
            if t.hidden.contains(&0) {
                return Err(Error::config(format!("{path}.hidden"), "layer widths must be positive"));
            }
            t.train.validate(&format!("{path}.train"))?;
            if t.train.epochs < 1 {
                return Err(Error::config(format!("{path}.train.epochs"), "must be at least 1"));
            }
            let consistent = matches!(
                (t.data, t.train.loss_kind),
                (TrainingSet::PrerankingLabels | TrainingSet::WinSet, crate::model::LossKind::Logloss)
                    | (TrainingSet::CompetitiveSet, crate::model::LossKind::Distill | crate::model::LossKind::Ranknet)
            );
            if !consistent {
                return Err(Error::config(
                    format!("{path}.data"),
                    format!(
                        "training set `{}` does not fit loss `{}`",
                        t.data.name(),
                        t.train.loss_kind.name()
                    ),
                ));
            }
            if t.train.loss_kind == crate::model::LossKind::Ranknet && t.train.chunks > self.world.sizes.c {
                return Err(Error::config(
                    format!("{path}.train.chunks"),
                    format!("more chunks than competitive-set items ({})", self.world.sizes.c),
                ));
            }
        }
        let teacher = self
            .tiers
            .iter()
            .find(|t| t.name == self.evaluation.teacher)
            .ok_or_else(|| {
                Error::config(
                    "evaluation.teacher",
                    format!("teacher tier `{}` is not defined", self.evaluation.teacher),
                )
            })?;
        if teacher.data != TrainingSet::PrerankingLabels {
            return Err(Error::config(
                "evaluation.teacher",
                "the teacher must be trained on preranking-labels",
            ));
        }
        if self.data.teacher_items_per_request < 1 || self.data.teacher_items_per_request > self.world.sizes.n {
            return Err(Error::config(
                "data.teacher_items_per_request",
                format!("must lie in 1..={}", self.world.sizes.n),
            ));
        }
        let exposure = self.pipeline_spec(&self.data.exposure_pipeline).map_err(|e| at("data.exposure_pipeline", e))?;
        if exposure.tiers().iter().any(|t| self.tier(t).map(|c| c.data != TrainingSet::PrerankingLabels).unwrap_or(true)) {
            return Err(Error::config(
                "data.exposure_pipeline",
                "may only use bids and preranking-labels tiers",
            ));
        }
        let e = &self.evaluation;
        if e.k_grid.is_empty() || e.c_grid.is_empty() {
            return Err(Error::config("evaluation.k_grid", "k and c grids must be non-empty"));
        }
        for (i, &k) in e.k_grid.iter().enumerate() {
            if k < 1 {
                return Err(Error::config(format!("evaluation.k_grid[{i}]"), "must be at least 1"));
            }
        }
        for (i, &c) in e.c_grid.iter().enumerate() {
            if c > self.world.sizes.n {
                return Err(Error::config(
                    format!("evaluation.c_grid[{i}]"),
                    format!("c ({c}) exceeds world.sizes.n ({})", self.world.sizes.n),
                ));
            }
        }
        let kmax = e.k_grid.iter().max().copied().unwrap_or(0);
        let cmin = e.c_grid.iter().min().copied().unwrap_or(0);
        if kmax > cmin {
            return Err(Error::config(
                "evaluation.k_grid",
                format!("k ({kmax}) exceeds the smallest c ({cmin})"),
            ));
        }
        if e.ece_buckets < 1 {
            return Err(Error::config("evaluation.ece_buckets", "must be at least 1"));
        }
        if e.histogram_buckets < 1 {
            return Err(Error::config("evaluation.histogram_buckets", "must be at least 1"));
        }
        for (i, p) in e.pipelines.iter().enumerate() {
            self.pipeline_spec(p).map_err(|err| at(&format!("evaluation.pipelines[{i}]"), err))?;
        }
        self.pipeline_spec(&e.diagnose_pipeline).map_err(|err| at("evaluation.diagnose_pipeline", err))?;
        Ok(())
    }
}

fn at(field: &str, e: Error) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(field, message),
        other => other,
    }
}

fn validate_fixture(f: &FixtureConfig, fusion: &FusionConfig) -> Result<()> {
    if f.items.is_empty() {
        return Err(Error::config("fixture.items", "must list at least one item"));
    }
    let objectives: BTreeSet<&str> = [fusion.bid.as_str(), fusion.model.as_str()].into();
    let mut ids = BTreeSet::new();
    for (i, item) in f.items.iter().enumerate() {
        if !ids.insert(item.item_id) {
            return Err(Error::config(format!("fixture.items[{i}].item_id"), "duplicate item id"));
        }
        for (stage, scores) in [("prerank", &item.prerank), ("rank", &item.rank)] {
            let names: BTreeSet<&str> = scores.keys().map(String::as_str).collect();
            if names != objectives {
                return Err(Error::config(
                    format!("fixture.items[{i}].{stage}"),
                    format!("objectives {names:?} do not match fusion {objectives:?}"),
                ));
            }
            if scores.values().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("fixture.items[{i}].{stage}"), "scores must be finite"));
            }
        }
    }
    Ok(())
}

/// Pre-ranking source of one objective.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Bid(BidKind),
    Model { tier: String, scale: f64 },
}

impl SourceSpec {
    fn parse(text: &str, tiers: &[String]) -> Result<Self> {
        match text {
            "init" => return Ok(SourceSpec::Bid(BidKind::Init)),
            "opt" => return Ok(SourceSpec::Bid(BidKind::Opt)),
            _ => {}
        }
        let (tier, scale) = match text.split_once('*') {
            Some((tier, scale)) => {
                let scale: f64 = scale
                    .parse()
                    .map_err(|_| Error::config("pipeline", format!("bad scale factor in `{text}`")))?;
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config("pipeline", format!("scale factor in `{text}` must be positive")));
                }
                (tier, scale)
            }
            None => (text, 1.0),
        };
        if !tiers.iter().any(|t| t == tier) {
            return Err(Error::config("pipeline", format!("unknown source `{tier}` (tiers: {tiers:?})")));
        }
        Ok(SourceSpec::Model {
            tier: tier.to_string(),
            scale,
        })
    }
}

/// Parsed pipeline: the pre-ranking source per objective plus the fixed
/// ranking stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    /// The spec text as written.
    pub name: String,
    pub prerank: BTreeMap<String, SourceSpec>,
    pub rank: BTreeMap<String, SourceSpec>,
}

impl PipelineSpec {
    pub fn parse(spec: &str, fusion: &FusionConfig, teacher: &str, tiers: &[String]) -> Result<Self> {
        let rank: BTreeMap<String, SourceSpec> = [
            (fusion.bid.clone(), SourceSpec::Bid(BidKind::Opt)),
            (
                fusion.model.clone(),
                SourceSpec::Model {
                    tier: teacher.to_string(),
                    scale: 1.0,
                },
            ),
        ]
        .into();
        let prerank = if spec == RANK_AS_PRERANK {
            rank.clone()
        } else if !spec.contains('=') {
            [
                (fusion.bid.clone(), SourceSpec::Bid(BidKind::Init)),
                (fusion.model.clone(), SourceSpec::parse(spec, tiers)?),
            ]
            .into()
        } else {
            let mut out = BTreeMap::new();
            for part in spec.split(',') {
                let (objective, source) = part
                    .split_once('=')
                    .ok_or_else(|| Error::config("pipeline", format!("expected objective=source, got `{part}`")))?;
                if objective != fusion.bid && objective != fusion.model {
                    return Err(Error::config("pipeline", format!("unknown objective `{objective}`")));
                }
                if out.insert(objective.to_string(), SourceSpec::parse(source, tiers)?).is_some() {
                    return Err(Error::config("pipeline", format!("objective `{objective}` assigned twice")));
                }
            }
            if out.len() != 2 {
                return Err(Error::config(
                    "pipeline",
                    format!("`{spec}` must assign both `{}` and `{}`", fusion.bid, fusion.model),
                ));
            }
            out
        };
        Ok(PipelineSpec {
            name: spec.to_string(),
            prerank,
            rank,
        })
    }

    /// Model tiers the pipeline needs, ranking stage included.
    pub fn tiers(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .prerank
            .values()
            .chain(self.rank.values())
            .filter_map(|s| match s {
                SourceSpec::Model { tier, .. } => Some(tier.clone()),
                SourceSpec::Bid(_) => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// Filesystem-safe name, e.g. `bid=opt,pctr=logloss*2` ->
    /// `bid-opt_pctr-logloss-x2`.
    pub fn slug(&self) -> String {
        slug(&self.name)
    }
}

pub fn slug(spec: &str) -> String {
    spec.chars()
        .map(|ch| match ch {
            '=' => "-".to_string(),
            ',' => "_".to_string(),
            '*' => "-x".to_string(),
            c if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' => c.to_string(),
            _ => "~".to_string(),
        })
        .collect()
}
