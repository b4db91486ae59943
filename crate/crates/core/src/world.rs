//! Synthetic ad world: corpus, request streams, the hidden click model and
//! the optimized-bid multiplier.
//!
//! The click model is logistic in the interaction features
//! `phi(u, x) = [u, x, u[..p] * x[..p]]` with `p = min(d_u, d)`. The
//! product block makes the true CTR depend on the user/item pairing and not
//! only on the item, so models that see few features fall measurably behind.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{run_request, Pipeline};
use crate::domain::{Item, ItemId, Request, RequestId, StageSizes};
use crate::error::{Error, Result};
use crate::rng;

/// Lower/upper guard on probabilities produced by the world.
pub const PROB_EPS: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Feature-combination map applied to `(user, item)` before any model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    /// `[u, x]`
    Concat,
    /// `[u, x, u[..p] * x[..p]]`
    #[default]
    ConcatProduct,
}

impl Interaction {
    pub fn output_dim(self, d_u: usize, d: usize) -> usize {
        match self {
            Interaction::Concat => d_u + d,
            Interaction::ConcatProduct => d_u + d + d_u.min(d),
        }
    }

    /// Write `phi(user, item)` into `out`, which must have `output_dim` entries.
    pub fn apply_into(self, user: &[f64], item: &[f64], out: &mut [f64]) {
        let (du, d) = (user.len(), item.len());
        debug_assert_eq!(out.len(), self.output_dim(du, d));
        out[..du].copy_from_slice(user);
        out[du..du + d].copy_from_slice(item);
        if self == Interaction::ConcatProduct {
            for (o, (a, b)) in out[du + d..].iter_mut().zip(user.iter().zip(item)) {
                *o = a * b;
            }
        }
    }

    pub fn apply(self, user: &[f64], item: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim(user.len(), item.len())];
        self.apply_into(user, item, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Item feature dimension.
    pub d: usize,
    /// User feature dimension.
    pub d_u: usize,
    pub corpus_size: usize,
    /// Requests in the training stream.
    pub requests_per_epoch: usize,
    /// Requests in the held-out evaluation stream.
    pub eval_requests: usize,
    pub sizes: StageSizes,
    pub seed: u64,
    pub bid_range: (f64, f64),
    #[serde(default)]
    pub interaction: Interaction,
    /// Standard deviation of the true CTR logit over random features.
    pub ctr_logit_scale: f64,
    pub ctr_bias: f64,
    /// Standard deviation of the opt-bid multiplier logit.
    pub opt_logit_scale: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            d: 32,
            d_u: 32,
            corpus_size: 10_000,
            requests_per_epoch: 2_000,
            eval_requests: 500,
            sizes: StageSizes { n: 500, c: 50, k: 10 },
            seed: 7,
            bid_range: (1.0, 10.0),
            interaction: Interaction::ConcatProduct,
            ctr_logit_scale: 1.5,
            ctr_bias: -2.0,
            opt_logit_scale: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::config("world.d", "must be at least 1"));
        }
        if self.d_u < 1 {
            return Err(Error::config("world.d_u", "must be at least 1"));
        }
        self.sizes.validate("world.sizes")?;
        if self.sizes.n > self.corpus_size {
            return Err(Error::config(
                "world.sizes.n",
                format!(
                    "pre-ranking set size world.sizes.n ({}) exceeds world.corpus_size ({})",
                    self.sizes.n, self.corpus_size
                ),
            ));
        }
        let (lo, hi) = self.bid_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "world.bid_range",
                format!("need 0 < lo <= hi, got ({lo}, {hi})"),
            ));
        }
        for (field, v) in [
            ("world.ctr_logit_scale", self.ctr_logit_scale),
            ("world.ctr_bias", self.ctr_bias),
            ("world.opt_logit_scale", self.opt_logit_scale),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn phi_dim(&self) -> usize {
        self.interaction.output_dim(self.d_u, self.d)
    }
}

/// Hidden parameters of the click model and the bid optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub interaction: Interaction,
    pub w_ctr: Vec<f64>,
    pub b_ctr: f64,
    pub w_opt: Vec<f64>,
}

impl GroundTruth {
    pub fn generate(cfg: &WorldConfig) -> Self {
        let dim = cfg.phi_dim();
        let mut rng = rng::stream(cfg.seed, "ground-truth", 0);
        let ctr_sd = cfg.ctr_logit_scale / (dim as f64).sqrt();
        let opt_sd = cfg.opt_logit_scale / (dim as f64).sqrt();
        let w_ctr = (0..dim).map(|_| ctr_sd * normal(&mut rng)).collect();
        let w_opt = (0..dim).map(|_| opt_sd * normal(&mut rng)).collect();
        GroundTruth {
            interaction: cfg.interaction,
            w_ctr,
            b_ctr: cfg.ctr_bias,
            w_opt,
        }
    }

    fn check_dims(&self, user: &[f64], item: &[f64]) -> Result<()> {
        let dim = self.interaction.output_dim(user.len(), item.len());
        if dim != self.w_ctr.len() || dim != self.w_opt.len() {
            return Err(Error::config(
                "world",
                format!(
                    "feature map yields {dim} coordinates but ground truth has {}",
                    self.w_ctr.len()
                ),
            ));
        }
        Ok(())
    }

    /// True click probability `sigmoid(w_ctr . phi + b_ctr)`, strictly inside (0, 1).
    pub fn true_ctr(&self, user: &[f64], item: &[f64]) -> Result<f64> {
        self.check_dims(user, item)?;
        let phi = self.interaction.apply(user, item);
        Ok(self.true_ctr_phi(&phi))
    }

    pub fn true_ctr_phi(&self, phi: &[f64]) -> f64 {
        sigmoid(dot(&self.w_ctr, phi) + self.b_ctr).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    /// `init_bid * (0.5 + 1.5 * sigmoid(w_opt . phi))`.
    pub fn opt_bid(&self, init_bid: f64, user: &[f64], item: &[f64]) -> Result<f64> {
        self.check_dims(user, item)?;
        let phi = self.interaction.apply(user, item);
        Ok(self.opt_bid_phi(init_bid, &phi))
    }

    pub fn opt_bid_phi(&self, init_bid: f64, phi: &[f64]) -> f64 {
        init_bid * opt_multiplier(dot(&self.w_opt, phi))
    }
}

/// Multiplier in the open interval (0.5, 2.0).
pub fn opt_multiplier(logit: f64) -> f64 {
    0.5 + 1.5 * sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gen_corpus(cfg: &WorldConfig) -> Vec<Item> {
    let mut rng = rng::stream(cfg.seed, "corpus", 0);
    let (lo, hi) = cfg.bid_range;
    (0..cfg.corpus_size)
        .map(|i| {
            let features = (0..cfg.d).map(|_| normal(&mut rng)).collect();
            let init_bid = if lo == hi { lo } else { rng.random_range(lo..hi) };
            Item {
                item_id: i as ItemId,
                features,
                init_bid,
            }
        })
        .collect()
}

/// Draw one request: a uniform sample of `n` items without replacement.
pub fn gen_request(
    cfg: &WorldConfig,
    corpus: &[Item],
    request_id: RequestId,
    rng: &mut ChaCha8Rng,
) -> Result<Request> {
    let n = cfg.sizes.n;
    if corpus.is_empty() {
        return Err(Error::config("world.corpus_size", "corpus is empty"));
    }
    if n > corpus.len() {
        return Err(Error::config(
            "world.sizes.n",
            format!("n ({n}) exceeds corpus size ({})", corpus.len()),
        ));
    }
    let user_features = (0..cfg.d_u).map(|_| normal(rng)).collect();
    let preranking_set = rand::seq::index::sample(rng, corpus.len(), n)
        .into_iter()
        .map(|i| corpus[i].item_id)
        .collect();
    Ok(Request {
        request_id,
        user_features,
        preranking_set,
    })
}

/// Which request stream a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Train,
    Eval,
}

impl Stream {
    fn tag(self) -> &'static str {
        match self {
            Stream::Train => "requests-train",
            Stream::Eval => "requests-eval",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Train => "train",
            Stream::Eval => "eval",
        }
    }
}

/// Generate a whole stream. Request ids are disjoint across streams (eval
/// ids start after the training ids) and each request has its own derived
/// seed, so generation order does not matter.
pub fn gen_requests(cfg: &WorldConfig, corpus: &[Item], stream: Stream) -> Result<Vec<Request>> {
    let (offset, count) = match stream {
        Stream::Train => (0, cfg.requests_per_epoch),
        Stream::Eval => (cfg.requests_per_epoch, cfg.eval_requests),
    };
    (0..count)
        .map(|i| {
            let id = (offset + i) as RequestId;
            let mut rng = rng::stream(cfg.seed, stream.tag(), id);
            gen_request(cfg, corpus, id, &mut rng)
        })
        .collect()
}

/// Bernoulli draw; `p` must lie strictly inside (0, 1).
pub fn sample_click(p: f64, rng: &mut ChaCha8Rng) -> Result<bool> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::data(format!("click probability {p} outside (0, 1)")));
    }
    Ok(rng.random::<f64>() < p)
}

/// The generated world: configuration, corpus and hidden ground truth.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub corpus: Vec<Item>,
    pub truth: GroundTruth,
}

impl World {
    pub fn generate(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let corpus = gen_corpus(&config);
        let truth = GroundTruth::generate(&config);
        Ok(World {
            config,
            corpus,
            truth,
        })
    }

    pub fn from_parts(config: WorldConfig, corpus: Vec<Item>, truth: GroundTruth) -> Result<Self> {
        config.validate()?;
        for (i, item) in corpus.iter().enumerate() {
            item.validate(config.d)?;
            if item.item_id != i as ItemId {
                return Err(Error::data(format!(
                    "corpus row {i} has item_id {}; ids must be 0..corpus_size in order",
                    item.item_id
                )));
            }
        }
        if truth.w_ctr.len() != config.phi_dim() || truth.w_opt.len() != config.phi_dim() {
            return Err(Error::data("ground truth dimension does not match world config"));
        }
        Ok(World {
            config,
            corpus,
            truth,
        })
    }

    pub fn item(&self, id: ItemId) -> Result<&Item> {
        self.corpus
            .get(id as usize)
            .ok_or_else(|| Error::data(format!("unknown item_id {id}")))
    }

    pub fn requests(&self, stream: Stream) -> Result<Vec<Request>> {
        gen_requests(&self.config, &self.corpus, stream)
    }

    pub fn phi(&self, user: &[f64], item: &Item) -> Vec<f64> {
        self.config.interaction.apply(user, &item.features)
    }

    /// Seeded generator for click draws of one request.
    pub fn click_rng(&self, request_id: RequestId) -> ChaCha8Rng {
        rng::stream(self.config.seed, "clicks", request_id)
    }
}

/// One exposed item with its sampled click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub request_id: RequestId,
    pub item_id: ItemId,
    pub click: bool,
}

/// Sample one click per win-set item of `req` from the true CTR, using the
/// request's own click stream.
pub fn sample_win_clicks(world: &World, req: &Request, win: &[ItemId]) -> Result<Vec<ExposureRecord>> {
    let mut rng = world.click_rng(req.request_id);
    win.iter()
        .map(|&item_id| {
            let phi = world.phi(&req.user_features, world.item(item_id)?);
            let click = sample_click(world.truth.true_ctr_phi(&phi), &mut rng)?;
            Ok(ExposureRecord {
                request_id: req.request_id,
                item_id,
                click,
            })
        })
        .collect()
}

/// Serve `requests` through `pipeline` and sample one click per win-set item
/// from the true CTR. Features are not copied into the records; they are
/// recovered from the world by id.
pub fn collect_exposure_log(pipeline: &Pipeline, world: &World, requests: &[Request]) -> Result<Vec<ExposureRecord>> {
    pipeline.validate()?;
    let per_request = requests
        .par_iter()
        .map(|req| sample_win_clicks(world, req, &run_request(req, pipeline, world)?.win))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_request.into_iter().flatten().collect())
}
