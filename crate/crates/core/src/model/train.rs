use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{distill_loss, logloss_logit, ranknet_loss};
use super::predictor::{Predictor, Workspace};
use crate::error::{Error, Result};
use crate::rng;
use crate::world::Interaction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logloss,
    Distill,
    Ranknet,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logloss => "logloss",
            LossKind::Distill => "distill",
            LossKind::Ranknet => "ranknet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    /// RankNet chunk count; ignored by the pointwise losses.
    #[serde(default = "default_chunks")]
    pub chunks: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_chunks() -> usize {
    2
}

impl TrainConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("{path}.learning_rate"), "must be positive"));
        }
        if self.batch_size < 1 {
            return Err(Error::config(format!("{path}.batch_size"), "must be at least 1"));
        }
        if self.loss_kind == LossKind::Ranknet && self.chunks < 2 {
            return Err(Error::config(format!("{path}.chunks"), "must be at least 2"));
        }
        Ok(())
    }
}

/// User and item feature rows that training samples refer to by index.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub interaction: Interaction,
    pub users: Vec<Vec<f64>>,
    pub items: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn phi_dim(&self) -> usize {
        let du = self.users.first().map_or(0, Vec::len);
        let d = self.items.first().map_or(0, Vec::len);
        self.interaction.output_dim(du, d)
    }

    pub fn phi_into(&self, user: u32, item: u32, out: &mut Vec<f64>) {
        let (u, x) = (&self.users[user as usize], &self.items[item as usize]);
        out.resize(self.interaction.output_dim(u.len(), x.len()), 0.0);
        self.interaction.apply_into(u, x, out);
    }
}

/// One pointwise example: a click label for logloss or a teacher logit for
/// distillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub user: u32,
    pub item: u32,
    pub target: f64,
}

/// Items of one request with their chunk labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub user: u32,
    pub members: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Pointwise(Vec<Sample>),
    Groups(Vec<Group>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Pointwise(s) => s.len(),
            Dataset::Groups(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, table: &FeatureTable, kind: LossKind) -> Result<()> {
        let (nu, ni) = (table.users.len() as u32, table.items.len() as u32);
        match (self, kind) {
            (Dataset::Pointwise(samples), LossKind::Logloss | LossKind::Distill) => {
                for s in samples {
                    if s.user >= nu || s.item >= ni {
                        return Err(Error::data("sample refers to a missing feature row"));
                    }
                    if !s.target.is_finite() {
                        return Err(Error::data("non-finite training target"));
                    }
                    if kind == LossKind::Logloss && s.target != 0.0 && s.target != 1.0 {
                        return Err(Error::data(format!("logloss label {} not in {{0, 1}}", s.target)));
                    }
                }
                Ok(())
            }
            (Dataset::Groups(groups), LossKind::Ranknet) => {
                for g in groups {
                    if g.user >= nu || g.members.iter().any(|&(i, _)| i >= ni) {
                        return Err(Error::data("group refers to a missing feature row"));
                    }
                }
                Ok(())
            }
            _ => Err(Error::data(format!(
                "dataset shape does not match loss `{}`",
                kind.name()
            ))),
        }
    }
}

/// Mean loss over the dataset (per sample for pointwise losses, per group for
/// RankNet) and, optionally, its gradient.
fn evaluate(
    p: &Predictor,
    table: &FeatureTable,
    data: &Dataset,
    kind: LossKind,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let mut ws = Workspace::default();
    let mut phi = Vec::new();
    match data {
        Dataset::Pointwise(samples) => {
            let n = samples.len() as f64;
            let mut total = 0.0;
            for s in samples {
                table.phi_into(s.user, s.item, &mut phi);
                let logit = p.forward_with(&phi, &mut ws);
                let (loss, dlogit) = pointwise(kind, logit, s.target)?;
                total += loss;
                if let Some(g) = grad.as_deref_mut() {
                    p.backward(&phi, dlogit / n, &mut ws, g);
                }
            }
            Ok(total / n)
        }
        Dataset::Groups(groups) => {
            let n = groups.len() as f64;
            let mut total = 0.0;
            for group in groups {
                total += group_step(p, table, group, 1.0 / n, &mut ws, &mut phi, grad.as_deref_mut())?;
            }
            Ok(total / n)
        }
    }
}

fn pointwise(kind: LossKind, logit: f64, target: f64) -> Result<(f64, f64)> {
    match kind {
        LossKind::Logloss => Ok(logloss_logit(logit, target)),
        LossKind::Distill => {
            let (loss, g) = distill_loss(&[target], &[logit])?;
            Ok((loss, g[0]))
        }
        LossKind::Ranknet => Err(Error::data("ranknet needs grouped data")),
    }
}

fn group_step(
    p: &Predictor,
    table: &FeatureTable,
    group: &Group,
    weight: f64,
    ws: &mut Workspace,
    phi: &mut Vec<f64>,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    // pair losses see only score differences, so the output bias drops out
    let scores: Vec<f64> = group
        .members
        .iter()
        .map(|&(item, _)| {
            table.phi_into(group.user, item, phi);
            p.forward_unbiased_with(phi, ws)
        })
        .collect();
    let labels: Vec<u32> = group.members.iter().map(|&(_, y)| y).collect();
    let (loss, dscores) = ranknet_loss(&scores, &labels)?;
    if let Some(g) = grad {
        let bias = p.output_bias_index();
        let kept = g[bias];
        for (&(item, _), ds) in group.members.iter().zip(dscores) {
            if ds == 0.0 {
                continue;
            }
            table.phi_into(group.user, item, phi);
            p.forward_unbiased_with(phi, ws);
            p.backward(phi, ds * weight, ws, g);
        }
        g[bias] = kept;
    }
    Ok(loss)
}

pub fn dataset_loss(p: &Predictor, table: &FeatureTable, data: &Dataset, kind: LossKind) -> Result<f64> {
    data.check(table, kind)?;
    if data.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    evaluate(p, table, data, kind, None)
}

/// Analytic gradient of [`dataset_loss`].
pub fn dataset_gradient(
    p: &Predictor,
    table: &FeatureTable,
    data: &Dataset,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    data.check(table, kind)?;
    if data.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let mut grad = vec![0.0; p.param_count()];
    let loss = evaluate(p, table, data, kind, Some(&mut grad))?;
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub predictor: Predictor,
    /// Full-dataset loss before training and after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Plain minibatch gradient descent with a seeded shuffle per epoch.
pub fn train(
    mut p: Predictor,
    table: &FeatureTable,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate("train")?;
    if table.phi_dim() != p.input_dim() {
        return Err(Error::config(
            "model.layer_dims",
            format!("input {} but features have {}", p.input_dim(), table.phi_dim()),
        ));
    }
    let mut loss_trace = vec![dataset_loss(&p, table, data, cfg.loss_kind)?];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; p.param_count()];
    let mut ws = Workspace::default();
    let mut phi = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream(cfg.seed, "shuffle", epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let weight = 1.0 / batch.len() as f64;
            match data {
                Dataset::Pointwise(samples) => {
                    for &idx in batch {
                        let s = samples[idx];
                        table.phi_into(s.user, s.item, &mut phi);
                        let logit = p.forward_with(&phi, &mut ws);
                        let (_, dlogit) = pointwise(cfg.loss_kind, logit, s.target)?;
                        p.backward(&phi, dlogit * weight, &mut ws, &mut grad);
                    }
                }
                Dataset::Groups(groups) => {
                    for &idx in batch {
                        group_step(&p, table, &groups[idx], weight, &mut ws, &mut phi, Some(&mut grad))?;
                    }
                }
            }
            for (w, g) in p.params_mut().iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
        let loss = dataset_loss(&p, table, data, cfg.loss_kind)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss });
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome {
        predictor: p,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_table() -> FeatureTable {
        FeatureTable {
            interaction: Interaction::Concat,
            users: vec![vec![1.0]],
            items: vec![vec![1.0, 0.5], vec![-1.0, -0.5]],
        }
    }

    fn cfg(kind: LossKind, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.5,
            epochs,
            batch_size: 2,
            loss_kind: kind,
            chunks: 2,
            seed: 3,
        }
    }

    fn separable() -> Dataset {
        Dataset::Pointwise(vec![
            Sample { user: 0, item: 0, target: 1.0 },
            Sample { user: 0, item: 1, target: 0.0 },
        ])
    }

    #[test]
    fn zero_epochs_is_identity() {
        let p = Predictor::init(vec![3, 1], vec![true; 3], 1).unwrap();
        let out = train(p.clone(), &toy_table(), &separable(), &cfg(LossKind::Logloss, 0)).unwrap();
        assert_eq!(out.predictor, p);
        assert_eq!(out.loss_trace.len(), 1);
    }

    #[test]
    fn separable_set_is_learned() {
        let p = Predictor::zeros(vec![3, 1], vec![true; 3]).unwrap();
        let out = train(p, &toy_table(), &separable(), &cfg(LossKind::Logloss, 500)).unwrap();
        assert!(*out.loss_trace.last().unwrap() < 0.1, "{:?}", out.loss_trace.last());
        assert!(out.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn training_is_deterministic() {
        let table = toy_table();
        let data = Dataset::Pointwise(vec![
            Sample { user: 0, item: 0, target: 0.7 },
            Sample { user: 0, item: 1, target: -0.4 },
        ]);
        let p = Predictor::init(vec![3, 4, 1], vec![true; 3], 2).unwrap();
        let mut c = cfg(LossKind::Distill, 20);
        c.batch_size = 1;
        let a = train(p.clone(), &table, &data, &c).unwrap();
        let b = train(p, &table, &data, &c).unwrap();
        assert_eq!(a.predictor, b.predictor);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn ranknet_training_orders_group() {
        let table = toy_table();
        let data = Dataset::Groups(vec![Group {
            user: 0,
            members: vec![(1, 2), (0, 1)],
        }]);
        let p = Predictor::zeros(vec![3, 1], vec![true; 3]).unwrap();
        let mut c = cfg(LossKind::Ranknet, 50);
        c.learning_rate = 0.1;
        let out = train(p, &table, &data, &c).unwrap();
        let mut phi = Vec::new();
        table.phi_into(0, 1, &mut phi);
        let top = out.predictor.forward(&phi);
        table.phi_into(0, 0, &mut phi);
        assert!(top > out.predictor.forward(&phi));
    }

    #[test]
    fn ranknet_ignores_the_output_bias_exactly() {
        let table = toy_table();
        let data = Dataset::Groups(vec![Group {
            user: 0,
            members: vec![(0, 2), (1, 1)],
        }]);
        let mut p = Predictor::init(vec![3, 2, 1], vec![true; 3], 4).unwrap();
        let bias = p.output_bias_index();
        let (before, grad) = dataset_gradient(&p, &table, &data, LossKind::Ranknet).unwrap();
        assert_eq!(grad[bias], 0.0);
        p.params_mut()[bias] += 0.123_456_789;
        assert_eq!(dataset_loss(&p, &table, &data, LossKind::Ranknet).unwrap(), before);
    }

    #[test]
    fn mismatched_dataset_is_rejected() {
        let p = Predictor::zeros(vec![3, 1], vec![true; 3]).unwrap();
        let bad = Dataset::Pointwise(vec![Sample { user: 0, item: 0, target: 0.5 }]);
        assert!(train(p.clone(), &toy_table(), &bad, &cfg(LossKind::Logloss, 1)).is_err());
        assert!(train(p, &toy_table(), &separable(), &cfg(LossKind::Ranknet, 1)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let table = FeatureTable {
            interaction: Interaction::Concat,
            users: vec![vec![1e3]],
            items: vec![vec![1e3]],
        };
        let data = Dataset::Pointwise(vec![Sample { user: 0, item: 0, target: 1.0 }]);
        let p = Predictor::zeros(vec![2, 1], vec![true; 2]).unwrap();
        let mut c = cfg(LossKind::Distill, 50);
        c.learning_rate = 10.0;
        assert!(matches!(train(p, &table, &data, &c), Err(Error::Diverged { .. })));
    }
}
