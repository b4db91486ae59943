//! Masked MLP predictors: analytic gradients against central differences
//! for each loss, then a short logloss fit on a small synthetic world.
//!
//! ```text
//! cargo run --example train_and_gradcheck
//! ```

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::{feature_order_seed, feature_table, teacher_dataset};
use cascade_consistency::model::{
    assign_chunks, finite_diff_check, nested_mask, train, Dataset, Group, LossKind, Predictor, Sample, TrainConfig,
};
use cascade_consistency::world::{Stream, World};

fn main() -> cascade_consistency::Result<()> {
    let mut cfg = ExperimentConfig::default_experiment();
    cfg.world.corpus_size = 1000;
    cfg.world.requests_per_epoch = 300;
    cfg.world.eval_requests = 10;
    let world = World::generate(cfg.world.clone())?;
    let requests = world.requests(Stream::Train)?;
    let table = feature_table(&world, &requests);
    let dim = world.config.phi_dim();

    let mask = nested_mask(dim, 0.5, feature_order_seed(cfg.seed))?;
    let p = Predictor::init(vec![dim, 8, 1], mask.clone(), 1)?;
    let clicks = Dataset::Pointwise((0..8).map(|i| Sample { user: 0, item: i, target: f64::from(i % 2) }).collect());
    let logits = Dataset::Pointwise((0..8).map(|i| Sample { user: 1, item: i, target: 0.3 * f64::from(i) - 1.0 }).collect());
    let groups = Dataset::Groups(vec![Group {
        user: 2,
        members: (0..6).zip(assign_chunks(6, 3)?).collect(),
    }]);
    for (kind, data) in [(LossKind::Logloss, &clicks), (LossKind::Distill, &logits), (LossKind::Ranknet, &groups)] {
        let err = finite_diff_check(&p, kind, &table, data, 1e-5)?;
        println!("{:<8} max relative gradient error {err:.2e}", kind.name());
    }

    let data = teacher_dataset(&world, &requests, 50)?;
    let fit = train(
        Predictor::init(vec![dim, 8, 1], mask, 2)?,
        &table,
        &data,
        &TrainConfig {
            learning_rate: 0.05,
            epochs: 3,
            batch_size: 32,
            loss_kind: LossKind::Logloss,
            chunks: 2,
            seed: 0,
        },
    )?;
    println!("logloss on {} labelled items per epoch:", data.len());
    for (epoch, loss) in fit.loss_trace.iter().enumerate() {
        println!("  epoch {epoch}: {loss:.5}");
    }
    println!("mask keeps {:.0}% of {dim} features", 100.0 * fit.predictor.mask_fraction());
    Ok(())
}
