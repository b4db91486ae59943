//! Same features, different supervision: a pre-ranker trained on win-set
//! clicks against one distilled from the ranking model's logits over the
//! competitive set, and one trained to reproduce its order with RankNet.
//!
//! ```text
//! cargo run --release --example distill_vs_logloss -- [CONFIG]
//! ```

use std::path::PathBuf;

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::{simulate_and_evaluate, train_all};
use cascade_consistency::world::{Stream, World};

fn main() -> cascade_consistency::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let world = World::generate(cfg.world.clone())?;
    let (models, traces) = train_all(&cfg, &world)?;
    let requests = world.requests(Stream::Eval)?;

    println!("{:<10} {:>10} {:>10} {:>8} {:>8} {:>8}", "tier", "first loss", "last loss", "rcs", "ece", "auc");
    for tier in ["logloss", "distill", "ltr"] {
        let e = simulate_and_evaluate(&cfg, &world, &models, tier, &requests)?;
        let trace = &traces[tier];
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<10} {:>10.5} {:>10.5} {:>8.4} {:>8} {:>8}",
            tier,
            trace[0],
            trace[trace.len() - 1],
            e.primary.rcs_macro,
            opt(e.ece()),
            opt(e.auc)
        );
    }
    Ok(())
}
