//! Proxy calibration of the pre-ranker against the ranking model, bucket by
//! bucket, and how far the two score histograms drift apart on the whole
//! pre-ranking set compared with the win set only.
//!
//! ```text
//! cargo run --release --example calibration_split -- [PIPELINE]
//! ```

use std::path::Path;

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::{simulate_and_evaluate, train_all};
use cascade_consistency::world::{Stream, World};

fn main() -> cascade_consistency::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "logloss".to_string());
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml"))?;
    let world = World::generate(cfg.world.clone())?;
    let (models, _) = train_all(&cfg, &world)?;
    let requests = world.requests(Stream::Eval)?;
    let e = simulate_and_evaluate(&cfg, &world, &models, &spec, &requests)?;

    let Some(cal) = &e.calibration else {
        println!("{spec}: pre-ranking scores are not probabilities; no calibration");
        return Ok(());
    };
    println!("{spec}: ECE {:.4}, PCOC {:.4}", cal.ece, cal.pcoc);
    println!("{:>6} {:>6} {:>7} {:>10} {:>10}", "lo", "hi", "count", "pre-rank", "rank");
    for b in cal.buckets.iter().filter(|b| b.count > 0) {
        println!("{:>6.2} {:>6.2} {:>7} {:>10.4} {:>10.4}", b.lo, b.hi, b.count, b.mean_pred, b.mean_ref);
    }
    if let Some(h) = &e.histograms {
        println!("total variation: pre-ranking set {:.4}, win set {:.4}", h.tv_prerank_set, h.tv_win_set);
    }
    Ok(())
}
