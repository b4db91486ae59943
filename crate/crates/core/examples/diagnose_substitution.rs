//! Which pre-ranking score causes the inconsistency? Swap each fusion slot
//! for its ranking-stage counterpart and watch RCS.
//!
//! ```text
//! cargo run --release --example diagnose_substitution -- [PIPELINE]
//! ```

use std::path::Path;

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::{diagnose_pipeline, train_all};
use cascade_consistency::world::{Stream, World};

fn main() -> cascade_consistency::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "logloss".to_string());
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml"))?;
    let world = World::generate(cfg.world.clone())?;
    let (models, _) = train_all(&cfg, &world)?;
    let requests = world.requests(Stream::Eval)?;

    // the configured pipeline, then one whose pre-ranker already sees opt bids
    for pipeline in [spec.clone(), format!("bid=opt,pctr={spec}")] {
        let table = diagnose_pipeline(&cfg, &world, &models, &pipeline, &requests)?;
        println!("{pipeline} (k={}, c={}, {})", table.k, table.c, table.mode.name());
        for row in &table.rows {
            println!(
                "  {:<5} {:<12} {:.4} -> {:.4} ({:+.4})",
                row.slot, row.prerank_rule, row.rcs_before, row.rcs_after, row.delta
            );
        }
    }
    Ok(())
}
