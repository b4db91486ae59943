//! Raising an advertiser's bid never costs it a pre-ranking position when
//! the learned score multiplies the bid: `init_bid * exp(logit)`.
//!
//! ```text
//! cargo run --release --example ltr_bid_monotonicity
//! ```

use std::path::Path;

use cascade_consistency::cascade::run_request;
use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::{build_pipeline, train_all};
use cascade_consistency::world::{Stream, World};

fn main() -> cascade_consistency::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml"))?;
    let world = World::generate(cfg.world.clone())?;
    let (models, _) = train_all(&cfg, &world)?;
    let pipeline = build_pipeline(&cfg, &cfg.pipeline_spec("ltr")?, &models)?;
    let requests = world.requests(Stream::Eval)?;
    let request = &requests[0];

    let position = |w: &World, item: cascade_consistency::domain::ItemId| -> cascade_consistency::Result<usize> {
        let out = run_request(request, &pipeline, w)?;
        Ok(out.service.iter().find(|r| r.item_id == item).map(|r| r.pre_rank_pos).unwrap())
    };
    println!("request {}: bids of five items raised step by step", request.request_id);
    for &item in request.preranking_set.iter().take(5) {
        let mut w = world.clone();
        let mut line = format!("item {item:>4}:");
        for factor in [1.0, 1.5, 2.0, 4.0, 8.0] {
            w.corpus[item as usize].init_bid = world.corpus[item as usize].init_bid * factor;
            line.push_str(&format!("  x{factor} -> pos {:>2}", position(&w, item)?));
        }
        println!("{line}");
    }
    Ok(())
}
