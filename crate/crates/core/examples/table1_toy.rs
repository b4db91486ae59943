//! The three-ad toy table: every single objective keeps its order between
//! the stages, yet the fused eCPM order flips.
//!
//! ```text
//! cargo run --example table1_toy
//! ```

use std::path::Path;

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::fixture_logs;
use cascade_consistency::metrics::{rcs, single_objective_rcs};

fn main() -> cascade_consistency::Result<()> {
    let cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/table1.toml"))?;
    let fixture = cfg.fixture.as_ref().expect("table1.toml defines a fixture");
    let (service, sim) = fixture_logs(fixture, &cfg.fusion)?;

    println!("{:<6} {:>10} {:>10} {:>10} {:>10}", "item", "pre bid", "pre pctr", "pre eCPM", "pre pos");
    for r in &service {
        println!(
            "{:<6} {:>10} {:>10} {:>10.1} {:>10}",
            r.item_id, r.scores["bid"], r.scores["pctr"], r.g_score, r.pre_rank_pos
        );
    }
    println!("{:<6} {:>10} {:>10} {:>10} {:>10}", "item", "bid", "pctr", "eCPM", "rank pos");
    for r in &sim {
        println!(
            "{:<6} {:>10} {:>10} {:>10.1} {:>10}",
            r.item_id, r.scores["bid"], r.scores["pctr"], r.g_score, r.rank_pos
        );
    }
    for k in 1..=3 {
        let r = rcs(&service, &sim, k, k)?;
        println!("RCS(k={k}, c={k}) = {:.2}", r.rcs_macro);
    }
    for objective in ["bid", "pctr"] {
        let r = single_objective_rcs(&service, &sim, objective, 2, 2)?;
        println!("single-objective RCS on {objective} (k=2, c=2) = {:.2}", r.rcs_macro);
    }
    Ok(())
}
