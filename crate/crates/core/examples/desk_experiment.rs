//! Default desk-scale experiment over several seeds: RCS, proxy-ECE and
//! histogram divergence per pre-ranking tier.
//!
//! ```text
//! cargo run --release --example desk_experiment -- [SEEDS]
//! ```

use std::time::Instant;

use cascade_consistency::config::ExperimentConfig;
use cascade_consistency::experiment::run_experiment;

fn main() -> cascade_consistency::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let base = ExperimentConfig::default_experiment();
    for seed in 1..=seeds {
        let start = Instant::now();
        let cfg = base.clone().with_seed(seed);
        let out = run_experiment(&cfg, false)?;
        println!("seed {seed} ({:.1}s)", start.elapsed().as_secs_f64());
        println!(
            "  {:<18} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "pipeline", "rcs", "so-bid", "so-pctr", "ece", "pcoc", "tv-pre", "tv-win"
        );
        for e in &out.evaluations {
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "  {:<18} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>8}",
                e.pipeline,
                e.primary.rcs_macro,
                e.single_objective("bid").unwrap_or(f64::NAN),
                e.single_objective("pctr").unwrap_or(f64::NAN),
                opt(e.ece()),
                opt(e.pcoc()),
                opt(e.histograms.as_ref().map(|h| h.tv_prerank_set)),
                opt(e.histograms.as_ref().map(|h| h.tv_win_set)),
            );
        }
        for (tier, trace) in &out.loss_traces {
            println!("  loss {tier:<14} {:.4} -> {:.4}", trace[0], trace[trace.len() - 1]);
        }
    }
    Ok(())
}
