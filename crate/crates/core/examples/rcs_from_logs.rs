//! RCS from a pair of JSONL logs, as `cascade evaluate` computes it: the
//! simulator's top k per request against the service's top c, joined on
//! `(request_id, item_id)`.
//!
//! ```text
//! cargo run --example rcs_from_logs -- SERVICE.jsonl SIMULATOR.jsonl K C
//! cargo run --example rcs_from_logs            # writes and reads a demo pair
//! ```

use std::path::PathBuf;

use cascade_consistency::cascade::{ServiceRecord, SimulatorRecord};
use cascade_consistency::logs::{read_service_log, read_simulator_log, write_service_log, write_simulator_log};
use cascade_consistency::metrics::rcs;

fn demo_logs(dir: &std::path::Path) -> cascade_consistency::Result<(PathBuf, PathBuf)> {
    // request 0: stages agree; request 1: the pre-ranker demotes item 12
    let rows = [(0, 1, 0.9, 0.8), (0, 2, 0.5, 0.4), (0, 3, 0.1, 0.2), (1, 11, 0.7, 0.6), (1, 12, 0.2, 0.9), (1, 13, 0.6, 0.1)];
    let mut service: Vec<ServiceRecord> = Vec::new();
    let mut sim: Vec<SimulatorRecord> = Vec::new();
    for (req, item, pre, rank) in rows {
        service.push(ServiceRecord {
            request_id: req,
            item_id: item,
            scores: [("pctr".to_string(), pre)].into(),
            g_score: pre,
            pre_rank_pos: 0,
        });
        sim.push(SimulatorRecord {
            request_id: req,
            item_id: item,
            scores: [("pctr".to_string(), rank)].into(),
            g_score: rank,
            rank_pos: 0,
        });
    }
    let (s, m) = (dir.join("service.jsonl"), dir.join("simulator.jsonl"));
    write_service_log(&s, &service)?;
    write_simulator_log(&m, &sim)?;
    Ok((s, m))
}

fn main() -> cascade_consistency::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let demo_dir = std::env::temp_dir().join("rcs_from_logs_demo");
    let (service_path, sim_path, k, c) = if args.len() == 4 {
        let parse = |s: &str| s.parse::<usize>().expect("K and C are integers");
        (PathBuf::from(&args[0]), PathBuf::from(&args[1]), parse(&args[2]), parse(&args[3]))
    } else {
        let (s, m) = demo_logs(&demo_dir)?;
        println!("demo logs in {}", demo_dir.display());
        (s, m, 1, 2)
    };
    let service = read_service_log(&service_path)?;
    let sim = read_simulator_log(&sim_path)?;
    let report = rcs(&service, &sim, k, c)?;
    println!("k={k} c={c}: RCS macro {:.4}, micro {:.4}", report.rcs_macro, report.rcs_micro);
    for r in &report.per_request {
        println!("  request {}: {}/{} ideal winners reached ranking", r.request_id, r.hits, r.ideal);
    }
    Ok(())
}
