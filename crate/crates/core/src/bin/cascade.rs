//! `cascade`: generate a world, train pre-ranking tiers, simulate the
//! cascade, evaluate consistency, diagnose and report.

use std::path::PathBuf;
use std::process::ExitCode;

use cascade_consistency::commands::{self, Context, GridOverride};
use cascade_consistency::world::Stream;
use cascade_consistency::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Pre-ranking/ranking consistency experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); the bundled default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides CASCADE_OUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StreamArg {
    Train,
    Eval,
}

#[derive(Subcommand)]
enum Verb {
    /// Write the world files (or fixture logs) and their manifest.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train one tier, or all tiers in dependency order.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tier: Option<String>,
    },
    /// Run a pipeline over a request stream and write both logs plus clicks.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Pipeline spec; every configured pipeline when omitted (eval stream).
        #[arg(long)]
        pipeline: Option<String>,
        #[arg(long, value_enum, default_value = "eval")]
        stream: StreamArg,
    },
    /// Compute metrics from simulated logs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pipeline: Option<String>,
        /// Override the k grid (comma-separated).
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Override the c grid (comma-separated).
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<usize>>,
    },
    /// Substitute pre-ranking slots with ranking models and re-measure RCS.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pipeline: Option<String>,
    },
    /// Summary table and plots from evaluation outputs.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn context(common: &Common) -> Result<Context> {
    Context::load(common.config.as_deref(), common.seed, common.out.clone())
}

fn run(verb: Verb) -> Result<()> {
    match verb {
        Verb::Generate { common } => {
            let ctx = context(&common)?;
            let manifest = commands::cmd_generate(&ctx)?;
            for (name, digest) in &manifest.files {
                println!("{digest}  {name}");
            }
        }
        Verb::Train { common, tier } => {
            let ctx = context(&common)?;
            for s in commands::cmd_train(&ctx, tier.as_deref())? {
                let first = s.loss_trace.first().copied().unwrap_or(f64::NAN);
                let last = s.loss_trace.last().copied().unwrap_or(f64::NAN);
                println!(
                    "{}: {} samples, loss {first:.6} -> {last:.6}, {}",
                    s.tier,
                    s.samples,
                    s.checkpoint.display()
                );
            }
        }
        Verb::Simulate {
            common,
            pipeline,
            stream,
        } => {
            let ctx = context(&common)?;
            let stream = match stream {
                StreamArg::Train => Stream::Train,
                StreamArg::Eval => Stream::Eval,
            };
            let pipelines = match pipeline {
                Some(p) => vec![p],
                None => ctx.pipelines(),
            };
            for p in pipelines {
                let s = commands::cmd_simulate(&ctx, &p, stream)?;
                println!(
                    "{}: {} requests, {} service / {} simulator records, {} clicks, {}",
                    s.pipeline,
                    s.requests,
                    s.service_records,
                    s.simulator_records,
                    s.clicks,
                    s.dir.display()
                );
            }
        }
        Verb::Evaluate {
            common,
            pipeline,
            k,
            c,
        } => {
            let ctx = context(&common)?;
            let mode = ctx.cfg.evaluation.mode;
            for e in commands::cmd_evaluate(&ctx, pipeline.as_deref(), &GridOverride { k, c })? {
                println!(
                    "{}: RCS({}, k={}, c={}) = {:.4}",
                    e.pipeline,
                    mode.name(),
                    e.primary.k,
                    e.primary.c,
                    e.rcs(mode)
                );
                for g in &e.grid {
                    println!("  k={} c={}: macro {:.4} micro {:.4}", g.k, g.c, g.rcs_macro, g.rcs_micro);
                }
            }
        }
        Verb::Diagnose { common, pipeline } => {
            let ctx = context(&common)?;
            let table = commands::cmd_diagnose(&ctx, pipeline.as_deref())?;
            for r in &table.rows {
                println!(
                    "{:<8} {:<40} {:.4} -> {:.4} ({:+.4})",
                    r.slot, r.prerank_rule, r.rcs_before, r.rcs_after, r.delta
                );
            }
        }
        Verb::Report { common } => {
            let ctx = context(&common)?;
            let summary = commands::cmd_report(&ctx)?;
            print!("{}", cascade_consistency::report::summary_markdown(&summary.rows));
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
