//! NORACL on Permuted MNIST from a 32×32 start.
//!
//! cargo run --release --example permuted -- [mnist-dir] [seed]

use std::path::PathBuf;

use noracl::runner::{run_experiment, ExperimentConfig};
use noracl::Benchmark;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::defaults(Benchmark::Permuted);
    cfg.data_dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    cfg.seeds = vec![args.next().map_or(Ok(0), |s| s.parse())?];
    cfg.out_dir = Some("runs/examples/permuted".into());

    let result = run_experiment(&cfg)?;
    for log in &result.logs {
        let s = &log.summary;
        println!(
            "seed {}: {:.1}% average accuracy, {} params, widths {:?} -> {:?}, {} growth events",
            s.seed,
            100.0 * s.final_avg_accuracy,
            s.final_param_count,
            s.initial_widths,
            s.final_widths,
            s.growth_events
        );
        for e in log.events.iter().filter(|e| e.outcome == "grown") {
            println!(
                "  task {} epoch {}: layer {} +{} (φ {:.3} vs γφ⁰ {:.3})",
                e.task + 1,
                e.epoch,
                e.layer + 1,
                e.k,
                e.phi.unwrap_or(f64::NAN),
                cfg.growth.gamma * e.phi0.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
