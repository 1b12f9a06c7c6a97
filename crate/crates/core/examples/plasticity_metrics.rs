//! Locked fraction and effective plastic parameter count across a short
//! task stream, for a growing and a static network.
//!
//! cargo run --release --example plasticity_metrics -- [mnist-dir]

use std::path::PathBuf;

use noracl::runner::{run_experiment, ExperimentConfig};
use noracl::{Benchmark, Mode};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/mnist".into()));
    for mode in [Mode::Noracl, Mode::StaticEwc] {
        let mut cfg = ExperimentConfig::defaults(Benchmark::Permuted).with_mode(mode)?;
        cfg.data_dir = data.clone();
        cfg.seeds = vec![0];
        cfg.tasks = 4;
        cfg.epochs = 10;
        let result = run_experiment(&cfg)?;
        println!("{mode}");
        println!("{:>5} {:>8} {:>10} {:>22}", "task", "params", "N_eff", "locked (L1, L2, out)");
        for r in result.logs[0].records.iter().filter(|r| r.epoch == 0) {
            println!(
                "{:>5} {:>8} {:>10.0} {:>22}",
                r.task + 1,
                r.param_count,
                r.n_eff_plastic,
                r.locked_fraction.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(", ")
            );
        }
    }
    Ok(())
}
