//! One ablation variant against the full trigger on Permuted MNIST.
//!
//! cargo run --release --example ablation -- <variant> [mnist-dir]
//! variants: ed_only fsat_only fixed_per_task scheduled loss_plateau
//!           init_random init_he init_xavier init_nullspace init_zero

use std::path::PathBuf;

use noracl::runner::{run_experiment, Ablation, ExperimentConfig};
use noracl::{Benchmark, Mode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Ablation = args.next().unwrap_or_else(|| "ed_only".into()).parse()?;
    let data = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));

    for mode in [Mode::Noracl, Mode::Ablation(variant)] {
        let mut cfg = ExperimentConfig::defaults(Benchmark::Permuted).with_mode(mode)?;
        cfg.data_dir = data.clone();
        cfg.seeds = vec![0];
        let result = run_experiment(&cfg)?;
        let (acc, _) = result.accuracy_stats();
        let (params, _) = result.param_stats();
        let s = &result.logs[0].summary;
        println!(
            "{:<24} {:5.1}%  {:7.1}k params  widths {:?}",
            mode.to_string(),
            100.0 * acc,
            params / 1000.0,
            s.final_widths
        );
    }
    Ok(())
}
