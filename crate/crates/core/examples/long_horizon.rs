//! A 20-task permuted stream: growing from 32×32 versus staying at 32×32
//! with the same EWC settings.
//!
//! cargo run --release --example long_horizon -- [mnist-dir] [tasks]

use std::path::PathBuf;

use noracl::runner::{run_experiment, ExperimentConfig};
use noracl::{Benchmark, Mode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let tasks: usize = args.next().map_or(Ok(20), |s| s.parse())?;

    let mut curves = Vec::new();
    for mode in [Mode::Noracl, Mode::StaticEwc] {
        let mut cfg = ExperimentConfig::defaults(Benchmark::Permuted).with_mode(mode)?;
        cfg.data_dir = data.clone();
        cfg.seeds = vec![0];
        cfg.tasks = tasks;
        let result = run_experiment(&cfg)?;
        let log = &result.logs[0];
        let per_task: Vec<(f64, f64, usize)> = (0..tasks)
            .filter_map(|t| log.records.iter().rfind(|r| r.task == t))
            .map(|r| (r.avg_accuracy, r.n_eff_plastic, r.param_count))
            .collect();
        curves.push((mode, per_task));
    }

    println!("{:>5} {:>26} {:>26}", "task", curves[0].0.to_string(), curves[1].0.to_string());
    for t in 0..tasks {
        let cell = |c: &Vec<(f64, f64, usize)>| {
            c.get(t)
                .map(|(a, n, p)| format!("{:5.1}% N_eff {:6.0}/{:6}", 100.0 * a, n, p))
                .unwrap_or_default()
        };
        println!("{:>5} {:>26} {:>26}", t + 1, cell(&curves[0].1), cell(&curves[1].1));
    }
    Ok(())
}
