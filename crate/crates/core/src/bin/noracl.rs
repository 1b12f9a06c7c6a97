use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use noracl::runner::{load_table, resolve, run_experiment, set_key, Ablation, ExperimentResult};
use noracl::theory::{verify_theorems, TheoryConfig};

#[derive(Parser)]
#[command(name = "noracl", version, about = "Continual learning with on-demand neuron growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one experiment.
    Run(RunArgs),
    /// Check the closed-form random pattern association results.
    Theory {
        #[arg(long, default_value = "theory-report.json")]
        report: PathBuf,
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        #[arg(long, default_value_t = 8)]
        m0: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        /// Units added per task.
        #[arg(long, default_value_t = TheoryConfig::default().k_per_task)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Run ablation variants (`all` for every row).
    Ablate {
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config; every key can also be set with `--set`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` override, e.g. `growth.gamma=0.95` or `hidden=[64,64]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_table(args: &RunArgs, mode: Option<&str>, out: Option<&Path>) -> Result<toml::Table> {
    let mut table = match &args.config {
        Some(path) => load_table(path)?,
        None => toml::Table::new(),
    };
    let quote = |s: &str| format!("{s:?}");
    if let Some(b) = &args.benchmark {
        set_key(&mut table, "benchmark", &quote(b))?;
    }
    if let Some(m) = mode.or(args.mode.as_deref()) {
        set_key(&mut table, "mode", &quote(m))?;
    }
    if let Some(s) = &args.seeds {
        set_key(&mut table, "seeds", &format!("{s:?}"))?;
    }
    if let Some(d) = &args.data_dir {
        set_key(&mut table, "data_dir", &quote(&d.to_string_lossy()))?;
    }
    if let Some(o) = out.or(args.out.as_deref()) {
        set_key(&mut table, "out_dir", &quote(&o.to_string_lossy()))?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("`--set {kv}` is not KEY=VALUE"))?;
        set_key(&mut table, k.trim(), v.trim())?;
    }
    Ok(table)
}

fn report(label: &str, result: &ExperimentResult) {
    for log in &result.logs {
        let s = &log.summary;
        match &s.error {
            None => println!(
                "{label} seed {}: avg acc {:.2}%  params {}  widths {:?}",
                s.seed,
                100.0 * s.final_avg_accuracy,
                s.final_param_count,
                s.final_widths
            ),
            Some(e) => println!("{label} seed {}: FAILED {e}", s.seed),
        }
    }
    let (acc, acc_sd) = result.accuracy_stats();
    let (params, params_sd) = result.param_stats();
    println!(
        "{label}: {:.1} ± {:.1}%  at {:.1}k ± {:.1}k params  ({} ok, {} failed)",
        100.0 * acc,
        100.0 * acc_sd,
        params / 1000.0,
        params_sd / 1000.0,
        result.completed().len(),
        result.failed()
    );
}

fn run(args: &RunArgs, mode: Option<&str>, out: Option<&Path>, label: &str) -> Result<bool> {
    let cfg = resolve(build_table(args, mode, out)?)?;
    let result = run_experiment(&cfg)?;
    report(label, &result);
    Ok(result.failed() == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => run(&args, None, None, "run"),
        Command::Theory {
            report,
            tasks,
            m0,
            d,
            k,
            seeds,
        } => {
            let cfg = TheoryConfig {
                tasks,
                m0,
                d,
                seeds,
                k_per_task: k,
                horizons: TheoryConfig::default()
                    .horizons
                    .into_iter()
                    .filter(|&h| h <= tasks)
                    .collect(),
                ..TheoryConfig::default()
            };
            let r = verify_theorems(&cfg)?;
            r.write(&report)?;
            for a in &r.assertions {
                println!(
                    "{} {}  max error {:.3e} (tolerance {:.1e})",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.max_error,
                    a.tolerance
                );
            }
            println!("report written to {}", report.display());
            Ok(r.passed)
        }
        Command::Ablate { variant, run: args } => {
            let variants: Vec<String> = if variant == "all" {
                Ablation::ALL.iter().map(|a| a.name()).collect()
            } else {
                variant.parse::<Ablation>()?;
                vec![variant]
            };
            let mut ok = true;
            for v in variants {
                let out = args.out.as_ref().map(|o| o.join(&v));
                let mode = format!("ablation:{v}");
                if !run(&args, Some(&mode), out.as_deref(), &v)? {
                    ok = false;
                }
            }
            if !ok {
                bail!("one or more seeds failed");
            }
            Ok(true)
        }
    }
}
