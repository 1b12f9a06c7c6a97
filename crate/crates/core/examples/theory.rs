//! Random pattern association: static EWC forgets task 1 while the growing
//! network keeps it exactly.
//!
//! cargo run --release --example theory

use noracl::theory::{ewc_coefficient, simulate_growth_law, verify_theorems, GrowthLawConfig, TheoryConfig};

fn main() -> anyhow::Result<()> {
    let cfg = TheoryConfig::default();
    let report = verify_theorems(&cfg)?;

    println!("task-1 error after T tasks (mean over {} seeds)", cfg.seeds.len());
    println!("{:>6} {:>12} {:>12}", "T", "static EWC", "NORACL");
    for ((t, s), n) in report
        .horizons
        .iter()
        .zip(&report.static_task1_error_mean)
        .zip(&report.noracl_task1_error_mean)
    {
        println!("{t:>6} {s:>12.4} {n:>12.2e}");
    }

    println!("\nnew-information coefficient 1/(t/M+1), M = {}", cfg.m0);
    for t in [1, 4, 8, 16, 64] {
        println!("  t = {t:>3}: {:.4}", ewc_coefficient(t, cfg.m0));
    }

    let law = simulate_growth_law(&GrowthLawConfig::default())?;
    println!(
        "\ngrowth law: width {} -> {} over {} tasks, {:.3} units per task",
        law.widths.first().unwrap(),
        law.widths.last().unwrap(),
        law.widths.len(),
        law.mean_increment
    );

    for a in &report.assertions {
        println!("{} {} ({:.2e})", if a.passed { "ok  " } else { "FAIL" }, a.name, a.max_error);
    }
    Ok(())
}
