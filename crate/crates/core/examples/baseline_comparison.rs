//! Runs the repeated-split benchmark on simulated data and prints a table.
//!
//! ```text
//! cargo run --release --example baseline_comparison -- [reps] [alpha,...] [seed] [per-sample]
//! ```

use magic_core::eval::{run_benchmark, EvalConfig, EvalProtocol, Method};
use magic_core::sim::{generate_dataset, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reps = args.first().map_or(Ok(3), |s| s.parse())?;
    let alphas = match args.get(1) {
        Some(s) => s.split(',').map(str::parse).collect::<Result<Vec<f64>, _>>()?,
        None => vec![0.5, 0.8],
    };
    let seed = args.get(2).map_or(Ok(1), |s| s.parse())?;

    let data = generate_dataset(&SimConfig {
        seed,
        ..SimConfig::default()
    })?;
    let protocol = EvalProtocol {
        repetitions: reps,
        alphas,
        seed,
        ..EvalProtocol::default()
    };
    let mut config = EvalConfig::default();
    // Fit single-GP hyperparameters per series instead of sharing them.
    config.baseline.sgp_per_sample = args.get(3).is_some_and(|a| a == "per-sample");
    let report = run_benchmark(&protocol, &Method::ALL, &data, &config)?;

    println!("{:<6} {:>5} {:>15} {:>17} {:>5} {:>8}", "method", "alpha", "AUC", "MSE", "fail", "secs");
    for r in &report.rows {
        println!(
            "{:<6} {:>5.2} {:>7.4} ({:.4}) {:>8.4} ({:.4}) {:>5} {:>8.1}",
            r.method,
            r.alpha.unwrap_or(f64::NAN),
            r.auc_mean.unwrap_or(f64::NAN),
            r.auc_sd.unwrap_or(f64::NAN),
            r.mse_mean.unwrap_or(f64::NAN),
            r.mse_sd.unwrap_or(f64::NAN),
            r.n_failures,
            r.runtime_secs
        );
    }
    for f in &report.failures {
        eprintln!("failure: {f}");
    }
    Ok(())
}
