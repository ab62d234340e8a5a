//! Simulate the two-class benchmark data, thin it to 20% of its points,
//! fit the model by EM and print the objective trace and fitted parameters.

use std::time::Instant;

use magic_core::model::{fit, MagicConfig, SampleSeries};
use magic_core::sim::{apply_missingness, derive_seed, generate_dataset, SimConfig};

fn main() -> magic_core::Result<()> {
    let alpha: f64 = std::env::args().nth(1).map_or(0.8, |a| a.parse().expect("alpha"));
    let data = generate_dataset(&SimConfig {
        seed: 1,
        ..SimConfig::default()
    })?;
    let sparse: Vec<SampleSeries> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| apply_missingness(s, alpha, derive_seed(1, i as u64)))
        .collect::<Result<_, _>>()?;

    let start = Instant::now();
    let fitted = fit(&data.grid, &sparse, data.prior_means.clone(), &MagicConfig::default())?;
    let state = &fitted.state;
    println!(
        "{} iterations in {:.2?} (converged: {}, E-step rejections: {})",
        state.iterations,
        start.elapsed(),
        state.converged,
        state.estep_rejections
    );
    for (i, q) in state.q_history.iter().enumerate() {
        println!("  iter {i:3}  objective {q:.6}");
    }
    let p = &fitted.model.params;
    println!("class kernels: {:?}", p.class_kernels);
    println!("individual kernel: {:?}, noise variance {:.3e}", p.kernel, p.noise);
    println!("beta: {:.4} {:?}", p.beta.intercept, p.beta.weights.as_slice());
    for w in &state.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
