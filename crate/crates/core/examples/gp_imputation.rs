//! Single-GP imputation of one sparse series: condition an RBF prior on the
//! kept points and compare the posterior mean with the held-out values.

use magic_core::math::{sgp_posterior, KernelParams};
use magic_core::metrics::imputation_mse;
use magic_core::sim::{apply_missingness, generate_dataset, SimConfig};
use nalgebra::DVector;

fn main() -> magic_core::Result<()> {
    let data = generate_dataset(&SimConfig { seed: 3, per_class: 2, ..SimConfig::default() })?;
    let full = &data.samples[0];
    let sparse = apply_missingness(full, 0.7, 11)?;
    let grid = data.grid.points();

    for (amp, ls) in [(1.0, 2.0), (3.0, 5.0), (10.0, 20.0)] {
        let kernel = KernelParams::new(amp, ls)?;
        let post = sgp_posterior(
            &sparse.times,
            &DVector::from_vec(sparse.values.clone()),
            grid,
            |_| 0.0,
            &kernel,
            1e-4,
        )?;
        let missing: Vec<usize> = (0..grid.len())
            .filter(|&i| !sparse.times.iter().any(|&t| (t - grid[i]).abs() < 1e-9))
            .collect();
        let mse = imputation_mse(post.mean.as_slice(), &full.values, &missing)?;
        let sd = post.variances().map(f64::sqrt).mean();
        println!("amplitude {amp:5.1}  length-scale {ls:5.1}  held-out MSE {mse:.4}  mean posterior sd {sd:.3}");
    }
    println!("{} of {} points kept", sparse.len(), grid.len());
    Ok(())
}
