//! Functional logistic regression on complete curves: project each curve on
//! a cubic B-spline basis by quadrature, fit the ridge-penalized model and
//! score in-sample.

use magic_core::basis::{BasisConfig, QuadratureDesign};
use magic_core::flr::{fit_flr, flr_prob};
use magic_core::metrics::auc;
use magic_core::sim::{generate_dataset, SimConfig};
use nalgebra::DVector;

fn main() -> magic_core::Result<()> {
    let data = generate_dataset(&SimConfig { seed: 5, per_class: 40, ..SimConfig::default() })?;
    let labels: Vec<u8> = data.samples.iter().map(|s| s.label.expect("simulated")).collect();

    for num_basis in [5, 10, 20] {
        let basis = BasisConfig::for_grid(num_basis, &data.grid)?;
        let design = QuadratureDesign::new(&data.grid, &basis)?;
        let x = data
            .samples
            .iter()
            .map(|s| design.covariate(&DVector::from_vec(s.values.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        for lambda in [1e-3, 1.0] {
            let beta = fit_flr(&x, &labels, lambda)?;
            let p = x.iter().map(|xi| flr_prob(&beta, xi)).collect::<Result<Vec<_>, _>>()?;
            println!(
                "basis {num_basis:2}  λ {lambda:<6}  in-sample AUC {:.3}  |β|∞ {:.3}",
                auc(&p, &labels)?,
                beta.weights.amax()
            );
        }
    }
    Ok(())
}
