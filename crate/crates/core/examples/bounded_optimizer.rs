//! The box-constrained quasi-Newton maximizer on a Rosenbrock valley, with
//! and without an active bound.

use magic_core::optim::{bounded_quasi_newton, Bounds, QuasiNewtonOptions};

fn main() -> magic_core::Result<()> {
    let rosen = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
    let opts = QuasiNewtonOptions::default();
    for (label, bounds) in [
        ("unbounded", Bounds::unbounded(2)),
        ("x ≤ 0.5  ", Bounds::new(vec![-2.0, -2.0], vec![0.5, 2.0])?),
    ] {
        let m = bounded_quasi_newton(rosen, &[-1.2, 1.0], &bounds, &opts)?;
        println!(
            "{label}  x = ({:.6}, {:.6})  f = {:.3e}  {} iterations, {} evaluations, {:?}",
            m.x[0], m.x[1], m.value, m.iterations, m.evaluations, m.termination
        );
    }
    Ok(())
}
