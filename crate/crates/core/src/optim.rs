//! Bound-constrained limited-memory quasi-Newton maximization with
//! finite-difference gradients.

use std::collections::VecDeque;

use crate::error::{MagicError, Result};

/// Per-coordinate box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(MagicError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(MagicError::InvalidParameter("bounds need lower ≤ upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiNewtonOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected-gradient ∞-norm falls to this value.
    pub grad_tol: f64,
    /// Stop when the relative objective change falls to this value.
    pub rel_tol: f64,
    /// Finite-difference step is `fd_step · max(1, |x_i|)`.
    pub fd_step: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            memory: 10,
            grad_tol: 1e-6,
            rel_tol: 2.2e-9,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    RelativeChange,
    /// Line search could not improve the objective further.
    Stalled,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    /// The minimization target: the negated objective, with NaN mapped to +∞.
    fn neg(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = -(self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn fd_gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut Counted<F>,
    x: &[f64],
    fx: f64,
    bounds: &Bounds,
    step: f64,
) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        let up_ok = x[i] + h <= hi;
        let down_ok = x[i] - h >= lo;
        let mut eval = |v: f64, probe: &mut Vec<f64>| {
            probe[i] = v;
            let r = f.neg(probe);
            probe[i] = x[i];
            r
        };
        let fp = if up_ok { eval(x[i] + h, &mut probe) } else { f64::INFINITY };
        let fm = if down_ok { eval(x[i] - h, &mut probe) } else { f64::INFINITY };
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            // Neither neighbour is usable: freeze the coordinate.
            (false, false) => 0.0,
        };
    }
    g
}

fn projected_grad_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            ((xi - gi).clamp(bounds.lower[i], bounds.upper[i]) - xi).abs()
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: returns `-H g` for the current inverse-Hessian estimate.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Maximizes `objective` over the box, starting from `x0` (clipped into it).
pub fn bounded_quasi_newton<F>(
    objective: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &QuasiNewtonOptions,
) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.len() != bounds.dim() {
        return Err(MagicError::Dimension {
            expected: bounds.dim(),
            got: x0.len(),
        });
    }
    let mut f = Counted { f: objective, evals: 0 };
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut fx = f.neg(&x);
    if !fx.is_finite() {
        return Err(MagicError::Optimizer(
            "objective is not finite at the starting point".into(),
        ));
    }
    let n = x.len();
    let mut g = fd_gradient(&mut f, &x, fx, bounds, opts.fd_step);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut saw_non_finite = false;
    let mut improved_once = false;

    let finish = |x: Vec<f64>, fx: f64, it: usize, evals: usize, t: Termination| Maximum {
        x,
        value: -fx,
        iterations: it,
        evaluations: evals,
        termination: t,
    };

    for it in 0..opts.max_iter {
        if projected_grad_norm(&x, &g, bounds) <= opts.grad_tol {
            return Ok(finish(x, fx, it, f.evals, Termination::Gradient));
        }
        let mut d = if history.is_empty() {
            g.iter().map(|v| -v).collect()
        } else {
            lbfgs_direction(&g, &history)
        };
        // Drop components that push into an active bound.
        let active = |i: usize, d: f64| {
            (x[i] <= bounds.lower[i] && d < 0.0) || (x[i] >= bounds.upper[i] && d > 0.0)
        };
        for i in 0..n {
            if active(i, d[i]) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            for i in 0..n {
                if active(i, d[i]) {
                    d[i] = 0.0;
                }
            }
        }
        let mut alpha = if history.is_empty() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax > 0.0 {
                (1.0 / dmax).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            bounds.project(&mut trial);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let ft = f.neg(&trial);
            if !ft.is_finite() {
                saw_non_finite = true;
            } else if ft <= fx + 1e-4 * dot(&g, &step) && ft <= fx {
                accepted = Some((trial, ft, step));
                break;
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new, s)) = accepted else {
            if !history.is_empty() {
                // Retry from steepest ascent before declaring a stall.
                history.clear();
                continue;
            }
            if saw_non_finite && !improved_once {
                return Err(MagicError::Optimizer(
                    "line search only met non-finite objective values".into(),
                ));
            }
            return Ok(finish(x, fx, it, f.evals, Termination::Stalled));
        };
        improved_once = true;
        let g_new = fd_gradient(&mut f, &x_new, f_new, bounds, opts.fd_step);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y));
        }
        let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if rel <= opts.rel_tol {
            return Ok(finish(x, fx, it + 1, f.evals, Termination::RelativeChange));
        }
    }
    let it = opts.max_iter;
    if projected_grad_norm(&x, &g, bounds) <= opts.grad_tol {
        return Ok(finish(x, fx, it, f.evals, Termination::Gradient));
    }
    Ok(finish(x, fx, it, f.evals, Termination::IterationCap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(lo: f64, hi: f64) -> Bounds {
        Bounds::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn interior_quadratic() {
        let m = bounded_quasi_newton(
            |x| -(x[0] - 3.0).powi(2),
            &[0.5],
            &one_d(0.0, 10.0),
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert!((m.x[0] - 3.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn clipped_quadratic() {
        let m = bounded_quasi_newton(
            |x| -(x[0] - 3.0).powi(2),
            &[0.5],
            &one_d(0.0, 2.0),
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(m.x[0], 2.0);
    }

    #[test]
    fn rosenbrock_matches_grid_search() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 10.0 * (x[1] - x[0] * x[0]).powi(2));
        let bounds = Bounds::new(vec![-2.0, -1.0], vec![0.8, 2.0]).unwrap();
        let m = bounded_quasi_newton(f, &[-1.5, 1.5], &bounds, &QuasiNewtonOptions::default())
            .unwrap();
        // Fine grid search over the box, refined once around the best cell.
        let search = |c: [f64; 2], half: [f64; 2], n: usize| {
            let mut best = (f64::NEG_INFINITY, [0.0; 2]);
            for i in 0..=n {
                for j in 0..=n {
                    let p = [
                        (c[0] - half[0] + 2.0 * half[0] * i as f64 / n as f64).clamp(-2.0, 0.8),
                        (c[1] - half[1] + 2.0 * half[1] * j as f64 / n as f64).clamp(-1.0, 2.0),
                    ];
                    let v = f(&p);
                    if v > best.0 {
                        best = (v, p);
                    }
                }
            }
            best
        };
        let coarse = search([-0.6, 0.5], [1.4, 1.5], 1000);
        let fine = search(coarse.1, [0.004, 0.004], 1000);
        assert!((m.x[0] - fine.1[0]).abs() < 1e-3 && (m.x[1] - fine.1[1]).abs() < 1e-3);
        assert!(m.value >= fine.0 - 1e-9);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = bounded_quasi_newton(
            |_| f64::NAN,
            &[1.0],
            &one_d(0.0, 2.0),
            &QuasiNewtonOptions::default(),
        );
        assert!(matches!(r, Err(MagicError::Optimizer(_))));
    }

    #[test]
    fn backtracks_out_of_non_finite_region() {
        // Maximum at 3 but the objective is undefined above 3.5.
        let f = |x: &[f64]| if x[0] > 3.5 { f64::NAN } else { -(x[0] - 3.0).powi(2) };
        let m = bounded_quasi_newton(f, &[0.0], &one_d(0.0, 10.0), &QuasiNewtonOptions::default())
            .unwrap();
        assert!((m.x[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn smooth_multidimensional_concave() {
        let f = |x: &[f64]| {
            -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2) - 0.5 * (x[2] - x[0]).powi(2)
                - (x[2] - 4.0).powi(4)
        };
        let m = bounded_quasi_newton(
            f,
            &[0.0, 0.0, 0.0],
            &Bounds::unbounded(3),
            &QuasiNewtonOptions::default(),
        )
        .unwrap();
        assert!((m.x[1] + 0.5).abs() < 1e-5);
        assert!(m.termination != Termination::IterationCap);
    }
}
