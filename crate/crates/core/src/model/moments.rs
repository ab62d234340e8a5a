use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::AlignedSample;
use super::estep::observation_factor;
use super::params::{ClassPosterior, ModelParams};
use crate::basis::QuadratureDesign;
use crate::error::{MagicError, Result};
use crate::math::{rbf_from_squared_distances, StableCholesky};

/// Mean `U` and variance `V` of the linear predictor `xᵀβ` under the
/// posterior uncertainty of the class mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorMoments {
    pub u: f64,
    pub v: f64,
}

/// Second-order approximation of `E[log(1 + e^X)]`, `X ~ N(U, V)`:
/// `log D − e^{2U} V / (2 D²)` with `D = 1 + e^U + ½ e^U V`.
pub fn taylor_label_term(m: TaylorMoments) -> f64 {
    let TaylorMoments { u, v } = m;
    let half = 1.0 + 0.5 * v;
    let log_d = if u > 0.0 {
        u + half.ln() + ((-u).exp() / half).ln_1p()
    } else {
        (u.exp() * half).ln_1p()
    };
    // e^U / D, written to stay finite for any U.
    let r = if u > 0.0 {
        1.0 / ((-u).exp() + half)
    } else {
        let e = u.exp();
        e / (1.0 + e * half)
    };
    log_d - 0.5 * v * r * r
}

/// Approximate expected label log-likelihood `z U − taylor_label_term`.
pub fn label_likelihood(m: TaylorMoments, z: u8) -> f64 {
    f64::from(z) * m.u - taylor_label_term(m)
}

/// A training sample completed with its class-mean posterior.
///
/// Observed entries are the data; unobserved entries are
/// `m̃[U] + K_θ[U,O] A⁻¹ (y − m̃[O])`. As a function of the latent class
/// mean `μ`, the unobserved block is `μ[U] − B μ[O] + const` with
/// `B = K_θ[U,O] A⁻¹`.
pub(crate) struct Completed {
    pub curve: DVector<f64>,
    chol: StableCholesky,
    /// `K_θ[O,U]`.
    k_ou: DMatrix<f64>,
}

impl Completed {
    pub fn new(
        sample: &AlignedSample,
        post: &ClassPosterior,
        k_theta: &DMatrix<f64>,
        noise: f64,
    ) -> Result<Self> {
        let chol = observation_factor(k_theta, &sample.observed, noise)?;
        let (o, u) = (&sample.observed, &sample.unobserved);
        let k_ou = DMatrix::from_fn(o.len(), u.len(), |i, j| k_theta[(o[i], u[j])]);
        let resid = DVector::from_fn(o.len(), |i, _| sample.values[i] - post.mean[o[i]]);
        let fill = k_ou.transpose() * chol.solve_vec(&resid);
        let mut curve = DVector::zeros(post.mean.len());
        for (p, &i) in o.iter().enumerate() {
            curve[i] = sample.values[p];
        }
        for (q, &j) in u.iter().enumerate() {
            curve[j] = post.mean[j] + fill[q];
        }
        Ok(Self { curve, chol, k_ou })
    }

    /// Coefficients `a` with `wᵀ f = aᵀ μ + const`, for grid weights `w`.
    pub fn sensitivity(&self, sample: &AlignedSample, w: &DVector<f64>) -> DVector<f64> {
        let (o, u) = (&sample.observed, &sample.unobserved);
        let w_u = DVector::from_fn(u.len(), |j, _| w[u[j]]);
        let back = self.chol.solve_vec(&(&self.k_ou * &w_u));
        let mut a = DVector::zeros(w.len());
        for (q, &j) in u.iter().enumerate() {
            a[j] = w_u[q];
        }
        for (p, &i) in o.iter().enumerate() {
            a[i] = -back[p];
        }
        a
    }

    /// Matrix version of [`Self::sensitivity`] for every basis column at once.
    pub fn projection(&self, sample: &AlignedSample, weighted: &DMatrix<f64>) -> DMatrix<f64> {
        let (o, u) = (&sample.observed, &sample.unobserved);
        let k = weighted.ncols();
        let w_u = DMatrix::from_fn(u.len(), k, |j, c| weighted[(u[j], c)]);
        let back = self.chol.solve(&(&self.k_ou * &w_u));
        let mut g = DMatrix::zeros(weighted.nrows(), k);
        for (q, &j) in u.iter().enumerate() {
            g.row_mut(j).copy_from(&w_u.row(q));
        }
        for (p, &i) in o.iter().enumerate() {
            g.row_mut(i).copy_from(&(-back.row(p)));
        }
        g
    }
}

fn check_inputs(
    sample: &AlignedSample,
    post: &ClassPosterior,
    params: &ModelParams,
    design: &QuadratureDesign,
) -> Result<()> {
    let n = design.grid_len();
    if post.len() != n {
        return Err(MagicError::Dimension {
            expected: n,
            got: post.len(),
        });
    }
    if params.beta.num_basis() != design.num_basis() {
        return Err(MagicError::Dimension {
            expected: design.num_basis(),
            got: params.beta.num_basis(),
        });
    }
    if sample.observed.is_empty() {
        return Err(MagicError::InvalidInput(format!(
            "sample {} has no observations",
            sample.id
        )));
    }
    Ok(())
}

/// `U` and `V` for one training sample under its class posterior.
pub fn compute_moments(
    sample: &AlignedSample,
    post: &ClassPosterior,
    params: &ModelParams,
    design: &QuadratureDesign,
    sqdist: &DMatrix<f64>,
) -> Result<TaylorMoments> {
    check_inputs(sample, post, params, design)?;
    let k_theta = rbf_from_squared_distances(&params.kernel, sqdist);
    let done = Completed::new(sample, post, &k_theta, params.noise)?;
    let w = &design.weighted * &params.beta.weights;
    let a = done.sensitivity(sample, &w);
    Ok(TaylorMoments {
        u: params.beta.intercept + w.dot(&done.curve),
        v: a.dot(&(&post.covariance * &a)).max(0.0),
    })
}

/// `V` through the explicit covariance surface of the completed curve:
/// `C = K̃ − BK̃ − K̃Bᵀ + BK̃Bᵀ` on the unobserved block, zero elsewhere,
/// then `β1ᵀ (∫∫ φ C φᵀ) β1`.
pub fn variance_by_double_integral(
    sample: &AlignedSample,
    post: &ClassPosterior,
    params: &ModelParams,
    design: &QuadratureDesign,
    sqdist: &DMatrix<f64>,
) -> Result<f64> {
    check_inputs(sample, post, params, design)?;
    let k_theta = rbf_from_squared_distances(&params.kernel, sqdist);
    let chol = observation_factor(&k_theta, &sample.observed, params.noise)?;
    let (o, u) = (&sample.observed, &sample.unobserved);
    let sub = |rows: &[usize], cols: &[usize], m: &DMatrix<f64>| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
    };
    // B = K_θ[U,O] A⁻¹, obtained as (A⁻¹ K_θ[O,U])ᵀ.
    let b = chol.solve(&sub(o, u, &k_theta)).transpose();
    let kt = &post.covariance;
    let (k_uu, k_uo, k_oo) = (sub(u, u, kt), sub(u, o, kt), sub(o, o, kt));
    let c_uu = &k_uu - &b * k_uo.transpose() - &k_uo * b.transpose() + &b * k_oo * b.transpose();
    let n = design.grid_len();
    let mut c = DMatrix::zeros(n, n);
    for (p, &i) in u.iter().enumerate() {
        for (q, &j) in u.iter().enumerate() {
            c[(i, j)] = 0.5 * (c_uu[(p, q)] + c_uu[(q, p)]);
        }
    }
    let m = design.double_integral(&c)?;
    let b1 = &params.beta.weights;
    Ok(b1.dot(&(m * b1)).max(0.0))
}
