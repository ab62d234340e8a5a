//! Dense reference computations shared by the integration tests. They use
//! general LU inverses and determinants, never the library's factorizations.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("singular oracle matrix")
}

pub fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn rbf(amp: f64, ls: f64, t: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(t.len(), t.len(), |i, j| {
        let d = t[i] - t[j];
        amp * amp * (-d * d / (2.0 * ls * ls)).exp()
    })
}

/// Conditional of `N(mean, cov)` on the coordinates `obs` taking `values`:
/// full mean and covariance, with the observed block pinned.
pub fn condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    obs: &[usize],
    values: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    if obs.is_empty() {
        return (mean.clone(), cov.clone());
    }
    let all: Vec<usize> = (0..n).collect();
    let c_ao = sub(cov, &all, obs);
    let c_oo_inv = inv(&sub(cov, obs, obs));
    let r = DVector::from_fn(obs.len(), |i, _| values[i] - mean[obs[i]]);
    let m = mean + &c_ao * (&c_oo_inv * r);
    let c = cov - &c_ao * &c_oo_inv * c_ao.transpose();
    (m, c)
}

/// `log N(x; mean, cov)` including the 2π constant.
pub fn log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let r = x - mean;
    let n = x.len() as f64;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + r.dot(&(inv(cov) * &r)))
}

/// Mann–Whitney AUC by enumerating every (negative, positive) pair.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut hits = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 0 && lj == 1 {
                pairs += 1.0;
                if scores[j] > scores[i] {
                    hits += 1.0;
                } else if scores[j] == scores[i] {
                    hits += 0.5;
                }
            }
        }
    }
    hits / pairs
}
