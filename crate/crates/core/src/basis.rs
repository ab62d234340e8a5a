//! Cubic B-spline bases and trapezoid quadrature on the global grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MagicError, Result};
use crate::math::TimeGrid;

const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

/// Cubic B-spline basis described by its knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis", into = "RawBasis")]
pub struct BasisConfig {
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBasis {
    num_basis: usize,
    knots: Vec<f64>,
}

impl BasisConfig {
    /// Open uniform cubic basis with `num_basis` functions over `[start, end]`.
    pub fn open_uniform(num_basis: usize, start: f64, end: f64) -> Result<Self> {
        if num_basis < ORDER {
            return Err(MagicError::InvalidParameter(format!(
                "a cubic basis needs at least {ORDER} functions, got {num_basis}"
            )));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(MagicError::InvalidParameter(format!(
                "basis span [{start}, {end}] is empty"
            )));
        }
        let segments = num_basis - DEGREE;
        let mut knots = vec![start; ORDER];
        for j in 1..segments {
            knots.push(start + (end - start) * j as f64 / segments as f64);
        }
        knots.extend(std::iter::repeat_n(end, ORDER));
        Self::from_knots(knots)
    }

    /// Default basis for a grid: open uniform over `[min T, max T]`.
    pub fn for_grid(num_basis: usize, grid: &TimeGrid) -> Result<Self> {
        Self::open_uniform(num_basis, grid.start(), grid.end())
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 2 * ORDER {
            return Err(MagicError::InvalidParameter(format!(
                "a cubic knot vector needs at least {} knots, got {n}",
                2 * ORDER
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(MagicError::InvalidParameter(
                "knot vector must be finite and non-decreasing".into(),
            ));
        }
        let (lo, hi) = (knots[0], knots[n - 1]);
        if knots[..ORDER].iter().any(|&k| k != lo) || knots[n - ORDER..].iter().any(|&k| k != hi) {
            return Err(MagicError::InvalidParameter(
                "end knots must be repeated four times".into(),
            ));
        }
        if hi <= lo {
            return Err(MagicError::InvalidParameter("knot span is empty".into()));
        }
        // Interior multiplicity above the degree would make the basis discontinuous.
        if knots[ORDER..n - ORDER].windows(ORDER).any(|w| w[0] == w[ORDER - 1]) {
            return Err(MagicError::InvalidParameter(
                "interior knot multiplicity exceeds the degree".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - ORDER
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Index `i` with `knots[i] <= t < knots[i+1]`, using the last non-empty
    /// interval for the right end point.
    fn find_span(&self, t: f64) -> usize {
        let k = &self.knots;
        let last = self.num_basis() - 1;
        if t >= k[last + 1] {
            return last;
        }
        // First index whose knot exceeds t, minus one.
        k.partition_point(|&x| x <= t) - 1
    }
}

impl TryFrom<RawBasis> for BasisConfig {
    type Error = MagicError;

    fn try_from(raw: RawBasis) -> Result<Self> {
        let config = Self::from_knots(raw.knots)?;
        if config.num_basis() != raw.num_basis {
            return Err(MagicError::InvalidParameter(format!(
                "num_basis {} does not match {} knots",
                raw.num_basis,
                config.knots.len()
            )));
        }
        Ok(config)
    }
}

impl From<BasisConfig> for RawBasis {
    fn from(c: BasisConfig) -> Self {
        Self {
            num_basis: c.num_basis(),
            knots: c.knots,
        }
    }
}

/// Values of all `K` basis functions at `t` (Cox–de Boor, triangular scheme).
pub fn basis_eval(config: &BasisConfig, t: f64) -> Result<DVector<f64>> {
    let (lo, hi) = config.span();
    if !(t >= lo && t <= hi) {
        return Err(MagicError::Domain { t, lo, hi });
    }
    let k = &config.knots;
    let span = config.find_span(t);
    let mut n = [0.0; ORDER];
    let mut left = [0.0; ORDER];
    let mut right = [0.0; ORDER];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = t - k[span + 1 - j];
        right[j] = k[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    let mut out = DVector::zeros(config.num_basis());
    for (r, v) in n.iter().enumerate() {
        out[span - DEGREE + r] = *v;
    }
    Ok(out)
}

/// `x = [1, ∫φ_1 f, …, ∫φ_K f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCovariate {
    x: DVector<f64>,
}

impl FunctionalCovariate {
    /// Builds a covariate from the `K` basis integrals.
    pub fn from_integrals(integrals: &DVector<f64>) -> Self {
        let mut x = DVector::zeros(integrals.len() + 1);
        x[0] = 1.0;
        x.rows_mut(1, integrals.len()).copy_from(integrals);
        Self { x }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn integrals(&self) -> DVector<f64> {
        self.x.rows(1, self.x.len() - 1).into_owned()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Basis values and trapezoid weights on a grid, precomputed once per fit.
///
/// `weighted[(j, k)] = w_j φ_k(t_j)`, so `weightedᵀ f` approximates `∫ φ f`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDesign {
    pub weights: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub weighted: DMatrix<f64>,
}

impl QuadratureDesign {
    pub fn new(grid: &TimeGrid, config: &BasisConfig) -> Result<Self> {
        let weights = DVector::from_vec(grid.trapezoid_weights()?);
        let n = grid.len();
        let k = config.num_basis();
        let mut phi = DMatrix::zeros(n, k);
        for (j, &t) in grid.points().iter().enumerate() {
            phi.row_mut(j).copy_from(&basis_eval(config, t)?.transpose());
        }
        let weighted = DMatrix::from_fn(n, k, |j, c| weights[j] * phi[(j, c)]);
        Ok(Self {
            weights,
            phi,
            weighted,
        })
    }

    pub fn grid_len(&self) -> usize {
        self.weights.len()
    }

    pub fn num_basis(&self) -> usize {
        self.phi.ncols()
    }

    pub fn covariate(&self, f: &DVector<f64>) -> Result<FunctionalCovariate> {
        if f.len() != self.grid_len() {
            return Err(MagicError::Dimension {
                expected: self.grid_len(),
                got: f.len(),
            });
        }
        Ok(FunctionalCovariate::from_integrals(&(self.weighted.transpose() * f)))
    }

    /// `∫∫ φ(t) C(t, t') φ(t')ᵀ` by the product trapezoid rule.
    pub fn double_integral(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.grid_len();
        if c.nrows() != n || c.ncols() != n {
            return Err(MagicError::Dimension {
                expected: n,
                got: c.nrows(),
            });
        }
        let asym = (c - c.transpose()).amax();
        if asym > 1e-8 * c.amax().max(1.0) {
            return Err(MagicError::InvalidInput(format!(
                "covariance surface is not symmetric (max deviation {asym:e})"
            )));
        }
        let out = self.weighted.transpose() * c * &self.weighted;
        Ok((&out + out.transpose()) * 0.5)
    }
}

/// Trapezoid projection of a complete curve onto the basis.
pub fn functional_covariate(
    grid: &TimeGrid,
    f: &DVector<f64>,
    config: &BasisConfig,
) -> Result<FunctionalCovariate> {
    QuadratureDesign::new(grid, config)?.covariate(f)
}

pub fn weighted_double_integral(
    grid: &TimeGrid,
    c: &DMatrix<f64>,
    config: &BasisConfig,
) -> Result<DMatrix<f64>> {
    QuadratureDesign::new(grid, config)?.double_integral(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive definition, evaluated one function at a time.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, t: f64, right_end: bool) -> f64 {
        if p == 0 {
            let inside = knots[i] <= t && t < knots[i + 1];
            // Close the last non-empty interval on the right.
            let closing = right_end && t == knots[i + 1] && knots[i] < knots[i + 1]
                && knots[i + 1..].iter().all(|&k| k == knots[i + 1]);
            return if inside || closing { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (t - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, t, right_end);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - t) / d2 * cox_de_boor(knots, i + 1, p - 1, t, right_end);
        }
        v
    }

    #[test]
    fn open_uniform_knots() {
        let b = BasisConfig::open_uniform(8, 0.0, 50.0).unwrap();
        assert_eq!(b.num_basis(), 8);
        assert_eq!(b.knots().len(), 12);
        assert_eq!(&b.knots()[..4], &[0.0; 4]);
        assert_eq!(b.knots()[4], 10.0);
        assert!(BasisConfig::open_uniform(3, 0.0, 1.0).is_err());
    }

    #[test]
    fn endpoint_interpolation() {
        let b = BasisConfig::open_uniform(6, 0.0, 50.0).unwrap();
        let v = basis_eval(&b, 0.0).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v.rows(1, 5).iter().all(|&x| x == 0.0));
        let v = basis_eval(&b, 50.0).unwrap();
        assert!((v[5] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_span_is_domain_error() {
        let b = BasisConfig::open_uniform(6, 0.0, 50.0).unwrap();
        assert!(matches!(basis_eval(&b, 50.5), Err(MagicError::Domain { .. })));
        assert!(matches!(basis_eval(&b, f64::NAN), Err(MagicError::Domain { .. })));
    }

    #[test]
    fn matches_recursive_oracle() {
        let b = BasisConfig::open_uniform(6, 0.0, 50.0).unwrap();
        for &t in &[25.0, 0.0, 3.7, 16.6667, 49.99, 50.0] {
            let v = basis_eval(&b, t).unwrap();
            for i in 0..6 {
                let o = cox_de_boor(b.knots(), i, 3, t, true);
                assert!((v[i] - o).abs() < 1e-13, "t={t} i={i}: {} vs {o}", v[i]);
            }
        }
    }

    #[test]
    fn covariate_of_zero_and_one() {
        let grid = TimeGrid::uniform(0.0, 50.0, 51).unwrap();
        let b = BasisConfig::for_grid(8, &grid).unwrap();
        let x = functional_covariate(&grid, &DVector::zeros(51), &b).unwrap();
        assert_eq!(x.as_vector()[0], 1.0);
        assert!(x.integrals().iter().all(|&v| v == 0.0));
        let x = functional_covariate(&grid, &DVector::from_element(51, 1.0), &b).unwrap();
        assert!((x.integrals().sum() - 50.0).abs() < 1e-8);
        let short = TimeGrid::new(vec![0.0]).unwrap();
        assert!(matches!(
            functional_covariate(&short, &DVector::zeros(1), &b),
            Err(MagicError::Quadrature(1))
        ));
    }

    #[test]
    fn covariate_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = TimeGrid::uniform(0.0, 10.0, 21).unwrap();
        let q = QuadratureDesign::new(&grid, &BasisConfig::for_grid(6, &grid).unwrap()).unwrap();
        let f = DVector::from_fn(21, |_, _| rng.random_range(-1.0..1.0));
        let g = DVector::from_fn(21, |_, _| rng.random_range(-1.0..1.0));
        let a = 2.5;
        let lhs = q.covariate(&(&f * a + &g)).unwrap().integrals();
        let rhs = q.covariate(&f).unwrap().integrals() * a + q.covariate(&g).unwrap().integrals();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn double_integral_cases() {
        let grid = TimeGrid::uniform(0.0, 10.0, 11).unwrap();
        let q = QuadratureDesign::new(&grid, &BasisConfig::for_grid(6, &grid).unwrap()).unwrap();
        assert_eq!(q.double_integral(&DMatrix::zeros(11, 11)).unwrap(), DMatrix::zeros(6, 6));
        let c = 1.7;
        let ints = q.covariate(&DVector::from_element(11, 1.0)).unwrap().integrals();
        let got = q.double_integral(&DMatrix::from_element(11, 11, c)).unwrap();
        assert!((got - &ints * ints.transpose() * c).amax() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(11, 11, |_, _| rng.random_range(-1.0..1.0));
        let psd = &a * a.transpose();
        let eig = SymmetricEigen::new(q.double_integral(&psd).unwrap()).eigenvalues;
        assert!(eig.min() >= -1e-8);

        let mut asym = psd.clone();
        asym[(0, 1)] += 1e-3;
        assert!(matches!(q.double_integral(&asym), Err(MagicError::InvalidInput(_))));
    }

    #[test]
    fn quadrature_error_is_second_order() {
        let f = |t: f64| (t / 7.0).sin() + 0.02 * t * t;
        let b = BasisConfig::open_uniform(8, 0.0, 50.0).unwrap();
        let cov = |n: usize| {
            let grid = TimeGrid::uniform(0.0, 50.0, n).unwrap();
            let vals = DVector::from_iterator(n, grid.points().iter().map(|&t| f(t)));
            functional_covariate(&grid, &vals, &b).unwrap().integrals()
        };
        let (c1, c2, c3, fine) = (cov(51), cov(101), cov(201), cov(3201));
        let e1 = (c1 - &fine).amax();
        let e2 = (c2 - &fine).amax();
        let e3 = (c3 - &fine).amax();
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.0..5.0).contains(&ratio), "halving ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(t in 0.0f64..=50.0, k in 4usize..14) {
            let b = BasisConfig::open_uniform(k, 0.0, 50.0).unwrap();
            let v = basis_eval(&b, t).unwrap();
            prop_assert!((v.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            prop_assert!(v.iter().filter(|&&x| x != 0.0).count() <= 4);
        }
    }
}
