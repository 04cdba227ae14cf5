//! Parameter blocks and the mean/covariance parameterizations of the
//! location-scale model, together with finite-difference Jacobian checks.

use crate::error::{Error, Result};
use crate::generator::DensityGenerator;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// theta = (theta1, theta2, theta3): mean, covariance and shape/nuisance
/// parameters. Block boundaries are fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    theta1: Vec<f64>,
    theta2: Vec<f64>,
    theta3: Vec<f64>,
}

impl ParameterVector {
    pub fn new(theta1: Vec<f64>, theta2: Vec<f64>, theta3: Option<Vec<f64>>) -> Result<Self> {
        if theta2.is_empty() {
            return Err(Error::Domain(
                "theta2 must contain at least one covariance parameter".into(),
            ));
        }
        Ok(Self {
            theta1,
            theta2,
            theta3: theta3.unwrap_or_default(),
        })
    }

    pub fn theta1(&self) -> &[f64] {
        &self.theta1
    }
    pub fn theta2(&self) -> &[f64] {
        &self.theta2
    }
    pub fn theta3(&self) -> &[f64] {
        &self.theta3
    }

    pub fn blocks(&self) -> BlockIndex {
        BlockIndex {
            q1: self.theta1.len(),
            q2: self.theta2.len(),
            q3: self.theta3.len(),
        }
    }

    /// Concatenated (theta1, theta2, theta3).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.blocks().total());
        v.extend_from_slice(&self.theta1);
        v.extend_from_slice(&self.theta2);
        v.extend_from_slice(&self.theta3);
        v
    }

    pub fn from_flat(flat: &[f64], blocks: BlockIndex) -> Result<Self> {
        if flat.len() != blocks.total() {
            return Err(Error::Model(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                blocks.total()
            )));
        }
        Self::new(
            flat[blocks.theta1_range()].to_vec(),
            flat[blocks.theta2_range()].to_vec(),
            Some(flat[blocks.theta3_range()].to_vec()),
        )
    }
}

/// Named index ranges of the parameter blocks inside a flat vector or FIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct BlockIndex {
    pub q1: usize,
    pub q2: usize,
    pub q3: usize,
}

impl BlockIndex {
    pub fn total(&self) -> usize {
        self.q1 + self.q2 + self.q3
    }
    pub fn theta1_range(&self) -> std::ops::Range<usize> {
        0..self.q1
    }
    pub fn theta2_range(&self) -> std::ops::Range<usize> {
        self.q1..self.q1 + self.q2
    }
    pub fn theta3_range(&self) -> std::ops::Range<usize> {
        self.q1 + self.q2..self.total()
    }
}

type VecMapFn = Arc<dyn Fn(&[f64]) -> Result<DVector<f64>> + Send + Sync>;
type MatMapFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

/// theta1 -> m(theta1) with its n x q1 Jacobian.
#[derive(Clone)]
pub struct MeanMap {
    pub dim: usize,
    pub n_params: usize,
    eval: VecMapFn,
    jac: MatMapFn,
}

impl MeanMap {
    pub fn new(dim: usize, n_params: usize, eval: VecMapFn, jac: MatMapFn) -> Self {
        Self {
            dim,
            n_params,
            eval,
            jac,
        }
    }

    pub fn evaluate(&self, theta1: &[f64]) -> Result<DVector<f64>> {
        self.check_arity(theta1)?;
        let m = (self.eval)(theta1)?;
        debug_assert_eq!(m.len(), self.dim);
        Ok(m)
    }

    pub fn jacobian(&self, theta1: &[f64]) -> Result<DMatrix<f64>> {
        self.check_arity(theta1)?;
        let j = (self.jac)(theta1)?;
        debug_assert_eq!((j.nrows(), j.ncols()), (self.dim, self.n_params));
        Ok(j)
    }

    fn check_arity(&self, theta1: &[f64]) -> Result<()> {
        if theta1.len() != self.n_params {
            return Err(Error::Model(format!(
                "mean map expects {} parameter(s), got {}",
                self.n_params,
                theta1.len()
            )));
        }
        Ok(())
    }
}

/// theta2 -> Sigma(theta2) (n x n SPD) with the n^2 x q2 Jacobian of
/// vec(Sigma).
#[derive(Clone)]
pub struct CovarianceMap {
    pub dim: usize,
    pub n_params: usize,
    eval: MatMapFn,
    jac_vec: MatMapFn,
}

impl CovarianceMap {
    pub fn new(dim: usize, n_params: usize, eval: MatMapFn, jac_vec: MatMapFn) -> Self {
        Self {
            dim,
            n_params,
            eval,
            jac_vec,
        }
    }

    pub fn evaluate(&self, theta2: &[f64]) -> Result<DMatrix<f64>> {
        self.check_arity(theta2)?;
        let s = (self.eval)(theta2)?;
        debug_assert_eq!((s.nrows(), s.ncols()), (self.dim, self.dim));
        Ok(s)
    }

    pub fn jacobian_vec(&self, theta2: &[f64]) -> Result<DMatrix<f64>> {
        self.check_arity(theta2)?;
        let j = (self.jac_vec)(theta2)?;
        debug_assert_eq!((j.nrows(), j.ncols()), (self.dim * self.dim, self.n_params));
        Ok(j)
    }

    fn check_arity(&self, theta2: &[f64]) -> Result<()> {
        if theta2.len() != self.n_params {
            return Err(Error::Model(format!(
                "covariance map expects {} parameter(s), got {}",
                self.n_params,
                theta2.len()
            )));
        }
        Ok(())
    }
}

/// Mean map, covariance map and density generator with matching dimension.
#[derive(Clone)]
pub struct LocationScaleModel {
    pub mean_map: MeanMap,
    pub cov_map: CovarianceMap,
    pub generator: Arc<dyn DensityGenerator>,
}

impl LocationScaleModel {
    pub fn new(
        mean_map: MeanMap,
        cov_map: CovarianceMap,
        generator: Arc<dyn DensityGenerator>,
    ) -> Result<Self> {
        if mean_map.dim != cov_map.dim || cov_map.dim != generator.dim() {
            return Err(Error::Model(format!(
                "dimension mismatch: mean {}, covariance {}, generator {}",
                mean_map.dim,
                cov_map.dim,
                generator.dim()
            )));
        }
        Ok(Self {
            mean_map,
            cov_map,
            generator,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_map.dim
    }
}

/// n i.i.d. scalar observations: theta1 = (m) -> m * 1_n and
/// theta2 = (sigma2) -> sigma2 * I_n.
pub fn builtin_iid_scalar(n: usize) -> (MeanMap, CovarianceMap) {
    assert!(n >= 1, "dimension must be at least 1");
    let mean = MeanMap::new(
        n,
        1,
        Arc::new(move |t: &[f64]| Ok(DVector::from_element(n, t[0]))),
        Arc::new(move |_: &[f64]| Ok(DMatrix::from_element(n, 1, 1.0))),
    );
    let cov = CovarianceMap::new(
        n,
        1,
        Arc::new(move |t: &[f64]| {
            let s2 = t[0];
            if s2 <= 0.0 {
                return Err(Error::Domain(format!(
                    "sigma2 must be positive, got {s2}"
                )));
            }
            Ok(DMatrix::identity(n, n) * s2)
        }),
        Arc::new(move |t: &[f64]| {
            if t[0] <= 0.0 {
                return Err(Error::Domain(format!(
                    "sigma2 must be positive, got {}",
                    t[0]
                )));
            }
            let eye = DMatrix::<f64>::identity(n, n);
            Ok(DMatrix::from_column_slice(n * n, 1, eye.as_slice()))
        }),
    );
    (mean, cov)
}

/// Identity mean map: theta1 = m directly, Jacobian I_n.
pub fn builtin_full_mean(n: usize) -> MeanMap {
    assert!(n >= 1, "dimension must be at least 1");
    MeanMap::new(
        n,
        n,
        Arc::new(move |t: &[f64]| Ok(DVector::from_column_slice(t))),
        Arc::new(move |_: &[f64]| Ok(DMatrix::identity(n, n))),
    )
}

/// Anything with a flat output and an analytic Jacobian that can be checked
/// against central finite differences.
pub trait DifferentiableMap {
    fn out_len(&self) -> usize;
    fn in_len(&self) -> usize;
    fn eval_flat(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn jacobian_flat(&self, theta: &[f64]) -> Result<DMatrix<f64>>;
}

impl DifferentiableMap for MeanMap {
    fn out_len(&self) -> usize {
        self.dim
    }
    fn in_len(&self) -> usize {
        self.n_params
    }
    fn eval_flat(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(theta)?.as_slice().to_vec())
    }
    fn jacobian_flat(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.jacobian(theta)
    }
}

impl DifferentiableMap for CovarianceMap {
    fn out_len(&self) -> usize {
        self.dim * self.dim
    }
    fn in_len(&self) -> usize {
        self.n_params
    }
    fn eval_flat(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(theta)?.as_slice().to_vec())
    }
    fn jacobian_flat(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.jacobian_vec(theta)
    }
}

#[derive(Clone, Debug)]
pub enum JacobianViolation {
    EvalFailed {
        point_index: usize,
        message: String,
    },
    EntryMismatch {
        point_index: usize,
        row: usize,
        col: usize,
        analytic: f64,
        numeric: f64,
        rel_err: f64,
    },
}

/// Central finite-difference Jacobian with step h_i = 1e-5 * (1 + |theta_i|).
pub fn finite_difference_jacobian(
    map: &dyn DifferentiableMap,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(map.out_len(), map.in_len());
    for i in 0..map.in_len() {
        let h = 1e-5 * (1.0 + theta[i].abs());
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = map.eval_flat(&plus)?;
        let fm = map.eval_flat(&minus)?;
        for r in 0..map.out_len() {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Compares analytic and finite-difference Jacobians at each test point.
/// Returns the empty vector iff they agree to relative tolerance `tol`
/// everywhere; evaluation failures are reported, not propagated.
pub fn validate_jacobians(
    map: &dyn DifferentiableMap,
    test_points: &[Vec<f64>],
    tol: f64,
) -> Vec<JacobianViolation> {
    assert!(!test_points.is_empty(), "test_points must be nonempty");
    assert!(tol > 0.0, "tolerance must be positive");

    let mut violations = Vec::new();
    for (idx, theta) in test_points.iter().enumerate() {
        let analytic = match map.jacobian_flat(theta) {
            Ok(j) => j,
            Err(e) => {
                violations.push(JacobianViolation::EvalFailed {
                    point_index: idx,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let numeric = match finite_difference_jacobian(map, theta) {
            Ok(j) => j,
            Err(e) => {
                violations.push(JacobianViolation::EvalFailed {
                    point_index: idx,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for r in 0..map.out_len() {
            for c in 0..map.in_len() {
                let a = analytic[(r, c)];
                let b = numeric[(r, c)];
                let rel = (a - b).abs() / (1.0_f64).max(a.abs().max(b.abs()));
                if rel > tol {
                    violations.push(JacobianViolation::EntryMismatch {
                        point_index: idx,
                        row: r,
                        col: c,
                        analytic: a,
                        numeric: b,
                        rel_err: rel,
                    });
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iid_scalar_maps_match_definition() {
        let (mean, cov) = builtin_iid_scalar(3);
        let m = mean.evaluate(&[2.0]).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 2.0, 2.0]);
        let s = cov.evaluate(&[4.0]).unwrap();
        assert_eq!(s, DMatrix::identity(3, 3) * 4.0);
    }

    #[test]
    fn iid_scalar_jacobians() {
        let (mean, cov) = builtin_iid_scalar(2);
        let j = mean.jacobian(&[0.3]).unwrap();
        assert_eq!(j.as_slice(), &[1.0, 1.0]);
        // vec(I_2) = (1, 0, 0, 1)^T
        let jv = cov.jacobian_vec(&[1.0]).unwrap();
        assert_eq!(jv.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn iid_scalar_rejects_nonpositive_variance() {
        let (_, cov) = builtin_iid_scalar(2);
        let err = cov.evaluate(&[-1.0]).unwrap_err();
        assert!(err.to_string().contains("sigma2"), "{err}");
        assert!(cov.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn full_mean_is_identity() {
        let mean = builtin_full_mean(2);
        let m = mean.evaluate(&[1.0, -1.0]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, -1.0]);
        assert_eq!(mean.jacobian(&[5.0, 7.0]).unwrap(), DMatrix::identity(2, 2));

        let fd = finite_difference_jacobian(&mean, &[0.4, -2.0]).unwrap();
        for (a, b) in fd.iter().zip(DMatrix::<f64>::identity(2, 2).iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn validate_jacobians_passes_builtin_maps() {
        let (mean, cov) = builtin_iid_scalar(4);
        assert!(validate_jacobians(&mean, &[vec![1.5]], 1e-6).is_empty());
        assert!(validate_jacobians(&cov, &[vec![2.0]], 1e-6).is_empty());
        let full = builtin_full_mean(3);
        assert!(validate_jacobians(&full, &[vec![0.1, 0.2, 0.3]], 1e-8).is_empty());
    }

    #[test]
    fn validate_jacobians_flags_wrong_jacobian() {
        // Same map as builtin_full_mean(2) but with Jacobian off by 2x.
        let broken = MeanMap::new(
            2,
            2,
            Arc::new(|t: &[f64]| Ok(DVector::from_column_slice(t))),
            Arc::new(|_: &[f64]| Ok(DMatrix::identity(2, 2) * 2.0)),
        );
        let violations = validate_jacobians(&broken, &[vec![1.0, 2.0]], 1e-6);
        // One violation per wrong entry (the two diagonal entries).
        assert_eq!(violations.len(), 2);
    }

    #[test]
    fn validate_jacobians_reports_eval_failure_as_violation() {
        let (_, cov) = builtin_iid_scalar(2);
        let violations = validate_jacobians(&cov, &[vec![-1.0]], 1e-6);
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0],
            JacobianViolation::EvalFailed { .. }
        ));
    }

    #[test]
    fn random_points_jacobian_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mean, cov) = builtin_iid_scalar(3);
        let full = builtin_full_mean(2);
        for _ in 0..20 {
            let m_pt = vec![rng.gen_range(-5.0..5.0)];
            let c_pt = vec![rng.gen_range(0.1..5.0)];
            let f_pt = vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            assert!(validate_jacobians(&mean, &[m_pt], 1e-6).is_empty());
            assert!(validate_jacobians(&cov, &[c_pt], 1e-6).is_empty());
            assert!(validate_jacobians(&full, &[f_pt], 1e-6).is_empty());
        }
    }

    #[test]
    fn covariance_outputs_are_symmetric_pd() {
        let (_, cov) = builtin_iid_scalar(4);
        for s2 in [0.1, 1.0, 2.5] {
            let s = cov.evaluate(&[s2]).unwrap();
            let asym = (&s - s.transpose()).abs().max();
            assert!(asym < 1e-12);
            assert!(nalgebra::Cholesky::new(s).is_some());
        }
    }

    #[test]
    fn identifiability_on_grid() {
        // Pairwise distinct theta1 -> distinct means, for the built-in maps.
        let (mean, _) = builtin_iid_scalar(3);
        let grid: Vec<f64> = (-5..=5).map(|k| k as f64 * 0.7).collect();
        for (i, a) in grid.iter().enumerate() {
            for b in grid.iter().skip(i + 1) {
                let ma = mean.evaluate(&[*a]).unwrap();
                let mb = mean.evaluate(&[*b]).unwrap();
                assert!((ma - mb).norm() > 0.0);
            }
        }
    }

    #[test]
    fn parameter_vector_blocks() {
        let p = ParameterVector::new(vec![1.0], vec![2.0, 3.0], Some(vec![4.0])).unwrap();
        let b = p.blocks();
        assert_eq!((b.q1, b.q2, b.q3), (1, 2, 1));
        assert_eq!(b.theta2_range(), 1..3);
        assert_eq!(p.flat(), vec![1.0, 2.0, 3.0, 4.0]);
        let back = ParameterVector::from_flat(&p.flat(), b).unwrap();
        assert_eq!(back, p);
        assert!(ParameterVector::new(vec![1.0], vec![], None).is_err());
    }
}
