//! Closed-form and quadrature-based Fisher information: the Gaussian
//! Slepian-Bangs blocks, the elliptical FIM with its a-coefficients, and
//! the Gamma-family FIM.

use crate::error::{Error, Result};
use crate::gamma::gamma_alpha_beta;
use crate::generator::{radial_expectation, CompoundGaussian, DensityGenerator};
use crate::model::{BlockIndex, CovarianceMap, MeanMap};
use crate::quad::QuadOptions;
use crate::special::trigamma;
use nalgebra::{DMatrix, DVector};

/// Symmetric PSD information matrix with named parameter-block ranges.
#[derive(Clone, Debug)]
pub struct FimMatrix {
    pub matrix: DMatrix<f64>,
    pub blocks: BlockIndex,
}

impl FimMatrix {
    pub fn new(matrix: DMatrix<f64>, blocks: BlockIndex) -> Result<Self> {
        if matrix.nrows() != blocks.total() || matrix.ncols() != blocks.total() {
            return Err(Error::Model(format!(
                "FIM is {}x{} but the parameter blocks sum to {}",
                matrix.nrows(),
                matrix.ncols(),
                blocks.total()
            )));
        }
        Ok(Self { matrix, blocks })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn range(&self, block: usize) -> std::ops::Range<usize> {
        match block {
            1 => self.blocks.theta1_range(),
            2 => self.blocks.theta2_range(),
            3 => self.blocks.theta3_range(),
            _ => panic!("block index must be 1, 2 or 3"),
        }
    }

    /// Block submatrix [I]_{(i,j)}, i, j in {1, 2, 3}.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let (ri, rj) = (self.range(i), self.range(j));
        self.matrix
            .view((ri.start, rj.start), (ri.len(), rj.len()))
            .into_owned()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .min()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffMethod {
    ClosedForm,
    Quadrature,
}

/// The g-dependent scalars scaling the elliptical FIM blocks;
/// (1, 1/2, 0) for the Gaussian. `a0` is `None` when no closed form exists
/// and quadrature does not converge (it diverges for strongly peaked
/// generators, e.g. the generalized Gaussian with n = 1, s <= 1/4).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EllipticalCoefficients {
    pub n: usize,
    pub a0: Option<f64>,
    pub a1: f64,
    pub a2: f64,
    pub method: CoeffMethod,
}

impl EllipticalCoefficients {
    pub fn gaussian(n: usize) -> Self {
        Self {
            n,
            a0: Some(1.0),
            a1: 0.5,
            a2: 0.0,
            method: CoeffMethod::ClosedForm,
        }
    }
}

/// a0 = E[Q phi^2(Q)]/n and a1 = E[Q^2 phi^2(Q)]/(2 n (n+2)) by radial
/// quadrature; a2 from the identity a2 = (2 a1 - 1)/4.
pub fn elliptical_coefficients_quadrature(
    gen: &dyn DensityGenerator,
) -> Result<EllipticalCoefficients> {
    let n = gen.dim() as f64;
    let opts = QuadOptions::default();
    let eq2 = radial_expectation(gen, |q| q * q * gen.phi(q) * gen.phi(q), opts)?;
    let a1 = 0.5 * eq2 / (n * (n + 2.0));
    let a2 = 0.25 * (2.0 * a1 - 1.0);
    let a0 = radial_expectation(gen, |q| q * gen.phi(q) * gen.phi(q), opts)
        .ok()
        .map(|v| v / n);
    Ok(EllipticalCoefficients {
        n: gen.dim(),
        a0,
        a1,
        a2,
        method: CoeffMethod::Quadrature,
    })
}

/// Closed-form (a1, a2) for the generalized Gaussian with known exponent s.
/// No closed form for a0 is asserted.
pub fn gg_coefficients_closed_form(n: usize, s: f64) -> Result<EllipticalCoefficients> {
    if s <= 0.0 {
        return Err(Error::Domain(format!(
            "generalized Gaussian exponent s must be positive, got {s}"
        )));
    }
    let nf = n as f64;
    Ok(EllipticalCoefficients {
        n,
        a0: None,
        a1: (nf + 2.0 * s) / (2.0 * (nf + 2.0)),
        a2: -(1.0 - s) / (2.0 * (nf + 2.0)),
        method: CoeffMethod::ClosedForm,
    })
}

/// D^T (Sigma^{-1} (x) Sigma^{-1}) D where D = d vec(Sigma)/d theta2.
/// The Kronecker product is materialized only for n <= 8; larger n uses
/// the column-wise contraction vec(Sigma^{-1} M_j Sigma^{-1}).
fn cov_quadratic_form(dvec: &DMatrix<f64>, sigma_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma_inv.nrows();
    if n <= 8 {
        let kron = sigma_inv.kronecker(sigma_inv);
        return dvec.transpose() * kron * dvec;
    }
    let q2 = dvec.ncols();
    let mut transformed = DMatrix::zeros(n * n, q2);
    for j in 0..q2 {
        let mj = DMatrix::from_column_slice(n, n, dvec.column(j).as_slice());
        let t = sigma_inv * mj * sigma_inv;
        transformed.set_column(j, &DVector::from_column_slice(t.as_slice()));
    }
    dvec.transpose() * transformed
}

fn prepare_maps(
    mean_map: &MeanMap,
    cov_map: &CovarianceMap,
    theta1: &[f64],
    theta2: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let jac_m = mean_map.jacobian(theta1)?;
    let sigma = cov_map.evaluate(theta2)?;
    let dvec = cov_map.jacobian_vec(theta2)?;
    let n = sigma.nrows();
    let chol = nalgebra::Cholesky::new(sigma)
        .ok_or_else(|| Error::Model("Sigma(theta2) is not positive definite".into()))?;
    let sigma_inv = chol.inverse();
    debug_assert_eq!(jac_m.nrows(), n);
    Ok((jac_m, sigma_inv, dvec))
}

fn assemble_block_diagonal(
    block11: DMatrix<f64>,
    block22: DMatrix<f64>,
) -> Result<FimMatrix> {
    let (q1, q2) = (block11.nrows(), block22.nrows());
    let mut m = DMatrix::zeros(q1 + q2, q1 + q2);
    m.view_mut((0, 0), (q1, q1)).copy_from(&block11);
    m.view_mut((q1, q1), (q2, q2)).copy_from(&block22);
    FimMatrix::new(m, BlockIndex { q1, q2, q3: 0 })
}

/// Gaussian Slepian-Bangs FIM: block-diagonal over (theta1, theta2) with
/// blocks (dm/dtheta1)^T Sigma^{-1} dm/dtheta1 and
/// (1/2) D^T (Sigma^{-1} (x) Sigma^{-1}) D.
pub fn slepian_bangs_gaussian(
    mean_map: &MeanMap,
    cov_map: &CovarianceMap,
    theta1: &[f64],
    theta2: &[f64],
) -> Result<FimMatrix> {
    let (jac_m, sigma_inv, dvec) = prepare_maps(mean_map, cov_map, theta1, theta2)?;
    let block11 = jac_m.transpose() * &sigma_inv * &jac_m;
    let block22 = 0.5 * cov_quadratic_form(&dvec, &sigma_inv);
    assemble_block_diagonal(block11, block22)
}

/// Elliptical FIM with the a-coefficients; reduces to the Gaussian
/// Slepian-Bangs formula at (a0, a1, a2) = (1, 1/2, 0).
pub fn elliptical_fim(
    mean_map: &MeanMap,
    cov_map: &CovarianceMap,
    coeffs: &EllipticalCoefficients,
    theta1: &[f64],
    theta2: &[f64],
) -> Result<FimMatrix> {
    if mean_map.dim != coeffs.n || cov_map.dim != coeffs.n {
        return Err(Error::Model(format!(
            "coefficient dimension n = {} does not match the model dimension {}",
            coeffs.n, mean_map.dim
        )));
    }
    let a0 = coeffs.a0.ok_or_else(|| {
        Error::Model(
            "a0 is unavailable for these coefficients; the theta1 block cannot be assembled"
                .into(),
        )
    })?;
    let (jac_m, sigma_inv, dvec) = prepare_maps(mean_map, cov_map, theta1, theta2)?;
    let block11 = a0 * jac_m.transpose() * &sigma_inv * &jac_m;

    let vec_sigma_inv = DVector::from_column_slice(sigma_inv.as_slice());
    let dtv = dvec.transpose() * &vec_sigma_inv; // q2 vector
    let block22 =
        coeffs.a1 * cov_quadratic_form(&dvec, &sigma_inv) + coeffs.a2 * (&dtv * dtv.transpose());
    assemble_block_diagonal(block11, block22)
}

/// Closed-form 2x2 Gamma FIM in theta = (m, sigma^2); the cross term is
/// nonzero (the blocks are coupled).
pub fn gamma_fim(m: f64, sigma2: f64, n: usize) -> Result<FimMatrix> {
    gamma_alpha_beta(m, sigma2)?; // validates the domain
    let nf = n as f64;
    let tg = trigamma(m * m / sigma2);
    let s2 = sigma2;
    let i_mm = 4.0 * m * m / (s2 * s2) * tg - 3.0 / s2;
    let i_ms = -2.0 * m.powi(3) / s2.powi(3) * tg + 2.0 * m / (s2 * s2);
    let i_ss = m.powi(4) / s2.powi(4) * tg - m * m / s2.powi(3);
    let matrix = nf * DMatrix::from_row_slice(2, 2, &[i_mm, i_ms, i_ms, i_ss]);
    FimMatrix::new(matrix, BlockIndex { q1: 1, q2: 1, q3: 0 })
}

/// a1 via the compound-Gaussian relation a1 = 1/2 + E[Q^2 phi'(Q)]/(n(n+2)),
/// which is <= 1/2 with equality iff tau = 1.
pub fn compound_gaussian_a1(gen: &CompoundGaussian) -> Result<f64> {
    let n = gen.dim() as f64;
    let expect = radial_expectation(
        gen,
        |q| q * q * gen.phi_prime(q).expect("compound-Gaussian phi' is closed-form"),
        QuadOptions::default(),
    )?;
    Ok(0.5 + expect / (n * (n + 2.0)))
}
