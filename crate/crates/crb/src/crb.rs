//! CRB assembly: FIM inversion, block extraction under a nuisance policy,
//! Loewner-order comparison, and the closed-form study curves.

use crate::error::{Error, Result};
use crate::fim::{gg_coefficients_closed_form, FimMatrix};
use crate::generator::{radial_expectation, DensityGenerator, GeneralizedGaussian};
use crate::quad::QuadOptions;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

/// Which parameter block a CRB refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    Theta1,
    Theta2,
}

/// How the other block is treated when extracting a block CRB. `Known`
/// inverts the target block alone; `Schur` folds in the cost of jointly
/// estimating the other block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisancePolicy {
    Known,
    Schur,
}

/// Invert a symmetric positive definite matrix through its eigensystem.
/// A numerically rank-deficient input is an error carrying the null-space
/// basis so the caller can see which directions are unidentifiable.
pub fn invert_psd(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = matrix.nrows();
    if n == 0 {
        return Err(Error::Model("cannot invert an empty matrix".into()));
    }
    if matrix.ncols() != n {
        return Err(Error::Model(format!(
            "matrix is {}x{}, expected square",
            n,
            matrix.ncols()
        )));
    }
    let sym = 0.5 * (matrix + matrix.transpose());
    let eig = SymmetricEigen::new(sym);
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-12 * max_eig.max(1e-300);
    let mut null_dirs = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= tol {
            let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            null_dirs.push(format!("lambda = {lam:.3e}, direction = {v:?}"));
        }
    }
    if !null_dirs.is_empty() {
        return Err(Error::RankDeficient(format!(
            "matrix is singular to working precision; null space: [{}]",
            null_dirs.join("; ")
        )));
    }
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        let v = eig.eigenvectors.column(i);
        inv += (&v * v.transpose()) / eig.eigenvalues[i];
    }
    Ok(inv)
}

/// CRB for one block of the FIM under the chosen nuisance policy.
pub fn crb_from_fim(fim: &FimMatrix, block: Block, policy: NuisancePolicy) -> Result<DMatrix<f64>> {
    let b = fim.blocks;
    let (own, other) = match block {
        Block::Theta1 => ((1usize, b.q1), (2usize, b.q2)),
        Block::Theta2 => ((2usize, b.q2), (1usize, b.q1)),
    };
    if own.1 == 0 {
        return Err(Error::Model("requested block is empty".into()));
    }
    let i_tt = fim.block(own.0, own.0);
    match policy {
        NuisancePolicy::Known => invert_psd(&i_tt),
        NuisancePolicy::Schur => {
            if other.1 == 0 {
                return invert_psd(&i_tt);
            }
            let i_tn = fim.block(own.0, other.0);
            let i_nn_inv = invert_psd(&fim.block(other.0, other.0)).map_err(|e| {
                Error::RankDeficient(format!("nuisance block is not invertible: {e}"))
            })?;
            let schur = i_tt - &i_tn * i_nn_inv * i_tn.transpose();
            invert_psd(&schur)
        }
    }
}

/// Full-parameter CRB: the inverse of the whole FIM.
pub fn crb_full(fim: &FimMatrix) -> Result<DMatrix<f64>> {
    invert_psd(&fim.matrix)
}

/// Loewner-order verdict for a pair of symmetric matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoewnerVerdict {
    Equal,
    /// a <= b in the Loewner order (b - a is PSD).
    LessOrEqual,
    /// a >= b in the Loewner order.
    GreaterOrEqual,
    Incomparable,
}

/// Compare a and b up to a tolerance of 1e-10 times the matrix scale.
pub fn compare_loewner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LoewnerVerdict> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Model(format!(
            "cannot compare {}x{} against {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let scale = a.abs().max().max(b.abs().max()).max(1.0);
    let tol = 1e-10 * scale;
    let diff = 0.5 * ((b - a) + (b - a).transpose());
    let eigs = SymmetricEigen::new(diff).eigenvalues;
    let min = eigs.min();
    let max = eigs.max();
    Ok(if min >= -tol && max <= tol {
        LoewnerVerdict::Equal
    } else if min >= -tol {
        LoewnerVerdict::LessOrEqual
    } else if max <= tol {
        LoewnerVerdict::GreaterOrEqual
    } else {
        LoewnerVerdict::Incomparable
    })
}

/// One point of the Gamma CRB expansion check.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionPoint {
    pub r: f64,
    pub crb_sigma2: f64,
    /// (n CRB / (2 sigma^4) - 1) / r, whose r -> 0 limit is 5/3.
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionCheck {
    pub n: usize,
    pub points: Vec<ExpansionPoint>,
    /// Richardson extrapolation of h over the two smallest r values.
    pub extrapolated: f64,
}

/// Verify the small-(sigma^2/m^2) behaviour of the Gamma CRB(sigma^2):
/// CRB = (2 sigma^4 / n)(1 + (5/3) r + o(r)) with r = sigma^2/m^2.
/// Evaluated at sigma^2 = 1, m = 1/sqrt(r) over a decade grid.
pub fn gamma_crb_expansion_check(n: usize) -> Result<ExpansionCheck> {
    let sigma2 = 1.0f64;
    let rs = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut points = Vec::with_capacity(rs.len());
    for &r in &rs {
        let m = (sigma2 / r).sqrt();
        let fim = crate::fim::gamma_fim(m, sigma2, n)?;
        let crb = crb_full(&fim)?[(1, 1)];
        let h = (n as f64 * crb / (2.0 * sigma2 * sigma2) - 1.0) / r;
        points.push(ExpansionPoint { r, crb_sigma2: crb, h });
    }
    let k = points.len();
    // r shrinks by 10x per step, and the error in h is O(r), so
    // (10 h_small - h_big)/9 cancels the leading correction.
    let extrapolated = (10.0 * points[k - 1].h - points[k - 2].h) / 9.0;
    Ok(ExpansionCheck { n, points, extrapolated })
}

/// Whether the shape s of the generalized Gaussian texture is known or a
/// jointly estimated nuisance parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKnowledge {
    Known,
    Unknown,
}

/// Per-observation (sigma^2, s) information for i.i.d. scalar generalized
/// Gaussian data at sigma^2 = 1.
#[derive(Clone, Debug, Serialize)]
pub struct GgNuisanceInfo {
    pub s: f64,
    pub i_sigma_sigma: f64,
    pub i_ss: f64,
    pub i_sigma_s: f64,
    /// The (negative) Schur correction -i_sigma_s^2 / i_ss.
    pub a3: f64,
}

/// Shape values outside this range make the s-score quadrature unreliable.
pub const GG_NUISANCE_S_RANGE: (f64, f64) = (0.1, 4.0);

pub fn gg_nuisance_info(s: f64) -> Result<GgNuisanceInfo> {
    let (lo, hi) = GG_NUISANCE_S_RANGE;
    if !(lo..=hi).contains(&s) {
        return Err(Error::Domain(format!(
            "shape s = {s} outside the supported nuisance range [{lo}, {hi}]"
        )));
    }
    let gen = GeneralizedGaussian::new(1, s)?;
    let opts = QuadOptions::default();
    // Scores at sigma^2 = 1: u_sigma = (phi(q) q - 1)/2, u_s = d ln g / ds.
    let i_sigma_sigma = radial_expectation(
        &gen,
        |q| {
            let u = 0.5 * (gen.phi(q) * q - 1.0);
            u * u
        },
        opts,
    )?;
    let i_ss = radial_expectation(
        &gen,
        |q| {
            let u = gen.d_log_g_ds(q);
            u * u
        },
        opts,
    )?;
    let i_sigma_s = radial_expectation(
        &gen,
        |q| 0.5 * (gen.phi(q) * q - 1.0) * gen.d_log_g_ds(q),
        opts,
    )?;
    if i_ss <= 0.0 {
        return Err(Error::Numeric(format!(
            "nonpositive i_ss = {i_ss} at s = {s}"
        )));
    }
    Ok(GgNuisanceInfo {
        s,
        i_sigma_sigma,
        i_ss,
        i_sigma_s,
        a3: -i_sigma_s * i_sigma_s / i_ss,
    })
}

/// CRB(sigma^2) for n_obs i.i.d. scalar generalized Gaussian observations
/// at sigma^2 = 1, with the location known. With s known this is
/// 2/(s n_obs) in closed form; with s unknown the Schur-corrected
/// information i_sigma_sigma + a3 applies.
pub fn gg_crb_sigma2(n_obs: usize, s: f64, knowledge: ShapeKnowledge) -> Result<f64> {
    if n_obs == 0 {
        return Err(Error::Model("n_obs must be at least 1".into()));
    }
    match knowledge {
        ShapeKnowledge::Known => {
            let coeffs = gg_coefficients_closed_form(1, s)?;
            // Scalar theta2 block: (a1 + a2) / sigma^4 per observation.
            let info = coeffs.a1 + coeffs.a2;
            Ok(1.0 / (n_obs as f64 * info))
        }
        ShapeKnowledge::Unknown => {
            let info = gg_nuisance_info(s)?;
            let eff = info.i_sigma_sigma + info.a3;
            if eff <= 0.0 {
                return Err(Error::RankDeficient(format!(
                    "effective information {eff} is nonpositive at s = {s}"
                )));
            }
            Ok(1.0 / (n_obs as f64 * eff))
        }
    }
}
