//! A self-check battery over the analytic identities and inequalities the
//! library is built on, with optional fault injection to prove the checks
//! can fail.

use crate::crb::{gg_crb_sigma2, ShapeKnowledge};
use crate::error::Result;
use crate::fim::{
    compound_gaussian_a1, elliptical_coefficients_quadrature, gamma_fim, gg_coefficients_closed_form,
};
use crate::generator::{
    radial_expectation, CompoundGaussian, DensityGenerator, Gaussian, GeneralizedGaussian,
    StudentT, Texture,
};
use crate::model::{builtin_iid_scalar, LocationScaleModel, ParameterVector};
use crate::oracle::empirical_fim_elliptical;
use crate::quad::QuadOptions;
use rand::RngCore;
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Pass, detail: detail.into() }
    }
    fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Fail, detail: detail.into() }
    }
    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Skipped, detail: detail.into() }
    }
}

/// Deliberate corruption for exercising the failure paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Scales one density by a constant so its normalization integral is
    /// off by 5 percent.
    BadNormalization,
}

impl Fault {
    pub fn label(&self) -> Option<&'static str> {
        match self {
            Fault::None => None,
            Fault::BadNormalization => Some("bad-normalization"),
        }
    }
}

struct ScaledGenerator {
    inner: Arc<dyn DensityGenerator>,
    log_scale: f64,
}

impl DensityGenerator for ScaledGenerator {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn log_g(&self, t: f64) -> f64 {
        self.inner.log_g(t) + self.log_scale
    }
    fn phi(&self, t: f64) -> f64 {
        self.inner.phi(t)
    }
    fn phi_prime(&self, t: f64) -> Option<f64> {
        self.inner.phi_prime(t)
    }
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample_q(rng)
    }
    fn family(&self) -> String {
        self.inner.family()
    }
    fn shape(&self) -> Option<Vec<f64>> {
        self.inner.shape()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub n_samples: usize,
    pub seed: u64,
    pub fault: Option<String>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut p = (0, 0, 0);
        for c in &self.checks {
            match c.status {
                CheckStatus::Pass => p.0 += 1,
                CheckStatus::Fail => p.1 += 1,
                CheckStatus::Skipped => p.2 += 1,
            }
        }
        p
    }
}

fn iid_model(gen: Arc<dyn DensityGenerator>) -> LocationScaleModel {
    let (mean, cov) = builtin_iid_scalar(gen.dim());
    LocationScaleModel::new(mean, cov, gen).expect("builtin maps are dimension consistent")
}

/// Run the whole battery. `n_samples` controls the Monte Carlo checks;
/// everything else is quadrature or closed form.
pub fn run_verify_suite(n_samples: usize, seed: u64, fault: Fault) -> Result<VerifyReport> {
    let opts = QuadOptions::default();
    let mut checks: Vec<CheckResult> = Vec::new();
    let n = 2usize;

    let mut families: Vec<Arc<dyn DensityGenerator>> = vec![
        Arc::new(Gaussian::new(n)),
        Arc::new(GeneralizedGaussian::new(n, 0.5)?),
        Arc::new(GeneralizedGaussian::new(n, 2.0)?),
        Arc::new(StudentT::new(n, 5.0)?),
        Arc::new(CompoundGaussian::new(n, Texture::two_point(0.5, 1.5, 0.5)?)?),
    ];
    if fault == Fault::BadNormalization {
        families[1] = Arc::new(ScaledGenerator {
            inner: families[1].clone(),
            log_scale: 1.05f64.ln(),
        });
    }

    // Per-family identities; downstream checks for a family whose
    // normalization fails are skipped rather than reported as broken math.
    let mut family_ok = Vec::with_capacity(families.len());
    for gen in &families {
        let fam = gen.family();
        let name = format!("normalization[{fam}]");
        let ok = match radial_expectation(gen.as_ref(), |_| 1.0, opts) {
            Ok(v) if (v - 1.0).abs() < 1e-8 => {
                checks.push(CheckResult::pass(&name, format!("integral = {v:.12}")));
                true
            }
            Ok(v) => {
                checks.push(CheckResult::fail(&name, format!("integral = {v:.12}, want 1")));
                false
            }
            Err(e) => {
                checks.push(CheckResult::fail(&name, e.to_string()));
                false
            }
        };
        family_ok.push(ok);

        for (label, h, want) in [
            ("radial-mean", Box::new(|q: f64| q) as Box<dyn Fn(f64) -> f64>, n as f64),
            ("phi-ibp", Box::new(|q: f64| q * gen.phi(q)), n as f64),
        ] {
            let name = format!("{label}[{fam}]");
            if !ok {
                checks.push(CheckResult::skipped(&name, "normalization failed"));
                continue;
            }
            match radial_expectation(gen.as_ref(), h, opts) {
                Ok(v) if (v - want).abs() < 1e-7 * want.max(1.0) => {
                    checks.push(CheckResult::pass(&name, format!("value = {v:.12}")));
                }
                Ok(v) => {
                    checks.push(CheckResult::fail(&name, format!("value = {v:.12}, want {want}")));
                }
                Err(e) => checks.push(CheckResult::fail(&name, e.to_string())),
            }
        }
    }

    // Coefficient bounds: a1 >= n/(2(n+2)), a2 >= -1/(2(n+2)).
    let a1_floor = n as f64 / (2.0 * (n as f64 + 2.0));
    let a2_floor = -1.0 / (2.0 * (n as f64 + 2.0));
    for (gen, &ok) in families.iter().zip(&family_ok) {
        let fam = gen.family();
        let name = format!("coefficient-bounds[{fam}]");
        if !ok {
            checks.push(CheckResult::skipped(&name, "normalization failed"));
            continue;
        }
        match elliptical_coefficients_quadrature(gen.as_ref()) {
            Ok(c) => {
                if c.a1 >= a1_floor - 1e-9 && c.a2 >= a2_floor - 1e-9 {
                    checks.push(CheckResult::pass(
                        &name,
                        format!("a1 = {:.9} >= {a1_floor:.9}, a2 = {:.9} >= {a2_floor:.9}", c.a1, c.a2),
                    ));
                } else {
                    checks.push(CheckResult::fail(
                        &name,
                        format!("a1 = {:.9} (floor {a1_floor:.9}), a2 = {:.9} (floor {a2_floor:.9})", c.a1, c.a2),
                    ));
                }
            }
            Err(e) => checks.push(CheckResult::fail(&name, e.to_string())),
        }
    }

    // Gaussian coefficients are exactly (1, 1/2, 0).
    {
        let name = "gaussian-coefficients";
        match elliptical_coefficients_quadrature(&Gaussian::new(n)) {
            Ok(c) => {
                let a0 = c.a0.unwrap_or(f64::NAN);
                if (a0 - 1.0).abs() < 1e-8 && (c.a1 - 0.5).abs() < 1e-8 && c.a2.abs() < 1e-8 {
                    checks.push(CheckResult::pass(
                        name,
                        format!("(a0, a1, a2) = ({a0:.10}, {:.10}, {:.10})", c.a1, c.a2),
                    ));
                } else {
                    checks.push(CheckResult::fail(
                        name,
                        format!("(a0, a1, a2) = ({a0:.10}, {:.10}, {:.10}), want (1, 0.5, 0)", c.a1, c.a2),
                    ));
                }
            }
            Err(e) => checks.push(CheckResult::fail(name, e.to_string())),
        }
    }

    // Closed form against quadrature for the generalized Gaussian.
    for (idx, s) in [(1usize, 0.5f64), (2, 2.0)] {
        let name = format!("gg-closed-vs-quadrature[s={s}]");
        if !family_ok[idx] {
            checks.push(CheckResult::skipped(&name, "normalization failed"));
            continue;
        }
        let closed = gg_coefficients_closed_form(n, s)?;
        match elliptical_coefficients_quadrature(families[idx].as_ref()) {
            Ok(q) => {
                let d1 = (q.a1 - closed.a1).abs();
                let d2 = (q.a2 - closed.a2).abs();
                if d1 < 1e-8 && d2 < 1e-8 {
                    checks.push(CheckResult::pass(&name, format!("|da1| = {d1:.2e}, |da2| = {d2:.2e}")));
                } else {
                    checks.push(CheckResult::fail(&name, format!("|da1| = {d1:.2e}, |da2| = {d2:.2e}")));
                }
            }
            Err(e) => checks.push(CheckResult::fail(&name, e.to_string())),
        }
    }

    // Compound Gaussian a1 <= 1/2 by two independent routes.
    {
        let name = "cg-a1-below-half";
        let cg = CompoundGaussian::new(n, Texture::two_point(0.5, 1.5, 0.5)?)?;
        let via_phi_prime = compound_gaussian_a1(&cg);
        let via_moments = elliptical_coefficients_quadrature(&cg).map(|c| c.a1);
        match (via_phi_prime, via_moments) {
            (Ok(a), Ok(b)) => {
                if (a - b).abs() < 1e-8 && a <= 0.5 + 1e-9 {
                    checks.push(CheckResult::pass(name, format!("a1 = {a:.9} by both routes")));
                } else {
                    checks.push(CheckResult::fail(
                        name,
                        format!("phi-prime route {a:.9}, moment route {b:.9}"),
                    ));
                }
            }
            (a, b) => checks.push(CheckResult::fail(
                name,
                format!("route errors: {:?} / {:?}", a.err(), b.err()),
            )),
        }
    }

    // Monte Carlo: the theta1 information block of a symmetric non-Gaussian
    // family dominates the Gaussian one.
    let gauss_fim = crate::fim::slepian_bangs_gaussian(
        &builtin_iid_scalar(n).0,
        &builtin_iid_scalar(n).1,
        &[0.0],
        &[1.0],
    )?;
    let gauss_11 = gauss_fim.block(1, 1);
    for (idx, tag) in [(1usize, "gg-s0.5"), (3, "student-t")] {
        let name = format!("theta1-dominates-gaussian[{tag}]");
        if !family_ok[idx] {
            checks.push(CheckResult::skipped(&name, "normalization failed"));
            continue;
        }
        let model = iid_model(families[idx].clone());
        let theta = ParameterVector::new(vec![0.0], vec![1.0], None)?;
        match empirical_fim_elliptical(&model, &theta, n_samples, seed) {
            Ok(emp) => {
                let diff = emp.fim.block(1, 1) - &gauss_11;
                let min_eig = nalgebra::SymmetricEigen::new(diff).eigenvalues.min();
                let band = 4.0 * emp.se.view((0, 0), (1, 1)).max();
                if min_eig >= -band {
                    checks.push(CheckResult::pass(
                        &name,
                        format!("min eig = {min_eig:.6} with band {band:.6}"),
                    ));
                } else {
                    checks.push(CheckResult::fail(
                        &name,
                        format!("min eig = {min_eig:.6} below -{band:.6}"),
                    ));
                }
            }
            Err(e) => checks.push(CheckResult::fail(&name, e.to_string())),
        }
    }

    // Monte Carlo: cross block between theta1 and theta2 vanishes.
    {
        let name = "cross-block-decoupling[gg-s0.5]";
        if !family_ok[1] {
            checks.push(CheckResult::skipped(name, "normalization failed"));
        } else {
            let model = iid_model(families[1].clone());
            let theta = ParameterVector::new(vec![0.0], vec![1.0], None)?;
            match empirical_fim_elliptical(&model, &theta, n_samples, seed.wrapping_add(1)) {
                Ok(emp) => {
                    let cross = emp.fim.block(1, 2)[(0, 0)];
                    let band = 4.0 * emp.se[(0, 1)];
                    if cross.abs() <= band {
                        checks.push(CheckResult::pass(
                            name,
                            format!("cross = {cross:.6} within {band:.6}"),
                        ));
                    } else {
                        checks.push(CheckResult::fail(
                            name,
                            format!("cross = {cross:.6} outside {band:.6}"),
                        ));
                    }
                }
                Err(e) => checks.push(CheckResult::fail(name, e.to_string())),
            }
        }
    }

    // Gamma family facts: exact CRB(m), the 5/3 expansion coefficient, and
    // genuine cross coupling.
    {
        let name = "gamma-crb-mean";
        let (m, s2, n_obs) = (2.0, 1.0, 5usize);
        let fim = gamma_fim(m, s2, n_obs)?;
        let crb_m = crate::crb::crb_full(&fim)?[(0, 0)];
        let want = s2 / n_obs as f64;
        if (crb_m - want).abs() < 1e-10 * want {
            checks.push(CheckResult::pass(name, format!("crb(m) = {crb_m:.12}")));
        } else {
            checks.push(CheckResult::fail(name, format!("crb(m) = {crb_m:.12}, want {want:.12}")));
        }
    }
    {
        let name = "gamma-expansion-5-3";
        match crate::crb::gamma_crb_expansion_check(1) {
            Ok(c) => {
                let rel = (c.extrapolated - 5.0 / 3.0).abs() / (5.0 / 3.0);
                if rel < 0.01 {
                    checks.push(CheckResult::pass(name, format!("limit = {:.6}", c.extrapolated)));
                } else {
                    checks.push(CheckResult::fail(
                        name,
                        format!("limit = {:.6}, want 5/3 within 1%", c.extrapolated),
                    ));
                }
            }
            Err(e) => checks.push(CheckResult::fail(name, e.to_string())),
        }
    }

    // The Gaussian CRB(sigma^2) is the largest on the s >= 1 branch; at
    // s = 2 the bound is strictly smaller.
    {
        let name = "gg-s2-crb-below-gaussian";
        let g = gg_crb_sigma2(1, 1.0, ShapeKnowledge::Known)?;
        let s2 = gg_crb_sigma2(1, 2.0, ShapeKnowledge::Known)?;
        if s2 < g - 1e-9 {
            checks.push(CheckResult::pass(name, format!("{s2:.9} < {g:.9}")));
        } else {
            checks.push(CheckResult::fail(name, format!("{s2:.9} !< {g:.9}")));
        }
    }

    Ok(VerifyReport {
        checks,
        n_samples,
        seed,
        fault: fault.label().map(str::to_owned),
    })
}
