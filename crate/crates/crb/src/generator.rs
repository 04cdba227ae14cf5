//! Density generators for the elliptical family (Gaussian, generalized
//! Gaussian, Student-t, compound Gaussian) with density evaluation, radial
//! integration helpers and exact samplers via the stochastic representation
//! x = m + sqrt(Q) Sigma^{1/2} u.

use crate::error::{Error, Result};
use crate::model::{LocationScaleModel, ParameterVector};
use crate::quad::{self, QuadOptions};
use crate::special::{digamma, ln_gamma};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma as GammaDist, StandardNormal};

/// Draws are produced in fixed-size chunks, each with its own RNG stream
/// derived from the master seed, so results do not depend on how the work
/// is split across threads.
pub const SAMPLE_CHUNK: usize = 8192;

/// RNG for chunk `chunk` of the run with master seed `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// ln(delta_n) with delta_n = Gamma(n/2) / pi^{n/2}, the normalization of
/// the radial density p(q) = delta_n^{-1} q^{n/2-1} g(q).
pub fn ln_delta_n(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    ln_gamma(half) - half * std::f64::consts::PI.ln()
}

/// A spherical density generator g for dimension n, normalized so that
/// `int t^{n/2-1} g(t) dt = delta_n` and `E[Q] = n` (unit covariance).
pub trait DensityGenerator: Send + Sync {
    fn dim(&self) -> usize;

    /// ln g(t), t >= 0.
    fn log_g(&self, t: f64) -> f64;

    /// phi(t) = -2 g'(t) / g(t).
    fn phi(&self, t: f64) -> f64;

    /// phi'(t), where available in closed form.
    fn phi_prime(&self, t: f64) -> Option<f64>;

    /// One draw of the radial variable Q.
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64;

    /// Family label with parameters, for reports.
    fn family(&self) -> String;

    /// Shape / nuisance parameters (theta3), if any.
    fn shape(&self) -> Option<Vec<f64>> {
        None
    }
}

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

/// g(t) = (2 pi)^{-n/2} e^{-t/2}; Q ~ chi-square(n).
#[derive(Clone, Debug)]
pub struct Gaussian {
    n: usize,
}

impl Gaussian {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { n }
    }
}

impl DensityGenerator for Gaussian {
    fn dim(&self) -> usize {
        self.n
    }
    fn log_g(&self, t: f64) -> f64 {
        -(self.n as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln() - 0.5 * t
    }
    fn phi(&self, _t: f64) -> f64 {
        1.0
    }
    fn phi_prime(&self, _t: f64) -> Option<f64> {
        Some(0.0)
    }
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64 {
        ChiSquared::new(self.n as f64).expect("n >= 1").sample(rng)
    }
    fn family(&self) -> String {
        format!("gaussian(n={})", self.n)
    }
}

// ---------------------------------------------------------------------------
// Generalized Gaussian
// ---------------------------------------------------------------------------

/// Normalization constants (b, c) of g(t) = b e^{-c t^s}, the unique pair
/// satisfying the delta_n normalization and E[Q] = n. Computed in log space
/// so small s (large Gamma arguments) does not overflow.
pub fn gg_normalization_constants(n: usize, s: f64) -> Result<(f64, f64)> {
    if s <= 0.0 {
        return Err(Error::Domain(format!(
            "generalized Gaussian exponent s must be positive, got {s}"
        )));
    }
    let a1 = n as f64 / (2.0 * s);
    let a2 = (n as f64 + 2.0) / (2.0 * s);
    let ln_c = s * (ln_gamma(a2) - (n as f64).ln() - ln_gamma(a1));
    let ln_b = ln_delta_n(n) + s.ln() + a1 * ln_c - ln_gamma(a1);
    Ok((ln_b.exp(), ln_c.exp()))
}

/// g(t) = b_{n,s} e^{-c_{n,s} t^s}; reduces to the Gaussian at s = 1.
#[derive(Clone, Debug)]
pub struct GeneralizedGaussian {
    n: usize,
    s: f64,
    c: f64,
    ln_b: f64,
}

impl GeneralizedGaussian {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        assert!(n >= 1);
        let (b, c) = gg_normalization_constants(n, s)?;
        Ok(Self {
            n,
            s,
            c,
            ln_b: b.ln(),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn b(&self) -> f64 {
        self.ln_b.exp()
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    /// (d ln b / ds, d c / ds), from differentiating the closed-form
    /// constants. Validated against finite differences in the tests.
    pub fn d_constants_ds(&self) -> (f64, f64) {
        let (n, s) = (self.n as f64, self.s);
        let a1 = n / (2.0 * s);
        let a2 = (n + 2.0) / (2.0 * s);
        let ln_c = self.c.ln();
        let d_ln_c = ln_c / s - digamma(a2) * a2 + digamma(a1) * a1;
        let d_ln_b = 1.0 / s - (a1 / s) * ln_c + a1 * d_ln_c + digamma(a1) * a1 / s;
        (d_ln_b, self.c * d_ln_c)
    }

    /// d ln g(t) / ds at fixed t.
    pub fn d_log_g_ds(&self, t: f64) -> f64 {
        let (d_ln_b, d_c) = self.d_constants_ds();
        if t <= 0.0 {
            return d_ln_b;
        }
        let ts = t.powf(self.s);
        d_ln_b - d_c * ts - self.c * ts * t.ln()
    }
}

impl DensityGenerator for GeneralizedGaussian {
    fn dim(&self) -> usize {
        self.n
    }
    fn log_g(&self, t: f64) -> f64 {
        self.ln_b - self.c * t.powf(self.s)
    }
    fn phi(&self, t: f64) -> f64 {
        2.0 * self.c * self.s * t.powf(self.s - 1.0)
    }
    fn phi_prime(&self, t: f64) -> Option<f64> {
        Some(2.0 * self.c * self.s * (self.s - 1.0) * t.powf(self.s - 2.0))
    }
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64 {
        // Q^s / c ~ Gamma(n/(2s), 1), i.e. Q = (G/c)^{1/s}.
        let shape = self.n as f64 / (2.0 * self.s);
        let g: f64 = GammaDist::new(shape, 1.0).expect("valid shape").sample(rng);
        ((g.ln() - self.c.ln()) / self.s).exp()
    }
    fn family(&self) -> String {
        format!("gg(n={}, s={})", self.n, self.s)
    }
    fn shape(&self) -> Option<Vec<f64>> {
        Some(vec![self.s])
    }
}

// ---------------------------------------------------------------------------
// Student-t
// ---------------------------------------------------------------------------

/// g(t) = C (1 + t/(nu-2))^{-(n+nu)/2}, scaled so cov(y) = I_n; requires
/// nu > 2.
#[derive(Clone, Debug)]
pub struct StudentT {
    n: usize,
    nu: f64,
    eta: f64,
    ln_norm: f64,
}

impl StudentT {
    pub fn new(n: usize, nu: f64) -> Result<Self> {
        assert!(n >= 1);
        if nu <= 2.0 {
            return Err(Error::Domain(format!(
                "student-t requires nu > 2 so that the covariance of y exists \
                 and E[Q] = n can hold; got nu = {nu}"
            )));
        }
        let eta = nu - 2.0;
        let nf = n as f64;
        let ln_norm = ln_gamma((nf + nu) / 2.0)
            - ln_gamma(nu / 2.0)
            - (nf / 2.0) * (std::f64::consts::PI * eta).ln();
        Ok(Self {
            n,
            nu,
            eta,
            ln_norm,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

impl DensityGenerator for StudentT {
    fn dim(&self) -> usize {
        self.n
    }
    fn log_g(&self, t: f64) -> f64 {
        self.ln_norm - 0.5 * (self.n as f64 + self.nu) * (1.0 + t / self.eta).ln()
    }
    fn phi(&self, t: f64) -> f64 {
        (self.n as f64 + self.nu) / (self.eta + t)
    }
    fn phi_prime(&self, t: f64) -> Option<f64> {
        let d = self.eta + t;
        Some(-(self.n as f64 + self.nu) / (d * d))
    }
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64 {
        let num: f64 = ChiSquared::new(self.n as f64).expect("n >= 1").sample(rng);
        let den: f64 = ChiSquared::new(self.nu).expect("nu > 2").sample(rng);
        self.eta * num / den
    }
    fn family(&self) -> String {
        format!("student-t(n={}, nu={})", self.n, self.nu)
    }
    fn shape(&self) -> Option<Vec<f64>> {
        Some(vec![self.nu])
    }
}

// ---------------------------------------------------------------------------
// Compound Gaussian
// ---------------------------------------------------------------------------

/// Texture distribution F_tau for the compound-Gaussian mixture. Restricted
/// to kinds with closed-form mixture integrals so that g' and g'' are
/// exactly computable; every kind must satisfy E[tau] = 1.
#[derive(Clone, Debug)]
pub enum Texture {
    PointMass { value: f64 },
    TwoPoint { tau1: f64, tau2: f64, p1: f64 },
    InverseGamma { nu: f64 },
}

impl Texture {
    pub fn point_mass(value: f64) -> Result<Self> {
        let t = Texture::PointMass { value };
        t.check_mean()?;
        Ok(t)
    }

    pub fn two_point(tau1: f64, tau2: f64, p1: f64) -> Result<Self> {
        if tau1 <= 0.0 || tau2 <= 0.0 {
            return Err(Error::Domain("texture values must be positive".into()));
        }
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::Domain(format!(
                "texture probability must lie in [0, 1], got {p1}"
            )));
        }
        let t = Texture::TwoPoint { tau1, tau2, p1 };
        t.check_mean()?;
        Ok(t)
    }

    /// tau ~ InverseGamma(nu/2, (nu-2)/2), the texture reproducing the
    /// Student-t generator; E[tau] = 1 holds identically for nu > 2.
    pub fn inverse_gamma(nu: f64) -> Result<Self> {
        if nu <= 2.0 {
            return Err(Error::Domain(format!(
                "inverse-gamma texture requires nu > 2 for E[tau] = 1, got {nu}"
            )));
        }
        Ok(Texture::InverseGamma { nu })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Texture::PointMass { value } => *value,
            Texture::TwoPoint { tau1, tau2, p1 } => p1 * tau1 + (1.0 - p1) * tau2,
            Texture::InverseGamma { .. } => 1.0,
        }
    }

    fn check_mean(&self) -> Result<()> {
        let m = self.mean();
        if (m - 1.0).abs() > 1e-12 {
            return Err(Error::Constraint(format!(
                "texture must satisfy E[tau] = 1 (unit-covariance convention), got E[tau] = {m}"
            )));
        }
        Ok(())
    }

    pub fn sample_tau(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            Texture::PointMass { value } => *value,
            Texture::TwoPoint { tau1, tau2, p1 } => {
                if rng.gen::<f64>() < *p1 {
                    *tau1
                } else {
                    *tau2
                }
            }
            Texture::InverseGamma { nu } => {
                let g: f64 = GammaDist::new(nu / 2.0, 1.0).expect("nu > 2").sample(rng);
                0.5 * (nu - 2.0) / g
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Texture::PointMass { value } => format!("point:{value}"),
            Texture::TwoPoint { tau1, tau2, p1 } => format!("two:{tau1},{tau2}@{p1}"),
            Texture::InverseGamma { nu } => format!("invgamma:{nu}"),
        }
    }
}

/// g(t) = (2 pi)^{-n/2} E_tau[tau^{-n/2} e^{-t/(2 tau)}], with the mixture
/// derivatives g^{(k)}(t) = (-2)^{-k} (2 pi)^{-n/2} E[tau^{-n/2-k} e^{-t/(2 tau)}].
#[derive(Clone, Debug)]
pub struct CompoundGaussian {
    n: usize,
    texture: Texture,
}

impl CompoundGaussian {
    pub fn new(n: usize, texture: Texture) -> Result<Self> {
        assert!(n >= 1);
        if (texture.mean() - 1.0).abs() > 1e-12 {
            return Err(Error::Constraint(format!(
                "compound-Gaussian texture must satisfy E[tau] = 1, got {}",
                texture.mean()
            )));
        }
        Ok(Self { n, texture })
    }

    pub fn texture(&self) -> &Texture {
        &self.texture
    }

    /// ln E[tau^{-n/2-k} e^{-t/(2 tau)}], evaluated stably.
    fn ln_mix(&self, k: i32, t: f64) -> f64 {
        let e = -(self.n as f64) / 2.0 - k as f64;
        match &self.texture {
            Texture::PointMass { value } => e * value.ln() - 0.5 * t / value,
            Texture::TwoPoint { tau1, tau2, p1 } => {
                let l1 = p1.ln() + e * tau1.ln() - 0.5 * t / tau1;
                let l2 = (1.0 - p1).ln() + e * tau2.ln() - 0.5 * t / tau2;
                let hi = l1.max(l2);
                hi + ((l1 - hi).exp() + (l2 - hi).exp()).ln()
            }
            Texture::InverseGamma { nu } => {
                let a = nu / 2.0;
                let b = 0.5 * (nu - 2.0);
                let m = a - e; // a + n/2 + k
                a * b.ln() - ln_gamma(a) + ln_gamma(m) - m * (b + 0.5 * t).ln()
            }
        }
    }
}

impl DensityGenerator for CompoundGaussian {
    fn dim(&self) -> usize {
        self.n
    }
    fn log_g(&self, t: f64) -> f64 {
        -(self.n as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln() + self.ln_mix(0, t)
    }
    fn phi(&self, t: f64) -> f64 {
        (self.ln_mix(1, t) - self.ln_mix(0, t)).exp()
    }
    fn phi_prime(&self, t: f64) -> Option<f64> {
        let r1 = self.phi(t);
        let r2 = (self.ln_mix(2, t) - self.ln_mix(0, t)).exp();
        Some(-0.5 * (r2 - r1 * r1))
    }
    fn sample_q(&self, rng: &mut dyn RngCore) -> f64 {
        let tau = self.texture.sample_tau(rng);
        let chi: f64 = ChiSquared::new(self.n as f64).expect("n >= 1").sample(rng);
        tau * chi
    }
    fn family(&self) -> String {
        format!("compound-gaussian(n={}, texture={})", self.n, self.texture.label())
    }
}

// ---------------------------------------------------------------------------
// Radial density and radial integrals
// ---------------------------------------------------------------------------

/// p(q) = delta_n^{-1} q^{n/2-1} g(q), the density of the Mahalanobis
/// quadratic form Q.
pub struct RadialDensity<'a> {
    gen: &'a dyn DensityGenerator,
    ln_delta: f64,
}

impl<'a> RadialDensity<'a> {
    pub fn new(gen: &'a dyn DensityGenerator) -> Self {
        let ln_delta = ln_delta_n(gen.dim());
        Self { gen, ln_delta }
    }

    pub fn ln_pdf(&self, q: f64) -> f64 {
        let n = self.gen.dim() as f64;
        -self.ln_delta + (n / 2.0 - 1.0) * q.ln() + self.gen.log_g(q)
    }

    pub fn evaluate(&self, q: f64) -> f64 {
        self.ln_pdf(q).exp()
    }
}

/// E[h(Q)] against the radial density by adaptive quadrature. The
/// substitution q = v^2 removes the q^{n/2-1} endpoint singularity for odd
/// n before the u/(1-u) compactification is applied.
pub fn radial_expectation<F: Fn(f64) -> f64>(
    gen: &dyn DensityGenerator,
    h: F,
    opts: QuadOptions,
) -> Result<f64> {
    let n = gen.dim() as f64;
    let ln_delta = ln_delta_n(gen.dim());
    let q = quad::integrate_semi_infinite(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let w = std::f64::consts::LN_2 - ln_delta + (n - 1.0) * v.ln() + gen.log_g(v * v);
            if w < -700.0 {
                return 0.0;
            }
            w.exp() * h(v * v)
        },
        opts,
    )?;
    Ok(q.value)
}

/// E[Q^k] by quadrature.
pub fn radial_moment(gen: &dyn DensityGenerator, k: i32, opts: QuadOptions) -> Result<f64> {
    radial_expectation(gen, |q| q.powi(k), opts)
}

// ---------------------------------------------------------------------------
// Sampling the full elliptical vector
// ---------------------------------------------------------------------------

/// N draws of x = m + sqrt(Q) Sigma^{1/2} u, one observation per row.
/// Deterministic for a given seed, independent of chunking.
pub fn sample_elliptical(
    model: &LocationScaleModel,
    theta: &ParameterVector,
    n_draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let n = model.dim();
    let mean = model.mean_map.evaluate(theta.theta1())?;
    let sigma = model.cov_map.evaluate(theta.theta2())?;
    let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
        Error::Model("covariance square root failed: Sigma is not positive definite".into())
    })?;
    let l = chol.l();

    let mut out = DMatrix::zeros(n_draws, n);
    let mut z = DVector::zeros(n);
    let mut row = 0;
    let mut chunk = 0u64;
    while row < n_draws {
        let mut rng = chunk_rng(seed, chunk);
        let end = n_draws.min(row + SAMPLE_CHUNK);
        for r in row..end {
            for i in 0..n {
                z[i] = StandardNormal.sample(&mut rng);
            }
            let norm = z.norm();
            let q = model.generator.sample_q(&mut rng);
            let scale = q.sqrt() / norm;
            let dir = &l * &z;
            for i in 0..n {
                out[(r, i)] = mean[i] + scale * dir[i];
            }
        }
        row = end;
        chunk += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_iid_scalar;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn check_constraints(gen: &dyn DensityGenerator) {
        let opts = QuadOptions::default();
        let norm = radial_expectation(gen, |_| 1.0, opts).unwrap();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-8);
        let eq = radial_moment(gen, 1, opts).unwrap();
        assert_relative_eq!(eq, gen.dim() as f64, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_phi_is_one_and_moments() {
        let g = Gaussian::new(1);
        assert_eq!(g.phi(0.3), 1.0);
        assert_eq!(g.phi(10.0), 1.0);
        let g2 = Gaussian::new(2);
        let eq = radial_moment(&g2, 1, QuadOptions::default()).unwrap();
        assert_relative_eq!(eq, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn all_generators_satisfy_normalization_and_unit_covariance() {
        for n in [1usize, 2, 4] {
            check_constraints(&Gaussian::new(n));
            for s in [0.5, 1.0, 2.0] {
                check_constraints(&GeneralizedGaussian::new(n, s).unwrap());
            }
            check_constraints(&StudentT::new(n, 5.0).unwrap());
            check_constraints(
                &CompoundGaussian::new(n, Texture::two_point(0.5, 1.5, 0.5).unwrap()).unwrap(),
            );
            check_constraints(
                &CompoundGaussian::new(n, Texture::inverse_gamma(6.0).unwrap()).unwrap(),
            );
        }
    }

    #[test]
    fn gg_constants_reduce_to_gaussian_at_s_one() {
        let (b, c) = gg_normalization_constants(1, 1.0).unwrap();
        assert_relative_eq!(b, (2.0 * std::f64::consts::PI).powf(-0.5), epsilon = 1e-12);
        assert_relative_eq!(c, 0.5, epsilon = 1e-12);
        let (b3, c3) = gg_normalization_constants(3, 1.0).unwrap();
        assert_relative_eq!(b3, (2.0 * std::f64::consts::PI).powf(-1.5), epsilon = 1e-12);
        assert_relative_eq!(c3, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gg_constants_satisfy_both_constraint_integrals() {
        // Independent oracle: composite Simpson (fixed grid, not the
        // adaptive GK15 path). t = (u/(1-u))^2 keeps the integrand smooth
        // at the origin for fractional s.
        fn simpson_semi_inf(f: impl Fn(f64) -> f64) -> f64 {
            let n = 1 << 16;
            let h = 1.0 / n as f64;
            let eval = |u: f64| -> f64 {
                if u <= 0.0 || u >= 1.0 {
                    return 0.0;
                }
                let v = u / (1.0 - u);
                2.0 * v * f(v * v) / ((1.0 - u) * (1.0 - u))
            };
            let mut acc = 0.0;
            for i in 0..n {
                let a = i as f64 * h;
                acc += h / 6.0 * (eval(a) + 4.0 * eval(a + 0.5 * h) + eval(a + h));
            }
            acc
        }

        let (n, s) = (2usize, 0.5);
        let (b, c) = gg_normalization_constants(n, s).unwrap();
        let delta = ln_delta_n(n).exp();
        let norm = simpson_semi_inf(|t| t.powf(n as f64 / 2.0 - 1.0) * b * (-c * t.powf(s)).exp());
        assert_relative_eq!(norm, delta, max_relative = 1e-8);
        let eq = simpson_semi_inf(|t| t.powf(n as f64 / 2.0) * b * (-c * t.powf(s)).exp()) / delta;
        assert_relative_eq!(eq, n as f64, max_relative = 1e-8);

        // Frozen reference values (scipy, same constraints).
        assert_relative_eq!(b, 0.477464829275686, epsilon = 1e-12);
        assert_relative_eq!(c, 1.7320508075688772, epsilon = 1e-12);
    }

    #[test]
    fn gg_rejects_nonpositive_s() {
        assert!(gg_normalization_constants(2, 0.0).is_err());
        assert!(GeneralizedGaussian::new(2, -1.0).is_err());
    }

    #[test]
    fn gg_at_s_one_is_gaussian_pointwise() {
        for n in [1usize, 3] {
            let gg = GeneralizedGaussian::new(n, 1.0).unwrap();
            let gauss = Gaussian::new(n);
            for t in [0.1, 1.0, 10.0] {
                assert_relative_eq!(gg.log_g(t), gauss.log_g(t), epsilon = 1e-12);
                assert_relative_eq!(gg.phi(t), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gg_constant_derivatives_match_finite_differences() {
        for (n, s) in [(1usize, 0.5), (2, 1.0), (2, 2.0), (4, 0.7)] {
            let gg = GeneralizedGaussian::new(n, s).unwrap();
            let (d_ln_b, d_c) = gg.d_constants_ds();
            let h = 1e-6 * s;
            let lo = GeneralizedGaussian::new(n, s - h).unwrap();
            let hi = GeneralizedGaussian::new(n, s + h).unwrap();
            let fd_ln_b = (hi.b().ln() - lo.b().ln()) / (2.0 * h);
            let fd_c = (hi.c() - lo.c()) / (2.0 * h);
            assert_relative_eq!(d_ln_b, fd_ln_b, max_relative = 1e-5);
            assert_relative_eq!(d_c, fd_c, max_relative = 1e-5);

            for t in [0.2, 1.0, 4.0] {
                let fd = (hi.log_g(t) - lo.log_g(t)) / (2.0 * h);
                assert_relative_eq!(gg.d_log_g_ds(t), fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn student_t_rejects_small_nu() {
        let err = StudentT::new(2, 2.0).unwrap_err();
        assert!(err.to_string().contains("nu > 2"), "{err}");
        assert!(Texture::inverse_gamma(1.5).is_err());
    }

    #[test]
    fn student_t_approaches_gaussian_for_large_nu() {
        let st = StudentT::new(2, 1e6).unwrap();
        let gauss = Gaussian::new(2);
        for t in [0.5, 1.0, 5.0] {
            assert_relative_eq!(
                st.log_g(t).exp(),
                gauss.log_g(t).exp(),
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn student_t_matches_inverse_gamma_mixture() {
        for n in [1usize, 3] {
            let st = StudentT::new(n, 5.0).unwrap();
            let cg = CompoundGaussian::new(n, Texture::inverse_gamma(5.0).unwrap()).unwrap();
            for t in [0.01, 0.5, 3.0, 40.0] {
                assert_relative_eq!(st.log_g(t), cg.log_g(t), epsilon = 1e-12);
                assert_relative_eq!(st.phi(t), cg.phi(t), max_relative = 1e-12);
                assert_relative_eq!(
                    st.phi_prime(t).unwrap(),
                    cg.phi_prime(t).unwrap(),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn point_mass_texture_is_gaussian() {
        let cg = CompoundGaussian::new(2, Texture::point_mass(1.0).unwrap()).unwrap();
        let gauss = Gaussian::new(2);
        for t in [0.1, 1.0, 25.0] {
            assert_relative_eq!(cg.log_g(t), gauss.log_g(t), epsilon = 1e-12);
            assert_relative_eq!(cg.phi(t), 1.0, epsilon = 1e-12);
            assert_relative_eq!(cg.phi_prime(t).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn texture_mean_constraint_enforced() {
        assert!(Texture::point_mass(1.2).is_err());
        assert!(Texture::two_point(0.5, 2.0, 0.5).is_err());
        assert!(Texture::two_point(0.5, 1.5, 0.5).is_ok());
        assert!(CompoundGaussian::new(2, Texture::TwoPoint {
            tau1: 0.5,
            tau2: 2.0,
            p1: 0.5
        })
        .is_err());
    }

    #[test]
    fn phi_matches_log_density_slope() {
        let gens: Vec<Box<dyn DensityGenerator>> = vec![
            Box::new(Gaussian::new(2)),
            Box::new(GeneralizedGaussian::new(2, 0.5).unwrap()),
            Box::new(GeneralizedGaussian::new(1, 2.0).unwrap()),
            Box::new(StudentT::new(2, 5.0).unwrap()),
            Box::new(CompoundGaussian::new(2, Texture::two_point(0.5, 1.5, 0.5).unwrap()).unwrap()),
        ];
        for gen in &gens {
            let mut t = 1e-3;
            while t <= 1e3 {
                // h scaled away from zero: log_g is O(1) near the origin and
                // a step proportional to t alone drowns in roundoff.
                let h = 1e-6 * (1.0 + t);
                let fd = (gen.log_g(t + h) - gen.log_g(t - h)) / (2.0 * h);
                assert_relative_eq!(gen.phi(t), -2.0 * fd, max_relative = 1e-6, epsilon = 1e-9);
                t *= 10.0;
            }
        }
    }

    #[test]
    fn phi_prime_matches_phi_slope() {
        let gens: Vec<Box<dyn DensityGenerator>> = vec![
            Box::new(StudentT::new(2, 5.0).unwrap()),
            Box::new(GeneralizedGaussian::new(2, 2.0).unwrap()),
            Box::new(CompoundGaussian::new(1, Texture::two_point(0.5, 1.5, 0.5).unwrap()).unwrap()),
        ];
        for gen in &gens {
            for t in [0.5, 2.0, 10.0] {
                let h = 1e-5 * t;
                let fd = (gen.phi(t + h) - gen.phi(t - h)) / (2.0 * h);
                assert_relative_eq!(gen.phi_prime(t).unwrap(), fd, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn radial_density_integrates_to_one_with_mean_n() {
        let gen = StudentT::new(3, 5.0).unwrap();
        let density = RadialDensity::new(&gen);
        let total = quad::integrate_semi_infinite(|q| density.evaluate(q), QuadOptions::default())
            .unwrap()
            .value;
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
        let mean = quad::integrate_semi_infinite(
            |q| q * density.evaluate(q),
            QuadOptions::default(),
        )
        .unwrap()
        .value;
        assert_relative_eq!(mean, 3.0, max_relative = 1e-8);
    }

    #[test]
    fn sampler_moments_match_quadrature() {
        // Sample moments of Q^k within 4 standard errors of the quadrature
        // moment, k in {1, 2}.
        let gens: Vec<Box<dyn DensityGenerator>> = vec![
            Box::new(Gaussian::new(2)),
            Box::new(GeneralizedGaussian::new(2, 0.5).unwrap()),
            Box::new(GeneralizedGaussian::new(1, 2.0).unwrap()),
            Box::new(StudentT::new(2, 9.0).unwrap()),
            Box::new(CompoundGaussian::new(2, Texture::two_point(0.5, 1.5, 0.5).unwrap()).unwrap()),
        ];
        let n_draws = 200_000usize;
        for gen in &gens {
            for k in [1i32, 2] {
                let target = radial_moment(gen.as_ref(), k, QuadOptions::default()).unwrap();
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                let mut drawn = 0;
                let mut chunk = 0u64;
                while drawn < n_draws {
                    let mut rng = chunk_rng(99 + k as u64, chunk);
                    for _ in 0..SAMPLE_CHUNK.min(n_draws - drawn) {
                        let q = gen.sample_q(&mut rng).powi(k);
                        sum += q;
                        sumsq += q * q;
                    }
                    drawn += SAMPLE_CHUNK.min(n_draws - drawn);
                    chunk += 1;
                }
                let mean = sum / n_draws as f64;
                let var = (sumsq / n_draws as f64 - mean * mean).max(0.0);
                let se = (var / n_draws as f64).sqrt();
                assert!(
                    (mean - target).abs() <= 4.0 * se,
                    "{}: E[Q^{k}] sample {mean} vs quadrature {target} (se {se})",
                    gen.family()
                );
            }
        }
    }

    #[test]
    fn elliptical_sampler_is_deterministic_and_centered() {
        let (mean, cov) = builtin_iid_scalar(3);
        let model = LocationScaleModel::new(mean, cov, Arc::new(Gaussian::new(3))).unwrap();
        let theta = ParameterVector::new(vec![0.0], vec![1.0], None).unwrap();

        let a = sample_elliptical(&model, &theta, 10_000, 42).unwrap();
        let b = sample_elliptical(&model, &theta, 10_000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_elliptical(&model, &theta, 10_000, 43).unwrap();
        assert_ne!(a, c);

        // Sample covariance close to I_3.
        let n_draws = 100_000;
        let x = sample_elliptical(&model, &theta, n_draws, 7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..n_draws {
                    acc += x[(r, i)] * x[(r, j)];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (acc / n_draws as f64 - want).abs() < 0.02,
                    "cov[{i},{j}] off"
                );
            }
        }
    }

    #[test]
    fn elliptical_sampler_rejects_bad_covariance() {
        let (mean, cov) = builtin_iid_scalar(2);
        let model = LocationScaleModel::new(mean, cov, Arc::new(Gaussian::new(2))).unwrap();
        let theta = ParameterVector::new(vec![0.0], vec![-1.0], None).unwrap();
        assert!(sample_elliptical(&model, &theta, 10, 1).is_err());
    }

    proptest! {
        #[test]
        fn two_point_texture_builder_keeps_unit_mean(tau1 in 0.05f64..0.95, p1 in 0.05f64..0.95) {
            // Solve tau2 from the E[tau] = 1 constraint; builder must accept.
            let tau2 = (1.0 - p1 * tau1) / (1.0 - p1);
            prop_assume!(tau2 > 0.0);
            let t = Texture::two_point(tau1, tau2, p1).unwrap();
            prop_assert!((t.mean() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gg_sampled_q_is_positive(s in 0.3f64..3.0, seed in 0u64..1000) {
            let gg = GeneralizedGaussian::new(2, s).unwrap();
            let mut rng = chunk_rng(seed, 0);
            for _ in 0..32 {
                prop_assert!(gg.sample_q(&mut rng) > 0.0);
            }
        }
    }
}
