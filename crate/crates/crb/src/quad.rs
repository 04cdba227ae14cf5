//! Globally adaptive Gauss-Kronrod quadrature on finite and semi-infinite
//! intervals. The semi-infinite routine maps `[0, inf)` to `[0, 1)` with
//! `t = u / (1 - u)`.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// 15-point Kronrod abscissae on [-1, 1] (positive half, decreasing).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Embedded 7-point Gauss weights (nodes XGK[1], XGK[3], XGK[5], center).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// One G7/K15 rule application, with the QUADPACK-style error rescale.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut res_abs = kronrod.abs();
    let mut fv = [0.0f64; 15];
    fv[14] = fc;

    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[i] = f1;
        fv[7 + i] = f2;
        kronrod += WGK[i] * (f1 + f2);
        res_abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }

    if !kronrod.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite integrand encountered on [{a}, {b}]"
        )));
    }

    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for i in 0..7 {
        res_asc += WGK[i] * ((fv[i] - mean).abs() + (fv[7 + i] - mean).abs());
    }

    let value = kronrod * half;
    let raw_err = ((kronrod - gauss) * half).abs();
    let res_asc = res_asc * half.abs();
    let res_abs = res_abs * half.abs();

    let mut error = raw_err;
    if res_asc != 0.0 && raw_err != 0.0 {
        let scale = (200.0 * raw_err / res_asc).powf(1.5);
        error = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }

    Ok(Segment {
        a,
        b,
        value,
        error,
    })
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature> {
    let mut heap = BinaryHeap::new();
    heap.push(gk15(&f, a, b)?);

    loop {
        let (mut total, mut err): (f64, f64) = (0.0, 0.0);
        for seg in heap.iter() {
            total += seg.value;
            err += seg.error;
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            return Ok(Quadrature {
                value: total,
                abs_error: err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Numeric(format!(
                "quadrature did not converge: achieved error {err:.3e} > target {target:.3e} \
                 after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at machine resolution; keep its estimate as-is.
            let mut residual = worst;
            residual.error = 0.0;
            heap.push(residual);
            continue;
        }
        heap.push(gk15(&f, worst.a, mid)?);
        heap.push(gk15(&f, mid, worst.b)?);
    }
}

/// Adaptive integration of `f` over `[0, inf)` via `t = u / (1 - u)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, opts: QuadOptions) -> Result<Quadrature> {
    integrate(
        |u| {
            let omu = 1.0 - u;
            let t = u / omu;
            f(t) / (omu * omu)
        },
        0.0,
        1.0,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(q.value, 8.0, epsilon = 1e-13);
    }

    #[test]
    fn gaussian_tail_integral() {
        // int_0^inf e^{-t^2/2} dt = sqrt(pi/2)
        let q = integrate_semi_infinite(|t| (-0.5 * t * t).exp(), QuadOptions::default()).unwrap();
        assert_relative_eq!(q.value, (PI / 2.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn heavy_tail_integral() {
        // int_0^inf dt/(1+t)^3 = 1/2
        let q =
            integrate_semi_infinite(|t| (1.0 + t).powi(-3), QuadOptions::default()).unwrap();
        assert_relative_eq!(q.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mild_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let q = integrate(|x| x.powf(-0.5), 1e-300, 1.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(q.value, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn reports_failure_with_achieved_tolerance() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_intervals: 4,
            ..Default::default()
        };
        let err = integrate(|x| (50.0 * x).sin() / (x + 1e-3), 0.0, 1.0, opts).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("did not converge"), "{msg}");
        assert!(msg.contains("achieved"), "{msg}");
    }

    proptest! {
        #[test]
        fn linear_functions_integrate_exactly(a in -5.0f64..5.0, b in -5.0f64..5.0,
                                              lo in -3.0f64..0.0, hi in 0.1f64..3.0) {
            let q = integrate(|x| a * x + b, lo, hi, QuadOptions::default()).unwrap();
            let exact = 0.5 * a * (hi * hi - lo * lo) + b * (hi - lo);
            prop_assert!((q.value - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
        }

        #[test]
        fn exponential_decay_matches_closed_form(rate in 0.2f64..5.0) {
            let q = integrate_semi_infinite(|t| (-rate * t).exp(), QuadOptions::default()).unwrap();
            prop_assert!((q.value - 1.0 / rate).abs() <= 1e-9 / rate);
        }
    }
}
