use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// Rational approximation of the lower-tail normal quantile (Acklam), good to
// about 1e-9 relative before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549671010229583e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn initial_guess(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `z` with `Φ(z) = eps`, for `eps` in `(0, 0.5]`.
///
/// Starts from a rational approximation and refines with Halley steps on
/// the complementary error function, which keeps full relative precision
/// deep in the lower tail (tested down to 1e-20).
pub fn normal_quantile(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Usage(format!(
            "normal quantile needs eps in (0, 0.5], got {eps}"
        )));
    }
    if eps == 0.5 {
        return Ok(0.0);
    }
    let mut z = initial_guess(eps);
    for _ in 0..3 {
        let e = normal_cdf(z) - eps;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (z * z / 2.0).exp();
        let step = u / (1.0 + z * u / 2.0);
        z -= step;
        if step.abs() <= 1e-16 * z.abs() {
            break;
        }
    }
    Ok(z)
}
