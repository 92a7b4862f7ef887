//! Gamma and modified Bessel functions, exponential-decay kernels and the
//! closed form of their n-fold self-convolutions.
//!
//! The n-fold convolution of `G_a(x) = exp(-a|x|)` on `R^d` is evaluated
//! through its Fourier representation, which reduces to a power of `|x|`
//! times `K_nu(a|x|)` with `nu = (d(n-1) + n) / 2`. The accompanying upper
//! bound `(D3/a^d)^n a^d exp(-a|x|/4)` uses the constant returned by
//! [`d3_constant`].

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::quad::{integrate_with_breaks, Tolerance};

/// The kernel `G_a(x) = exp(-a|x|)` on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayKernel {
    rate: f64,
    dimension: usize,
}

impl DecayKernel {
    pub fn new(rate: f64, dimension: usize) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return domain(format!("decay rate must be positive and finite, got {rate}"));
        }
        if dimension == 0 {
            return domain("dimension must be at least 1");
        }
        Ok(DecayKernel { rate, dimension })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn eval(&self, radius: f64) -> f64 {
        (-self.rate * radius.abs()).exp()
    }

    /// `||G_a||_1 = |S^{d-1}| Gamma(d) / a^d`.
    pub fn l1_norm(&self) -> f64 {
        let d = self.dimension as f64;
        let sphere = 2.0 * PI.powf(0.5 * d) / gamma_unchecked(0.5 * d);
        sphere * gamma_unchecked(d) / self.rate.powf(d)
    }
}

/// Exact n-fold convolution value together with its upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvolutionEvaluation {
    pub order: usize,
    pub value: f64,
    pub bound: f64,
    pub point: f64,
}

fn gamma_unchecked(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// The Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("gamma requires a positive finite argument, got {x}"));
    }
    Ok(gamma_unchecked(x))
}

fn check_bessel_args(order: f64, y: f64) -> Result<()> {
    if !(order > 0.0) || !order.is_finite() {
        return domain(format!("Bessel order must be positive, got {order}"));
    }
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("Bessel argument must be positive, got {y}"));
    }
    Ok(())
}

/// `Some(n)` when `order == n + 1/2`.
fn half_integer_index(order: f64) -> Option<u32> {
    let twice = 2.0 * order;
    let rounded = twice.round();
    if (twice - rounded).abs() < 1e-14 && rounded as i64 % 2 == 1 && rounded < 200.0 {
        Some(((rounded as i64 - 1) / 2) as u32)
    } else {
        None
    }
}

/// `K_{n+1/2}(y) = sqrt(pi/2y) e^{-y} sum_k (n+k)! / (k! (n-k)! (2y)^k)`.
fn bessel_k_half_integer(n: u32, y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        // ratio of consecutive terms k -> k+1
        let kf = k as f64;
        let nf = n as f64;
        term *= (nf + kf + 1.0) * (nf - kf) / ((kf + 1.0) * 2.0 * y);
        sum += term;
    }
    (PI / (2.0 * y)).sqrt() * (-y).exp() * sum
}

/// `K_eta(y)` from the integral `int_0^inf exp(-y cosh t) cosh(eta t) dt`.
///
/// The exponent is shifted by its maximum so that the quadrature works on an
/// integrand of unit peak height.
fn bessel_k_integral(order: f64, y: f64) -> Result<f64> {
    let peak_t = (order / y).asinh();
    let exponent = |t: f64| -y * t.cosh() + order * t;
    let shift = exponent(peak_t);
    let mut upper = peak_t + 1.0;
    while exponent(upper) - shift > -60.0 {
        upper *= 1.5;
    }
    let integrand = |t: f64| {
        let e = exponent(t) - shift;
        0.5 * e.exp() * (1.0 + (-2.0 * order * t).exp())
    };
    let q = integrate_with_breaks(
        integrand,
        0.0,
        upper,
        &[peak_t],
        Tolerance {
            abs: 0.0,
            rel: 1e-14,
            max_intervals: 2000,
        },
    )?;
    Ok(q.value * shift.exp())
}

/// Modified Bessel function of the second kind `K_eta(y)` for real order
/// `eta > 0` and argument `y > 0`.
pub fn bessel_k(order: f64, y: f64) -> Result<f64> {
    check_bessel_args(order, y)?;
    match half_integer_index(order) {
        Some(n) => Ok(bessel_k_half_integer(n, y)),
        None => bessel_k_integral(order, y),
    }
}

/// `(4^eta / y^eta) exp(-y/4) Gamma(eta)`, which dominates `K_eta(y)`.
pub fn bessel_k_upper_bound(order: f64, y: f64) -> Result<f64> {
    check_bessel_args(order, y)?;
    Ok((order * (4.0 / y).ln() - 0.25 * y + ln_gamma_unchecked(order)).exp())
}

/// Unitary Fourier transform of `G_a` evaluated at `frequency`.
pub fn ft_exp_kernel(kernel: &DecayKernel, frequency: &[f64]) -> Result<f64> {
    let d = kernel.dimension;
    if frequency.len() != d {
        return domain(format!(
            "frequency has {} components, kernel dimension is {d}",
            frequency.len()
        ));
    }
    let df = d as f64;
    let xi2: f64 = frequency.iter().map(|v| v * v).sum();
    let a = kernel.rate;
    let prefactor = 2f64.powf(0.5 * df) * gamma_unchecked(0.5 * (df + 1.0)) / PI.sqrt();
    Ok(prefactor * a / (a * a + xi2).powf(0.5 * (df + 1.0)))
}

/// Bessel order appearing in the n-fold convolution closed form.
pub fn convolution_bessel_order(dimension: usize, factors: usize) -> f64 {
    0.5 * (dimension as f64 * (factors as f64 - 1.0) + factors as f64)
}

/// `(G_a * ... * G_a)(x)` with `factors` copies of `G_a`, as a function of
/// `|x|`. At `|x| = 0` the limit `|x|^nu K_nu(a|x|) -> 2^(nu-1) Gamma(nu) / a^nu`
/// is used.
pub fn nfold_conv_exp(kernel: &DecayKernel, factors: usize, radius: f64) -> Result<f64> {
    if factors < 2 {
        return domain(format!("convolution needs at least two factors, got {factors}"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return domain(format!("radius must be finite and non-negative, got {radius}"));
    }
    let d = kernel.dimension as f64;
    let n = factors as f64;
    let a = kernel.rate;
    let nu = convolution_bessel_order(kernel.dimension, factors);

    let ln_power_bessel = if radius == 0.0 {
        (nu - 1.0) * 2f64.ln() + ln_gamma_unchecked(nu) - nu * a.ln()
    } else {
        nu * radius.ln() + bessel_k(nu, a * radius)?.ln()
    };
    let ln_value = 0.5 * d * (n - 1.0) * (2.0 * PI).ln()
        + n * ln_gamma_unchecked(0.5 * (d + 1.0))
        + 0.5 * (2.0 - n) * 2f64.ln()
        + 0.5 * (d - (d - 1.0) * n) * a.ln()
        + ln_power_bessel
        - 0.5 * n * PI.ln()
        - ln_gamma_unchecked(0.5 * (d + 1.0) * n);
    Ok(ln_value.exp())
}

/// `D3(d) = Gamma((d+1)/2) pi^((d-1)/2) 2^((3d+1)/2)`.
pub fn d3_constant(dimension: usize) -> f64 {
    let d = dimension as f64;
    gamma_unchecked(0.5 * (d + 1.0)) * PI.powf(0.5 * (d - 1.0)) * 2f64.powf(0.5 * (3.0 * d + 1.0))
}

/// `(D3/a^d)^n a^d exp(-a|x|/4)`.
pub fn nfold_conv_bound(kernel: &DecayKernel, factors: usize, radius: f64) -> Result<f64> {
    if factors < 2 {
        return domain(format!("convolution needs at least two factors, got {factors}"));
    }
    let d = kernel.dimension as f64;
    let n = factors as f64;
    let a = kernel.rate;
    let ln_bound = n * (d3_constant(kernel.dimension).ln() - d * a.ln()) + d * a.ln() - 0.25 * a * radius.abs();
    Ok(ln_bound.exp())
}

pub fn evaluate_convolution(
    kernel: &DecayKernel,
    factors: usize,
    radius: f64,
) -> Result<ConvolutionEvaluation> {
    Ok(ConvolutionEvaluation {
        order: factors,
        value: nfold_conv_exp(kernel, factors, radius)?,
        bound: nfold_conv_bound(kernel, factors, radius)?,
        point: radius,
    })
}
