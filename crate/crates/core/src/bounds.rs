//! Propagation bound evaluators: the one-particle estimates, the rate
//! functions and polynomials of the many-body iteration, and the final
//! many-body bound with its truncation remainder.
//!
//! Constants are deliberately loose and quickly overflow `f64`; every
//! many-body evaluator has a natural-log companion (`ln_*`).

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::one_particle::{
    free_amplitude, grid_overlap, grid_propagate, GaussianPacket, GridFunction, PotentialModel,
    Probe, SpectralMeasure,
};
use crate::quad::{integrate, integrate_with_breaks, Tolerance};
use crate::special::{d3_constant, DecayKernel};

pub use crate::one_particle::c_sigma;

/// `u ln u`, extended by 0 at `u = 0`.
fn xlogx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.ln()
    }
}

/// `(c_mu, m_max)` of a measure, plus whether it is the zero measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureParams {
    pub c_mu: f64,
    pub m_max: f64,
    pub free: bool,
}

pub fn measure_params(measure: &SpectralMeasure) -> MeasureParams {
    MeasureParams {
        c_mu: measure.c_mu(),
        m_max: measure.m_max(),
        free: measure.is_free(),
    }
}

/// Bound on `|(e^{-itH_1} - e^{-itH_0}) phi_y^sigma(x)|`.
///
/// Where `ln(|x-y| / (4 M c_mu t^2)) <= 1` the large-order term is replaced by
/// `max(that term, e^{c_mu|t|})`, which is never below the trivial series
/// bound.
pub fn prop32_bound(separation: f64, t: f64, sigma: f64, dimension: usize, c_mu: f64, m_max: f64) -> f64 {
    let t = t.abs();
    let r = separation.abs();
    if t == 0.0 || c_mu == 0.0 || m_max == 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    let d = dimension as f64;
    let prefactor = (2.0 * PI).powf(-0.5 * d) * (4.0 * t * t + s2 * s2).powf(-0.25 * d);
    let growth = c_mu * t;
    let b0 = (-s2 * r * r / (32.0 * t * t + 8.0 * s2 * s2)).exp() * growth.exp_m1();
    let u = r / (4.0 * t * m_max);
    let ratio = r / (4.0 * m_max * c_mu * t * t);
    let ln_b1 = if u == 0.0 { 0.0 } else { -u * (ratio.ln() - 1.0) } - 0.5 * (2.0 * PI).ln();
    let b1 = if ratio.ln() <= 1.0 {
        ln_b1.exp().max(1.0) * growth.exp()
    } else {
        (ln_b1 + growth).exp()
    };
    prefactor * (b0 + b1)
}

/// Provenance of the constants: choices the derivation leaves open.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivationMetadata {
    /// Supremum over `(0, T_cal]` of the final-display time factor divided
    /// by `e^{c2 t ln t}`.
    pub calibration_sup: f64,
    pub calibration_horizon: f64,
    /// Time at which the supremum is attained.
    pub calibration_argmax: f64,
    pub d3_rule: String,
    pub c2_rule: String,
    pub c1_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub sigma: f64,
    pub dimension: usize,
    pub c_sigma: f64,
    pub c_mu: f64,
    pub m_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d3: f64,
    pub derivation_metadata: DerivationMetadata,
}

/// `3 (2 pi sigma^2)^{-d/2} e^{1/(8 sigma^2) + 1/e + e^2}`.
fn cor33_prefactor(sigma: f64, dimension: usize) -> f64 {
    3.0 * (2.0 * PI * sigma * sigma).powf(-0.5 * dimension as f64)
        * (1.0 / (8.0 * sigma * sigma) + 1.0 / E + E * E).exp()
}

/// Exponent `e^2 c_mu t (ln(c_mu t) + 2)` of the final-display time factor.
fn cor33_growth(c_mu: f64, t: f64) -> f64 {
    let u = c_mu * t.abs();
    E * E * (xlogx(u) + 2.0 * u)
}

pub const DEFAULT_CALIBRATION_HORIZON: f64 = 10.0;

pub fn cor33_constants(sigma: f64, dimension: usize, c_mu: f64, m_max: f64) -> Result<BoundConstants> {
    cor33_constants_with_horizon(sigma, dimension, c_mu, m_max, DEFAULT_CALIBRATION_HORIZON)
}

pub fn cor33_constants_with_horizon(
    sigma: f64,
    dimension: usize,
    c_mu: f64,
    m_max: f64,
    horizon: f64,
) -> Result<BoundConstants> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return domain(format!("sigma must be positive and finite, got {sigma}"));
    }
    if dimension == 0 {
        return domain("dimension must be at least 1");
    }
    if !(c_mu >= 0.0) || !(m_max >= 0.0) {
        return domain("c_mu and m_max must be nonnegative");
    }
    if !(horizon > 0.0) {
        return domain("calibration horizon must be positive");
    }
    let s2 = sigma * sigma;
    let c3 = 1.0 / (32.0 / s2 + 4.0 * m_max * c_mu + 2.0 * (m_max * m_max + 1.0) + 8.0 * s2);
    let c2 = E * E * c_mu * (2.0 + c_mu.ln().max(0.0)) + 1.0;
    let log_ratio = |t: f64| cor33_growth(c_mu, t) - c2 * xlogx(t);
    let (argmax, ln_sup) = maximise(log_ratio, horizon);
    let calibration_sup = ln_sup.exp();
    // A hair of slack so grid-point re-evaluation never undercuts the sup.
    let c1 = cor33_prefactor(sigma, dimension) * calibration_sup * (1.0 + 1e-12);
    Ok(BoundConstants {
        sigma,
        dimension,
        c_sigma: c_sigma(sigma, dimension),
        c_mu,
        m_max,
        c1,
        c2,
        c3,
        d3: d3_constant(dimension),
        derivation_metadata: DerivationMetadata {
            calibration_sup,
            calibration_horizon: horizon,
            calibration_argmax: argmax,
            d3_rule: "D3(d) = Gamma((d+1)/2) pi^((d-1)/2) 2^((3d+1)/2)".into(),
            c2_rule: "C2 = e^2 c_mu (2 + max(0, ln c_mu)) + 1".into(),
            c1_rule: "C1 = 3 (2 pi sigma^2)^(-d/2) e^(1/(8 sigma^2) + 1/e + e^2) S, \
                      S = sup_(0,T_cal] e^(e^2 c_mu t (ln(c_mu t) + 2) - C2 t ln t)"
                .into(),
        },
    })
}

/// Maximum of `f` on `(0, horizon]`: dense log/linear grid, then golden
/// section around the best node. Returns `(argmax, max)`.
fn maximise(f: impl Fn(f64) -> f64, horizon: f64) -> (f64, f64) {
    let mut nodes: Vec<f64> = (0..=4000)
        .map(|i| horizon * 10f64.powf(-12.0 * (1.0 - i as f64 / 4000.0)))
        .collect();
    nodes.extend((1..=4000).map(|i| horizon * i as f64 / 4000.0));
    nodes.sort_by(f64::total_cmp);
    let (mut best, mut best_val) = (nodes[0], f(nodes[0]));
    let mut best_idx = 0;
    for (i, &t) in nodes.iter().enumerate() {
        let v = f(t);
        if v > best_val {
            best = t;
            best_val = v;
            best_idx = i;
        }
    }
    let mut lo = nodes[best_idx.saturating_sub(1)];
    let mut hi = nodes[(best_idx + 1).min(nodes.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) >= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    let v = f(mid);
    if v > best_val {
        best = mid;
        best_val = v;
    }
    (best, best_val)
}

/// The fully explicit one-particle bound
/// `3 (2pi s^2)^{-d/2} e^{1/(8s^2)+1/e+e^2} e^{e^2 c_mu|t|(ln(c_mu|t|)+2)} e^{-C3|x-y|/(t^2+1)}`.
pub fn cor33_bound(separation: f64, t: f64, constants: &BoundConstants) -> f64 {
    cor33_prefactor(constants.sigma, constants.dimension)
        * (cor33_growth(constants.c_mu, t) - constants.c3 * separation.abs() / (t * t + 1.0)).exp()
}

/// The compressed form `C1 e^{C2 |t| ln|t| - C3 |x-y|/(1+t^2)}`; valid on
/// `|t| <= T_cal` only.
pub fn cor33_compressed_bound(separation: f64, t: f64, constants: &BoundConstants) -> f64 {
    constants.c1
        * (constants.c2 * xlogx(t.abs()) - constants.c3 * separation.abs() / (t * t + 1.0)).exp()
}

/// Smallest ratio compressed / explicit over `points` times in `(0, T_cal]`
/// (must be >= 1).
pub fn cor33_calibration_check(constants: &BoundConstants, points: usize) -> f64 {
    let horizon = constants.derivation_metadata.calibration_horizon;
    (1..=points)
        .map(|i| {
            let t = horizon * i as f64 / points as f64;
            cor33_compressed_bound(0.0, t, constants) / cor33_bound(0.0, t, constants)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Pair interaction profile.
#[derive(Clone)]
pub enum Profile {
    Zero,
    /// `strength e^{-rate |x|}`.
    Exponential { strength: f64 },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "Zero"),
            Profile::Exponential { strength } => write!(f, "Exponential {{ strength: {strength} }}"),
            Profile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Symmetric short-range pair interaction `W` with `|W(x)| <= c_W e^{-a|x|}`.
#[derive(Debug, Clone)]
pub struct InteractionModel {
    profile: Profile,
    dimension: usize,
    rate: f64,
    c_w: f64,
    l1_norm: f64,
    sup_norm: f64,
}

impl InteractionModel {
    pub fn zero(dimension: usize) -> Self {
        InteractionModel {
            profile: Profile::Zero,
            dimension,
            rate: 1.0,
            c_w: 0.0,
            l1_norm: 0.0,
            sup_norm: 0.0,
        }
    }

    /// `W(x) = strength e^{-rate|x|}`.
    pub fn exponential(strength: f64, rate: f64, dimension: usize) -> Result<Self> {
        let kernel = DecayKernel::new(rate, dimension)?;
        if !(strength >= 0.0) || !strength.is_finite() {
            return domain(format!("interaction strength must be nonnegative, got {strength}"));
        }
        Ok(InteractionModel {
            profile: Profile::Exponential { strength },
            dimension,
            rate,
            c_w: strength,
            l1_norm: strength * kernel.l1_norm(),
            sup_norm: strength,
        })
    }

    /// A user profile; envelope and symmetry are checked on a sampled grid.
    pub fn custom(
        w: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        dimension: usize,
        rate: f64,
        c_w: f64,
        l1_norm: f64,
        sup_norm: f64,
    ) -> Result<Self> {
        if !(rate > 0.0) || !(c_w > 0.0) || !(l1_norm > 0.0) || !(sup_norm > 0.0) {
            return domain("rate, c_W, L1 and sup norms must be positive");
        }
        for i in 0..=400 {
            let r = 0.05 * i as f64;
            let mut x = vec![0.0; dimension];
            x[0] = r;
            let minus: Vec<f64> = x.iter().map(|v| -v).collect();
            let (a, b) = (w(&x), w(&minus));
            if a.abs() > c_w * (-rate * r).exp() * (1.0 + 1e-12) {
                return domain(format!("|W({r})| = {} exceeds the envelope", a.abs()));
            }
            if (a - b).abs() > 1e-12 * a.abs().max(1e-300) {
                return domain(format!("W is not symmetric at {r}"));
            }
        }
        Ok(InteractionModel {
            profile: Profile::Custom(w),
            dimension,
            rate,
            c_w,
            l1_norm,
            sup_norm,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::Exponential { strength } => {
                strength * (-self.rate * x.iter().map(|v| v * v).sum::<f64>().sqrt()).exp()
            }
            Profile::Custom(w) => w(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Zero) || self.c_w == 0.0
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn c_w(&self) -> f64 {
        self.c_w
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// `a_t`, `b_t`, `c_t` of the many-body iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFunctions {
    pub c3: f64,
    pub rate: f64,
    pub sigma: f64,
}

impl RateFunctions {
    pub fn a(&self, t: f64) -> f64 {
        self.c3 / (t * t + 1.0)
    }

    pub fn b(&self, t: f64) -> f64 {
        let a = self.rate;
        a * self.c3 / (4.0 * (a * (t * t + 1.0) + self.c3))
    }

    pub fn c(&self, t: f64) -> f64 {
        let a = self.rate;
        a * self.c3 / (16.0 * (a * (t * t + 1.0) + self.c3 * (1.0 + a * self.sigma * self.sigma)))
    }
}

pub fn rate_functions(constants: &BoundConstants, interaction: &InteractionModel, sigma: f64) -> RateFunctions {
    RateFunctions {
        c3: constants.c3,
        rate: interaction.rate(),
        sigma,
    }
}

/// `P1`, `P2`, `P3` and `D` as functions of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPolynomials {
    pub c1: f64,
    pub c2: f64,
    pub c_sigma: f64,
    pub d3: f64,
    pub sigma: f64,
    pub dimension: usize,
    pub c_w: f64,
    pub w_l1: f64,
    pub rates: RateFunctions,
}

impl BoundPolynomials {
    fn d(&self) -> i32 {
        self.dimension as i32
    }

    /// `e^{C2 |t| |ln|t||}`, 1 at `t = 0`.
    pub fn time_factor(&self, t: f64) -> f64 {
        self.ln_time_factor(t).exp()
    }

    pub fn ln_time_factor(&self, t: f64) -> f64 {
        self.c2 * xlogx(t.abs()).abs()
    }

    pub fn p1(&self, t: f64) -> f64 {
        let d3 = self.d3;
        self.c1 * (2.0 * self.c_w * d3 * d3 * (4.0 * self.rates.b(t)).powi(-self.d()) + self.w_l1)
    }

    /// `P2 / P1 = e^{1/(8 s^2)} (2 pi s^2)^{-d/2} D3^2 / (4 c_t)^d`.
    pub fn p2_over_p1(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (1.0 / (8.0 * s2)).exp() * (2.0 * PI * s2).powf(-0.5 * self.dimension as f64) * self.d3 * self.d3
            / (4.0 * self.rates.c(t)).powi(self.d())
    }

    pub fn p2(&self, t: f64) -> f64 {
        self.p1(t) * self.p2_over_p1(t)
    }

    pub fn p3(&self, t: f64) -> f64 {
        self.c_sigma * self.c2.exp() * self.d3 * t.abs() * self.p2(t) / self.rates.c(t).powi(self.d())
    }

    pub fn ln_d_factor(&self, t: f64) -> f64 {
        self.c1.ln() + self.c2 + self.d3.ln() - self.p2_over_p1(t).ln() + self.ln_time_factor(t)
    }

    /// `D(t) = C1 e^{C2} D3 (P1/P2) e^{C2 |t| |ln|t||}`.
    pub fn d_factor(&self, t: f64) -> f64 {
        self.ln_d_factor(t).exp()
    }
}

pub fn bound_polynomials(
    constants: &BoundConstants,
    rates: &RateFunctions,
    interaction: &InteractionModel,
) -> BoundPolynomials {
    BoundPolynomials {
        c1: constants.c1,
        c2: constants.c2,
        c_sigma: constants.c_sigma,
        d3: constants.d3,
        sigma: constants.sigma,
        dimension: constants.dimension,
        c_w: interaction.c_w(),
        w_l1: interaction.l1_norm(),
        rates: *rates,
    }
}

/// One-dimensional nonnegative envelope `|f|` of an initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Envelope {
    /// `scale * phi_center^width`.
    Gaussian { center: f64, width: f64, scale: f64 },
    /// `height * 1_[lo, hi]`.
    Indicator { lo: f64, hi: f64, height: f64 },
    /// `sum_i weight * values_i delta(x - positions_i)`: a Riemann sum,
    /// e.g. `weight = h` for a lattice function.
    Sampled { positions: Vec<f64>, values: Vec<f64>, weight: f64 },
}

/// `int e^{-b|x - z|} phi_0^s(z) dz` at `x = u`.
fn exp_conv_gaussian(b: f64, s: f64, u: f64) -> f64 {
    let bs2 = b * s * s;
    let root = s * 2f64.sqrt();
    let lead = 0.5 * (0.5 * b * bs2).exp();
    let v = lead * ((-b * u).exp() * erfc((bs2 - u) / root) + (b * u).exp() * erfc((bs2 + u) / root));
    if v.is_finite() {
        return v;
    }
    // Fall back to quadrature when the closed form under/overflows.
    let p = GaussianPacket::new(vec![0.0], s).expect("positive width");
    integrate_with_breaks(
        |z| (-b * (u - z).abs()).exp() * p.eval(&[z]),
        -40.0 * s,
        40.0 * s,
        &[u],
        Tolerance::new(1e-300, 1e-12),
    )
    .map(|q| q.value)
    .unwrap_or(f64::NAN)
}

impl Envelope {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Envelope::Gaussian { width, scale, .. } => *width > 0.0 && *scale >= 0.0,
            Envelope::Indicator { lo, hi, height } => lo <= hi && *height >= 0.0,
            Envelope::Sampled { positions, values, weight } => {
                positions.len() == values.len() && *weight > 0.0 && values.iter().all(|v| *v >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid envelope {self:?}"))
        }
    }

    pub fn l1_norm(&self) -> f64 {
        match self {
            Envelope::Gaussian { scale, .. } => *scale,
            Envelope::Indicator { lo, hi, height } => height * (hi - lo),
            Envelope::Sampled { values, weight, .. } => weight * values.iter().sum::<f64>(),
        }
    }

    /// `(G_b * |f|)(x) = int e^{-b|x - z|} |f(z)| dz`.
    pub fn exp_convolution(&self, b: f64, x: f64) -> f64 {
        match self {
            Envelope::Gaussian { center, width, scale } => scale * exp_conv_gaussian(b, *width, x - center),
            Envelope::Indicator { lo, hi, height } => {
                let v = if x <= *lo {
                    (-b * (lo - x)).exp() - (-b * (hi - x)).exp()
                } else if x >= *hi {
                    (-b * (x - hi)).exp() - (-b * (x - lo)).exp()
                } else {
                    2.0 - (-b * (x - lo)).exp() - (-b * (hi - x)).exp()
                };
                height * v / b
            }
            Envelope::Sampled { positions, values, weight } => {
                weight
                    * positions
                        .iter()
                        .zip(values)
                        .map(|(p, v)| v * (-b * (x - p).abs()).exp())
                        .sum::<f64>()
            }
        }
    }
}

/// `int int e^{-r|x - y|} |f(x)| |g(y)| dx dy` (d = 1).
pub fn exp_double_integral(f: &Envelope, g: &Envelope, r: f64) -> Result<f64> {
    f.validate()?;
    g.validate()?;
    if !(r > 0.0) {
        return domain(format!("decay rate must be positive, got {r}"));
    }
    let tol = Tolerance::new(1e-300, 1e-13);
    match (f, g) {
        (Envelope::Sampled { positions, values, weight }, other)
        | (other, Envelope::Sampled { positions, values, weight }) => Ok(weight
            * positions
                .iter()
                .zip(values)
                .map(|(p, v)| v * other.exp_convolution(r, *p))
                .sum::<f64>()),
        (
            Envelope::Gaussian { center: c1, width: s1, scale: a1 },
            Envelope::Gaussian { center: c2, width: s2, scale: a2 },
        ) => Ok(a1 * a2 * exp_conv_gaussian(r, (s1 * s1 + s2 * s2).sqrt(), c1 - c2)),
        (Envelope::Indicator { lo, hi, height }, other) | (other, Envelope::Indicator { lo, hi, height }) => {
            if lo == hi {
                return Ok(0.0);
            }
            Ok(height * integrate(|x| other.exp_convolution(r, x), *lo, *hi, tol)?.value)
        }
    }
}

/// `K_t(x) = ||W||_1 |<f_t, phi_x>| + 2 (|W| * |<f_t, phi_.>|)(x)` (d = 1)
/// for a user-supplied overlap modulus `z -> |<f_t, phi_z^sigma>|`.
pub fn kernel_k_from_overlap(
    overlap: impl Fn(f64) -> Result<f64>,
    x: f64,
    interaction: &InteractionModel,
) -> Result<f64> {
    if interaction.dimension() != 1 {
        return domain("kernel_K is evaluated in one dimension");
    }
    if interaction.is_zero() {
        return Ok(0.0);
    }
    let radius = (interaction.c_w() / 1e-12).ln().max(0.0) / interaction.rate();
    let failure = std::cell::RefCell::new(None);
    let integrand = |z: f64| match overlap(z) {
        Ok(v) => interaction.eval(&[x - z]).abs() * v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let conv = integrate_with_breaks(integrand, x - radius, x + radius, &[x], Tolerance::new(1e-15, 1e-9))
        .map_err(|e| Error::Numerical(format!("kernel_K convolution at x = {x}: {e}")))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(interaction.l1_norm() * overlap(x)? + 2.0 * conv.value)
}

/// Grid spacing / time step used when `kernel_k` needs the propagation oracle.
pub const KERNEL_GRID_POINTS: usize = 2048;
pub const KERNEL_GRID_SPACING: f64 = 0.0625;
pub const KERNEL_MAX_STEP: f64 = 1e-3;

/// `K_t(x)` for `f = phi_y^sigma` with the probe width of `f`.
///
/// Free dynamics use the closed-form overlap; otherwise the split-step
/// oracle is run once and overlaps are Riemann sums on the grid.
pub fn kernel_k(
    source: &GaussianPacket,
    x: f64,
    t: f64,
    interaction: &InteractionModel,
    potential: &PotentialModel,
) -> Result<f64> {
    if source.dimension() != 1 {
        return domain("kernel_K is evaluated in one dimension");
    }
    let sigma = source.width();
    if potential.measure.is_free() {
        return kernel_k_from_overlap(
            |z| {
                let probe = Probe::Packet(GaussianPacket::new(vec![z], sigma)?);
                Ok(free_amplitude(source, &probe, t)?.norm())
            },
            x,
            interaction,
        );
    }
    let spacing = KERNEL_GRID_SPACING.min(sigma / 4.0);
    let grid = GridFunction::from_packet(source, spacing * KERNEL_GRID_POINTS as f64, KERNEL_GRID_POINTS)?;
    let steps = ((t.abs() / KERNEL_MAX_STEP).ceil() as usize).max(1);
    let evolved = grid_propagate(&grid, potential, t, steps)?;
    kernel_k_from_overlap(
        |z| {
            let o = grid_overlap(&evolved, &GaussianPacket::new(vec![z], sigma)?)?;
            Ok(o.value.norm())
        },
        x,
        interaction,
    )
}

/// `P1(t) e^{C2 t|ln t|} (G_{b_t} * |f|)(x)`.
pub fn kernel_k_bound(f: &Envelope, x: f64, t: f64, polys: &BoundPolynomials) -> Result<f64> {
    f.validate()?;
    Ok(polys.p1(t) * polys.time_factor(t) * f.exp_convolution(polys.rates.b(t), x))
}

/// `P2(t) e^{C2 t|ln t|} e^{-c_t |x - y|}`.
pub fn kernel_k_gauss_bound(x: &[f64], y: &[f64], t: f64, polys: &BoundPolynomials) -> f64 {
    let r: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    polys.p2(t) * polys.time_factor(t) * (-polys.rates.c(t) * r).exp()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `D(t) P3(t)^n / n! * int int e^{-c_t|x-y|/4} |f(x)||g(y)| dx dy`.
pub fn a_n_bound(n: usize, t: f64, f: &Envelope, g: &Envelope, polys: &BoundPolynomials) -> Result<f64> {
    Ok(ln_a_n_bound(n, t, f, g, polys)?.exp())
}

pub fn ln_a_n_bound(n: usize, t: f64, f: &Envelope, g: &Envelope, polys: &BoundPolynomials) -> Result<f64> {
    if n == 0 {
        return domain("a_n is defined for n >= 1");
    }
    let overlap = exp_double_integral(f, g, 0.25 * polys.rates.c(t))?;
    Ok(polys.ln_d_factor(t) + n as f64 * polys.p3(t).ln() - ln_factorial(n) + overlap.ln())
}

/// `D(t) (e^{P3(t)} - 1) int int e^{-c_t|x-y|/4} |f(x)||g(y)| dx dy`.
pub fn many_body_bound(t: f64, f: &Envelope, g: &Envelope, polys: &BoundPolynomials) -> Result<f64> {
    let p3 = polys.p3(t);
    if p3 == 0.0 {
        return Ok(0.0);
    }
    Ok(ln_many_body_bound(t, f, g, polys)?.exp())
}

/// Natural log of [`many_body_bound`] (`-inf` when the bound is 0).
pub fn ln_many_body_bound(t: f64, f: &Envelope, g: &Envelope, polys: &BoundPolynomials) -> Result<f64> {
    let overlap = exp_double_integral(f, g, 0.25 * polys.rates.c(t))?;
    let p3 = polys.p3(t);
    let ln_series = if p3 > 30.0 {
        p3 + (-(-p3).exp()).ln_1p()
    } else {
        p3.exp_m1().ln()
    };
    Ok(polys.ln_d_factor(t) + ln_series + overlap.ln())
}

/// Truncation remainder after `n` iterations of the many-body expansion:
/// `6 sqrt(C_s) ||g||_2 C_s^N P1 P2^{N-1} e^{C2 t|ln t|} e^{N C2} t^N/N!
/// (D3/c_t^d)^N c_t^d ||G_{c_t/4}||_1 ||f||_1`.
pub fn remainder_bound(n: usize, t: f64, f_l1: f64, g_l2: f64, polys: &BoundPolynomials) -> Result<f64> {
    Ok(ln_remainder_bound(n, t, f_l1, g_l2, polys)?.exp())
}

pub fn ln_remainder_bound(n: usize, t: f64, f_l1: f64, g_l2: f64, polys: &BoundPolynomials) -> Result<f64> {
    if n == 0 {
        return domain("remainder is defined for N >= 1");
    }
    let t = t.abs();
    if t == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let nf = n as f64;
    let d = polys.dimension;
    let ct = polys.rates.c(t);
    let g_norm = DecayKernel::new(0.25 * ct, d)?.l1_norm();
    Ok((6.0 * polys.c_sigma.sqrt() * g_l2).ln()
        + nf * polys.c_sigma.ln()
        + polys.p1(t).ln()
        + (nf - 1.0) * polys.p2(t).ln()
        + polys.ln_time_factor(t)
        + nf * polys.c2
        + nf * t.ln()
        - ln_factorial(n)
        + nf * (polys.d3.ln() - d as f64 * ct.ln())
        + d as f64 * ct.ln()
        + g_norm.ln()
        + f_l1.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_sigma_examples() {
        assert!((c_sigma(1.0, 1) - 0.282_094_8).abs() < 1e-7);
        assert!((c_sigma(0.5, 1) - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!((c_sigma(1.0, 3) - 0.022_448_39).abs() < 1e-8);
    }

    #[test]
    fn measure_param_examples() {
        let m = SpectralMeasure::cosine_series(1, &[(vec![1.0], 2.0)]).unwrap();
        assert_eq!(measure_params(&m), MeasureParams { c_mu: 2.0, m_max: 1.0, free: false });
        assert!(measure_params(&SpectralMeasure::free(1)).free);
        let m = SpectralMeasure::cosine_series(1, &[(vec![1.0], 1.0), (vec![2.0], 0.5)]).unwrap();
        assert_eq!((measure_params(&m).c_mu, measure_params(&m).m_max), (1.5, 2.0));
    }

    #[test]
    fn prop32_forced_limits() {
        assert_eq!(prop32_bound(3.0, 0.0, 1.0, 1, 2.0, 1.0), 0.0);
        assert_eq!(prop32_bound(3.0, 1.0, 1.0, 1, 0.0, 1.0), 0.0);
        assert_eq!(prop32_bound(3.0, 1.0, 1.0, 1, 2.0, 0.0), 0.0);
        assert!(prop32_bound(10.0, 1.0, 1.0, 1, 2.0, 1.0) > 0.0);
    }

    #[test]
    fn c3_examples() {
        let k = cor33_constants(1.0, 1, 2.0, 1.0).unwrap();
        assert!((k.c3 - 1.0 / 52.0).abs() < 1e-17);
        let k0 = cor33_constants(1.0, 1, 0.0, 0.0).unwrap();
        assert!((k0.c3 - 1.0 / 42.0).abs() < 1e-17);
        assert!(cor33_constants(0.0, 1, 2.0, 1.0).is_err());
    }

    #[test]
    fn cor33_at_origin() {
        let k = cor33_constants(1.0, 1, 2.0, 1.0).unwrap();
        let v = cor33_bound(0.0, 0.0, &k);
        let expected = 3.0 * (2.0 * PI).powf(-0.5) * (0.125 + 1.0 / E + E * E).exp();
        assert!((v - expected).abs() < 1e-10 * expected);
        assert!((v - 3170.388).abs() < 1e-3);
        assert!(cor33_bound(1.0, 0.5, &k) > cor33_bound(2.0, 0.5, &k));
    }

    #[test]
    fn calibration_dominates() {
        for (c_mu, m) in [(2.0, 1.0), (0.0, 0.0), (0.3, 2.0), (5.0, 1.0)] {
            let k = cor33_constants(1.0, 1, c_mu, m).unwrap();
            assert!(cor33_calibration_check(&k, 5000) >= 1.0, "c_mu={c_mu}");
        }
    }

    #[test]
    fn rate_examples() {
        let r = RateFunctions { c3: 1.0 / 52.0, rate: 1.0, sigma: 1.0 };
        assert!((r.b(0.0) - 1.0 / 212.0).abs() < 1e-17);
        assert!((r.c(0.0) - 1.0 / 864.0).abs() < 1e-17);
    }

    fn stub(c1: f64, c2: f64) -> BoundPolynomials {
        BoundPolynomials {
            c1,
            c2,
            c_sigma: c_sigma(1.0, 1),
            d3: 4.0,
            sigma: 1.0,
            dimension: 1,
            c_w: 1.0,
            w_l1: 1.0,
            rates: RateFunctions { c3: 1.0 / 52.0, rate: 1.0, sigma: 1.0 },
        }
    }

    #[test]
    fn p1_example() {
        assert!((stub(1.0, 1.0).p1(0.0) - 1697.0).abs() < 1e-9);
    }

    #[test]
    fn polynomial_identities() {
        let p = stub(2.0, 0.5);
        for t in [0.1, 0.7, 2.0] {
            let ratio = p.p2(t) / p.p1(t);
            let s = (0.125f64).exp() * (2.0 * PI).powf(-0.5) * 16.0 / (4.0 * p.rates.c(t));
            assert!((ratio - s).abs() < 1e-12 * s);
            let p3 = p.c_sigma * p.c2.exp() * p.d3 * t * p.p2(t) / p.rates.c(t);
            assert!((p.p3(t) - p3).abs() < 1e-12 * p3);
        }
        assert_eq!(p.p3(0.0), 0.0);
        assert_eq!(p.time_factor(0.0), 1.0);
    }

    #[test]
    fn indicator_convolution_matches_quadrature() {
        let f = Envelope::Indicator { lo: -1.0, hi: 2.0, height: 0.5 };
        for x in [-3.0, 0.0, 1.5, 4.0] {
            let q = integrate(|z| 0.5 * (-0.3 * (x - z as f64).abs()).exp(), -1.0, 2.0, Tolerance::default())
                .unwrap()
                .value;
            assert!((f.exp_convolution(0.3, x) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_convolution_matches_quadrature() {
        let f = Envelope::Gaussian { center: 1.0, width: 0.8, scale: 2.0 };
        let p = GaussianPacket::new(vec![1.0], 0.8).unwrap();
        for x in [-2.0, 1.0, 5.0] {
            let q = integrate_with_breaks(
                |z| 2.0 * p.eval(&[z]) * (-0.4 * (x - z).abs()).exp(),
                -40.0,
                40.0,
                &[x],
                Tolerance::default(),
            )
            .unwrap()
            .value;
            assert!((f.exp_convolution(0.4, x) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_interaction_kernel_vanishes() {
        let p = GaussianPacket::centered(1, 1.0).unwrap();
        let k = kernel_k(&p, 0.5, 1.0, &InteractionModel::zero(1), &PotentialModel::free(1)).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn kernel_at_time_zero() {
        let p = GaussianPacket::centered(1, 1.0).unwrap();
        let w = InteractionModel::exponential(1.0, 1.0, 1).unwrap();
        let k = kernel_k(&p, 0.0, 0.0, &w, &PotentialModel::free(1)).unwrap();
        // First term alone is ||W||_1 C_sigma; the convolution adds to it.
        assert!(k > w.l1_norm() * c_sigma(1.0, 1));
    }

    #[test]
    fn remainder_vanishes_at_time_zero() {
        assert_eq!(remainder_bound(3, 0.0, 1.0, 1.0, &stub(1.0, 1.0)).unwrap(), 0.0);
    }
}
