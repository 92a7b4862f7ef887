//! Dyson expansion of `e^{-itH_1}` applied to Gaussian packets.
//!
//! Each atom `k` of the spectral measure acts as multiplication by
//! `w e^{ik.x}`, which shifts momentum by `k`. For fixed ordered times and a
//! fixed atom tuple the momentum integral is Gaussian and is done in closed
//! form; only the time simplex needs quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::packet::{GaussianPacket, PotentialModel};
use crate::error::{config, domain, Result};
use crate::quad::gauss_legendre;

const MAX_DIM: usize = 3;
/// Atom tuples are enumerated exactly up to this many per order.
pub const MAX_ENUMERATED_TUPLES: usize = 4096;

type Vec3 = [f64; MAX_DIM];

fn pad(v: &[f64]) -> Vec3 {
    let mut out = [0.0; MAX_DIM];
    out[..v.len()].copy_from_slice(v);
    out
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Where the evolved state is read out.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// Pointwise value `(e^{-itH_1} f)(x)`.
    Point(Vec<f64>),
    /// Overlap `<e^{-itH_1} f, phi_x^s>` with an L1-normalised packet.
    Packet(GaussianPacket),
}

impl Probe {
    fn center(&self) -> &[f64] {
        match self {
            Probe::Point(x) => x,
            Probe::Packet(p) => p.center(),
        }
    }

    fn width(&self) -> f64 {
        match self {
            Probe::Point(_) => 0.0,
            Probe::Packet(p) => p.width(),
        }
    }
}

/// Truncated Dyson series value with its error certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub value: Complex64,
    pub truncation_order: usize,
    /// Factorial majorant of the omitted orders `n > N`.
    pub tail_bound: f64,
    /// Sum over orders of rule-refinement differences / Monte Carlo standard
    /// errors. An estimate, not a certificate.
    pub quadrature_error_estimate: f64,
}

/// Time-simplex rule: tensor Gauss-Legendre in collapsed coordinates for
/// orders up to `max_gauss_order`, stratified Monte Carlo above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexQuadrature {
    pub gauss_nodes: usize,
    pub max_gauss_order: usize,
    /// Number of strata; two samples are drawn per stratum.
    pub mc_strata: usize,
    pub seed: u64,
}

impl Default for SimplexQuadrature {
    fn default() -> Self {
        SimplexQuadrature {
            gauss_nodes: 16,
            max_gauss_order: 4,
            mc_strata: 4096,
            seed: 0x5eed,
        }
    }
}

/// Closed-form amplitude for ordered times and a momentum tuple.
///
/// `s` is the probe width (0 for a pointwise value). With
/// `R = sum_j k_j (t - t_j)`, `Phi = sum_l (t_{l+1} - t_l)|K_l|^2`,
/// `K = sum_j k_j` and `c = sigma^2/2 + s^2/2 + it` this is
/// `(2pi)^{-d} (pi/c)^{d/2} exp(-i Phi + i K.x - s^2|K|^2/2 + beta^2/(4c))`,
/// `beta = i(x - y - 2R) - s^2 K`.
#[allow(clippy::too_many_arguments)]
fn raw_amplitude(
    d: usize,
    t: f64,
    times: &[f64],
    ks: &[&Vec3],
    y: &Vec3,
    x: &Vec3,
    sigma: f64,
    s: f64,
) -> Complex64 {
    let mut big_k = [0.0; MAX_DIM];
    let mut r = [0.0; MAX_DIM];
    let mut phi = 0.0;
    for (j, k) in ks.iter().enumerate() {
        let next = if j + 1 < times.len() { times[j + 1] } else { t };
        for i in 0..d {
            big_k[i] += k[i];
            r[i] += k[i] * (t - times[j]);
        }
        phi += (next - times[j]) * dot(&big_k, &big_k);
    }
    let c = Complex64::new(0.5 * (sigma * sigma + s * s), t);
    let s2 = s * s;
    let mut beta_sq = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let beta = Complex64::new(-s2 * big_k[i], x[i] - y[i] - 2.0 * r[i]);
        beta_sq += beta * beta;
    }
    let exponent = Complex64::new(-0.5 * s2 * dot(&big_k, &big_k), dot(&big_k, x) - phi)
        + beta_sq / (4.0 * c);
    let prefactor = (Complex64::from(PI) / c).powf(0.5 * d as f64) * (2.0 * PI).powi(-(d as i32));
    prefactor * exponent.exp()
}

fn check_term_args(
    t: f64,
    times: &[f64],
    momenta: &[Vec<f64>],
    source: &GaussianPacket,
    x: &[f64],
) -> Result<()> {
    let d = source.dimension();
    if d > MAX_DIM {
        return domain(format!("dimension {d} exceeds {MAX_DIM}"));
    }
    if x.len() != d || momenta.iter().any(|k| k.len() != d) {
        return domain("dimension mismatch between packet, point and momenta");
    }
    if times.len() != momenta.len() {
        return domain(format!(
            "{} times but {} momenta",
            times.len(),
            momenta.len()
        ));
    }
    if !(t >= 0.0) {
        return domain(format!("total time must be nonnegative, got {t}"));
    }
    let mut prev = 0.0;
    for &tj in times {
        if !(tj >= prev) || tj > t {
            return domain(format!("times {times:?} are not ordered within [0, {t}]"));
        }
        prev = tj;
    }
    Ok(())
}

/// Complex Dyson integrand for one time configuration and momentum tuple,
/// evaluated pointwise at `x`. The modulus equals [`dyson_term_magnitude`].
pub fn dyson_term_amplitude(
    t: f64,
    times: &[f64],
    momenta: &[Vec<f64>],
    source: &GaussianPacket,
    x: &[f64],
) -> Result<Complex64> {
    check_term_args(t, times, momenta, source, x)?;
    let ks: Vec<Vec3> = momenta.iter().map(|k| pad(k)).collect();
    let refs: Vec<&Vec3> = ks.iter().collect();
    Ok(raw_amplitude(
        source.dimension(),
        t,
        times,
        &refs,
        &pad(source.center()),
        &pad(x),
        source.width(),
        0.0,
    ))
}

/// `(2pi)^{-d/2}(4t^2+s^4)^{-d/4} exp(-s^2 |x - y - 2R|^2 / (8t^2 + 2s^4))`.
pub fn dyson_term_magnitude(
    t: f64,
    times: &[f64],
    momenta: &[Vec<f64>],
    source: &GaussianPacket,
    x: &[f64],
) -> Result<f64> {
    check_term_args(t, times, momenta, source, x)?;
    let d = source.dimension();
    let mut shift = vec![0.0; d];
    for (k, tj) in momenta.iter().zip(times) {
        for i in 0..d {
            shift[i] += 2.0 * k[i] * (t - tj);
        }
    }
    let sep2: f64 = (0..d)
        .map(|i| {
            let v = x[i] - source.center()[i] - shift[i];
            v * v
        })
        .sum();
    Ok(gaussian_spread_magnitude(d, source.width(), t, sep2))
}

fn gaussian_spread_magnitude(d: usize, sigma: f64, t: f64, sep2: f64) -> f64 {
    let s2 = sigma * sigma;
    let denom = 4.0 * t * t + s2 * s2;
    (2.0 * PI).powf(-0.5 * d as f64) * denom.powf(-0.25 * d as f64) * (-s2 * sep2 / (2.0 * denom)).exp()
}

/// `|(e^{-itH_0} phi_y^sigma)(x)|`.
pub fn free_kernel_magnitude(source: &GaussianPacket, x: &[f64], t: f64) -> Result<f64> {
    if x.len() != source.dimension() {
        return domain("dimension mismatch between packet and point");
    }
    let sep2: f64 = x
        .iter()
        .zip(source.center())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(gaussian_spread_magnitude(source.dimension(), source.width(), t, sep2))
}

/// Complex free value `(e^{-itH_0} phi_y^sigma)(x)` (or its packet overlap).
pub fn free_amplitude(source: &GaussianPacket, probe: &Probe, t: f64) -> Result<Complex64> {
    let d = source.dimension();
    if d > MAX_DIM || probe.center().len() != d {
        return domain("dimension mismatch or dimension above 3");
    }
    let value = raw_amplitude(
        d,
        t.abs(),
        &[],
        &[],
        &pad(source.center()),
        &pad(probe.center()),
        source.width(),
        probe.width(),
    );
    Ok(if t < 0.0 { value.conj() } else { value })
}

/// `(2pi)^{-d/2}(4t^2+s^4)^{-d/4} sum_{n>N} (c_mu |t|)^n / n!`.
pub fn dyson_tail_bound(dimension: usize, sigma: f64, c_mu: f64, t: f64, order: usize) -> f64 {
    let u = c_mu * t.abs();
    if u == 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    for n in 1..=order + 1 {
        term *= u / n as f64;
    }
    let mut sum = 0.0;
    let mut n = order + 1;
    while term > sum * 1e-18 && term > 0.0 {
        sum += term;
        n += 1;
        term *= u / n as f64;
        if n > order + 10_000 {
            break;
        }
    }
    gaussian_spread_magnitude(dimension, sigma, t, 0.0) * sum
}

struct Tuples {
    /// (product of weights, momenta) when enumerated exactly.
    exact: Option<Vec<(f64, Vec<usize>)>>,
}

fn enumerate_tuples(weights: &[f64], n: usize) -> Tuples {
    let m = weights.len();
    let count = (m as f64).powi(n as i32);
    if count > MAX_ENUMERATED_TUPLES as f64 {
        return Tuples { exact: None };
    }
    let total = m.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut idx = Vec::with_capacity(n);
        let mut w = 1.0;
        for _ in 0..n {
            let a = c % m;
            c /= m;
            w *= weights[a];
            idx.push(a);
        }
        out.push((w, idx));
    }
    Tuples { exact: Some(out) }
}

struct OrderContext<'a> {
    d: usize,
    t: f64,
    sigma: f64,
    s: f64,
    y: Vec3,
    x: Vec3,
    momenta: &'a [Vec3],
    weights: &'a [f64],
    cumulative: Vec<f64>,
    abs_total: f64,
}

impl OrderContext<'_> {
    fn sum_over_tuples(&self, tuples: &[(f64, Vec<usize>)], times: &[f64]) -> Complex64 {
        let mut ks: Vec<&Vec3> = Vec::with_capacity(times.len());
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, idx) in tuples {
            ks.clear();
            ks.extend(idx.iter().map(|&a| &self.momenta[a]));
            acc += *w * raw_amplitude(self.d, self.t, times, &ks, &self.y, &self.x, self.sigma, self.s);
        }
        acc
    }

    /// One importance-sampled tuple, drawn with probability `|w|/sum|w|`.
    fn sampled_tuple(&self, rng: &mut ChaCha8Rng, times: &[f64]) -> Complex64 {
        let mut ks: Vec<&Vec3> = Vec::with_capacity(times.len());
        let mut sign = 1.0;
        for _ in times {
            let u: f64 = rng.gen::<f64>() * self.abs_total;
            let a = self
                .cumulative
                .partition_point(|&c| c <= u)
                .min(self.weights.len() - 1);
            sign *= self.weights[a].signum();
            ks.push(&self.momenta[a]);
        }
        let scale = sign * self.abs_total.powi(times.len() as i32);
        scale * raw_amplitude(self.d, self.t, times, &ks, &self.y, &self.x, self.sigma, self.s)
    }
}

/// Tensor Gauss-Legendre on the simplex via `t_n = t u_n`, `t_j = t_{j+1} u_j`.
fn gauss_simplex(ctx: &OrderContext, tuples: &[(f64, Vec<usize>)], n: usize, m: usize) -> Complex64 {
    let (nodes, weights) = gauss_legendre(m);
    let u: Vec<f64> = nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let w: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
    let total = m.pow(n as u32);
    let outer = m.pow(n.saturating_sub(1) as u32).max(1);
    let inner = total / outer;
    let parts: Vec<Complex64> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let mut times = vec![0.0; n];
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..inner {
                let mut code = o * inner + i;
                let mut weight = 1.0;
                let mut jac = ctx.t;
                let mut upper = ctx.t;
                for j in (0..n).rev() {
                    let a = code % m;
                    code /= m;
                    let tj = upper * u[a];
                    weight *= w[a];
                    times[j] = tj;
                    if j > 0 {
                        jac *= tj;
                    }
                    upper = tj;
                }
                acc += weight * jac * ctx.sum_over_tuples(tuples, &times);
            }
            acc
        })
        .collect();
    parts.into_iter().sum()
}

fn stratum_rng(seed: u64, n: usize, stratum: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 40) | stratum as u64);
    rng
}

/// Stratified Monte Carlo on the simplex: `u_1` is stratified, the uniform
/// vector is sorted. Returns (estimate, standard error).
fn monte_carlo_simplex(
    ctx: &OrderContext,
    tuples: Option<&[(f64, Vec<usize>)]>,
    n: usize,
    strata: usize,
    seed: u64,
) -> (Complex64, f64) {
    let parts: Vec<(Complex64, f64)> = (0..strata)
        .into_par_iter()
        .map(|i| {
            let mut rng = stratum_rng(seed, n, i);
            let mut draws = [Complex64::new(0.0, 0.0); 2];
            let mut times = vec![0.0; n];
            for draw in draws.iter_mut() {
                times[0] = (i as f64 + rng.gen::<f64>()) / strata as f64;
                for tj in times.iter_mut().skip(1) {
                    *tj = rng.gen::<f64>();
                }
                times.sort_by(f64::total_cmp);
                for tj in times.iter_mut() {
                    *tj *= ctx.t;
                }
                *draw = match tuples {
                    Some(list) => ctx.sum_over_tuples(list, &times),
                    None => ctx.sampled_tuple(&mut rng, &times),
                };
            }
            (0.5 * (draws[0] + draws[1]), (draws[0] - draws[1]).norm_sqr())
        })
        .collect();
    let mut vol = 1.0;
    for j in 1..=n {
        vol *= ctx.t / j as f64;
    }
    let mean: Complex64 = parts.iter().map(|p| p.0).sum::<Complex64>() / strata as f64;
    let var: f64 = parts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    (vol * mean, vol * var.sqrt() / strata as f64)
}

/// Truncated Dyson series `sum_{n<=N} (-i)^n sum_tuples prod w int_simplex A`
/// for `e^{-itH_1}` applied to `source`, read out through `probe`.
pub fn dyson_overlap(
    source: &GaussianPacket,
    probe: &Probe,
    potential: &PotentialModel,
    t: f64,
    order: usize,
    quadrature: &SimplexQuadrature,
) -> Result<OverlapEstimate> {
    let d = source.dimension();
    if d > MAX_DIM {
        return domain(format!("dimension {d} exceeds {MAX_DIM}"));
    }
    if probe.center().len() != d || potential.dimension() != d {
        return domain("dimension mismatch between packet, probe and potential");
    }
    if !t.is_finite() {
        return domain("time must be finite");
    }
    let measure = &potential.measure;
    let active = order > 0 && !measure.is_free() && t != 0.0;
    if active {
        if quadrature.gauss_nodes == 0 && quadrature.max_gauss_order > 0 {
            return config("Gauss rule with zero nodes and a positive truncation order");
        }
        if order > quadrature.max_gauss_order && quadrature.mc_strata == 0 {
            return config("Monte Carlo budget of zero for orders above the Gauss range");
        }
    }
    let tail_bound = dyson_tail_bound(d, source.width(), measure.c_mu(), t, order);
    let tau = t.abs();
    let mut value = free_amplitude(source, probe, tau)?;
    let mut error = 0.0;

    if active {
        let momenta: Vec<Vec3> = measure.atoms().iter().map(|a| pad(&a.momentum)).collect();
        let weights: Vec<f64> = measure.atoms().iter().map(|a| a.weight).collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w.abs();
            cumulative.push(acc);
        }
        let ctx = OrderContext {
            d,
            t: tau,
            sigma: source.width(),
            s: probe.width(),
            y: pad(source.center()),
            x: pad(probe.center()),
            momenta: &momenta,
            weights: &weights,
            cumulative,
            abs_total: acc,
        };
        let mut phase = Complex64::new(1.0, 0.0);
        for n in 1..=order {
            phase *= Complex64::new(0.0, -1.0);
            let tuples = enumerate_tuples(&weights, n);
            let (term, err) = match (&tuples.exact, n <= quadrature.max_gauss_order) {
                (Some(list), true) => {
                    let m = quadrature.gauss_nodes;
                    let fine = gauss_simplex(&ctx, list, n, m);
                    let coarse = gauss_simplex(&ctx, list, n, (m / 2).max(1));
                    (fine, (fine - coarse).norm())
                }
                (list, _) => monte_carlo_simplex(
                    &ctx,
                    list.as_deref(),
                    n,
                    quadrature.mc_strata.max(1),
                    quadrature.seed,
                ),
            };
            value += phase * term;
            error += err;
        }
    }
    if t < 0.0 {
        // H_1 is real, so e^{i|t|H_1} phi = conj(e^{-i|t|H_1} phi).
        value = value.conj();
    }
    Ok(OverlapEstimate {
        value,
        truncation_order: order,
        tail_bound,
        quadrature_error_estimate: error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};

    fn packet(y: f64, s: f64) -> GaussianPacket {
        GaussianPacket::new(vec![y], s).unwrap()
    }

    #[test]
    fn free_kernel_values() {
        let p = packet(0.0, 1.0);
        assert!((free_kernel_magnitude(&p, &[0.0], 0.0).unwrap() - 0.398_942_3).abs() < 1e-7);
        let v = free_kernel_magnitude(&p, &[0.0], 1.0).unwrap();
        assert!((v - (2.0 * PI).powf(-0.5) * 5f64.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn single_kick_example() {
        let p = packet(0.0, 1.0);
        let m = dyson_term_magnitude(1.0, &[0.5], &[vec![1.0]], &p, &[0.0]).unwrap();
        let free = free_kernel_magnitude(&p, &[0.0], 1.0).unwrap();
        assert!((m - free * (-0.1f64).exp()).abs() < 1e-15);
        let zero = dyson_term_magnitude(1.0, &[0.3], &[vec![0.0]], &p, &[0.7]).unwrap();
        assert!((zero - free_kernel_magnitude(&p, &[0.7], 1.0).unwrap()).abs() < 1e-16);
    }

    #[test]
    fn unordered_times_rejected() {
        let p = packet(0.0, 1.0);
        let ks = vec![vec![1.0], vec![1.0]];
        assert!(dyson_term_magnitude(1.0, &[0.6, 0.5], &ks, &p, &[0.0]).is_err());
        assert!(dyson_term_amplitude(1.0, &[0.5, 1.5], &ks, &p, &[0.0]).is_err());
    }

    #[test]
    fn tail_example() {
        let tail = dyson_tail_bound(1, 1.0, 2.0, 1.0, 10);
        let series: f64 = (11..40)
            .map(|n| 2f64.powi(n) / (1..=n).map(f64::from).product::<f64>())
            .sum();
        let expected = series * (2.0 * PI).powf(-0.5) * 5f64.powf(-0.25);
        assert!((tail - expected).abs() < 1e-18);
        assert_eq!(dyson_tail_bound(1, 1.0, 0.0, 1.0, 3), 0.0);
    }

    #[test]
    fn amplitude_matches_k_space_quadrature() {
        // Direct momentum integral for n = 2, d = 1, pointwise readout:
        // (2pi)^{-1} int e^{-sigma^2 p^2/2} e^{-ipy} prod_l e^{-i dt_l p_l^2} e^{i p_n x} dp.
        let (t, t1, t2, k1, k2, y, x, sigma) = (0.8, 0.2, 0.55, 1.3, -0.6, 0.4, -0.9, 0.9);
        let phase = |p: f64| -> Complex64 {
            let p1 = p + k1;
            let p2 = p1 + k2;
            let arg = -p * y + p2 * x - t1 * p * p - (t2 - t1) * p1 * p1 - (t - t2) * p2 * p2;
            Complex64::from_polar((-0.5 * sigma * sigma * p * p).exp() / (2.0 * PI), arg)
        };
        let tol = Tolerance::new(1e-13, 1e-12);
        let re = integrate(|p| phase(p).re, -12.0, 12.0, tol).unwrap().value;
        let im = integrate(|p| phase(p).im, -12.0, 12.0, tol).unwrap().value;
        let amp = dyson_term_amplitude(t, &[t1, t2], &[vec![k1], vec![k2]], &packet(y, sigma), &[x]).unwrap();
        assert!((amp - Complex64::new(re, im)).norm() < 1e-10, "{amp} vs {re}+{im}i");
    }

    #[test]
    fn free_series_is_exact() {
        let p = packet(0.0, 1.0);
        let probe = Probe::Point(vec![1.5]);
        let free = free_amplitude(&p, &probe, 0.7).unwrap();
        for order in [0, 3, 8] {
            let est = dyson_overlap(&p, &probe, &PotentialModel::free(1), 0.7, order, &SimplexQuadrature::default()).unwrap();
            assert_eq!(est.value, free);
            assert_eq!(est.tail_bound, 0.0);
            assert_eq!(est.quadrature_error_estimate, 0.0);
        }
    }

    #[test]
    fn zero_budget_rejected() {
        let p = packet(0.0, 1.0);
        let v = PotentialModel::cosine(2.0, 1.0).unwrap();
        let q = SimplexQuadrature { gauss_nodes: 0, ..Default::default() };
        assert!(dyson_overlap(&p, &Probe::Point(vec![0.0]), &v, 0.5, 2, &q).is_err());
        let q = SimplexQuadrature { mc_strata: 0, ..Default::default() };
        assert!(dyson_overlap(&p, &Probe::Point(vec![0.0]), &v, 0.5, 6, &q).is_err());
    }

    #[test]
    fn negative_time_is_conjugate() {
        let p = packet(0.0, 1.0);
        let v = PotentialModel::cosine(2.0, 1.0).unwrap();
        let q = SimplexQuadrature { gauss_nodes: 8, ..Default::default() };
        let probe = Probe::Point(vec![0.5]);
        let a = dyson_overlap(&p, &probe, &v, 0.4, 3, &q).unwrap();
        let b = dyson_overlap(&p, &probe, &v, -0.4, 3, &q).unwrap();
        assert!((a.value - b.value.conj()).norm() < 1e-15);
    }

    #[test]
    fn monte_carlo_agrees_with_gauss() {
        let p = packet(0.0, 1.0);
        let v = PotentialModel::cosine(2.0, 1.0).unwrap();
        let probe = Probe::Point(vec![0.0]);
        let gauss = dyson_overlap(&p, &probe, &v, 0.5, 3, &SimplexQuadrature::default()).unwrap();
        let mc = SimplexQuadrature { max_gauss_order: 0, mc_strata: 20_000, ..Default::default() };
        let mc = dyson_overlap(&p, &probe, &v, 0.5, 3, &mc).unwrap();
        assert!(mc.quadrature_error_estimate > 0.0);
        assert!((gauss.value - mc.value).norm() < 5.0 * mc.quadrature_error_estimate + 1e-12);
    }
}
