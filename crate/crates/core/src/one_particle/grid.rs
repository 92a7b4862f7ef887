//! Split-step Fourier oracle for `e^{-itH_1}` with `H_1 = -Laplacian + V`
//! on a periodic one-dimensional box.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::dyson::{free_amplitude, Probe};
use super::packet::{GaussianPacket, PotentialModel};
use crate::error::{config, domain, Result};

/// Samples on `x_j = (j - n/2) h`, `h = box_length / n`, periodic.
///
/// `feature_width` is the smallest length scale the samples must resolve
/// (the packet width for Gaussian data).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    samples: Vec<Complex64>,
    box_length: f64,
    feature_width: f64,
}

impl GridFunction {
    pub fn from_samples(samples: Vec<Complex64>, box_length: f64, feature_width: f64) -> Result<Self> {
        if samples.len() < 2 {
            return domain("grid needs at least two points");
        }
        if !(box_length > 0.0) || !(feature_width > 0.0) {
            return domain("box length and feature width must be positive");
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("grid samples must be finite");
        }
        Ok(GridFunction {
            samples,
            box_length,
            feature_width,
        })
    }

    /// Discretised packet (d = 1).
    pub fn from_packet(packet: &GaussianPacket, box_length: f64, points: usize) -> Result<Self> {
        if packet.dimension() != 1 {
            return domain("the grid oracle is one-dimensional");
        }
        let h = box_length / points as f64;
        let samples = (0..points)
            .map(|j| Complex64::from(packet.eval(&[(j as f64 - (points / 2) as f64) * h])))
            .collect();
        Self::from_samples(samples, box_length, packet.width())
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn points(&self) -> usize {
        self.samples.len()
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn feature_width(&self) -> f64 {
        self.feature_width
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points() as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as f64 - (self.points() / 2) as f64) * self.spacing()
    }

    /// Index of the grid point at `x`, if `x` is one (to 1e-9 h).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = x / self.spacing() + (self.points() / 2) as f64;
        let j = r.round();
        if (r - j).abs() > 1e-9 || j < 0.0 || j >= self.points() as f64 {
            return None;
        }
        Some(j as usize)
    }

    pub fn value_at(&self, x: f64) -> Option<Complex64> {
        self.index_of(x).map(|j| self.samples[j])
    }

    /// Discrete L2 norm `sqrt(h sum |f_j|^2)`.
    pub fn norm(&self) -> f64 {
        (self.spacing() * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    fn check_resolution(&self, m_max: f64) -> Result<()> {
        let h = self.spacing();
        let limit = (self.feature_width / 4.0).min(PI / (4.0 * m_max.max(1.0)));
        if h > limit * (1.0 + 1e-12) {
            return config(format!(
                "grid spacing {h} exceeds the resolution limit {limit} \
                 (width {}, m_max {m_max})",
                self.feature_width
            ));
        }
        Ok(())
    }
}

struct SplitStep {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kinetic: Vec<Complex64>,
    potential_half: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SplitStep {
    fn new(grid: &GridFunction, potential: &PotentialModel, dt: f64) -> Self {
        let n = grid.points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let dk = 2.0 * PI / grid.box_length;
        let kinetic = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                let k = m * dk;
                // Fold the 1/n normalisation of the inverse transform in here.
                Complex64::from_polar(1.0 / n as f64, -k * k * dt)
            })
            .collect();
        let potential_half = (0..n)
            .map(|j| Complex64::from_polar(1.0, -0.5 * dt * potential.eval(&[grid.position(j)])))
            .collect();
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        SplitStep {
            forward,
            inverse,
            kinetic,
            potential_half,
            scratch,
        }
    }

    fn run(&mut self, psi: &mut [Complex64], steps: usize) {
        for _ in 0..steps {
            for (z, p) in psi.iter_mut().zip(&self.potential_half) {
                *z *= p;
            }
            self.forward.process_with_scratch(psi, &mut self.scratch);
            for (z, k) in psi.iter_mut().zip(&self.kinetic) {
                *z *= k;
            }
            self.inverse.process_with_scratch(psi, &mut self.scratch);
            for (z, p) in psi.iter_mut().zip(&self.potential_half) {
                *z *= p;
            }
        }
    }
}

/// Strang splitting: half potential phase, exact kinetic step in momentum
/// space, half potential phase; `steps` equal steps of size `t / steps`.
pub fn grid_propagate(
    initial: &GridFunction,
    potential: &PotentialModel,
    t: f64,
    steps: usize,
) -> Result<GridFunction> {
    if potential.dimension() != 1 {
        return domain("the grid oracle is one-dimensional");
    }
    if !t.is_finite() {
        return domain("time must be finite");
    }
    initial.check_resolution(potential.measure.m_max())?;
    let mut out = initial.clone();
    if t == 0.0 {
        return Ok(out);
    }
    if steps == 0 {
        return config("at least one time step is required");
    }
    let mut stepper = SplitStep::new(initial, potential, t / steps as f64);
    stepper.run(&mut out.samples, steps);
    Ok(out)
}

/// Riemann-sum overlap `<f, phi> = h sum f_j conj(phi_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOverlap {
    pub value: Complex64,
    /// Set when the packet centre is within 6 widths of the box edge.
    pub near_boundary: bool,
}

pub fn grid_overlap(state: &GridFunction, packet: &GaussianPacket) -> Result<GridOverlap> {
    if packet.dimension() != 1 {
        return domain("the grid oracle is one-dimensional");
    }
    let h = state.spacing();
    let value = state
        .samples
        .iter()
        .enumerate()
        .map(|(j, z)| z * packet.eval(&[state.position(j)]))
        .sum::<Complex64>()
        * h;
    let half = 0.5 * state.box_length;
    let c = packet.center()[0];
    let near_boundary = (half - c.abs()) < 6.0 * packet.width() || c < -half || c >= half;
    Ok(GridOverlap {
        value,
        near_boundary,
    })
}

/// Smallest box keeping wrap-around contamination negligible for a
/// packet of width `sigma` read out at `separation` after time `t`.
pub fn oracle_box_length(separation: f64, sigma: f64, t: f64, m_max: f64) -> f64 {
    separation.abs() + 12.0 * sigma + 4.0 * t.abs() * (2.0 * m_max + 4.0 / sigma)
}

/// Settings for [`oracle_point_values`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Upper bound on the grid spacing (further capped by the resolution rule).
    pub max_spacing: f64,
    /// Upper bound on the time step of the finer of the two runs.
    pub max_time_step: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            max_spacing: 0.125,
            max_time_step: 5e-4,
        }
    }
}

/// Pointwise oracle value with its error budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub x: f64,
    pub value: Complex64,
    /// Free evolution on the same grid, for differences from `e^{-itH_0}`.
    pub free_value: Complex64,
    /// Step-doubling difference + free-discretisation error + roundoff floor.
    pub error_estimate: f64,
}

/// Propagate `source` on a grid sized by [`oracle_box_length`] and read off
/// `(e^{-itH_1} source)(x)` at each target (targets are snapped to the grid).
pub fn oracle_point_values(
    source: &GaussianPacket,
    potential: &PotentialModel,
    t: f64,
    targets: &[f64],
    settings: &OracleSettings,
) -> Result<Vec<OracleValue>> {
    if source.dimension() != 1 {
        return domain("the grid oracle is one-dimensional");
    }
    let y = source.center()[0];
    let sigma = source.width();
    let m_max = potential.measure.m_max();
    let reach = targets.iter().map(|x| (x - y).abs()).fold(0.0, f64::max) + y.abs();
    let needed = oracle_box_length(2.0 * reach, sigma, t, m_max);
    let h_limit = settings
        .max_spacing
        .min(sigma / 4.0)
        .min(PI / (4.0 * m_max.max(1.0)));
    // Power-of-two spacing and point count keep targets on the grid.
    let h = 2f64.powi(h_limit.log2().floor() as i32);
    let points = ((needed / h).ceil() as usize).next_power_of_two().max(16);
    let box_length = points as f64 * h;
    let initial = GridFunction::from_packet(source, box_length, points)?;

    let steps = ((t.abs() / settings.max_time_step).ceil() as usize).max(1);
    let coarse = grid_propagate(&initial, potential, t, steps)?;
    let fine = grid_propagate(&initial, potential, t, 2 * steps)?;
    let free = grid_propagate(&initial, &PotentialModel::free(1), t, 1)?;

    targets
        .iter()
        .map(|&x| {
            let j = initial.index_of(x).ok_or_else(|| {
                crate::Error::Domain(format!("target {x} is not a grid point (spacing {h})"))
            })?;
            let exact_free = free_amplitude(source, &Probe::Point(vec![x]), t)?;
            let discretisation = (free.samples[j] - exact_free).norm();
            Ok(OracleValue {
                x,
                value: fine.samples[j],
                free_value: exact_free,
                error_estimate: (fine.samples[j] - coarse.samples[j]).norm() + discretisation + 1e-12,
            })
        })
        .collect()
}
