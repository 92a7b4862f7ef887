//! Many-body observables: the decay function `F_t`, thermodynamic-limit
//! gaps, and the two-particle sigma -> 0 experiment.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::lattice::{
    annihilator, creator, one_body_hamiltonian, second_quantize, smeared_interaction, Lattice,
    ModeVector, Region,
};
use super::operator::{Dynamics, FockOperator};
use crate::bounds::{Envelope, InteractionModel};
use crate::error::{config, domain, Result};
use crate::one_particle::{GaussianPacket, PotentialModel};

/// Interacting Hamiltonian `H_Lambda = dGamma(h1) + W_Lambda` together with
/// its one-body part and a reusable eigendecomposition.
#[derive(Debug, Clone)]
pub struct ManyBodySystem {
    lattice: Lattice,
    h1: DMatrix<Complex64>,
    hamiltonian: FockOperator,
    dynamics: Dynamics,
}

impl ManyBodySystem {
    pub fn new(
        lattice: &Lattice,
        region: &Region,
        sigma: f64,
        interaction: &InteractionModel,
        potential: &PotentialModel,
    ) -> Result<Self> {
        let h1 = one_body_hamiltonian(lattice, potential)?;
        let free = second_quantize(&h1, lattice)?;
        let hamiltonian = free.add(&smeared_interaction(lattice, region, sigma, interaction)?)?;
        let dynamics = Dynamics::new(&hamiltonian)?;
        Ok(ManyBodySystem {
            lattice: lattice.clone(),
            h1,
            hamiltonian,
            dynamics,
        })
    }

    pub fn hamiltonian(&self) -> &FockOperator {
        &self.hamiltonian
    }

    pub fn one_body(&self) -> &DMatrix<Complex64> {
        &self.h1
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// `tau_t(a(f))`.
    pub fn evolved_annihilator(&self, f: &ModeVector, t: f64) -> Result<FockOperator> {
        self.dynamics.evolve(&annihilator(f, &self.lattice)?, t)
    }

    /// `F_t(f, g) = ||{tau_t(a(f)), a*(g)} - <f_t, g>|| + ||{tau_t(a(f)), a(g)}||`,
    /// with `f_t` from the one-body dynamics.
    pub fn f_function(&self, f: &ModeVector, g: &ModeVector, t: f64) -> Result<f64> {
        let lattice = &self.lattice;
        let tau = self.evolved_annihilator(f, t)?;
        let f_t = f.evolve(&self.h1, t)?;
        let free = FockOperator::identity(lattice.basis()).scale(f_t.inner(g));
        let first = tau.anticommutator(&creator(g, lattice)?)?.sub(&free)?.norm();
        let second = tau.anticommutator(&annihilator(g, lattice)?)?.norm();
        Ok(first + second)
    }
}

/// `F_t^Lambda(f, g)` built from scratch; see [`ManyBodySystem::f_function`].
#[allow(clippy::too_many_arguments)]
pub fn f_function(
    f: &ModeVector,
    g: &ModeVector,
    t: f64,
    lattice: &Lattice,
    region: &Region,
    sigma: f64,
    interaction: &InteractionModel,
    potential: &PotentialModel,
) -> Result<f64> {
    ManyBodySystem::new(lattice, region, sigma, interaction, potential)?.f_function(f, g, t)
}

/// `||tau_t^{outer}(a(f)) - tau_t^{inner}(a(f))||` for `inner ⊆ outer`.
#[allow(clippy::too_many_arguments)]
pub fn thermo_limit_gap(
    f: &ModeVector,
    t: f64,
    inner: &Region,
    outer: &Region,
    lattice: &Lattice,
    sigma: f64,
    interaction: &InteractionModel,
    potential: &PotentialModel,
) -> Result<f64> {
    if !inner.is_subset_of(outer) {
        return domain("regions are not nested");
    }
    if inner == outer {
        return Ok(0.0);
    }
    let a = ManyBodySystem::new(lattice, outer, sigma, interaction, potential)?.evolved_annihilator(f, t)?;
    let b = ManyBodySystem::new(lattice, inner, sigma, interaction, potential)?.evolved_annihilator(f, t)?;
    Ok(a.sub(&b)?.norm())
}

/// `|f|` of a lattice mode as a Riemann-sum envelope (`values = |c_j|/sqrt(h)`,
/// weight `h`), for comparison with the continuum bounds.
pub fn mode_envelope(mode: &ModeVector, lattice: &Lattice) -> Envelope {
    let h = lattice.spacing();
    Envelope::Sampled {
        positions: lattice.positions(),
        values: mode.coefficients().iter().map(|z| z.norm() / h.sqrt()).collect(),
        weight: h,
    }
}

/// Two-variable function on an `n x n` periodic grid over `[-L/2, L/2)^2`,
/// row-major in `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleGrid {
    samples: Vec<Complex64>,
    points: usize,
    box_length: f64,
}

impl TwoParticleGrid {
    pub fn new(samples: Vec<Complex64>, points: usize, box_length: f64) -> Result<Self> {
        if points < 2 || samples.len() != points * points {
            return domain("samples must form a square grid with at least two points per axis");
        }
        if !(box_length > 0.0) {
            return domain("box length must be positive");
        }
        Ok(TwoParticleGrid {
            samples,
            points,
            box_length,
        })
    }

    pub fn from_fn(f: impl Fn(f64, f64) -> Complex64, points: usize, box_length: f64) -> Result<Self> {
        let h = box_length / points as f64;
        let pos = |j: usize| (j as f64 - (points / 2) as f64) * h;
        let samples = (0..points * points)
            .map(|k| f(pos(k / points), pos(k % points)))
            .collect();
        Self::new(samples, points, box_length)
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as f64 - (self.points / 2) as f64) * self.spacing()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn norm(&self) -> f64 {
        (self.spacing().powi(2) * self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Circular convolution with `phi_0^sigma(x) phi_0^sigma(y)`, separably.
    fn smear(&self, sigma: f64) -> Self {
        let n = self.points;
        let h = self.spacing();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let packet = GaussianPacket::centered(1, sigma).expect("positive width");
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                Complex64::from(packet.eval(&[m * h]) * h)
            })
            .collect();
        fwd.process(&mut kernel);
        let scale = 1.0 / n as f64;
        let mut data = self.samples.clone();
        let convolve_rows = |data: &mut Vec<Complex64>| {
            for row in data.chunks_mut(n) {
                fwd.process(row);
                for (z, k) in row.iter_mut().zip(&kernel) {
                    *z *= k * scale;
                }
                inv.process(row);
            }
        };
        convolve_rows(&mut data);
        let mut t = transpose(&data, n);
        convolve_rows(&mut t);
        TwoParticleGrid {
            samples: transpose(&t, n),
            points: n,
            box_length: self.box_length,
        }
    }

    /// Multiplication by `W(x - y) 1_Lambda(x) 1_Lambda(y)`.
    fn apply_interaction(&self, lo: f64, hi: f64, interaction: &InteractionModel) -> Self {
        let n = self.points;
        let inside = |x: f64| x >= lo && x <= hi;
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let (x, y) = (self.position(k / n), self.position(k % n));
                if inside(x) && inside(y) {
                    z * interaction.eval(&[x - y])
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        TwoParticleGrid {
            samples,
            points: n,
            box_length: self.box_length,
        }
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = data[i * n + j];
        }
    }
    out
}

/// `|| Phi^sigma * (W_Lambda (Phi^sigma * psi)) - W_Lambda psi ||` on the grid,
/// with `Lambda = [lo, hi]`.
pub fn sigma_limit_error(
    psi: &TwoParticleGrid,
    region: (f64, f64),
    interaction: &InteractionModel,
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if psi.spacing() > sigma / 4.0 * (1.0 + 1e-12) {
        return config(format!(
            "grid spacing {} does not resolve sigma = {sigma} (need <= sigma/4)",
            psi.spacing()
        ));
    }
    if interaction.dimension() != 1 {
        return domain("the two-particle experiment is one-dimensional");
    }
    let (lo, hi) = region;
    let smeared = psi
        .smear(sigma)
        .apply_interaction(lo, hi, interaction)
        .smear(sigma);
    let direct = psi.apply_interaction(lo, hi, interaction);
    let diff: f64 = smeared
        .samples
        .iter()
        .zip(&direct.samples)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok((diff * psi.spacing().powi(2)).sqrt())
}
