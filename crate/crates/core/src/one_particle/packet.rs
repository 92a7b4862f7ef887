use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};

/// L1-normalised Gaussian `(2 pi s^2)^{-d/2} exp(-|y - x|^2 / (2 s^2))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianPacket {
    center: Vec<f64>,
    width: f64,
}

impl GaussianPacket {
    pub fn new(center: Vec<f64>, width: f64) -> Result<Self> {
        if center.is_empty() {
            return domain("packet center must have at least one component");
        }
        if !(width > 0.0) || !width.is_finite() {
            return domain(format!("packet width must be positive, got {width}"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return domain("packet center must be finite");
        }
        Ok(GaussianPacket { center, width })
    }

    /// Packet of width `width` centred at the origin of `R^dimension`.
    pub fn centered(dimension: usize, width: f64) -> Result<Self> {
        Self::new(vec![0.0; dimension], width)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn translated(&self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.dimension() {
            return domain("translation changes the dimension");
        }
        Self::new(center, self.width)
    }

    /// Value at `point`; panics on dimension mismatch, see [`gaussian_eval`].
    pub fn eval(&self, point: &[f64]) -> f64 {
        let s2 = self.width * self.width;
        let r2: f64 = point
            .iter()
            .zip(&self.center)
            .map(|(p, c)| (p - c) * (p - c))
            .sum();
        (2.0 * PI * s2).powf(-0.5 * self.dimension() as f64) * (-r2 / (2.0 * s2)).exp()
    }

    /// `||phi||_2^2 = (4 pi s^2)^{-d/2}`.
    pub fn l2_norm_sq(&self) -> f64 {
        c_sigma(self.width, self.dimension())
    }
}

/// `(4 pi sigma^2)^{-d/2}`, the squared L2 norm of an L1-normalised Gaussian.
pub fn c_sigma(width: f64, dimension: usize) -> f64 {
    (4.0 * PI * width * width).powf(-0.5 * dimension as f64)
}

pub fn gaussian_eval(packet: &GaussianPacket, point: &[f64]) -> Result<f64> {
    if point.len() != packet.dimension() {
        return domain(format!(
            "point has {} components, packet dimension is {}",
            point.len(),
            packet.dimension()
        ));
    }
    Ok(packet.eval(point))
}

/// A point mass `weight * delta_momentum` of the spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub momentum: Vec<f64>,
    pub weight: f64,
}

/// Even, atomic, signed measure `mu` with `V(x) = int e^{-ik.x} dmu(k)`.
///
/// Atoms are kept in `k -> -k` symmetric form, so the potential is real.
/// `c_mu` and `m_max` may be set looser than the sharp values
/// `sum |w|` and `max |k|`, never tighter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralMeasure {
    dimension: usize,
    atoms: Vec<Atom>,
    c_mu: f64,
    m_max: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SpectralMeasure {
    /// The zero measure (`V = 0`).
    pub fn free(dimension: usize) -> Self {
        SpectralMeasure {
            dimension,
            atoms: Vec::new(),
            c_mu: 0.0,
            m_max: 0.0,
        }
    }

    /// Measure of `V(x) = sum_n b_n cos(a_n . x)`: each `(a_n, b_n)` becomes
    /// the pair of atoms `+-a_n` with weight `b_n / 2` (one atom of weight
    /// `b_n` when `a_n = 0`).
    pub fn cosine_series(dimension: usize, terms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut atoms = Vec::with_capacity(2 * terms.len());
        for (k, b) in terms {
            if k.len() != dimension {
                return domain(format!(
                    "wave vector {k:?} does not have dimension {dimension}"
                ));
            }
            if !b.is_finite() || k.iter().any(|v| !v.is_finite()) {
                return domain("cosine terms must be finite");
            }
            if *b == 0.0 {
                continue;
            }
            if k.iter().all(|&v| v == 0.0) {
                atoms.push(Atom {
                    momentum: k.clone(),
                    weight: *b,
                });
            } else {
                atoms.push(Atom {
                    momentum: k.clone(),
                    weight: 0.5 * b,
                });
                atoms.push(Atom {
                    momentum: k.iter().map(|v| -v).collect(),
                    weight: 0.5 * b,
                });
            }
        }
        Self::from_atoms(dimension, atoms)
    }

    /// Build from explicit atoms; fails unless the list is exactly symmetric
    /// under `k -> -k`.
    pub fn from_atoms(dimension: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dimension == 0 {
            return domain("dimension must be at least 1");
        }
        for a in &atoms {
            if a.momentum.len() != dimension {
                return domain(format!("atom {:?} has the wrong dimension", a.momentum));
            }
        }
        for a in &atoms {
            let mirrored: Vec<f64> = a.momentum.iter().map(|v| -v).collect();
            let partner_weight: f64 = atoms
                .iter()
                .filter(|b| b.momentum == mirrored)
                .map(|b| b.weight)
                .sum();
            let own_weight: f64 = atoms
                .iter()
                .filter(|b| b.momentum == a.momentum)
                .map(|b| b.weight)
                .sum();
            if partner_weight != own_weight {
                return domain(format!(
                    "measure is not even: weight {own_weight} at {:?} but {partner_weight} at {mirrored:?}",
                    a.momentum
                ));
            }
        }
        let c_mu = atoms.iter().map(|a| a.weight.abs()).sum();
        let m_max = atoms
            .iter()
            .map(|a| norm(&a.momentum))
            .fold(0.0, f64::max);
        Ok(SpectralMeasure {
            dimension,
            atoms,
            c_mu,
            m_max,
        })
    }

    /// Replace `(c_mu, m_max)` by looser values.
    pub fn with_parameters(mut self, c_mu: f64, m_max: f64) -> Result<Self> {
        if c_mu < self.c_mu || m_max < self.m_max {
            return domain(format!(
                "parameters ({c_mu}, {m_max}) are tighter than the measure ({}, {})",
                self.c_mu, self.m_max
            ));
        }
        self.c_mu = c_mu;
        self.m_max = m_max;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn c_mu(&self) -> f64 {
        self.c_mu
    }

    pub fn m_max(&self) -> f64 {
        self.m_max
    }

    pub fn is_free(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// The potential generated by a spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialModel {
    pub measure: SpectralMeasure,
}

impl PotentialModel {
    pub fn new(measure: SpectralMeasure) -> Self {
        PotentialModel { measure }
    }

    pub fn free(dimension: usize) -> Self {
        Self::new(SpectralMeasure::free(dimension))
    }

    /// `V(x) = b cos(k x)` in one dimension.
    pub fn cosine(amplitude: f64, wave_number: f64) -> Result<Self> {
        Ok(Self::new(SpectralMeasure::cosine_series(
            1,
            &[(vec![wave_number], amplitude)],
        )?))
    }

    pub fn dimension(&self) -> usize {
        self.measure.dimension
    }

    /// `sum_atoms w cos(k . x)`; the imaginary parts cancel pairwise.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.measure
            .atoms
            .iter()
            .map(|a| {
                let phase: f64 = a.momentum.iter().zip(x).map(|(k, x)| k * x).sum();
                a.weight * phase.cos()
            })
            .sum()
    }
}

pub fn potential_eval(model: &PotentialModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dimension() {
        return domain(format!(
            "point has {} components, potential dimension is {}",
            x.len(),
            model.dimension()
        ));
    }
    Ok(model.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let p = GaussianPacket::centered(1, 1.0).unwrap();
        assert!((gaussian_eval(&p, &[0.0]).unwrap() - 0.398_942_3).abs() < 1e-7);
        assert!((gaussian_eval(&p, &[1.0]).unwrap() - 0.241_970_7).abs() < 1e-7);
        let p = GaussianPacket::new(vec![0.7, -3.0], 2.0).unwrap();
        assert!((gaussian_eval(&p, &[0.7, -3.0]).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert!(gaussian_eval(&p, &[0.0]).is_err());
    }

    #[test]
    fn packet_rejects_bad_width() {
        assert!(GaussianPacket::centered(1, 0.0).is_err());
        assert!(GaussianPacket::centered(1, -1.0).is_err());
        assert!(GaussianPacket::new(vec![], 1.0).is_err());
    }

    #[test]
    fn potential_values() {
        let v = PotentialModel::cosine(2.0, 1.0).unwrap();
        assert!((potential_eval(&v, &[0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((potential_eval(&v, &[PI]).unwrap() + 2.0).abs() < 1e-15);
        let v = PotentialModel::new(
            SpectralMeasure::cosine_series(1, &[(vec![1.0], 1.0), (vec![2.0], 0.5)]).unwrap(),
        );
        assert!((potential_eval(&v, &[0.0]).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(v.measure.c_mu(), 1.5);
        assert_eq!(v.measure.m_max(), 2.0);
    }

    #[test]
    fn asymmetric_measure_rejected() {
        let atoms = vec![Atom {
            momentum: vec![1.0],
            weight: 1.0,
        }];
        assert!(SpectralMeasure::from_atoms(1, atoms).is_err());
    }

    #[test]
    fn looser_parameters_only() {
        let m = SpectralMeasure::cosine_series(1, &[(vec![1.0], 2.0)]).unwrap();
        assert!(m.clone().with_parameters(1.0, 1.0).is_err());
        let m = m.with_parameters(3.0, 1.5).unwrap();
        assert_eq!((m.c_mu(), m.m_max()), (3.0, 1.5));
    }
}
