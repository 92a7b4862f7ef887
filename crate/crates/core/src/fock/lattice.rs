//! One-dimensional lattice discretisation: sites, mode vectors, regions and
//! the operators built from them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use super::operator::{jw_sign, FockBasis, FockOperator, MAX_SITES};
use crate::bounds::InteractionModel;
use crate::error::{domain, Result};
use crate::one_particle::{GaussianPacket, PotentialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Open,
    Periodic,
}

/// `L` sites at `x_j = (j - L/2) h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    sites: usize,
    spacing: f64,
    boundary: Boundary,
    basis: Arc<FockBasis>,
}

impl Lattice {
    pub fn new(sites: usize, spacing: f64, boundary: Boundary) -> Result<Self> {
        if sites == 0 || sites > MAX_SITES {
            return domain(format!("site count {sites} outside 1..={MAX_SITES}"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return domain(format!("spacing must be positive, got {spacing}"));
        }
        Ok(Lattice {
            sites,
            spacing,
            boundary,
            basis: FockBasis::new(sites)?,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as f64 - (self.sites / 2) as f64) * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.sites).map(|j| self.position(j)).collect()
    }
}

/// Lattice function; `discretize(f)_j = f(x_j) sqrt(h)`, so the plain
/// Euclidean inner product approximates the L2 one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    coefficients: DVector<Complex64>,
}

impl ModeVector {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("mode coefficients must be finite");
        }
        Ok(ModeVector {
            coefficients: DVector::from_vec(coefficients),
        })
    }

    /// Unit vector at `site`.
    pub fn site(lattice: &Lattice, site: usize) -> Result<Self> {
        if site >= lattice.sites {
            return domain(format!("site {site} outside the lattice"));
        }
        let mut c = vec![Complex64::new(0.0, 0.0); lattice.sites];
        c[site] = Complex64::new(1.0, 0.0);
        Self::new(c)
    }

    pub fn coefficients(&self) -> &DVector<Complex64> {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `<f, g> = sum_j f_j conj(g_j)` (linear in the first slot).
    pub fn inner(&self, other: &Self) -> Complex64 {
        other.coefficients.dotc(&self.coefficients)
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.norm()
    }

    /// `e^{-it h^T} f`, the mode transported by the one-body dynamics.
    pub fn evolve(&self, h1: &DMatrix<Complex64>, t: f64) -> Result<Self> {
        if h1.nrows() != self.len() || h1.ncols() != self.len() {
            return domain("one-body matrix does not match the mode vector");
        }
        let eig = SymmetricEigen::new(h1.transpose());
        let u = &eig.eigenvectors;
        let phases = DVector::from_iterator(
            self.len(),
            eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -t * e)),
        );
        let coeffs = u * (u.adjoint() * &self.coefficients).component_mul(&phases);
        Ok(ModeVector { coefficients: coeffs })
    }
}

pub fn discretize(f: impl Fn(f64) -> Complex64, lattice: &Lattice) -> Result<ModeVector> {
    let root = lattice.spacing.sqrt();
    ModeVector::new((0..lattice.sites).map(|j| f(lattice.position(j)) * root).collect())
}

/// Smeared packets vanish beyond this many widths from their centre.
pub const PACKET_CUTOFF: f64 = 6.0;

/// Discretised Gaussian packet `phi_x^sigma`, cut to zero beyond `6 sigma`
/// and not renormalised.
pub fn discretize_packet(packet: &GaussianPacket, lattice: &Lattice) -> Result<ModeVector> {
    if packet.dimension() != 1 {
        return domain("the lattice is one-dimensional");
    }
    let (c, s) = (packet.center()[0], packet.width());
    discretize(
        |x| {
            if (x - c).abs() > PACKET_CUTOFF * s {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from(packet.eval(&[x]))
            }
        },
        lattice,
    )
}

/// Site subset `Lambda`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    sites: Vec<usize>,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, lattice: &Lattice) -> Result<Self> {
        sites.sort_unstable();
        sites.dedup();
        if let Some(&s) = sites.iter().find(|&&s| s >= lattice.sites) {
            return domain(format!("region site {s} outside the lattice"));
        }
        Ok(Region { sites })
    }

    pub fn empty() -> Self {
        Region { sites: Vec::new() }
    }

    pub fn all(lattice: &Lattice) -> Self {
        Region {
            sites: (0..lattice.sites).collect(),
        }
    }

    /// Sites `lo..=hi`.
    pub fn interval(lo: usize, hi: usize, lattice: &Lattice) -> Result<Self> {
        Self::new((lo..=hi).collect(), lattice)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.sites.binary_search(s).is_ok())
    }
}

fn check_mode(mode: &ModeVector, lattice: &Lattice) -> Result<()> {
    if mode.len() != lattice.sites {
        return domain(format!(
            "mode vector has {} entries for {} sites",
            mode.len(),
            lattice.sites
        ));
    }
    Ok(())
}

/// `a(f) = sum_j f_j a_j` with Jordan-Wigner strings in site order.
pub fn annihilator(mode: &ModeVector, lattice: &Lattice) -> Result<FockOperator> {
    check_mode(mode, lattice)?;
    let basis = lattice.basis();
    let mut op = FockOperator::zero(basis, -1);
    let blocks: Vec<DMatrix<Complex64>> = (0..=lattice.sites)
        .map(|n| {
            let mut b = op.block(n).clone();
            if n == 0 {
                return b;
            }
            for (col, &s) in basis.states(n).iter().enumerate() {
                for j in 0..lattice.sites {
                    if s & (1 << j) != 0 {
                        let row = basis.index_of(s & !(1 << j));
                        b[(row, col)] += mode.coefficients[j] * jw_sign(s, j);
                    }
                }
            }
            b
        })
        .collect();
    op = FockOperator::from_blocks(basis, -1, blocks);
    Ok(op)
}

/// `a*(f) = a(f)^dagger`.
pub fn creator(mode: &ModeVector, lattice: &Lattice) -> Result<FockOperator> {
    Ok(annihilator(mode, lattice)?.adjoint())
}

/// Three-point Laplacian `(2 delta_jk - delta_{j,k+-1}) / h^2` plus `V(x_j)`.
pub fn one_body_hamiltonian(lattice: &Lattice, potential: &PotentialModel) -> Result<DMatrix<Complex64>> {
    if potential.dimension() != 1 {
        return domain("the lattice is one-dimensional");
    }
    let l = lattice.sites;
    let hop = 1.0 / (lattice.spacing * lattice.spacing);
    let mut h = DMatrix::zeros(l, l);
    for j in 0..l {
        h[(j, j)] = Complex64::from(2.0 * hop + potential.eval(&[lattice.position(j)]));
        if j + 1 < l {
            h[(j, j + 1)] -= hop;
            h[(j + 1, j)] -= hop;
        }
    }
    if lattice.boundary == Boundary::Periodic && l > 2 {
        h[(0, l - 1)] -= hop;
        h[(l - 1, 0)] -= hop;
    } else if lattice.boundary == Boundary::Periodic && l == 2 {
        h[(0, 1)] -= hop;
        h[(1, 0)] -= hop;
    }
    Ok(h)
}

/// `dGamma(h1) = sum_jk (h1)_jk a*_j a_k`.
pub fn second_quantize(h1: &DMatrix<Complex64>, lattice: &Lattice) -> Result<FockOperator> {
    let l = lattice.sites;
    if h1.nrows() != l || h1.ncols() != l {
        return domain("one-body matrix does not match the lattice");
    }
    let defect = (h1 - h1.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = h1.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if defect > 1e-14 * scale {
        return domain(format!("one-body matrix is not self-adjoint (defect {defect:e})"));
    }
    let basis = lattice.basis();
    let blocks = (0..=l)
        .map(|n| {
            let dim = basis.sector_dim(n as isize);
            let mut b = DMatrix::zeros(dim, dim);
            for (col, &s) in basis.states(n).iter().enumerate() {
                for k in 0..l {
                    if s & (1 << k) == 0 {
                        continue;
                    }
                    let sk = jw_sign(s, k);
                    let s1 = s & !(1 << k);
                    for j in 0..l {
                        let hjk = h1[(j, k)];
                        if hjk == Complex64::new(0.0, 0.0) || s1 & (1 << j) != 0 {
                            continue;
                        }
                        let row = basis.index_of(s1 | (1 << j));
                        b[(row, col)] += hjk * sk * jw_sign(s1, j);
                    }
                }
            }
            b
        })
        .collect();
    Ok(FockOperator::from_blocks(basis, 0, blocks))
}

/// Total particle number `N = dGamma(1)`.
pub fn number_operator(lattice: &Lattice) -> FockOperator {
    second_quantize(&DMatrix::identity(lattice.sites, lattice.sites), lattice)
        .expect("identity is self-adjoint")
}

/// `(h^2/2) sum_{i,j in Lambda} W(x_i - x_j) a*(phi_i) a*(phi_j) a(phi_j) a(phi_i)`
/// with `phi_i` the truncated discretised packet at `x_i`.
pub fn smeared_interaction(
    lattice: &Lattice,
    region: &Region,
    sigma: f64,
    interaction: &InteractionModel,
) -> Result<FockOperator> {
    let l = lattice.sites;
    if !region.is_subset_of(&Region::all(lattice)) {
        return domain("region is not a subset of the lattice");
    }
    if interaction.dimension() != 1 {
        return domain("the lattice is one-dimensional");
    }
    let basis = lattice.basis();
    if region.is_empty() || interaction.is_zero() {
        return Ok(FockOperator::zero(basis, 0));
    }
    let h = lattice.spacing;
    let phis: Vec<Vec<f64>> = region
        .sites()
        .iter()
        .map(|&i| {
            let p = GaussianPacket::new(vec![lattice.position(i)], sigma)?;
            Ok(discretize_packet(&p, lattice)?
                .coefficients
                .iter()
                .map(|z| z.re)
                .collect())
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = region.sites().iter().map(|&i| lattice.position(i)).collect();
    // V_pqrs = (h^2/2) sum_ij W(x_i - x_j) phi_i(p) phi_j(q) phi_j(r) phi_i(s).
    // Using M_ij(p,s) = phi_i(p) phi_i(s):  V_pqrs = (h^2/2) sum_ij W_ij M_i(p,s) M_j(q,r).
    let idx = |p: usize, q: usize, r: usize, s: usize| ((p * l + q) * l + r) * l + s;
    let mut v = vec![0.0; l * l * l * l];
    for (i, phi_i) in phis.iter().enumerate() {
        for (j, phi_j) in phis.iter().enumerate() {
            let w = 0.5 * h * h * interaction.eval(&[xs[i] - xs[j]]);
            if w == 0.0 {
                continue;
            }
            for p in 0..l {
                for s in 0..l {
                    let ms = w * phi_i[p] * phi_i[s];
                    if ms == 0.0 {
                        continue;
                    }
                    for q in 0..l {
                        for r in 0..l {
                            v[idx(p, q, r, s)] += ms * phi_j[q] * phi_j[r];
                        }
                    }
                }
            }
        }
    }
    let blocks = (0..=l)
        .map(|n| {
            let dim = basis.sector_dim(n as isize);
            let mut b = DMatrix::<Complex64>::zeros(dim, dim);
            if n < 2 {
                return b;
            }
            for (col, &st) in basis.states(n).iter().enumerate() {
                // a*_p a*_q a_r a_s |st>: remove s then r, add q then p.
                for s in 0..l {
                    if st & (1 << s) == 0 {
                        continue;
                    }
                    let sign_s = jw_sign(st, s);
                    let st1 = st & !(1 << s);
                    for r in 0..l {
                        if st1 & (1 << r) == 0 {
                            continue;
                        }
                        let sign_r = sign_s * jw_sign(st1, r);
                        let st2 = st1 & !(1 << r);
                        for q in 0..l {
                            if st2 & (1 << q) != 0 {
                                continue;
                            }
                            let sign_q = sign_r * jw_sign(st2, q);
                            let st3 = st2 | (1 << q);
                            for p in 0..l {
                                if st3 & (1 << p) != 0 {
                                    continue;
                                }
                                let amp = v[idx(p, q, r, s)];
                                if amp == 0.0 {
                                    continue;
                                }
                                let row = basis.index_of(st3 | (1 << p));
                                b[(row, col)] += amp * sign_q * jw_sign(st3, p);
                            }
                        }
                    }
                }
            }
            b
        })
        .collect();
    Ok(FockOperator::from_blocks(basis, 0, blocks))
}

/// Discrete analogue of `||W_Lambda|| <= (1/2) C_sigma^2 ||W||_inf |Lambda|^2`:
/// `(1/2) max_i ||phi_i||^4 ||W||_inf (h |Lambda|)^2`.
pub fn smeared_interaction_norm_bound(
    lattice: &Lattice,
    region: &Region,
    sigma: f64,
    interaction: &InteractionModel,
) -> Result<f64> {
    let mut c = 0.0f64;
    for &i in region.sites() {
        let p = GaussianPacket::new(vec![lattice.position(i)], sigma)?;
        c = c.max(discretize_packet(&p, lattice)?.norm().powi(2));
    }
    let vol = lattice.spacing * region.len() as f64;
    Ok(0.5 * c * c * interaction.sup_norm() * vol * vol)
}
