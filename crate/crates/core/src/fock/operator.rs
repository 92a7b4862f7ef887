//! Operators on the antisymmetric Fock space over `L` lattice modes.
//!
//! Every operator used here changes the particle number by a fixed amount
//! (its `shift`), so it is stored as one dense block per source sector:
//! block `n` maps the `n`-particle sector to the `n + shift` sector.
//! Basis states are occupation bitstrings (bit `j` = site `j`), ordered by
//! value within each sector.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};

/// Largest supported mode count (dense-matrix feasibility guard).
pub const MAX_SITES: usize = 14;

/// Particle-number sectors of the `2^L`-dimensional Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    sites: usize,
    states: Vec<Vec<u32>>,
    index: Vec<u32>,
}

impl FockBasis {
    pub fn new(sites: usize) -> Result<Arc<Self>> {
        if sites == 0 || sites > MAX_SITES {
            return domain(format!("site count {sites} outside 1..={MAX_SITES}"));
        }
        let mut states = vec![Vec::new(); sites + 1];
        let mut index = vec![0u32; 1 << sites];
        for s in 0u32..(1 << sites) {
            let n = s.count_ones() as usize;
            index[s as usize] = states[n].len() as u32;
            states[n].push(s);
        }
        Ok(Arc::new(FockBasis { sites, states, index }))
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Dimension of the `n`-particle sector (0 outside `0..=L`).
    pub fn sector_dim(&self, n: isize) -> usize {
        if n < 0 || n as usize > self.sites {
            0
        } else {
            self.states[n as usize].len()
        }
    }

    pub fn states(&self, n: usize) -> &[u32] {
        &self.states[n]
    }

    pub fn index_of(&self, state: u32) -> usize {
        self.index[state as usize] as usize
    }

    /// Position of `state` in the full `2^L` ordering: sectors by particle
    /// number, then by value.
    fn dense_offset(&self, n: usize) -> usize {
        self.states[..n].iter().map(Vec::len).sum()
    }
}

/// Jordan-Wigner sign `(-1)^{#occupied sites below j}`.
pub(crate) fn jw_sign(state: u32, j: usize) -> f64 {
    if (state & ((1u32 << j) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Particle-number-graded dense operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    basis: Arc<FockBasis>,
    shift: isize,
    blocks: Vec<DMatrix<Complex64>>,
}

impl FockOperator {
    pub fn zero(basis: &Arc<FockBasis>, shift: isize) -> Self {
        let blocks = (0..=basis.sites)
            .map(|n| DMatrix::zeros(basis.sector_dim(n as isize + shift), basis.sector_dim(n as isize)))
            .collect();
        FockOperator {
            basis: basis.clone(),
            shift,
            blocks,
        }
    }

    pub fn identity(basis: &Arc<FockBasis>) -> Self {
        let blocks = (0..=basis.sites)
            .map(|n| DMatrix::identity(basis.sector_dim(n as isize), basis.sector_dim(n as isize)))
            .collect();
        FockOperator {
            basis: basis.clone(),
            shift: 0,
            blocks,
        }
    }

    pub(crate) fn from_blocks(basis: &Arc<FockBasis>, shift: isize, blocks: Vec<DMatrix<Complex64>>) -> Self {
        debug_assert_eq!(blocks.len(), basis.sites + 1);
        FockOperator {
            basis: basis.clone(),
            shift,
            blocks,
        }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    /// Change of particle number.
    pub fn shift(&self) -> isize {
        self.shift
    }

    pub fn block(&self, n: usize) -> &DMatrix<Complex64> {
        &self.blocks[n]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.basis.sites != other.basis.sites {
            return domain("operators act on different Fock spaces");
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        self.check_compatible(other)?;
        if self.shift != other.shift {
            return domain(format!(
                "cannot add operators with particle-number shifts {} and {}",
                self.shift, other.shift
            ));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b * Complex64::from(sign))
            .collect();
        Ok(Self::from_blocks(&self.basis, self.shift, blocks))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let blocks = self.blocks.iter().map(|b| b * factor).collect();
        Self::from_blocks(&self.basis, self.shift, blocks)
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let basis = &self.basis;
        let shift = self.shift + other.shift;
        let blocks = (0..=basis.sites)
            .map(|n| {
                let mid = n as isize + other.shift;
                let rows = basis.sector_dim(n as isize + shift);
                let cols = basis.sector_dim(n as isize);
                if mid < 0 || mid as usize > basis.sites || rows == 0 || cols == 0 {
                    DMatrix::zeros(rows, cols)
                } else {
                    &self.blocks[mid as usize] * &other.blocks[n]
                }
            })
            .collect();
        Ok(Self::from_blocks(basis, shift, blocks))
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.add(&other.mul(self)?)
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn adjoint(&self) -> Self {
        let basis = &self.basis;
        let shift = -self.shift;
        let blocks = (0..=basis.sites)
            .map(|n| {
                let src = n as isize - self.shift;
                if src < 0 || src as usize > basis.sites {
                    DMatrix::zeros(basis.sector_dim(n as isize + shift), basis.sector_dim(n as isize))
                } else {
                    self.blocks[src as usize].adjoint()
                }
            })
            .collect();
        Self::from_blocks(basis, shift, blocks)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `max |A - A^dagger|` (shift-0 operators only; otherwise infinity).
    pub fn hermiticity_defect(&self) -> f64 {
        if self.shift != 0 {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .map(|b| (b - b.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Operator norm. Blocks map distinct sectors to distinct sectors, so
    /// the norm is the largest block norm.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(block_norm).fold(0.0, f64::max)
    }

    /// Dense `2^L x 2^L` matrix in the sector-ordered basis.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let basis = &self.basis;
        let dim = 1usize << basis.sites;
        let mut out = DMatrix::zeros(dim, dim);
        for (n, b) in self.blocks.iter().enumerate() {
            if b.nrows() == 0 || b.ncols() == 0 {
                continue;
            }
            let row0 = basis.dense_offset((n as isize + self.shift) as usize);
            let col0 = basis.dense_offset(n);
            out.view_mut((row0, col0), (b.nrows(), b.ncols())).copy_from(b);
        }
        out
    }
}

/// Blocks up to this size use a dense Gram eigen-solve; larger ones use
/// power iteration on `A^dagger A`.
pub const DENSE_NORM_LIMIT: usize = 400;

/// Relative convergence tolerance of the power iteration.
pub const POWER_ITERATION_TOLERANCE: f64 = 1e-10;

/// Spectral norm of a dense block.
pub fn block_norm(b: &DMatrix<Complex64>) -> f64 {
    if b.nrows() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    let gram = if b.nrows() < b.ncols() {
        b * b.adjoint()
    } else {
        b.adjoint() * b
    };
    if gram.nrows() <= DENSE_NORM_LIMIT {
        return gram_top_eigenvalue(gram).max(0.0).sqrt();
    }
    match power_iteration(&gram, POWER_ITERATION_TOLERANCE, 4000) {
        Some(l) => l.max(0.0).sqrt(),
        None => gram_top_eigenvalue(gram).max(0.0).sqrt(),
    }
}

fn gram_top_eigenvalue(gram: DMatrix<Complex64>) -> f64 {
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue of a positive semidefinite matrix, from two
/// deterministic starting vectors; `None` when they disagree or stall.
fn power_iteration(gram: &DMatrix<Complex64>, tol: f64, max_iter: usize) -> Option<f64> {
    let n = gram.nrows();
    let starts = [
        DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64, 0.5 * (i % 3) as f64)),
        DVector::from_fn(n, |i, _| Complex64::new(((i * 37 + 11) % 101) as f64 - 50.0, 1.0)),
    ];
    let mut results = Vec::new();
    for start in starts {
        let mut v = start.normalize();
        let mut lambda = 0.0;
        let mut converged = false;
        for _ in 0..max_iter {
            let w = gram * &v;
            let next = v.dotc(&w).re;
            let wn = w.norm();
            if wn == 0.0 {
                return Some(0.0);
            }
            v = w / Complex64::from(wn);
            if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
                lambda = next;
                converged = true;
                break;
            }
            lambda = next;
        }
        if !converged {
            return None;
        }
        results.push(lambda);
    }
    let (a, b) = (results[0], results[1]);
    if (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) {
        Some(a.max(b))
    } else {
        None
    }
}

/// `e^{itH}` data for a particle-number-conserving self-adjoint `H`: one
/// eigendecomposition per sector, reused for every time.
#[derive(Debug, Clone)]
pub struct Dynamics {
    basis: Arc<FockBasis>,
    vectors: Vec<DMatrix<Complex64>>,
    values: Vec<Vec<f64>>,
}

impl Dynamics {
    pub fn new(hamiltonian: &FockOperator) -> Result<Self> {
        if hamiltonian.shift != 0 {
            return domain("the Hamiltonian must conserve particle number");
        }
        let defect = hamiltonian.hermiticity_defect();
        let scale = hamiltonian.max_abs().max(1.0);
        if defect > 1e-12 * scale {
            return domain(format!("Hamiltonian is not self-adjoint (defect {defect:e})"));
        }
        let mut vectors = Vec::with_capacity(hamiltonian.blocks.len());
        let mut values = Vec::with_capacity(hamiltonian.blocks.len());
        for b in &hamiltonian.blocks {
            let herm = (b + b.adjoint()) * Complex64::from(0.5);
            let eig = SymmetricEigen::try_new(herm, 1e-15, 10_000)
                .ok_or_else(|| Error::Numerical("sector eigendecomposition did not converge".into()))?;
            values.push(eig.eigenvalues.iter().copied().collect());
            vectors.push(eig.eigenvectors);
        }
        Ok(Dynamics {
            basis: hamiltonian.basis.clone(),
            vectors,
            values,
        })
    }

    /// `tau_t(A) = e^{itH} A e^{-itH}`.
    pub fn evolve(&self, a: &FockOperator, t: f64) -> Result<FockOperator> {
        if a.basis.sites != self.basis.sites {
            return domain("operator and Hamiltonian act on different Fock spaces");
        }
        if t == 0.0 {
            return Ok(a.clone());
        }
        let blocks = (0..=self.basis.sites)
            .map(|n| {
                let m = n as isize + a.shift;
                let b = &a.blocks[n];
                if b.nrows() == 0 || b.ncols() == 0 {
                    return b.clone();
                }
                let m = m as usize;
                let (um, un) = (&self.vectors[m], &self.vectors[n]);
                let mut tilde = um.adjoint() * b * un;
                for j in 0..tilde.ncols() {
                    for i in 0..tilde.nrows() {
                        let phase = t * (self.values[m][i] - self.values[n][j]);
                        tilde[(i, j)] *= Complex64::from_polar(1.0, phase);
                    }
                }
                um * tilde * un.adjoint()
            })
            .collect();
        Ok(FockOperator::from_blocks(&self.basis, a.shift, blocks))
    }
}

/// One-shot `e^{itH} A e^{-itH}`; use [`Dynamics`] to reuse the
/// decomposition across times.
pub fn heisenberg(a: &FockOperator, hamiltonian: &FockOperator, t: f64) -> Result<FockOperator> {
    Dynamics::new(hamiltonian)?.evolve(a, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sectors() {
        let b = FockBasis::new(4).unwrap();
        assert_eq!((0..=4).map(|n| b.sector_dim(n)).collect::<Vec<_>>(), vec![1, 4, 6, 4, 1]);
        assert_eq!(b.sector_dim(-1), 0);
        assert!(FockBasis::new(15).is_err());
        assert!(FockBasis::new(0).is_err());
    }

    #[test]
    fn jw_signs() {
        assert_eq!(jw_sign(0b0000, 2), 1.0);
        assert_eq!(jw_sign(0b0001, 2), -1.0);
        assert_eq!(jw_sign(0b0011, 2), 1.0);
        assert_eq!(jw_sign(0b0111, 0), 1.0);
    }

    #[test]
    fn power_iteration_matches_dense() {
        let m = DMatrix::from_fn(30, 20, |i, j| Complex64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, (i + j) as f64 * 0.1));
        let g = m.adjoint() * &m;
        let p = power_iteration(&g, 1e-13, 10_000).unwrap();
        let d = gram_top_eigenvalue(g);
        assert!((p - d).abs() < 1e-9 * d);
    }
}
