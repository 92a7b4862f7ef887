//! One-particle propagation `e^{-itH_1}`, `H_1 = -Laplacian + V`.
//!
//! Inner products are linear in the first slot: `<f, g> = int f conj(g)`.
//! This is the convention used throughout the crate.

pub mod dyson;
pub mod grid;
pub mod packet;

pub use dyson::{
    dyson_overlap, dyson_tail_bound, dyson_term_amplitude, dyson_term_magnitude, free_amplitude,
    free_kernel_magnitude, OverlapEstimate, Probe, SimplexQuadrature, MAX_ENUMERATED_TUPLES,
};
pub use grid::{
    grid_overlap, grid_propagate, oracle_box_length, oracle_point_values, GridFunction,
    GridOverlap, OracleSettings, OracleValue,
};
pub use packet::{c_sigma, gaussian_eval, potential_eval, Atom, GaussianPacket, PotentialModel, SpectralMeasure};
