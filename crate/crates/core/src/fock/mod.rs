//! Lattice fermions: CAR operators on the `2^L`-dimensional Fock space,
//! the smeared many-body Hamiltonian and its Heisenberg dynamics.

pub mod experiments;
pub mod lattice;
pub mod operator;

pub use experiments::{
    f_function, mode_envelope, sigma_limit_error, thermo_limit_gap, ManyBodySystem, TwoParticleGrid,
};
pub use lattice::{
    annihilator, creator, discretize, discretize_packet, number_operator, one_body_hamiltonian,
    second_quantize, smeared_interaction, smeared_interaction_norm_bound, Boundary, Lattice,
    ModeVector, Region, PACKET_CUTOFF,
};
pub use operator::{
    block_norm, heisenberg, Dynamics, FockBasis, FockOperator, DENSE_NORM_LIMIT, MAX_SITES,
    POWER_ITERATION_TOLERANCE,
};
