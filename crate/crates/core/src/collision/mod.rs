//! Stage 2: self-collision-free link geometry over a full actuation cycle.
//!
//! A mechanism's links start as straight bars between hinges and almost
//! always sweep through each other somewhere in the cycle.  This module
//! models every link as a chain of spheres ([`model`]), seeds candidate
//! shapes with randomized Hermite curves ([`init`]), drives the chains to a
//! feasible shape with an exact-gradient constrained solve ([`solve`]) and
//! certifies the result with a dense capsule clearance sweep
//! ([`clearance`]).

mod clearance;
mod init;
mod model;
mod solve;

pub use clearance::{brute_force_clearance, segment_distance, ClearanceReport};
pub use init::{hermite_init, InitConfig, InitResult};
pub use model::{
    pair_energy, pair_energy_derivative, pair_included, total_energy, total_energy_assembled,
    total_energy_with_grad, Assembly, CollisionModel, GeometryDesign, MechanismScene,
    ParticleChain, ParticleLayout, Site, JOINT_PARTICLES, NEIGHBOR_EXCLUSION,
};
pub use solve::{
    optimize_geometry, GeomConstraintParams, GeomOutcome, GeomSolveOptions, ResidualReport,
};
