//! Model parameters, pair potentials, configurations and Hamiltonians.

mod config;
mod file;
mod geometry;
mod grid;
mod hamiltonian;
mod params;
mod potential;
mod validate;

pub use config::{ColoredConfig, ConfigIoError, PointConfig};
pub use file::{load_params, params_from_str, ConfigFileError};
pub use geometry::{ball_volume, SimBox, Window};
pub use grid::NeighborGrid;
pub use hamiltonian::{
    energy_delta_delete, energy_delta_insert, hamiltonian, hamiltonian_phi, hamiltonian_psi,
    point_energy,
};
pub use params::{Color, ModelParams, ParamError, Proportions, Radii};
pub use potential::PairPotential;
pub use validate::{validate_assumptions, AssumptionCheck, ValidationReport};
