//! Continuum Potts model with background interaction, its Edwards-Sokal
//! coupling to the generalized continuum random cluster model, and the
//! percolation machinery used to show symmetry breaking on finite boxes.
//!
//! Colours are stored 0-based ([`Color`]) and printed 1-based in every
//! file format and report.

pub mod cli;
pub mod coupling;
pub mod estimators;
pub mod lattice;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod sampling;
pub mod unionfind;

pub use coupling::{ClusterDecomposition, EdgeSet};
pub use model::{
    Color, ColoredConfig, ModelParams, PairPotential, PointConfig, Proportions, SimBox, Window,
};
pub use sampling::RngStream;
