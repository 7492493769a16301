//! Λ-Hamiltonians `H^φ` and `H^ψ`. Energies are `f64` with `+∞` for forbidden
//! configurations; `exp(-∞)` is exactly 0.

use super::config::{ColoredConfig, PointConfig};
use super::geometry::Window;
use super::params::{Color, ModelParams};
use super::potential::PairPotential;

fn meets(points: &PointConfig, i: usize, j: usize, window: &Window) -> bool {
    window.contains(points.point(i)) || window.contains(points.point(j))
}

/// `Σ φ(x-y)` over unordered pairs of different colour meeting `window`.
pub fn hamiltonian_phi(cfg: &ColoredConfig, phi: &PairPotential, window: &Window) -> f64 {
    let mut h = 0.0;
    for (i, j, d2) in cfg.points.pairs_within(phi.cutoff()) {
        if cfg.colors[i] != cfg.colors[j] && meets(&cfg.points, i, j, window) {
            h += phi.value_sq(d2);
            if h == f64::INFINITY {
                return h;
            }
        }
    }
    h
}

/// `Σ ψ(x-y)` over all unordered pairs meeting `window`.
pub fn hamiltonian_psi(points: &PointConfig, psi: &PairPotential, window: &Window) -> f64 {
    if matches!(psi, PairPotential::Zero) {
        return 0.0;
    }
    let mut h = 0.0;
    for (i, j, d2) in points.pairs_within(psi.cutoff()) {
        if meets(points, i, j, window) {
            h += psi.value_sq(d2);
        }
    }
    h
}

/// `H_Λ = H^φ_Λ + H^ψ_Λ` over the whole box.
pub fn hamiltonian(cfg: &ColoredConfig, params: &ModelParams) -> f64 {
    let w = cfg.points.sim_box().window();
    let hphi = hamiltonian_phi(cfg, &params.phi, &w);
    if hphi == f64::INFINITY {
        return hphi;
    }
    hphi + hamiltonian_psi(&cfg.points, &params.psi, &w)
}

/// Energy of the pairs between `(x, c)` and every point of `cfg` except
/// `skip`. The `φ` part is summed first and `+∞` short-circuits `ψ`.
pub fn point_energy(
    cfg: &ColoredConfig,
    params: &ModelParams,
    x: &[f64],
    c: Color,
    skip: Option<usize>,
) -> f64 {
    let mut e_phi = 0.0;
    cfg.points.for_each_within(x, params.phi.cutoff(), |j, d2| {
        if Some(j) != skip && cfg.colors[j] != c {
            e_phi += params.phi.value_sq(d2);
        }
    });
    if e_phi == f64::INFINITY || matches!(params.psi, PairPotential::Zero) {
        return e_phi;
    }
    let mut e_psi = 0.0;
    cfg.points.for_each_within(x, params.psi.cutoff(), |j, d2| {
        if Some(j) != skip {
            e_psi += params.psi.value_sq(d2);
        }
    });
    e_phi + e_psi
}

/// `H(cfg + (x,c)) - H(cfg)`.
pub fn energy_delta_insert(cfg: &ColoredConfig, params: &ModelParams, x: &[f64], c: Color) -> f64 {
    point_energy(cfg, params, x, c, None)
}

/// `H(cfg - x_i) - H(cfg)`; `cfg` must have finite energy.
pub fn energy_delta_delete(cfg: &ColoredConfig, params: &ModelParams, i: usize) -> f64 {
    -point_energy(cfg, params, cfg.points.point(i), cfg.colors[i], Some(i))
}
