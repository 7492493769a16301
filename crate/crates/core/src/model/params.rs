use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::potential::{PairPotential, PotentialError};

/// Colour label, 0-based. Displayed 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Color(pub u8);

impl Color {
    pub const FIRST: Color = Color(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// From a 1-based label as written in files.
    pub fn from_label(label: usize) -> Option<Color> {
        (1..=256).contains(&label).then(|| Color((label - 1) as u8))
    }

    pub fn label(self) -> usize {
        self.0 as usize + 1
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("activity must be positive and finite, got {0}")]
    Activity(f64),
    #[error("need at least 2 colours and at most 255, got {0}")]
    ColorCount(usize),
    #[error("proportions must be positive and sum to 1 (sum = {0})")]
    Proportions(f64),
    #[error("repulsion strength u must be positive, got {0}")]
    Repulsion(f64),
    #[error("radii must satisfy 0 <= r1 <= r2 < r3 <= r4 < inf")]
    Radii,
    #[error("percolation target p* must lie in (0, 1), got {0}")]
    PStar(f64),
    #[error("cell threshold n* must be at least 1")]
    NStar,
    #[error("colour count q = {q} does not match {len} proportions")]
    ColorMismatch { q: usize, len: usize },
    #[error("invalid potential {which}: {source}")]
    Potential {
        which: &'static str,
        source: PotentialError,
    },
}

/// Colour proportions `α = (α_1, …, α_q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Proportions(Vec<f64>);

impl Proportions {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(alpha: Vec<f64>) -> Result<Self, ParamError> {
        let sum: f64 = alpha.iter().sum();
        if alpha.len() < 2 || alpha.len() > 255 {
            return Err(ParamError::ColorCount(alpha.len()));
        }
        if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite())
            || (sum - 1.0).abs() > Self::SUM_TOLERANCE
        {
            return Err(ParamError::Proportions(sum));
        }
        Ok(Self(alpha))
    }

    pub fn uniform(q: usize) -> Self {
        Self(vec![1.0 / q as f64; q])
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, c: Color) -> f64 {
        self.0[c.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn colors(&self) -> impl Iterator<Item = Color> {
        (0..self.q()).map(|i| Color(i as u8))
    }

    /// Colours attaining the maximal proportion.
    pub fn maximal_colors(&self) -> Vec<Color> {
        let m = self.max();
        self.colors().filter(|&c| self.get(c) == m).collect()
    }

    /// `#^α_max`, the number of colours with maximal proportion.
    pub fn count_max_colors(&self) -> usize {
        self.maximal_colors().len()
    }

    /// `Σ_i α_i^k`, computed as `α_max^k Σ_i (α_i/α_max)^k`; returns the log.
    pub fn ln_power_sum(&self, k: usize) -> f64 {
        let m = self.max();
        let s: f64 = self.0.iter().map(|a| (a / m).powi(k as i32)).sum();
        k as f64 * m.ln() + s.ln()
    }

    /// `Σ_i (α_i/α_max)^k`.
    pub fn scaled_power_sum(&self, k: usize) -> f64 {
        let m = self.max();
        self.0.iter().map(|a| (a / m).powi(k as i32)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Color {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, a) in self.0.iter().enumerate() {
            acc += a;
            if u < acc {
                return Color(i as u8);
            }
        }
        Color((self.q() - 1) as u8)
    }
}

impl TryFrom<Vec<f64>> for Proportions {
    type Error = ParamError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Proportions> for Vec<f64> {
    fn from(p: Proportions) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

/// Full parameterization of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    /// Activity `z` of the reference Poisson process.
    pub z: f64,
    pub alpha: Proportions,
    /// Repulsion lower bound of `φ` on `|x| ≤ r_3`; may be `+∞`.
    pub u: f64,
    pub radii: Radii,
    pub p_star: f64,
    pub n_star: usize,
    /// Repulsion between different colours.
    pub phi: PairPotential,
    /// Colour-blind background interaction.
    pub psi: PairPotential,
    /// Declared superstability and lower regularity of `ψ`; not verified.
    #[serde(default)]
    pub psi_superstable: bool,
}

impl ModelParams {
    pub fn check(&self) -> Result<(), ParamError> {
        if self.dim < 2 {
            return Err(ParamError::Dimension(self.dim));
        }
        if !(self.z > 0.0) || !self.z.is_finite() {
            return Err(ParamError::Activity(self.z));
        }
        if !(self.u > 0.0) {
            return Err(ParamError::Repulsion(self.u));
        }
        let Radii { r1, r2, r3, r4 } = self.radii;
        if !(0.0 <= r1 && r1 <= r2 && r2 < r3 && r3 <= r4 && r4.is_finite()) {
            return Err(ParamError::Radii);
        }
        if !(self.p_star > 0.0 && self.p_star < 1.0) {
            return Err(ParamError::PStar(self.p_star));
        }
        if self.n_star == 0 {
            return Err(ParamError::NStar);
        }
        self.phi
            .check()
            .map_err(|source| ParamError::Potential { which: "phi", source })?;
        self.psi
            .check()
            .map_err(|source| ParamError::Potential { which: "psi", source })?;
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.alpha.q()
    }

    /// Cell side `δ = r_3/√(d+3)`: any two points in face-adjacent cells are
    /// within `r_3`.
    pub fn delta(&self) -> f64 {
        self.radii.r3 / ((self.dim + 3) as f64).sqrt()
    }

    /// Range used by the neighbour grid: `max(r_4, cutoff(ψ), cutoff(φ))`.
    pub fn interaction_cutoff(&self) -> f64 {
        self.radii
            .r4
            .max(self.psi.cutoff())
            .max(self.phi.cutoff())
    }

    /// Cubic box of `n` δ-cells per axis.
    pub fn cubic_box(&self, n: usize) -> super::SimBox {
        super::SimBox::cubic(self.dim, n, self.delta())
    }

    /// Widom-Rowlinson: `q = 2`, symmetric `α`, `ψ ≡ 0`, `φ = ∞·1_{|x| ≤ 1}`,
    /// `r_1 = r_2 = 0`, `r_3 = r_4 = 1`.
    pub fn widom_rowlinson(z: f64) -> Self {
        Self {
            dim: 2,
            z,
            alpha: Proportions::uniform(2),
            u: f64::INFINITY,
            radii: Radii {
                r1: 0.0,
                r2: 0.0,
                r3: 1.0,
                r4: 1.0,
            },
            p_star: 0.95,
            n_star: 1,
            phi: PairPotential::HardCore { radius: 1.0 },
            psi: PairPotential::Zero,
            psi_superstable: false,
        }
    }

    pub fn preset(name: &str, z: f64) -> Option<Self> {
        match name {
            "wr" | "widom-rowlinson" => Some(Self::widom_rowlinson(z)),
            _ => None,
        }
    }
}
