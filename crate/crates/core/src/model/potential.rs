use serde::{Deserialize, Serialize};

use super::geometry::ball_volume;

/// Even, radial pair potential with finite range. Values may be `+∞`.
///
/// All families are piecewise constant or piecewise linear in `r = |x|`, so
/// their extrema over a radial interval are attained at breakpoints,
/// interval ends, or inside a constant piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairPotential {
    /// Identically zero.
    Zero,
    /// `+∞` on `r ≤ radius`, zero beyond.
    HardCore { radius: f64 },
    /// `height` on `r ≤ radius`, zero beyond.
    SoftShoulder { radius: f64, height: f64 },
    /// `values[0]` on `[0, radii[0]]`, `values[k]` on `(radii[k-1], radii[k]]`,
    /// zero beyond the last radius.
    Step { radii: Vec<f64>, values: Vec<f64> },
    /// Linear interpolation between `(radii[k], values[k])`; `values[0]` below
    /// `radii[0]`, zero beyond the last radius.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("radii and values must have the same non-zero length")]
    Shape,
    #[error("radii must be finite, non-negative and strictly increasing")]
    Radii,
    #[error("potential values must not be NaN or -inf")]
    Value,
    #[error("tabulated values must be finite")]
    TabulatedInfinite,
}

impl PairPotential {
    pub fn check(&self) -> Result<(), PotentialError> {
        let check_radii = |radii: &[f64], values: &[f64]| {
            if radii.is_empty() || radii.len() != values.len() {
                return Err(PotentialError::Shape);
            }
            if radii.iter().any(|r| !r.is_finite() || *r < 0.0)
                || radii.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(PotentialError::Radii);
            }
            if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                return Err(PotentialError::Value);
            }
            Ok(())
        };
        match self {
            Self::Zero => Ok(()),
            Self::HardCore { radius } => check_radii(&[*radius], &[f64::INFINITY]),
            Self::SoftShoulder { radius, height } => check_radii(&[*radius], &[*height]),
            Self::Step { radii, values } => check_radii(radii, values),
            Self::Tabulated { radii, values } => {
                check_radii(radii, values)?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(PotentialError::TabulatedInfinite);
                }
                Ok(())
            }
        }
    }

    /// Value at distance `r`.
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::HardCore { radius } => {
                if r <= *radius {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Self::SoftShoulder { radius, height } => {
                if r <= *radius {
                    *height
                } else {
                    0.0
                }
            }
            Self::Step { radii, values } => radii
                .iter()
                .position(|&rk| r <= rk)
                .map_or(0.0, |k| values[k]),
            Self::Tabulated { radii, values } => {
                let last = radii.len() - 1;
                if r > radii[last] {
                    return 0.0;
                }
                if r <= radii[0] {
                    return values[0];
                }
                let k = radii.iter().position(|&rk| r <= rk).unwrap();
                let t = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
                values[k - 1] + t * (values[k] - values[k - 1])
            }
        }
    }

    /// Value from a squared distance; avoids a square root when the potential
    /// is constant on its support.
    pub fn value_sq(&self, r2: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::HardCore { radius } if r2 <= radius * radius => f64::INFINITY,
            Self::HardCore { .. } => 0.0,
            _ => self.value(r2.sqrt()),
        }
    }

    /// Smallest `R` with the potential vanishing on `r > R`.
    pub fn cutoff(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::HardCore { radius } => *radius,
            Self::SoftShoulder { radius, height } => {
                if *height == 0.0 {
                    0.0
                } else {
                    *radius
                }
            }
            Self::Step { radii, values } | Self::Tabulated { radii, values } => radii
                .iter()
                .zip(values)
                .filter(|(_, v)| **v != 0.0)
                .map(|(r, _)| *r)
                .fold(0.0, f64::max),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Zero => vec![],
            Self::HardCore { radius } | Self::SoftShoulder { radius, .. } => vec![*radius],
            Self::Step { radii, .. } | Self::Tabulated { radii, .. } => radii.clone(),
        }
    }

    /// `(inf, sup)` of the potential over radii in `[lo, hi]`, or `(lo, hi]`
    /// when `lo_open`. `hi` may be `+∞`.
    pub fn range_on(&self, lo: f64, lo_open: bool, hi: f64) -> (f64, f64) {
        let mut probes: Vec<f64> = Vec::new();
        let nudge = |r: f64| r + 1e-12 * r.abs().max(1.0);
        if lo_open {
            probes.push(nudge(lo));
        } else {
            probes.push(lo);
        }
        let mut knots: Vec<f64> = vec![lo];
        knots.extend(self.breakpoints().into_iter().filter(|&b| b > lo && b < hi));
        if hi.is_finite() {
            knots.push(hi);
        } else {
            let last = knots.last().copied().unwrap_or(lo);
            knots.push(last.max(lo) + 1.0);
        }
        for w in knots.windows(2) {
            probes.push(0.5 * (w[0] + w[1]));
            probes.push(w[1]);
            probes.push(nudge(w[0]).min(w[1]));
        }
        probes.retain(|&r| r >= lo && (r <= hi) && !(lo_open && r == lo));
        probes.iter().map(|&r| self.value(r)).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(mn, mx), v| (mn.min(v), mx.max(v)),
        )
    }

    /// `∫_{|x| ≥ r_min} max(ψ(x), 0) dx` in dimension `dim`.
    pub fn positive_part_integral(&self, dim: usize, r_min: f64) -> f64 {
        let shell = |a: f64, b: f64| ball_volume(dim, b) - ball_volume(dim, a);
        match self {
            Self::Zero => 0.0,
            Self::HardCore { radius } => {
                if *radius > r_min {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Self::SoftShoulder { radius, height } => {
                if *radius > r_min {
                    height.max(0.0) * shell(r_min, *radius)
                } else {
                    0.0
                }
            }
            Self::Step { radii, values } => {
                let mut total = 0.0;
                let mut prev: f64 = 0.0;
                for (&r, &v) in radii.iter().zip(values) {
                    let a = prev.max(r_min);
                    if r > a && v > 0.0 {
                        total += v * shell(a, r);
                    }
                    prev = r;
                }
                total
            }
            Self::Tabulated { radii, .. } => {
                // composite Simpson on each linear piece of ψ⁺ r^{d-1}
                let surface = dim as f64 * ball_volume(dim, 1.0);
                let mut knots = vec![r_min];
                knots.extend(radii.iter().copied().filter(|&r| r > r_min));
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let m = 64;
                    let h = (b - a) / m as f64;
                    let f = |r: f64| self.value(r).max(0.0) * r.powi(dim as i32 - 1);
                    let mut s = f(a) + f(b);
                    for i in 1..m {
                        let r = a + i as f64 * h;
                        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(r);
                    }
                    total += s * h / 3.0;
                }
                surface * total
            }
        }
    }
}
