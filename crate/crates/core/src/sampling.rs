//! Seeded Poisson and marked Poisson point processes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{ColoredConfig, PointConfig, Proportions, SimBox};

/// `(seed, stream)` names an independent ChaCha8 keystream. Identical pairs
/// reproduce draws bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// A stream for sub-task `tag` (e.g. chain index), keyed by hashing the
    /// parent pair.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x51ED))),
            stream: tag,
        }
    }
}

fn uniform_point<R: Rng + ?Sized>(bx: &SimBox, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    for k in 0..bx.dim() {
        out.push(rng.random::<f64>() * bx.side(k));
    }
}

pub fn uniform_in_box<R: Rng + ?Sized>(bx: &SimBox, rng: &mut R) -> Vec<f64> {
    let mut x = Vec::with_capacity(bx.dim());
    uniform_point(bx, rng, &mut x);
    x
}

/// Homogeneous Poisson process of intensity `z` on the box.
pub fn sample_poisson<R: Rng + ?Sized>(bx: &SimBox, z: f64, rng: &mut R) -> PointConfig {
    let mean = z * bx.volume();
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut cfg = PointConfig::empty(bx.clone());
    let mut x = Vec::with_capacity(bx.dim());
    for _ in 0..n {
        uniform_point(bx, rng, &mut x);
        cfg.push(&x);
    }
    cfg
}

/// Poisson process with i.i.d. colour marks of law `α`.
pub fn sample_marked_poisson<R: Rng + ?Sized>(
    bx: &SimBox,
    z: f64,
    alpha: &Proportions,
    rng: &mut R,
) -> ColoredConfig {
    let points = sample_poisson(bx, z, rng);
    let colors = (0..points.len()).map(|_| alpha.sample(rng)).collect();
    ColoredConfig::new(points, colors)
}
