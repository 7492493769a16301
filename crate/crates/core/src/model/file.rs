//! Plain-text model files: TOML with a `[model]` table and one table per
//! potential.
//!
//! ```toml
//! [model]
//! dimension = 2
//! activity = 2.0
//! alpha = [0.5, 0.5]
//! u = inf
//! r1 = 0.0
//! r2 = 0.0
//! r3 = 1.0
//! r4 = 1.0
//! p_star = 0.95
//! # n_star = 1        # optional, derived from p_star when absent
//!
//! [phi]
//! kind = "hard-core"
//! radius = 1.0
//!
//! [psi]
//! kind = "zero"
//! ```

use serde::Deserialize;
use std::path::Path;

use super::params::{ModelParams, ParamError, Proportions, Radii};
use super::potential::PairPotential;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelTable {
    dimension: usize,
    activity: f64,
    alpha: Vec<f64>,
    u: f64,
    r1: f64,
    r2: f64,
    r3: f64,
    r4: f64,
    p_star: f64,
    n_star: Option<usize>,
    #[serde(default)]
    psi_superstable: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: ModelTable,
    phi: PairPotential,
    #[serde(default = "zero")]
    psi: PairPotential,
}

fn zero() -> PairPotential {
    PairPotential::Zero
}

pub fn params_from_str(text: &str) -> Result<ModelParams, ConfigFileError> {
    let file: ModelFile = toml::from_str(text)?;
    let m = file.model;
    let alpha = Proportions::new(m.alpha)?;
    let mut params = ModelParams {
        dim: m.dimension,
        z: m.activity,
        alpha,
        u: m.u,
        radii: Radii {
            r1: m.r1,
            r2: m.r2,
            r3: m.r3,
            r4: m.r4,
        },
        p_star: m.p_star,
        n_star: m.n_star.unwrap_or(1),
        phi: file.phi,
        psi: file.psi,
        psi_superstable: m.psi_superstable,
    };
    params.check()?;
    if m.n_star.is_none() {
        let p_bar = crate::coupling::bernoulli_edge_probability(&params);
        params.n_star = crate::lattice::compute_nstar(p_bar, params.p_star);
    }
    Ok(params)
}

pub fn load_params(path: &Path) -> Result<ModelParams, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    params_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WR: &str = r#"
[model]
dimension = 2
activity = 1.0
alpha = [0.5, 0.5]
u = inf
r1 = 0.0
r2 = 0.0
r3 = 1.0
r4 = 1.0
p_star = 0.95

[phi]
kind = "hard-core"
radius = 1.0

[psi]
kind = "zero"
"#;

    #[test]
    fn parses_widom_rowlinson() {
        let p = params_from_str(WR).unwrap();
        assert_eq!(p, ModelParams::widom_rowlinson(1.0));
    }

    #[test]
    fn soft_model_derives_nstar() {
        let text = r#"
[model]
dimension = 2
activity = 3.0
alpha = [0.4, 0.4, 0.2]
u = 1.5
r1 = 0.0
r2 = 0.05
r3 = 1.0
r4 = 1.3
p_star = 0.9

[phi]
kind = "step"
radii = [1.0, 1.3]
values = [1.5, 0.4]

[psi]
kind = "step"
radii = [0.05, 0.5]
values = [2.0, -0.1]
"#;
        let p = params_from_str(text).unwrap();
        assert_eq!(p.q(), 3);
        assert!(p.n_star > 1);
    }

    #[test]
    fn rejects_bad_alpha_and_unknown_keys() {
        let bad = WR.replace("[0.5, 0.5]", "[0.6, 0.5]");
        assert!(matches!(params_from_str(&bad), Err(ConfigFileError::Params(_))));
        let unknown = WR.replace("p_star", "zeta = 1\np_star");
        assert!(params_from_str(&unknown).is_err());
    }
}
