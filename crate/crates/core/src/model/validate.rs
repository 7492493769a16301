use serde::Serialize;
use std::fmt;

use super::geometry::ball_volume;
use super::params::ModelParams;

/// One assumption with its verdict and a signed margin (positive = slack).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub condition: String,
    pub passed: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:<6} {:>14}  condition", "check", "result", "margin")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<8} {:<6} {:>14}  {}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                format!("{:.6e}", c.margin),
                c.condition
            )?;
        }
        Ok(())
    }
}

fn check(name: &'static str, condition: impl Into<String>, margin: f64) -> AssumptionCheck {
    AssumptionCheck {
        name,
        condition: condition.into(),
        passed: margin >= 0.0,
        margin,
    }
}

fn strict(name: &'static str, condition: impl Into<String>, margin: f64) -> AssumptionCheck {
    AssumptionCheck {
        passed: margin > 0.0,
        ..check(name, condition, margin)
    }
}

// ∞ - ∞ counts as zero slack
fn slack(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

/// Machine-checks (A1), (A2), (A4), (A5), the sign branch of (A3), and that
/// colour 1 has maximal proportion.
///
/// (A2) is checked on the open range `|x| > r_4` so that a hard core closed at
/// `r_3 = r_4` is admissible.
pub fn validate_assumptions(p: &ModelParams) -> ValidationReport {
    let d = p.dim;
    let super::Radii { r1, r2, r3, r4 } = p.radii;
    let mut checks = Vec::new();

    let (phi_min, _) = p.phi.range_on(0.0, false, f64::INFINITY);
    checks.push(check("A1.pos", "phi >= 0", phi_min));
    let (phi_core_min, _) = p.phi.range_on(0.0, false, r3);
    checks.push(check(
        "A1.core",
        format!("phi >= u = {} on |x| <= r3", p.u),
        slack(phi_core_min, p.u),
    ));

    let (lo, hi) = p.phi.range_on(r4, true, f64::INFINITY);
    checks.push(check("A2", "phi = 0 on |x| > r4", -(lo.abs().max(hi.abs()))));

    let (psi_min, _) = p.psi.range_on(0.0, false, f64::INFINITY);
    let a3 = if p.psi_superstable {
        check("A3", "psi declared superstable and lower regular", 0.0)
    } else {
        check("A3", "psi >= 0", psi_min)
    };
    checks.push(a3);

    let (_, psi_tail_max) = p.psi.range_on(r2, true, f64::INFINITY);
    checks.push(check("A4.sign", "psi <= 0 on |x| > r2", -psi_tail_max));
    let integral = p.psi.positive_part_integral(d, r1);
    checks.push(check(
        "A4.int",
        format!("integral of psi+ over |x| >= r1 finite (= {integral})"),
        if integral.is_finite() { 0.0 } else { -1.0 },
    ));

    let scale = r3 / (2.0 * ((d + 3) as f64).sqrt());
    checks.push(strict("A5.scale", "r2 < r3 / (2 sqrt(d+3))", scale - r2));
    let lhs = (p.n_star as f64 - 1.0) * ball_volume(d, r1);
    let rhs = (p.delta() - 2.0 * r2).max(0.0).powi(d as i32);
    checks.push(strict(
        "A5.vol",
        format!("(n*-1)|B(0,r1)| < (delta-2r2)^d with n* = {}", p.n_star),
        rhs - lhs,
    ));

    let a1 = p.alpha.as_slice()[0];
    checks.push(check("alpha.max", "alpha_1 >= alpha_i", a1 - p.alpha.max()));

    ValidationReport { checks }
}
