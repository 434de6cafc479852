//! Model constants of the swelling porous-elastic system and the closed-form
//! quantities derived from them.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine constants of the fractionally damped swelling soil model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Density of the fluid constituent `z`.
    pub rho_z: f64,
    /// Density of the solid constituent `u`.
    pub rho_u: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Damping gain in front of the fractional derivative.
    pub gamma: f64,
    /// Fractional order, in (0, 1).
    pub alpha: f64,
    /// Exponential weight of the memory kernel.
    pub kappa: f64,
    /// Length of the interval (0, L).
    pub length: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            rho_z: 1.0,
            rho_u: 1.0,
            a1: 2.0,
            a2: 1.0,
            a3: 2.0,
            gamma: 1.0,
            alpha: 0.5,
            kappa: 1.0,
            length: PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub requirement: &'static str,
    pub passed: bool,
}

/// Pass/fail record for every parameter invariant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.requirement)
    }

    fn push(&mut self, requirement: &'static str, passed: bool) {
        self.checks.push(Check {
            requirement,
            passed,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "all parameter checks passed");
        }
        let v: Vec<_> = self.violations().collect();
        write!(f, "{}", v.join("; "))
    }
}

/// Checks every invariant of [`PhysicalParams`]. Never fails; callers decide
/// what to do with a failing report.
pub fn validate_params(p: &PhysicalParams) -> ValidationReport {
    let finite = [
        p.rho_z, p.rho_u, p.a1, p.a2, p.a3, p.gamma, p.alpha, p.kappa, p.length,
    ]
    .iter()
    .all(|x| x.is_finite());
    let mut r = ValidationReport::default();
    r.push("all parameters must be finite", finite);
    r.push("rho_z > 0 required", p.rho_z > 0.0);
    r.push("rho_u > 0 required", p.rho_u > 0.0);
    r.push("a1 > 0 required", p.a1 > 0.0);
    r.push("a3 > 0 required", p.a3 > 0.0);
    r.push("a2 ≠ 0 required", p.a2 != 0.0);
    r.push("a1·a3 > a2² required", p.a1 * p.a3 > p.a2 * p.a2);
    r.push("length L > 0 required", p.length > 0.0);
    r.push("alpha must lie in (0,1)", p.alpha > 0.0 && p.alpha < 1.0);
    r.push("kappa ≥ 0 required", p.kappa >= 0.0);
    r.push("gamma ≥ 0 required", p.gamma >= 0.0);
    r
}

impl PhysicalParams {
    pub fn validated(self) -> Result<Self> {
        let report = validate_params(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(report))
        }
    }

    pub fn derived(&self) -> DerivedConstants {
        DerivedConstants::new(self)
    }

    /// `ζ = γ sin(απ)/π`.
    pub fn zeta(&self) -> f64 {
        self.gamma * (self.alpha * PI).sin() / PI
    }

    /// `μₙ = nπ/L`.
    pub fn mode_freq(&self, n: usize) -> f64 {
        n as f64 * PI / self.length
    }

    /// `a3/ρ_u`, the solid wave speed squared.
    pub fn c_solid(&self) -> f64 {
        self.a3 / self.rho_u
    }
}

/// Closed-form constants shared by the dynamics, spectrum and resolvent code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub zeta: f64,
    /// `m = a1/ρ_z + a3/ρ_u`
    pub m_coef: f64,
    /// `p = (a1·a3 − a2²)/(ρ_z·ρ_u)`
    pub p_coef: f64,
    pub l_minus: f64,
    pub l_plus: f64,
}

impl DerivedConstants {
    pub fn new(p: &PhysicalParams) -> Self {
        let (l_minus, l_plus) = limit_speeds(p);
        Self {
            zeta: p.zeta(),
            m_coef: p.a1 / p.rho_z + p.a3 / p.rho_u,
            p_coef: (p.a1 * p.a3 - p.a2 * p.a2) / (p.rho_z * p.rho_u),
            l_minus,
            l_plus,
        }
    }
}

/// `μ(y) = |y|^((2α−1)/2)`.
///
/// At `y = 0` the value is 0 for `α > 1/2`, 1 for `α = 1/2`, and singular for
/// `α < 1/2`, which is reported as a domain error.
pub fn mu_eval(y: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0,1)")));
    }
    let e = alpha - 0.5;
    if y == 0.0 {
        return match e {
            e if e > 0.0 => Ok(0.0),
            e if e == 0.0 => Ok(1.0),
            _ => Err(Error::Domain(format!(
                "mu(0) is singular for alpha = {alpha} <= 1/2"
            ))),
        };
    }
    Ok(y.abs().powf(e))
}

/// Positive roots `(l₋, l₊)` of `ℓ⁴ − mℓ² + p = 0`, i.e.
/// `ℓ² = (m ± √(m² − 4p))/2`.
pub fn limit_speeds(p: &PhysicalParams) -> (f64, f64) {
    let m = p.a1 / p.rho_z + p.a3 / p.rho_u;
    // m² − 4p written as a sum of squares so it never goes negative
    let d = p.a1 / p.rho_z - p.a3 / p.rho_u;
    let disc = (d * d + 4.0 * p.a2 * p.a2 / (p.rho_z * p.rho_u)).sqrt();
    let lp2 = 0.5 * (m + disc);
    // product of roots is p; avoids cancellation in m − disc
    let pc = (p.a1 * p.a3 - p.a2 * p.a2) / (p.rho_z * p.rho_u);
    let lm2 = pc / lp2;
    (lm2.sqrt(), lp2.sqrt())
}

/// The γ-free limit quartic `g(z) = z⁴ + m z² + p` evaluated at `z`.
pub fn limit_quartic(p: &PhysicalParams, z: Complex64) -> Complex64 {
    let d = DerivedConstants::new(p);
    let z2 = z * z;
    z2 * z2 + d.m_coef * z2 + d.p_coef
}
