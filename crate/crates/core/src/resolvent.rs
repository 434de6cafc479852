//! Resolvent probes `(iλ − A)⁻¹` restricted to single sine modes.
//!
//! Eliminating `φ = (f5 + wμ)/(y² + κ + iλ)` and the velocities leaves a 2×2
//! complex system in `(z_n, u_n)`. Solving it for a forcing `F` gives the exact
//! modal response, and `‖U‖_H/‖F‖_H` bounds the resolvent norm from below.

use std::ops::RangeInclusive;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{fit_loglog, LineFit};
use crate::kernel::{shifted_power, DiffusiveGrid};
use crate::model::PhysicalParams;
use crate::modal::sin_pi;
use crate::spectrum::{self, Branch};

type C = Complex64;

fn cz() -> C {
    C::new(0.0, 0.0)
}

/// Modal coefficients of a forcing `F = (f1, …, f5)`; `f5` is sampled on the
/// nodes of the grid it will be used with.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModeForcing {
    pub f1: C,
    pub f2: C,
    pub f3: C,
    pub f4: C,
    pub f5: Option<Vec<C>>,
}

impl ModeForcing {
    pub fn unit_f2() -> Self {
        Self {
            f2: C::new(1.0, 0.0),
            ..Default::default()
        }
    }

    pub fn unit_f4() -> Self {
        Self {
            f4: C::new(1.0, 0.0),
            ..Default::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        let z = cz();
        self.f1 == z
            && self.f2 == z
            && self.f3 == z
            && self.f4 == z
            && self.f5.as_ref().is_none_or(|v| v.iter().all(|x| *x == z))
    }
}

/// `M_n(iλ)`, symmetric with off-diagonal `a2μₙ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSystem {
    pub n: usize,
    pub lambda: f64,
    pub matrix: Matrix2<C>,
}

impl ReducedSystem {
    pub fn new(p: &PhysicalParams, n: usize, lambda: f64) -> Result<Self> {
        let mu2 = p.mode_freq(n).powi(2);
        let damp = damping_coefficient(p, lambda)?;
        let l2 = lambda * lambda;
        let m11 = C::new(-p.rho_z * l2 + p.a1 * mu2, 0.0) + damp;
        let m12 = C::new(p.a2 * mu2, 0.0);
        let m22 = C::new(-p.rho_u * l2 + p.a3 * mu2, 0.0);
        Ok(Self {
            n,
            lambda,
            matrix: Matrix2::new(m11, m12, m12, m22),
        })
    }

    pub fn det(&self) -> C {
        let m = &self.matrix;
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    fn solve(&self, r1: C, r2: C) -> Result<(C, C)> {
        let m = &self.matrix;
        let det = self.det();
        let scale = (m[(0, 0)] * m[(1, 1)]).norm() + (m[(0, 1)] * m[(1, 0)]).norm();
        if det.norm() <= 1e-13 * scale {
            return Err(Error::Singular(format!(
                "M_{}(i·{}) has vanishing determinant: iλ is an eigenvalue",
                self.n, self.lambda
            )));
        }
        let z = (r1 * m[(1, 1)] - m[(0, 1)] * r2) / det;
        let u = (m[(0, 0)] * r2 - m[(1, 0)] * r1) / det;
        Ok((z, u))
    }
}

/// `γ·iλ·(iλ + κ)^{α−1}`.
pub fn damping_coefficient(p: &PhysicalParams, lambda: f64) -> Result<C> {
    if lambda == 0.0 {
        if p.kappa == 0.0 {
            return Err(Error::KappaGate(
                "the damping symbol is undefined at λ = 0 when κ = 0".into(),
            ));
        }
        return Ok(cz());
    }
    let s = C::new(0.0, lambda);
    Ok(s * shifted_power(s, p.kappa, p.alpha - 1.0)? * p.gamma)
}

/// `∫_ℝ μ(y)²/((y² + κ)² + λ²) dy`.
pub fn phi_norm_integral(lambda: f64, kappa: f64, alpha: f64, grid: &DiffusiveGrid) -> f64 {
    let e = 2.0 * alpha - 1.0;
    grid.nodes
        .iter()
        .zip(&grid.weights)
        .map(|(&y, &w)| {
            let r = y * y + kappa;
            2.0 * w * y.powf(e) / (r * r + lambda * lambda)
        })
        .sum()
}

/// Response of one mode to a forcing at frequency `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSolution {
    pub n: usize,
    pub lambda: f64,
    pub z: C,
    pub w: C,
    pub u: C,
    pub v: C,
    /// `∫_ℝ |φ(y)|² dy`
    pub phi_l2_sq: f64,
    /// `|det M_n(iλ)|`
    pub det_abs: f64,
}

/// Solves `(iλ − A)U = F` on mode `n`.
pub fn reduced_solve(
    n: usize,
    lambda: f64,
    forcing: &ModeForcing,
    p: &PhysicalParams,
    grid: &DiffusiveGrid,
) -> Result<ModeSolution> {
    if p.kappa == 0.0 && lambda == 0.0 {
        return Err(static_refusal());
    }
    if let Some(f5) = &forcing.f5 {
        if f5.len() != grid.len() {
            return Err(Error::Domain("f5 must be sampled on the grid nodes".into()));
        }
    }
    let sys = ReducedSystem::new(p, n, lambda)?;
    let s = C::new(0.0, lambda);
    let shifted = |y: f64| s + (y * y + p.kappa);
    let zeta = p.zeta();
    let kernel = if p.gamma == 0.0 {
        cz()
    } else {
        shifted_power(s, p.kappa, p.alpha - 1.0)? * p.gamma
    };
    let memory_load: C = match &forcing.f5 {
        Some(f5) => grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .zip(&grid.mu)
            .zip(f5)
            .map(|(((&y, &w), &m), &f)| f * m / shifted(y) * (2.0 * w))
            .sum(),
        None => cz(),
    };
    let r1 = forcing.f2 * p.rho_z + forcing.f1 * (s * p.rho_z + kernel) - memory_load * zeta;
    let r2 = forcing.f4 * p.rho_u + forcing.f3 * s * p.rho_u;
    let (z, u) = sys.solve(r1, r2)?;
    let w = s * z - forcing.f1;
    let v = s * u - forcing.f3;
    let phi_l2_sq = match &forcing.f5 {
        Some(f5) => grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .zip(&grid.mu)
            .zip(f5)
            .map(|(((&y, &wt), &m), &f)| 2.0 * wt * ((f + w * m) / shifted(y)).norm_sqr())
            .sum(),
        None => w.norm_sqr() * phi_norm_integral(lambda, p.kappa, p.alpha, grid),
    };
    Ok(ModeSolution {
        n,
        lambda,
        z,
        w,
        u,
        v,
        phi_l2_sq,
        det_abs: sys.det().norm(),
    })
}

fn static_refusal() -> Error {
    Error::KappaGate(
        "with κ = 0 the origin is in the spectrum: the static memory profile |y|^((2α−5)/2) is not square integrable"
            .into(),
    )
}

/// `‖(z, w, u, v, φ)‖²_H` of one mode, Parseval factor `L/2` included.
pub fn mode_h_norm_sq(p: &PhysicalParams, n: usize, z: C, w: C, u: C, v: C, phi_l2_sq: f64) -> f64 {
    let mu = p.mode_freq(n);
    let grad = z * (p.a2 / p.a3.sqrt() * mu) + u * (p.a3.sqrt() * mu);
    0.5 * p.length
        * (p.rho_z * w.norm_sqr()
            + p.rho_u * v.norm_sqr()
            + (p.a1 - p.a2 * p.a2 / p.a3) * mu * mu * z.norm_sqr()
            + grad.norm_sqr()
            + p.zeta() * phi_l2_sq)
}

impl ModeSolution {
    pub fn h_norm_sq(&self, p: &PhysicalParams) -> f64 {
        mode_h_norm_sq(p, self.n, self.z, self.w, self.u, self.v, self.phi_l2_sq)
    }
}

pub fn forcing_h_norm_sq(p: &PhysicalParams, n: usize, f: &ModeForcing, grid: &DiffusiveGrid) -> f64 {
    let f5 = f.f5.as_ref().map_or(0.0, |v| {
        v.iter()
            .zip(&grid.weights)
            .map(|(x, w)| 2.0 * w * x.norm_sqr())
            .sum()
    });
    mode_h_norm_sq(p, n, f.f1, f.f2, f.f3, f.f4, f5)
}

/// Where to probe the resolvent on mode `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeFrequency {
    /// `λ* = l₊μₙ`
    LimitSpeed,
    /// `λ* = Im λₙ` of the refined fast-branch root
    RefinedRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ForcingChoice {
    UnitF2,
    UnitF4,
}

impl ForcingChoice {
    fn forcing(self) -> ModeForcing {
        match self {
            ForcingChoice::UnitF2 => ModeForcing::unit_f2(),
            ForcingChoice::UnitF4 => ModeForcing::unit_f4(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthSample {
    pub n: usize,
    pub lambda: f64,
    pub ratio: f64,
    pub det_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthResult {
    pub alpha: f64,
    pub samples: Vec<GrowthSample>,
    /// Slope of `log R` against `log λ*`.
    pub fit: LineFit,
}

/// `R(λ*) = ‖U‖_H/‖F‖_H` at the near-resonant frequency of every mode in
/// `modes`, and the fitted growth exponent.
pub fn resolvent_growth(
    p: &PhysicalParams,
    modes: RangeInclusive<usize>,
    forcing: ForcingChoice,
    probe: ProbeFrequency,
    grid: &DiffusiveGrid,
) -> Result<GrowthResult> {
    resolvent_growth_with(p, modes, forcing, probe, grid, Exec::default())
}

pub fn resolvent_growth_with(
    p: &PhysicalParams,
    modes: RangeInclusive<usize>,
    forcing: ForcingChoice,
    probe: ProbeFrequency,
    grid: &DiffusiveGrid,
    exec: Exec,
) -> Result<GrowthResult> {
    p.validated()?;
    if p.kappa <= 0.0 || p.gamma <= 0.0 {
        return Err(Error::KappaGate(
            "resolvent growth probes need κ > 0 and γ > 0".into(),
        ));
    }
    let l_plus = p.derived().l_plus;
    let f = forcing.forcing();
    let ns: Vec<usize> = modes.collect();
    let samples = exec
        .map(&ns, |&n| -> Result<GrowthSample> {
            let lambda = match probe {
                ProbeFrequency::LimitSpeed => l_plus * p.mode_freq(n),
                ProbeFrequency::RefinedRoot => {
                    let l0 = spectrum::limit_root(p, n, Branch::Fast);
                    let eps = spectrum::predict_perturbation(p, n, Branch::Fast)?;
                    spectrum::refine_root(l0 + eps, p, n, spectrum::DEFAULT_ROOT_TOL)?
                        .root
                        .im
                }
            };
            let sol = reduced_solve(n, lambda, &f, p, grid)?;
            let ratio = (sol.h_norm_sq(p) / forcing_h_norm_sq(p, n, &f, grid)).sqrt();
            Ok(GrowthSample {
                n,
                lambda,
                ratio,
                det_abs: sol.det_abs,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = samples.iter().map(|s| s.lambda).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let fit = fit_loglog(&x, &y)
        .ok_or_else(|| Error::Domain("growth fit needs at least two modes".into()))?;
    Ok(GrowthResult {
        alpha: p.alpha,
        samples,
        fit,
    })
}

/// Solution of `−AU = F` assembled over modes.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub modes: Vec<ModeSolution>,
    pub u_norm: f64,
    pub f_norm: f64,
    pub length: f64,
}

impl StaticSolution {
    /// `‖U‖_H/‖F‖_H`, or 0 for zero forcing.
    pub fn ratio(&self) -> f64 {
        if self.f_norm == 0.0 {
            0.0
        } else {
            self.u_norm / self.f_norm
        }
    }

    /// Real parts of `z(x)` and `u(x)`.
    pub fn fields(&self, x_grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let synth = |pick: fn(&ModeSolution) -> C| -> Vec<f64> {
            x_grid
                .iter()
                .map(|&x| {
                    self.modes
                        .iter()
                        .map(|m| pick(m).re * sin_pi(m.n as f64 * x / self.length))
                        .sum()
                })
                .collect()
        };
        (synth(|m| m.z), synth(|m| m.u))
    }
}

/// Solves `−AU = F` mode by mode; `forcing[i]` acts on mode `i + 1`.
pub fn static_solve(
    p: &PhysicalParams,
    forcing: &[ModeForcing],
    grid: &DiffusiveGrid,
) -> Result<StaticSolution> {
    p.validated()?;
    if p.kappa == 0.0 {
        return Err(static_refusal());
    }
    let mut modes = Vec::with_capacity(forcing.len());
    let (mut u2, mut f2) = (0.0, 0.0);
    for (i, f) in forcing.iter().enumerate() {
        let n = i + 1;
        // −A U = F is (iλ − A)U = F at λ = 0
        let sol = reduced_solve(n, 0.0, f, p, grid)?;
        u2 += sol.h_norm_sq(p);
        f2 += forcing_h_norm_sq(p, n, f, grid);
        modes.push(sol);
    }
    Ok(StaticSolution {
        modes,
        u_norm: u2.sqrt(),
        f_norm: f2.sqrt(),
        length: p.length,
    })
}
