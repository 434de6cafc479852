//! Per-mode characteristic equation, its two physical eigenvalue branches,
//! and their large-`n` asymptotics.
//!
//! For mode `n` the generator's eigenvalues solve
//!
//! ```text
//! f_n(λ) = λ⁴ + m μₙ² λ² + (γ/ρ_z)(λ+κ)^{α−1}(λ³ + (a3/ρ_u) μₙ² λ) + p μₙ⁴ = 0
//! ```
//!
//! with `(λ+κ)^{α−1}` on the principal branch. As `n → ∞` the roots approach
//! `±i·l±·μₙ` and their real parts vanish like `μₙ^{−(1−α)}`.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{fit_loglog, LineFit};
use crate::kernel::shifted_power;
use crate::model::{DerivedConstants, PhysicalParams};

/// Root tolerance relative to `μₙ⁴`.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 60;

/// The two families of large eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    /// Near `i·l₊·μₙ` (label 1).
    Fast,
    /// Near `i·l₋·μₙ` (label 2).
    Slow,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Fast, Branch::Slow];

    pub fn label(self) -> u8 {
        match self {
            Branch::Fast => 1,
            Branch::Slow => 2,
        }
    }

    pub fn speed(self, d: &DerivedConstants) -> f64 {
        match self {
            Branch::Fast => d.l_plus,
            Branch::Slow => d.l_minus,
        }
    }
}

fn check_branch(lambda: Complex64, kappa: f64) -> Result<()> {
    let z = lambda + kappa;
    if z.im == 0.0 && z.re <= 0.0 {
        Err(Error::BranchCut { at: lambda, kappa })
    } else {
        Ok(())
    }
}

/// `f_n(λ)`.
pub fn char_eval(lambda: Complex64, p: &PhysicalParams, n: usize) -> Result<Complex64> {
    Ok(char_eval_with_derivative(lambda, p, n)?.0)
}

/// `f_n(λ)` together with `f_n′(λ)`.
pub fn char_eval_with_derivative(
    lambda: Complex64,
    p: &PhysicalParams,
    n: usize,
) -> Result<(Complex64, Complex64)> {
    check_branch(lambda, p.kappa)?;
    let d = DerivedConstants::new(p);
    let mu2 = p.mode_freq(n).powi(2);
    let g = p.gamma / p.rho_z;
    let c = p.c_solid() * mu2;
    let l2 = lambda * lambda;
    let l3 = l2 * lambda;
    let quartic = l2 * l2 + d.m_coef * mu2 * l2 + d.p_coef * mu2 * mu2;
    let dquartic = 4.0 * l3 + 2.0 * d.m_coef * mu2 * lambda;
    if g == 0.0 {
        return Ok((quartic, dquartic));
    }
    let pw = shifted_power(lambda, p.kappa, p.alpha - 1.0)?;
    let dpw = pw * (p.alpha - 1.0) / (lambda + p.kappa);
    let poly = l3 + c * lambda;
    let dpoly = 3.0 * l2 + c;
    Ok((
        quartic + g * pw * poly,
        dquartic + g * (dpw * poly + pw * dpoly),
    ))
}

/// Exact roots of the undamped limit `λ⁴ + mμₙ²λ² + pμₙ⁴`, ordered
/// `[i l₋μₙ, −i l₋μₙ, i l₊μₙ, −i l₊μₙ]`.
pub fn quartic_roots(p: &PhysicalParams, n: usize) -> [Complex64; 4] {
    let d = DerivedConstants::new(p);
    let mu = p.mode_freq(n);
    let s = Complex64::new(0.0, d.l_minus * mu);
    let f = Complex64::new(0.0, d.l_plus * mu);
    [s, s.conj(), f, f.conj()]
}

/// Upper half-plane limit root of a branch, `i·l·μₙ`.
pub fn limit_root(p: &PhysicalParams, n: usize, branch: Branch) -> Complex64 {
    Complex64::new(0.0, branch.speed(&p.derived()) * p.mode_freq(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedRoot {
    pub root: Complex64,
    /// `|f_n(λ)|/μₙ⁴`.
    pub residual: f64,
    pub iterations: usize,
}

/// Newton iteration on `f_n` with the analytic derivative. Converges when the
/// relative residual `|f_n|/μₙ⁴` drops below `tol`.
pub fn refine_root(seed: Complex64, p: &PhysicalParams, n: usize, tol: f64) -> Result<RefinedRoot> {
    let scale = p.mode_freq(n).powi(4);
    let mut lambda = seed;
    let mut best = (lambda, f64::INFINITY);
    for it in 0..=MAX_NEWTON_ITERATIONS {
        let (f, df) = char_eval_with_derivative(lambda, p, n)?;
        let residual = f.norm() / scale;
        if residual < best.1 {
            best = (lambda, residual);
        }
        if residual < tol {
            return Ok(RefinedRoot {
                root: lambda,
                residual,
                iterations: it,
            });
        }
        if df.norm() == 0.0 || !df.is_finite() {
            break;
        }
        lambda -= f / df;
    }
    Err(Error::NoConvergence {
        last: best.0,
        residual: best.1,
        iterations: MAX_NEWTON_ITERATIONS,
    })
}

/// First-order correction `ε` with `λ ≈ λ⁰ + ε`, `λ⁰ = i·l·μₙ`, obtained by
/// linearizing `f_n` around the undamped root:
///
/// ```text
/// ε = −(γ/ρ_z)·(λ⁰+κ)^{α−1}·[(λ⁰)³ + (a3/ρ_u)μₙ²λ⁰] / [4(λ⁰)³ + 2mμₙ²λ⁰]
/// ```
///
/// This is exact to first order in `γ` for every mode. For large `n` it
/// agrees with [`predict_perturbation_large_n`], where `κ` is dropped.
pub fn predict_perturbation(p: &PhysicalParams, n: usize, branch: Branch) -> Result<Complex64> {
    perturbation(p, n, branch, true)
}

/// The large-mode form
///
/// ```text
/// ε = −(γ/ρ_z)·[(λ⁰)^{2+α} + (a3/ρ_u)μₙ²(λ⁰)^α] / [4(λ⁰)³ + 2mμₙ²λ⁰]
/// ```
pub fn predict_perturbation_large_n(
    p: &PhysicalParams,
    n: usize,
    branch: Branch,
) -> Result<Complex64> {
    perturbation(p, n, branch, false)
}

fn perturbation(p: &PhysicalParams, n: usize, branch: Branch, keep_kappa: bool) -> Result<Complex64> {
    let d = p.derived();
    let mu2 = p.mode_freq(n).powi(2);
    let l0 = limit_root(p, n, branch);
    let denom = 4.0 * l0 * l0 * l0 + 2.0 * d.m_coef * mu2 * l0;
    if denom.norm() <= 1e-14 * (d.m_coef * mu2 * l0.norm()) {
        return Err(Error::Singular(
            "perturbation denominator vanishes (l² = m/2)".into(),
        ));
    }
    if p.gamma == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let num = if keep_kappa {
        shifted_power(l0, p.kappa, p.alpha - 1.0)? * (l0 * l0 * l0 + p.c_solid() * mu2 * l0)
    } else {
        l0.powf(2.0 + p.alpha) + p.c_solid() * mu2 * l0.powf(p.alpha)
    };
    Ok(-(p.gamma / p.rho_z) * num / denom)
}

/// Limit of `μₙ^{1−α}·ε` as `n → ∞`:
/// `−(γ/ρ_z)·(l² − a3/ρ_u)/(4l² − 2m)·(i·l)^{α−1}`.
/// Its real part is the decay coefficient `β` of the branch.
pub fn asymptotic_coefficient(p: &PhysicalParams, branch: Branch) -> Complex64 {
    let d = p.derived();
    let l = branch.speed(&d);
    let ratio = (l * l - p.c_solid()) / (4.0 * l * l - 2.0 * d.m_coef);
    Complex64::new(0.0, l).powf(p.alpha - 1.0) * (-(p.gamma / p.rho_z) * ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub n: usize,
    pub mu_n: f64,
    pub root: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub eps_pred: Complex64,
    /// `μₙ^{1−α}·Re λₙ`
    pub scaled_re: f64,
    /// `|λₙ/μₙ|`
    pub modulus_ratio: f64,
    /// Relative residual of `f_n` at the conjugate root.
    pub conjugate_residual: f64,
}

impl BranchPoint {
    /// `|λₙ − (λ⁰ + ε)|/|ε|`.
    pub fn perturbation_error(&self, limit: Complex64) -> f64 {
        (self.root - (limit + self.eps_pred)).norm() / self.eps_pred.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumBranch {
    pub branch: Branch,
    pub speed: f64,
    pub beta_predicted: f64,
    pub points: Vec<BranchPoint>,
}

impl SpectrumBranch {
    /// Slope of `log|Re λₙ|` against `log μₙ` over points with `n` in `range`.
    pub fn decay_slope(&self, range: RangeInclusive<usize>) -> Option<LineFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|pt| range.contains(&pt.n))
            .map(|pt| (pt.mu_n, pt.root.re.abs()))
            .unzip();
        fit_loglog(&x, &y)
    }

    /// Whether `½l₋ ≤ |λₙ/μₙ| ≤ 2l₊` holds for every point with `n ≥ n_min`.
    pub fn ratio_bounds_hold(&self, d: &DerivedConstants, n_min: usize) -> bool {
        self.points
            .iter()
            .filter(|pt| pt.n >= n_min)
            .all(|pt| pt.modulus_ratio >= 0.5 * d.l_minus && pt.modulus_ratio <= 2.0 * d.l_plus)
    }

    pub fn max_residual(&self) -> f64 {
        self.points.iter().fold(0.0, |m, pt| m.max(pt.residual))
    }
}

/// Refines the upper-half-plane root of both branches for every mode in
/// `modes`, seeding Newton with `λ⁰ + ε`.
pub fn branch_sweep(
    p: &PhysicalParams,
    modes: RangeInclusive<usize>,
    tol: f64,
) -> Result<[SpectrumBranch; 2]> {
    branch_sweep_with(p, modes, tol, Exec::default())
}

pub fn branch_sweep_with(
    p: &PhysicalParams,
    modes: RangeInclusive<usize>,
    tol: f64,
    exec: Exec,
) -> Result<[SpectrumBranch; 2]> {
    p.validated()?;
    if p.kappa <= 0.0 {
        return Err(Error::KappaGate(
            "the spectral sweep needs the branch cut of (λ+κ)^(α−1) away from the origin".into(),
        ));
    }
    if *modes.start() == 0 {
        return Err(Error::Domain("mode indices start at 1".into()));
    }
    let d = p.derived();
    let ns: Vec<usize> = modes.collect();
    let mut out = Vec::with_capacity(2);
    for branch in Branch::BOTH {
        let points = exec
            .map(&ns, |&n| branch_point(p, n, branch, tol))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        out.push(SpectrumBranch {
            branch,
            speed: branch.speed(&d),
            beta_predicted: asymptotic_coefficient(p, branch).re,
            points,
        });
    }
    let slow = out.pop().unwrap();
    let fast = out.pop().unwrap();
    Ok([fast, slow])
}

fn branch_point(p: &PhysicalParams, n: usize, branch: Branch, tol: f64) -> Result<BranchPoint> {
    let mu = p.mode_freq(n);
    let l0 = limit_root(p, n, branch);
    let eps = predict_perturbation(p, n, branch)?;
    let refined = refine_root(l0 + eps, p, n, tol)?;
    let conj = char_eval(refined.root.conj(), p, n)?.norm() / mu.powi(4);
    Ok(BranchPoint {
        n,
        mu_n: mu,
        root: refined.root,
        residual: refined.residual,
        iterations: refined.iterations,
        eps_pred: eps,
        scaled_re: mu.powf(1.0 - p.alpha) * refined.root.re,
        modulus_ratio: refined.root.norm() / mu,
        conjugate_residual: conj,
    })
}
