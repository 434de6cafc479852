//! The generalized Caputo derivative `∂ₜ^(α,κ)`, realized two ways: directly
//! by product integration against the weakly singular kernel, and through the
//! diffusive representation `φₜ + (y² + κ)φ = U(t)μ(y)` on a quadrature grid in
//! `y`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::mu_eval;

/// `y = e^u`, trapezoid rule in `u` on `[u_min, u_max]` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSubstitution {
    pub u_min: f64,
    pub u_max: f64,
    pub step: f64,
}

/// Quadrature nodes `y_j > 0` and weights `w_j` for `∫₀^∞ · dy`.
///
/// Full-line integrals of even integrands are `2·Σ w_j f(y_j)`. The `mu`
/// values are cached for the order the grid was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusiveGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub substitution: LogSubstitution,
}

/// Spacing of the calibration grid in `u`.
pub const CALIBRATION_STEP: f64 = 0.05;
/// Spacing of the grid used inside time stepping.
pub const DYNAMICS_STEP: f64 = 0.1;

/// Builds the log-substitution trapezoid grid.
///
/// The number of panels is `round((u_max − u_min)/h)`, and the step is
/// adjusted so the end points are hit exactly.
pub fn build_grid(alpha: f64, kappa: f64, u_min: f64, u_max: f64, h: f64) -> Result<DiffusiveGrid> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0,1)")));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("kappa = {kappa} must be >= 0")));
    }
    if !(u_min < u_max) {
        return Err(Error::EmptyGrid { u_min, u_max });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("grid step h = {h} must be positive")));
    }
    let panels = ((u_max - u_min) / h).round().max(1.0) as usize;
    let step = (u_max - u_min) / panels as f64;
    let mut nodes = Vec::with_capacity(panels + 1);
    let mut weights = Vec::with_capacity(panels + 1);
    for j in 0..=panels {
        let u = u_min + j as f64 * step;
        let y = u.exp();
        let end = if j == 0 || j == panels { 0.5 } else { 1.0 };
        nodes.push(y);
        weights.push(step * y * end);
    }
    let mu = nodes
        .iter()
        .map(|&y| mu_eval(y, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiffusiveGrid {
        nodes,
        weights,
        mu,
        alpha,
        substitution: LogSubstitution { u_min, u_max, step },
    })
}

impl DiffusiveGrid {
    /// Default grid for kernel identities: `h = 0.05` and a `u`-range wide
    /// enough that both tails `e^{2αu}` (left) and `e^{−2(1−α)u}` (right) fall
    /// below `e^{−30}`, never narrower than `[−20, 20]`.
    pub fn calibration(alpha: f64) -> Result<Self> {
        let (lo, hi) = tail_range(alpha, 30.0, 20.0);
        build_grid(alpha, 0.0, lo, hi, CALIBRATION_STEP)
    }

    /// Default grid for time stepping: `h = 0.1`, tails cut at `10⁻³`,
    /// never narrower than `[−8, 8]`.
    pub fn dynamics(alpha: f64) -> Result<Self> {
        let (lo, hi) = tail_range(alpha, 1e3f64.ln(), 8.0);
        build_grid(alpha, 0.0, lo, hi, DYNAMICS_STEP)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_ℝ f(y) dy` for an even integrand.
    pub fn full_line<T, F>(&self, f: F) -> T
    where
        T: std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
        F: Fn(f64, f64) -> T,
    {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.mu)
            .map(|((&y, &w), &m)| f(y, m) * (2.0 * w))
            .sum()
    }
}

fn tail_range(alpha: f64, decades: f64, floor: f64) -> (f64, f64) {
    let lo = -(decades / (2.0 * alpha)).max(floor);
    let hi = (decades / (2.0 * (1.0 - alpha))).max(floor);
    (lo, hi)
}

/// Principal-branch `(κ + λ)^{α−1}`, refusing arguments on `(−∞, −κ]`.
pub fn shifted_power(lambda: Complex64, kappa: f64, exponent: f64) -> Result<Complex64> {
    let z = lambda + kappa;
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(Error::BranchCut { at: lambda, kappa });
    }
    Ok(z.powf(exponent))
}

/// `∫_ℝ μ²(y)/(y² + κ + λ) dy = π/sin(απ)·(κ + λ)^{α−1}`.
pub fn kernel_identity_exact(alpha: f64, kappa: f64, lambda: Complex64) -> Result<Complex64> {
    Ok(shifted_power(lambda, kappa, alpha - 1.0)? * (PI / (alpha * PI).sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelCheck {
    pub numeric: Complex64,
    pub exact: Complex64,
    pub rel_err: f64,
}

/// Compares the grid quadrature of `∫ μ²/(y² + κ + λ)` with its closed form.
pub fn check_kernel_identity(
    grid: &DiffusiveGrid,
    alpha: f64,
    kappa: f64,
    lambda: Complex64,
) -> Result<KernelCheck> {
    let exact = kernel_identity_exact(alpha, kappa, lambda)?;
    let numeric: Complex64 = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .map(|(&y, &w)| {
            let mu2 = y.powf(2.0 * alpha - 1.0);
            (2.0 * w * mu2) / (y * y + kappa + lambda)
        })
        .sum();
    Ok(KernelCheck {
        numeric,
        exact,
        rel_err: (numeric - exact).norm() / exact.norm(),
    })
}

/// Uniformly sampled signal `f(t_k)`, `t_k = k·Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSamples {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SignalSamples {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("sample spacing dt = {dt} must be positive")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("a signal needs at least two samples".into()));
        }
        Ok(Self { dt, values })
    }

    /// Samples `f` at `t = 0, dt, …, t_end` (`t_end` rounded to the grid).
    pub fn from_fn(dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = (t_end / dt).round() as usize;
        Self::new(dt, (0..=n).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|k| self.time(k))
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Index of `t` on the sample grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        let on_grid = (k * self.dt - t).abs() <= 1e-9 * self.dt.max(t.abs());
        if t < 0.0 || !on_grid || k as usize >= self.values.len() {
            return Err(Error::OutOfRange {
                t,
                t_min: 0.0,
                t_max: self.t_end(),
            });
        }
        Ok(k as usize)
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("order {alpha} must lie in (0,1)")))
    }
}

/// `(1/Γ(1−α)) ∫₀ᵗ (t−s)^{−α} e^{−κ(t−s)} f′(s) ds` by product integration.
///
/// `f′` is the slope of the piecewise-linear interpolant of the samples, the
/// power kernel is integrated exactly on every subinterval, and the
/// exponential weight is frozen at the subinterval midpoint.
pub fn caputo_direct(f: &SignalSamples, alpha: f64, kappa: f64, t: f64) -> Result<f64> {
    check_order(alpha)?;
    let k = f.index_of(t)?;
    let dt = f.dt;
    let beta = 1.0 - alpha;
    let mut acc = 0.0;
    for i in 0..k {
        let a = (k - i) as f64 * dt;
        let b = (k - i - 1) as f64 * dt;
        let slope = (f.values[i + 1] - f.values[i]) / dt;
        let kern = (a.powf(beta) - b.powf(beta)) / beta;
        acc += slope * kern * (-kappa * (a - 0.5 * dt)).exp();
    }
    Ok(acc / gamma(beta))
}

/// `[I^{α,κ} f](t) = e^{−κt} ∫₀ᵗ (t−s)^{α−1}/Γ(α) e^{κs} f(s) ds`.
///
/// Product integration with the piecewise-linear interpolant of `f` and the
/// exponential weight frozen at subinterval midpoints.
pub fn i_alpha_kappa(f: &SignalSamples, alpha: f64, kappa: f64, t: f64) -> Result<f64> {
    check_order(alpha)?;
    let k = f.index_of(t)?;
    let dt = f.dt;
    let mut acc = 0.0;
    for i in 0..k {
        let a = (k - i) as f64 * dt;
        let b = (k - i - 1) as f64 * dt;
        // ∫_b^a τ^{α−1} dτ and ∫_b^a τ^{α−1}(a − τ) dτ
        let m0 = (a.powf(alpha) - b.powf(alpha)) / alpha;
        let m1 = a * m0 - (a.powf(alpha + 1.0) - b.powf(alpha + 1.0)) / (alpha + 1.0);
        let f0 = f.values[i];
        let df = (f.values[i + 1] - f0) / dt;
        acc += (f0 * m0 + df * m1) * (-kappa * (a - 0.5 * dt)).exp();
    }
    Ok(acc / gamma(alpha))
}

/// `(eˣ − 1)/x` and `(eˣ − 1 − x)/x²`, stable near zero.
fn phi_functions(x: f64) -> (f64, f64) {
    if x.abs() < 1e-2 {
        let p1 = 1.0 + x * (1.0 / 2.0 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)));
        let p2 = 0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0)));
        (p1, p2)
    } else {
        let em1 = x.exp_m1();
        (em1 / x, (em1 - x) / (x * x))
    }
}

/// Output of the diffusive system driven by `U`, starting from `φ(y, 0) = 0`:
/// `O(t_k) = (sin απ/π)·∫_ℝ μ(y)φ(y, t_k) dy`.
///
/// Each node is advanced with the exact exponential propagator for a
/// piecewise-linear input, so the only discretization error is the grid in `y`.
pub fn diffusive_realize(
    input: &SignalSamples,
    grid: &DiffusiveGrid,
    alpha: f64,
    kappa: f64,
) -> Result<SignalSamples> {
    diffusive_realize_with(input, grid, alpha, kappa, Exec::default())
}

pub fn diffusive_realize_with(
    input: &SignalSamples,
    grid: &DiffusiveGrid,
    alpha: f64,
    kappa: f64,
    exec: Exec,
) -> Result<SignalSamples> {
    check_order(alpha)?;
    if (grid.alpha - alpha).abs() > 0.0 {
        return Err(Error::Domain(format!(
            "grid was built for alpha = {}, not {alpha}",
            grid.alpha
        )));
    }
    let h = input.dt;
    let steps = input.values.len();
    let node_ids: Vec<usize> = (0..grid.len()).collect();
    let chunks: Vec<&[usize]> = node_ids.chunks(64).collect();
    let partials = exec.map(&chunks, |chunk| {
        let mut out = vec![0.0; steps];
        for &j in chunk.iter() {
            let rate = grid.nodes[j] * grid.nodes[j] + kappa;
            let decay = (-rate * h).exp();
            let (p1, p2) = phi_functions(-rate * h);
            let a_level = h * p1;
            let a_slope = h * p2; // multiplies U_{k+1} − U_k
            let mu = grid.mu[j];
            let c = 2.0 * grid.weights[j] * mu;
            let mut phi = 0.0;
            for k in 1..steps {
                let u0 = input.values[k - 1];
                let u1 = input.values[k];
                phi = decay * phi + mu * (u0 * a_level + (u1 - u0) * a_slope);
                out[k] += c * phi;
            }
        }
        out
    });
    let norm = (alpha * PI).sin() / PI;
    let mut values = vec![0.0; steps];
    for part in &partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    values.iter_mut().for_each(|v| *v *= norm);
    SignalSamples::new(h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_grid_has_801_nodes_and_reproduces_pi() {
        let g = build_grid(0.5, 1.0, -20.0, 20.0, 0.05).unwrap();
        assert_eq!(g.len(), 801);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes[0] > 0.0 && g.weights.iter().all(|&w| w > 0.0));
        let c = check_kernel_identity(&g, 0.5, 1.0, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(c.exact.re, PI, max_relative = 1e-15);
        assert!(c.rel_err < 1e-8, "rel_err {}", c.rel_err);
    }

    #[test]
    fn empty_range_is_an_error() {
        assert!(matches!(
            build_grid(0.5, 1.0, 1.0, 1.0, 0.1),
            Err(Error::EmptyGrid { .. })
        ));
    }

    #[test]
    fn truncated_range_is_inaccurate() {
        let g = build_grid(0.5, 1.0, -20.0, 1.0, 0.05).unwrap();
        let c = check_kernel_identity(&g, 0.5, 1.0, Complex64::new(0.0, 0.0)).unwrap();
        assert!(c.rel_err > 1e-2);
    }

    #[test]
    fn closed_form_spot_values() {
        let e = kernel_identity_exact(0.25, 1.0, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(e.re, PI * 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(e.re, 4.442883, max_relative = 1e-6);
        let e = kernel_identity_exact(0.5, 1.0, Complex64::new(0.0, 1.0)).unwrap();
        let expect = Complex64::new(1.0, 1.0).powf(-0.5) * PI;
        assert_relative_eq!((e - expect).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn branch_cut_is_refused() {
        let g = DiffusiveGrid::calibration(0.5).unwrap();
        assert!(matches!(
            check_kernel_identity(&g, 0.5, 1.0, Complex64::new(-2.0, 0.0)),
            Err(Error::BranchCut { .. })
        ));
        assert!(check_kernel_identity(&g, 0.5, 1.0, Complex64::new(-1.0, 0.0)).is_err());
        assert!(check_kernel_identity(&g, 0.5, 1.0, Complex64::new(-2.0, 1e-3)).is_ok());
    }

    #[test]
    fn constant_signal_has_zero_caputo_derivative() {
        let f = SignalSamples::from_fn(0.01, 1.0, |_| 3.0).unwrap();
        assert_eq!(caputo_direct(&f, 0.4, 0.7, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn off_grid_time_is_refused() {
        let f = SignalSamples::from_fn(0.01, 1.0, |t| t).unwrap();
        assert!(caputo_direct(&f, 0.5, 0.0, 1.5).is_err());
        assert!(caputo_direct(&f, 0.5, 0.0, 0.0051).is_err());
        assert!(SignalSamples::new(0.1, vec![1.0]).is_err());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let g = DiffusiveGrid::dynamics(0.5).unwrap();
        let u = SignalSamples::from_fn(0.01, 1.0, |_| 0.0).unwrap();
        let o = diffusive_realize(&u, &g, 0.5, 1.0).unwrap();
        assert!(o.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phi_functions_are_continuous_at_switch() {
        for x in [-1e-2 - 1e-12, -1e-2 + 1e-12] {
            let (a, b) = phi_functions(x);
            assert_relative_eq!(a, (x.exp() - 1.0) / x, max_relative = 1e-12);
            let series = 0.5 + x / 6.0 + x * x / 24.0 + x.powi(3) / 120.0 + x.powi(4) / 720.0;
            assert_relative_eq!(b, series, max_relative = 1e-10);
        }
    }
}
