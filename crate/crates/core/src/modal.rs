//! Sine-mode simulation of the augmented system.
//!
//! Under Dirichlet conditions every mode `sin(nπx/L)` evolves independently:
//! four displacement/velocity coefficients plus the memory field `φ` on the
//! positive `y` nodes. Each mode is advanced with Crank–Nicolson, whose
//! discrete energy obeys `E_{k+1} − E_k = −Δt·D(X_{k+1/2})` exactly.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernel::DiffusiveGrid;
use crate::model::PhysicalParams;

/// State of one sine mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub n: usize,
    pub z: f64,
    pub w: f64,
    pub u: f64,
    pub v: f64,
    pub phi: Vec<f64>,
}

impl ModalState {
    pub fn at_rest(n: usize, nodes: usize) -> Self {
        Self {
            n,
            z: 0.0,
            w: 0.0,
            u: 0.0,
            v: 0.0,
            phi: vec![0.0; nodes],
        }
    }

    /// Layout `[z, w, u, v, φ_1, …, φ_J]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut x = DVector::zeros(4 + self.phi.len());
        x[0] = self.z;
        x[1] = self.w;
        x[2] = self.u;
        x[3] = self.v;
        x.rows_mut(4, self.phi.len()).copy_from_slice(&self.phi);
        x
    }

    pub fn from_vector(n: usize, x: &DVector<f64>) -> Self {
        Self {
            n,
            z: x[0],
            w: x[1],
            u: x[2],
            v: x[3],
            phi: x.rows(4, x.len() - 4).iter().copied().collect(),
        }
    }
}

/// Closed-form or sampled initial profile on `(0, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Zero,
    /// `amplitude·sin(mode·πx/L)`
    Sine { mode: usize, amplitude: f64 },
    /// `amplitude·x(L − x)`
    Parabola { amplitude: f64 },
    /// Sine coefficients `amplitude·n^{−exponent}`.
    PowerLaw { amplitude: f64, exponent: f64 },
    /// Sine coefficients given directly (missing entries are zero).
    Coefficients(Vec<f64>),
    /// Values on the uniform grid `x_i = iL/M`, `i = 0..=M`.
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub z0: Profile,
    pub z1: Profile,
    pub u0: Profile,
    pub u1: Profile,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            z0: Profile::Zero,
            z1: Profile::Zero,
            u0: Profile::Zero,
            u1: Profile::Zero,
        }
    }
}

/// `sin(πs)` with exact zeros at integer `s`.
pub(crate) fn sin_pi(s: f64) -> f64 {
    let r = s - 2.0 * (s / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else {
        (std::f64::consts::PI * r).sin()
    }
}

/// Sine coefficients `b_n = (2/L)∫₀ᴸ f(x) sin(nπx/L) dx`, `n = 1..=n_modes`.
pub fn project_initial(profile: &Profile, n_modes: usize, length: f64) -> Result<Vec<f64>> {
    let pi = std::f64::consts::PI;
    let coeffs = match profile {
        Profile::Zero => vec![0.0; n_modes],
        Profile::Sine { mode, amplitude } => {
            if *mode == 0 {
                return Err(Error::Domain("sine profile mode index starts at 1".into()));
            }
            (1..=n_modes)
                .map(|n| if n == *mode { *amplitude } else { 0.0 })
                .collect()
        }
        Profile::Parabola { amplitude } => (1..=n_modes)
            .map(|n| {
                if n % 2 == 1 {
                    amplitude * 8.0 * length * length / (pi.powi(3) * (n as f64).powi(3))
                } else {
                    0.0
                }
            })
            .collect(),
        Profile::PowerLaw {
            amplitude,
            exponent,
        } => (1..=n_modes)
            .map(|n| amplitude * (n as f64).powf(-exponent))
            .collect(),
        Profile::Coefficients(c) => (0..n_modes).map(|i| c.get(i).copied().unwrap_or(0.0)).collect(),
        Profile::Sampled(values) => {
            if values.len() < 3 {
                return Err(Error::Domain("sampled profile needs at least 3 points".into()));
            }
            let m = values.len() - 1;
            let (first, last) = (values[0], values[m]);
            if first != 0.0 || last != 0.0 {
                warn!("sampled profile does not vanish at the boundary ({first}, {last}); expect Gibbs oscillations");
            }
            // trapezoid rule; end terms vanish because sin(0) = sin(nπ) = 0
            (1..=n_modes)
                .map(|n| {
                    let s: f64 = (1..m)
                        .map(|i| values[i] * sin_pi((n * i) as f64 / m as f64))
                        .sum();
                    2.0 * s / m as f64
                })
                .collect()
        }
    };
    Ok(coeffs)
}

/// Dense generator of mode `n` on the given grid, acting on
/// `[z, w, u, v, φ_1, …, φ_J]`.
pub fn assemble_generator(p: &PhysicalParams, n: usize, grid: &DiffusiveGrid) -> DMatrix<f64> {
    let j = grid.len();
    let mu2 = p.mode_freq(n).powi(2);
    let zeta = p.zeta();
    let mut a = DMatrix::zeros(4 + j, 4 + j);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = -p.a1 * mu2 / p.rho_z;
    a[(1, 2)] = -p.a2 * mu2 / p.rho_z;
    a[(2, 3)] = 1.0;
    a[(3, 2)] = -p.a3 * mu2 / p.rho_u;
    a[(3, 0)] = -p.a2 * mu2 / p.rho_u;
    for k in 0..j {
        let (y, wgt, mu) = (grid.nodes[k], grid.weights[k], grid.mu[k]);
        a[(1, 4 + k)] = -zeta * 2.0 * wgt * mu / p.rho_z;
        a[(4 + k, 4 + k)] = -(y * y + p.kappa);
        a[(4 + k, 1)] = mu;
    }
    a
}

/// Diagonal-plus-block matrix `H` of the modal energy `E = ½ XᵀHX`,
/// including the Parseval factor `L/2`.
pub fn energy_weights(p: &PhysicalParams, n: usize, grid: &DiffusiveGrid) -> DMatrix<f64> {
    let j = grid.len();
    let mu2 = p.mode_freq(n).powi(2);
    let half_l = 0.5 * p.length;
    let mut h = DMatrix::zeros(4 + j, 4 + j);
    h[(0, 0)] = half_l * p.a1 * mu2;
    h[(0, 2)] = half_l * p.a2 * mu2;
    h[(2, 0)] = half_l * p.a2 * mu2;
    h[(2, 2)] = half_l * p.a3 * mu2;
    h[(1, 1)] = half_l * p.rho_z;
    h[(3, 3)] = half_l * p.rho_u;
    for k in 0..j {
        h[(4 + k, 4 + k)] = half_l * p.zeta() * 2.0 * grid.weights[k];
    }
    h
}

/// Dense Crank–Nicolson propagator `(I − Δt/2·A)⁻¹(I + Δt/2·A)`.
pub fn cn_propagator(a: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = &id - a * (0.5 * dt);
    let rhs = &id + a * (0.5 * dt);
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("I − (dt/2)A is singular for dt = {dt}")))
}

/// One Crank–Nicolson step with a precomputed dense propagator.
pub fn step_cn(state: &ModalState, propagator: &DMatrix<f64>) -> ModalState {
    ModalState::from_vector(state.n, &(propagator * state.to_vector()))
}

/// Structured Crank–Nicolson step for one mode.
///
/// The memory rows couple only to `w`, so the implicit system reduces to a
/// 4×4 Schur complement that is inverted once; a step then costs `O(J)`.
#[derive(Debug, Clone)]
pub struct ModeStepper {
    pub n: usize,
    half_dt: f64,
    // [z, w, u, v] stiffness terms
    k11: f64,
    k12: f64,
    k21: f64,
    k22: f64,
    damping: f64, // ζ/ρ_z
    reduced_inverse: Matrix4<f64>,
    explicit_factor: Vec<f64>, // 1 − (Δt/2)·r_j
    implicit_factor: Vec<f64>, // 1/(1 + (Δt/2)·r_j)
    source: Vec<f64>,          // μ(y_j)
    coupling: Vec<f64>,        // 2·w_j·μ(y_j)
    rates: Vec<f64>,           // r_j = y_j² + κ
    mem_weight: Vec<f64>,      // 2·w_j
    energy: EnergyForm,
}

#[derive(Debug, Clone, Copy)]
struct EnergyForm {
    half_l: f64,
    rho_z: f64,
    rho_u: f64,
    reduced_a1: f64, // (a1 − a2²/a3)·μ²
    cross: f64,      // a2/√a3·μ
    solid: f64,      // √a3·μ
    zeta: f64,
}

/// Energy and dissipation of one mode after a step, plus the dissipation at
/// the midpoint state that enters the exact discrete balance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepRecord {
    pub energy: f64,
    pub dissipation: f64,
    pub midpoint_dissipation: f64,
}

impl ModeStepper {
    pub fn new(p: &PhysicalParams, n: usize, grid: &DiffusiveGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step dt = {dt} must be positive")));
        }
        let c = 0.5 * dt;
        let mu_n = p.mode_freq(n);
        let mu2 = mu_n * mu_n;
        let zeta = p.zeta();
        let rates: Vec<f64> = grid.nodes.iter().map(|y| y * y + p.kappa).collect();
        let implicit_factor: Vec<f64> = rates.iter().map(|r| 1.0 / (1.0 + c * r)).collect();
        let coupling: Vec<f64> = grid
            .weights
            .iter()
            .zip(&grid.mu)
            .map(|(w, m)| 2.0 * w * m)
            .collect();
        let g: f64 = coupling
            .iter()
            .zip(&implicit_factor)
            .zip(&grid.mu)
            .map(|((s, d), m)| s * d * m)
            .sum();
        let (k11, k12) = (p.a1 * mu2 / p.rho_z, p.a2 * mu2 / p.rho_z);
        let (k21, k22) = (p.a2 * mu2 / p.rho_u, p.a3 * mu2 / p.rho_u);
        let damping = zeta / p.rho_z;
        #[rustfmt::skip]
        let reduced = Matrix4::new(
            1.0,     -c,                          0.0,     0.0,
            c * k11, 1.0 + c * c * damping * g,   c * k12, 0.0,
            0.0,     0.0,                         1.0,     -c,
            c * k21, 0.0,                         c * k22, 1.0,
        );
        let reduced_inverse = reduced.try_inverse().ok_or_else(|| {
            Error::Singular(format!("reduced Crank–Nicolson matrix of mode {n}"))
        })?;
        Ok(Self {
            n,
            half_dt: c,
            k11,
            k12,
            k21,
            k22,
            damping,
            reduced_inverse,
            explicit_factor: rates.iter().map(|r| 1.0 - c * r).collect(),
            implicit_factor,
            source: grid.mu.clone(),
            coupling,
            mem_weight: grid.weights.iter().map(|w| 2.0 * w).collect(),
            rates,
            energy: EnergyForm {
                half_l: 0.5 * p.length,
                rho_z: p.rho_z,
                rho_u: p.rho_u,
                reduced_a1: (p.a1 - p.a2 * p.a2 / p.a3) * mu2,
                cross: p.a2 / p.a3.sqrt() * mu_n,
                solid: p.a3.sqrt() * mu_n,
                zeta,
            },
        })
    }

    pub fn nodes(&self) -> usize {
        self.rates.len()
    }

    /// Modal energy `E_n` (with the Parseval factor).
    pub fn energy(&self, s: &ModalState) -> f64 {
        let mem: f64 = self.mem_weight.iter().zip(&s.phi).map(|(w, f)| w * f * f).sum();
        self.energy_with_memory(s, mem)
    }

    fn energy_with_memory(&self, s: &ModalState, mem: f64) -> f64 {
        let e = &self.energy;
        let grad = e.cross * s.z + e.solid * s.u;
        0.5 * e.half_l
            * (e.rho_z * s.w * s.w
                + e.rho_u * s.v * s.v
                + e.reduced_a1 * s.z * s.z
                + grad * grad
                + e.zeta * mem)
    }

    /// Modal dissipation `D_n = (L/2)·ζ∫(y² + κ)φ² dy`.
    pub fn dissipation(&self, s: &ModalState) -> f64 {
        let sum: f64 = self
            .mem_weight
            .iter()
            .zip(&self.rates)
            .zip(&s.phi)
            .map(|((w, r), f)| w * r * f * f)
            .sum();
        self.energy.half_l * self.energy.zeta * sum
    }

    /// Advances `s` by one step in place.
    pub fn step(&self, s: &mut ModalState, scratch: &mut Vec<f64>) -> StepRecord {
        let c = self.half_dt;
        scratch.resize(self.nodes(), 0.0);
        let mut old_force = 0.0;
        let mut reduced_force = 0.0;
        for j in 0..self.nodes() {
            let phi = s.phi[j];
            old_force += self.coupling[j] * phi;
            let r = self.explicit_factor[j] * phi + c * self.source[j] * s.w;
            scratch[j] = r;
            reduced_force += self.coupling[j] * self.implicit_factor[j] * r;
        }
        let rhs = Vector4::new(
            s.z + c * s.w,
            s.w - c * (self.k11 * s.z + self.k12 * s.u + self.damping * old_force)
                - c * self.damping * reduced_force,
            s.u + c * s.v,
            s.v - c * (self.k21 * s.z + self.k22 * s.u),
        );
        let next = self.reduced_inverse * rhs;
        let w_new = next[1];
        let mut mem = 0.0;
        let mut diss = 0.0;
        let mut diss_mid = 0.0;
        for j in 0..self.nodes() {
            let old = s.phi[j];
            let new = self.implicit_factor[j] * (scratch[j] + c * self.source[j] * w_new);
            s.phi[j] = new;
            let wr = self.mem_weight[j] * self.rates[j];
            let mid = 0.5 * (old + new);
            mem += self.mem_weight[j] * new * new;
            diss += wr * new * new;
            diss_mid += wr * mid * mid;
        }
        s.z = next[0];
        s.w = w_new;
        s.u = next[2];
        s.v = next[3];
        let scale = self.energy.half_l * self.energy.zeta;
        StepRecord {
            energy: self.energy_with_memory(s, mem),
            dissipation: scale * diss,
            midpoint_dissipation: scale * diss_mid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: PhysicalParams,
    pub n_modes: usize,
    pub dt: f64,
    pub t_end: f64,
    pub grid: DiffusiveGrid,
    pub initial: InitialData,
    /// Record modal coefficients every this many steps (0 keeps only t = 0
    /// and the final time).
    pub snapshot_every: usize,
}

impl SimConfig {
    pub fn new(params: PhysicalParams, n_modes: usize, dt: f64, t_end: f64) -> Result<Self> {
        let grid = DiffusiveGrid::dynamics(params.alpha)?;
        Ok(Self {
            params,
            n_modes,
            dt,
            t_end,
            grid,
            initial: InitialData::default(),
            snapshot_every: 0,
        })
    }

    pub fn with_initial(mut self, initial: InitialData) -> Self {
        self.initial = initial;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validated()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Domain(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.n_modes == 0 {
            return Err(Error::Domain("at least one mode is required".into()));
        }
        if self.steps() == 0 {
            return Err(Error::Domain("t_end is shorter than one time step".into()));
        }
        if self.grid.alpha != self.params.alpha {
            return Err(Error::Domain("grid alpha differs from model alpha".into()));
        }
        Ok(())
    }

    pub fn initial_states(&self) -> Result<Vec<ModalState>> {
        let (n, l) = (self.n_modes, self.params.length);
        let z0 = project_initial(&self.initial.z0, n, l)?;
        let z1 = project_initial(&self.initial.z1, n, l)?;
        let u0 = project_initial(&self.initial.u0, n, l)?;
        let u1 = project_initial(&self.initial.u1, n, l)?;
        Ok((0..n)
            .map(|i| ModalState {
                n: i + 1,
                z: z0[i],
                w: z1[i],
                u: u0[i],
                v: u1[i],
                phi: vec![0.0; self.grid.len()],
            })
            .collect())
    }
}

/// Total energy, dissipation and balance residuals at every time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// `E_k − E_{k−1} + Δt·D(X_{k−1/2})` with `D` at the midpoint state; zero
    /// up to round-off for Crank–Nicolson. Entry 0 is 0.
    pub residual: Vec<f64>,
    /// `E_k − E_{k−1} + Δt·(D_{k−1} + D_k)/2`, the defect against the
    /// continuous balance with trapezoidal dissipation. Entry 0 is 0.
    pub balance_defect: Vec<f64>,
}

impl EnergyTrace {
    pub fn initial_energy(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Largest step-to-step energy increase.
    pub fn max_increase(&self) -> f64 {
        self.energy
            .windows(2)
            .fold(0.0, |m, w| m.max(w[1] - w[0]))
    }

    /// `Σ_k` of [`Self::balance_defect`]: `E(T) − E(0) + ∫₀ᵀ D dt` with the
    /// trapezoid rule.
    pub fn cumulative_defect(&self) -> f64 {
        self.balance_defect.iter().sum()
    }
}

/// Modal coefficients (without the memory field) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Vec<Snapshot>,
    pub trace: EnergyTrace,
    pub final_states: Vec<ModalState>,
    pub length: f64,
}

const BLOCK_STEPS: usize = 512;

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    simulate_with(cfg, Exec::default())
}

/// Runs every mode for `cfg.steps()` steps.
///
/// Modes are distributed over workers in blocks of time steps; per-step mode
/// energies are summed in mode order so the result does not depend on the
/// execution strategy.
pub fn simulate_with(cfg: &SimConfig, exec: Exec) -> Result<SimOutput> {
    cfg.validate()?;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let states = cfg.initial_states()?;
    let mut workers: Vec<(ModalState, ModeStepper, Vec<f64>)> = states
        .into_iter()
        .map(|s| {
            let st = ModeStepper::new(&cfg.params, s.n, &cfg.grid, dt)?;
            Ok((s, st, Vec::new()))
        })
        .collect::<Result<_>>()?;

    let mut trace = EnergyTrace::default();
    let e0: f64 = workers.iter().map(|(s, st, _)| st.energy(s)).sum();
    let d0: f64 = workers.iter().map(|(s, st, _)| st.dissipation(s)).sum();
    trace.times.push(0.0);
    trace.energy.push(e0);
    trace.dissipation.push(d0);
    trace.residual.push(0.0);
    trace.balance_defect.push(0.0);
    let mut trajectory = vec![snapshot(0.0, &workers)];

    let stride = cfg.snapshot_every;
    let mut done = 0;
    while done < steps {
        let block = BLOCK_STEPS.min(steps - done);
        let results: Vec<(Vec<StepRecord>, Vec<[f64; 4]>)> =
            exec.map_mut(&mut workers, |(s, st, scratch)| {
                let mut recs = Vec::with_capacity(block);
                let mut snaps = Vec::new();
                for k in 0..block {
                    recs.push(st.step(s, scratch));
                    if stride > 0 && (done + k + 1) % stride == 0 {
                        snaps.push([s.z, s.w, s.u, s.v]);
                    }
                }
                (recs, snaps)
            });
        let mut snap_slot = 0;
        for k in 0..block {
            let mut rec = StepRecord::default();
            for (mode, _) in &results {
                rec.energy += mode[k].energy;
                rec.dissipation += mode[k].dissipation;
                rec.midpoint_dissipation += mode[k].midpoint_dissipation;
            }
            let step = done + k + 1;
            let e_prev = *trace.energy.last().unwrap();
            let d_prev = *trace.dissipation.last().unwrap();
            trace.times.push(step as f64 * dt);
            trace.residual.push(rec.energy - e_prev + dt * rec.midpoint_dissipation);
            trace
                .balance_defect
                .push(rec.energy - e_prev + dt * 0.5 * (d_prev + rec.dissipation));
            trace.energy.push(rec.energy);
            trace.dissipation.push(rec.dissipation);
            if stride > 0 && step % stride == 0 {
                let pick = |c: usize| results.iter().map(|(_, s)| s[snap_slot][c]).collect();
                trajectory.push(Snapshot {
                    time: step as f64 * dt,
                    z: pick(0),
                    w: pick(1),
                    u: pick(2),
                    v: pick(3),
                });
                snap_slot += 1;
            }
        }
        done += block;
    }
    if stride == 0 || steps % stride != 0 {
        trajectory.push(snapshot(steps as f64 * dt, &workers));
    }
    Ok(SimOutput {
        trajectory,
        trace,
        final_states: workers.into_iter().map(|(s, _, _)| s).collect(),
        length: cfg.params.length,
    })
}

fn snapshot(time: f64, workers: &[(ModalState, ModeStepper, Vec<f64>)]) -> Snapshot {
    Snapshot {
        time,
        z: workers.iter().map(|w| w.0.z).collect(),
        w: workers.iter().map(|w| w.0.w).collect(),
        u: workers.iter().map(|w| w.0.u).collect(),
        v: workers.iter().map(|w| w.0.v).collect(),
    }
}

/// Physical fields on a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub time: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

/// Synthesizes `z(x, t) = Σ z_n(t) sin(nπx/L)` and likewise `u` from the
/// recorded snapshot closest to `t`.
pub fn reconstruct(trajectory: &[Snapshot], length: f64, x_grid: &[f64], t: f64) -> Result<Fields> {
    let snap = trajectory
        .iter()
        .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
        .ok_or_else(|| Error::Domain("empty trajectory".into()))?;
    if (snap.time - t).abs() > 1e-9 * t.abs().max(1.0) {
        warn!("t = {t} is not a recorded time; using nearest snapshot at {}", snap.time);
    }
    let synth = |coef: &[f64]| -> Vec<f64> {
        x_grid
            .iter()
            .map(|&x| {
                let s = x / length;
                coef.iter()
                    .enumerate()
                    .map(|(i, c)| c * sin_pi((i + 1) as f64 * s))
                    .sum()
            })
            .collect()
    };
    Ok(Fields {
        time: snap.time,
        x: x_grid.to_vec(),
        z: synth(&snap.z),
        u: synth(&snap.u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sine_initial() -> InitialData {
        InitialData {
            z0: Profile::Sine {
                mode: 1,
                amplitude: 1.0,
            },
            ..Default::default()
        }
    }

    fn undamped() -> PhysicalParams {
        PhysicalParams {
            gamma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn projection_examples() {
        let b = project_initial(&Profile::Sine { mode: 1, amplitude: 1.0 }, 5, PI).unwrap();
        assert_eq!(b, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let b = project_initial(&Profile::Sine { mode: 3, amplitude: 1.0 }, 5, PI).unwrap();
        assert_eq!(b, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = project_initial(&Profile::Parabola { amplitude: 1.0 }, 6, PI).unwrap();
        for (i, c) in b.iter().enumerate() {
            let n = (i + 1) as f64;
            let expect = if (i + 1) % 2 == 1 { 8.0 / (PI * n.powi(3)) } else { 0.0 };
            assert_relative_eq!(*c, expect, max_relative = 1e-14);
        }
        assert!(project_initial(&Profile::Sine { mode: 0, amplitude: 1.0 }, 3, PI).is_err());
    }

    #[test]
    fn sampled_parabola_converges_to_closed_form() {
        let m = 4000;
        let vals: Vec<f64> = (0..=m)
            .map(|i| {
                let x = PI * i as f64 / m as f64;
                x * (PI - x)
            })
            .collect();
        let b = project_initial(&Profile::Sampled(vals), 5, PI).unwrap();
        let exact = project_initial(&Profile::Parabola { amplitude: 1.0 }, 5, PI).unwrap();
        for (a, e) in b.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
    }

    #[test]
    fn undamped_block_has_limit_frequencies() {
        let p = undamped();
        let grid = DiffusiveGrid::dynamics(p.alpha).unwrap();
        let a = assemble_generator(&p, 1, &grid);
        let block = a.view((0, 0), (4, 4)).into_owned();
        let mut im: Vec<f64> = block.complex_eigenvalues().iter().map(|z| {
            assert!(z.re.abs() < 1e-12);
            z.im
        }).collect();
        im.sort_by(f64::total_cmp);
        let s3 = 3f64.sqrt();
        for (got, want) in im.iter().zip([-s3, -1.0, 1.0, s3]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        // memory rows decouple from the mechanical block apart from the w source
        for k in 0..grid.len() {
            assert_eq!(a[(1, 4 + k)], 0.0);
        }
    }

    #[test]
    fn quadratic_form_is_dissipative() {
        let p = PhysicalParams::default();
        let grid = DiffusiveGrid::dynamics(p.alpha).unwrap();
        for n in [1, 7, 40] {
            let a = assemble_generator(&p, n, &grid);
            let h = energy_weights(&p, n, &grid);
            let ha = &h * &a;
            let sym = (&ha + ha.transpose()) * 0.5;
            let j = grid.len();
            for r in 0..4 + j {
                for c in 0..4 + j {
                    let expect = if r == c && r >= 4 {
                        let k = r - 4;
                        -0.5 * p.length * p.zeta() * 2.0 * grid.weights[k]
                            * (grid.nodes[k].powi(2) + p.kappa)
                    } else {
                        0.0
                    };
                    let scale = ha[(r, c)].abs().max(1.0);
                    assert!((sym[(r, c)] - expect).abs() < 1e-12 * scale, "({r},{c})");
                }
            }
        }
    }

    #[test]
    fn structured_stepper_matches_dense_propagator() {
        let p = PhysicalParams::default();
        let grid = DiffusiveGrid::dynamics(p.alpha).unwrap();
        let dt = 0.01;
        for n in [1, 5] {
            let prop = cn_propagator(&assemble_generator(&p, n, &grid), dt).unwrap();
            let st = ModeStepper::new(&p, n, &grid, dt).unwrap();
            let mut fast = ModalState::at_rest(n, grid.len());
            fast.z = 0.3;
            fast.w = -1.0;
            fast.u = 0.2;
            fast.v = 0.5;
            let mut dense = fast.clone();
            let h = energy_weights(&p, n, &grid);
            let mut scratch = Vec::new();
            for _ in 0..200 {
                let rec = st.step(&mut fast, &mut scratch);
                dense = step_cn(&dense, &prop);
                let x = dense.to_vector();
                assert_relative_eq!(rec.energy, 0.5 * x.dot(&(&h * &x)), max_relative = 1e-10);
            }
            let diff = (fast.to_vector() - dense.to_vector()).amax();
            assert!(diff < 1e-11, "mode {n}: {diff}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = SimConfig::new(PhysicalParams::default(), 4, 0.01, 1.0).unwrap();
        let out = simulate(&cfg).unwrap();
        assert!(out.trace.energy.iter().all(|e| *e == 0.0));
        assert!(out.final_states.iter().all(|s| s.z == 0.0 && s.phi.iter().all(|f| *f == 0.0)));
    }

    #[test]
    fn undamped_single_mode_keeps_half_pi() {
        let cfg = SimConfig::new(undamped(), 1, 0.01, 20.0)
            .unwrap()
            .with_initial(sine_initial());
        let out = simulate(&cfg).unwrap();
        for e in &out.trace.energy {
            assert_relative_eq!(*e, PI / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn damped_energy_strictly_decreases() {
        let cfg = SimConfig::new(PhysicalParams::default(), 1, 0.01, 10.0)
            .unwrap()
            .with_initial(sine_initial());
        let out = simulate(&cfg).unwrap();
        let tr = &out.trace;
        assert!(tr.energy.windows(2).all(|w| w[1] < w[0]));
        assert!(tr.dissipation[1..].iter().all(|d| *d > 0.0));
        assert!(tr.max_abs_residual() < 1e-13 * tr.initial_energy());
    }

    #[test]
    fn modes_evolve_independently() {
        let p = PhysicalParams::default();
        let init = InitialData {
            z0: Profile::PowerLaw {
                amplitude: 1.0,
                exponent: 2.0,
            },
            u1: Profile::Coefficients(vec![0.0, 0.4, -0.1]),
            ..Default::default()
        };
        let cfg = SimConfig::new(p.clone(), 3, 0.02, 2.0)
            .unwrap()
            .with_initial(init.clone());
        let all = simulate(&cfg).unwrap();
        let mut summed = vec![0.0; all.trace.energy.len()];
        for n in 1..=3 {
            let z0: Vec<f64> = project_initial(&init.z0, 3, p.length).unwrap();
            let u1: Vec<f64> = project_initial(&init.u1, 3, p.length).unwrap();
            let pick = |c: &[f64]| {
                let mut v = vec![0.0; n];
                v[n - 1] = c[n - 1];
                Profile::Coefficients(v)
            };
            let single = InitialData {
                z0: pick(&z0),
                u1: pick(&u1),
                ..Default::default()
            };
            let cfg = SimConfig::new(p.clone(), n, 0.02, 2.0)
                .unwrap()
                .with_initial(single);
            let out = simulate(&cfg).unwrap();
            for (s, e) in summed.iter_mut().zip(&out.trace.energy) {
                *s += e;
            }
        }
        for (a, b) in all.trace.energy.iter().zip(&summed) {
            assert_relative_eq!(*a, *b, max_relative = 1e-13);
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let cfg = SimConfig::new(PhysicalParams::default(), 9, 0.01, 6.0)
            .unwrap()
            .with_initial(InitialData {
                z0: Profile::Parabola { amplitude: 1.0 },
                ..Default::default()
            });
        let a = simulate_with(&cfg, Exec::Sequential).unwrap();
        let b = simulate_with(&cfg, Exec::Parallel).unwrap();
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn self_convergence_is_second_order() {
        let p = PhysicalParams::default();
        let run = |dt: f64| {
            let cfg = SimConfig::new(p.clone(), 2, dt, 1.0)
                .unwrap()
                .with_initial(InitialData {
                    z0: Profile::Coefficients(vec![1.0, 0.5]),
                    ..Default::default()
                });
            simulate(&cfg).unwrap().final_states
        };
        let dt = 0.02;
        let reference = run(dt / 16.0);
        let err = |states: &[ModalState]| {
            states
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a.z - b.z).abs().max((a.u - b.u).abs()).max((a.w - b.w).abs()))
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(&run(dt)), err(&run(dt / 2.0)));
        let order = (e1 / e2).log2();
        assert!((1.8..2.3).contains(&order), "order {order} ({e1}, {e2})");
    }

    #[test]
    fn reconstruction_vanishes_on_boundary_and_round_trips() {
        let cfg = SimConfig {
            snapshot_every: 10,
            ..SimConfig::new(PhysicalParams::default(), 6, 0.01, 0.5)
                .unwrap()
                .with_initial(InitialData {
                    z0: Profile::Parabola { amplitude: 1.0 },
                    u0: Profile::Sine { mode: 2, amplitude: 0.3 },
                    ..Default::default()
                })
        };
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.trajectory.len(), 6);
        let fields = reconstruct(&out.trajectory, PI, &[0.0, PI], 0.3).unwrap();
        assert_eq!(fields.z, vec![0.0, 0.0]);
        assert_eq!(fields.u, vec![0.0, 0.0]);

        let m = 64;
        let xs: Vec<f64> = (0..=m).map(|i| PI * i as f64 / m as f64).collect();
        let f0 = reconstruct(&out.trajectory, PI, &xs, 0.0).unwrap();
        let back = project_initial(&Profile::Sampled(f0.z), 6, PI).unwrap();
        for (a, b) in back.iter().zip(&out.trajectory[0].z) {
            assert!((a - b).abs() < 1e-14);
        }
        // off-grid time falls back to the nearest snapshot
        let near = reconstruct(&out.trajectory, PI, &xs, 0.104).unwrap();
        assert_relative_eq!(near.time, 0.1, epsilon = 1e-12);
    }
}
