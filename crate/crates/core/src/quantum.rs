//! Single-chain quantum phase dynamics.
//!
//! A wavefunction `ψ(x, t)` over the phase coordinate evolves under
//!
//! ```text
//! iħ ∂ψ/∂t = −(ħ²/2D) ∂²ψ/∂x² + V(x, t) ψ
//! V(x, t)  = ½ μ_E² (x − ω_D t)² + ½ D ω_p² (1 − cos x)
//! ```
//!
//! Two steppers are provided: the two-level Crank–Nicolson solve (unitary,
//! implicit) and the three-level Dufort–Frankel update (explicit). Variants
//! matching the mixed-level stencils as they are sometimes printed are kept
//! behind flags for comparison.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tridiag::{solve_constant_offdiag, solve_cyclic_constant_offdiag, SingularPivot};

/// A run is declared blown up once the norm exceeds this multiple of its
/// reference norm.
pub const BLOWUP_FACTOR: f64 = 10.0;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("tridiagonal solve hit a vanishing pivot at row {row}")]
    SolverSingular { row: usize },
    #[error("norm blew up at step {step} (t = {t}): {ratio:e} x reference")]
    BlowUp { step: usize, t: f64, ratio: f64 },
    #[error("wavefunction levels are not on the same grid")]
    LevelMismatch,
}

fn invalid(name: &'static str, reason: impl Into<String>) -> QuantumError {
    QuantumError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl From<SingularPivot> for QuantumError {
    fn from(p: SingularPivot) -> Self {
        QuantumError::SolverSingular { row: p.0 }
    }
}

/// Coefficients of the extended Schwinger single-chain Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwingerParams {
    /// Mass-like coefficient `D`.
    pub d_coeff: f64,
    /// Quadratic (charging) stiffness `μ_E²`.
    pub mu_e_sq: f64,
    /// Pinning frequency squared `ω_p²`.
    pub omega_p_sq: f64,
    /// Drive frequency; the quadratic well is centred at `Θ = ω_D·t`.
    pub omega_d: f64,
    pub hbar: f64,
}

impl SchwingerParams {
    pub fn new(
        d_coeff: f64,
        mu_e_sq: f64,
        omega_p_sq: f64,
        omega_d: f64,
        hbar: f64,
    ) -> Result<Self, QuantumError> {
        if !(d_coeff > 0.0 && d_coeff.is_finite()) {
            return Err(invalid("d_coeff", "must be positive"));
        }
        for (name, v) in [("mu_e_sq", mu_e_sq), ("omega_p_sq", omega_p_sq), ("omega_d", omega_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(invalid("hbar", "must be positive"));
        }
        Ok(Self {
            d_coeff,
            mu_e_sq,
            omega_p_sq,
            omega_d,
            hbar,
        })
    }

    /// Same Hamiltonian written with a charging energy `E₂`, where the
    /// quadratic term reads `E₂ (x − Θ)²`, i.e. `μ_E² = 2 E₂`.
    pub fn with_charging_energy(
        d_coeff: f64,
        e2: f64,
        omega_p_sq: f64,
        omega_d: f64,
        hbar: f64,
    ) -> Result<Self, QuantumError> {
        Self::new(d_coeff, 2.0 * e2, omega_p_sq, omega_d, hbar)
    }

    pub fn free(d_coeff: f64, hbar: f64) -> Result<Self, QuantumError> {
        Self::new(d_coeff, 0.0, 0.0, 0.0, hbar)
    }

    /// Curvature of `V` at its minimum when `Θ = 0`.
    pub fn well_stiffness(&self) -> f64 {
        self.mu_e_sq + 0.5 * self.d_coeff * self.omega_p_sq
    }
}

pub fn washboard_potential(x: f64, t: f64, params: &SchwingerParams) -> f64 {
    let shift = x - params.omega_d * t;
    0.5 * params.mu_e_sq * shift * shift + 0.5 * params.d_coeff * params.omega_p_sq * (1.0 - x.cos())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `ψ = 0` just outside both ends.
    #[default]
    Dirichlet,
    Periodic,
}

/// Uniform grid `x_j = x0 + j·dx`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
    pub boundary: Boundary,
}

impl Grid {
    pub fn new(x0: f64, dx: f64, n: usize, boundary: Boundary) -> Result<Self, QuantumError> {
        if n < 3 {
            return Err(invalid("n", "grid needs at least 3 points"));
        }
        if !(dx > 0.0 && dx.is_finite()) || !x0.is_finite() {
            return Err(invalid("dx", "must be positive and finite"));
        }
        Ok(Self { x0, dx, n, boundary })
    }

    /// `n` points spanning `[a, b)` (periodic) or `[a, b]` (Dirichlet).
    pub fn spanning(a: f64, b: f64, n: usize, boundary: Boundary) -> Result<Self, QuantumError> {
        let intervals = match boundary {
            Boundary::Periodic => n,
            Boundary::Dirichlet => n.saturating_sub(1).max(1),
        };
        Self::new(a, (b - a) / intervals as f64, n, boundary)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }
}

/// Complex amplitudes on a [`Grid`], plus clock, step counter and the norm
/// the blow-up guard compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunction {
    pub amplitudes: Vec<Complex64>,
    pub grid: Grid,
    pub t: f64,
    pub step_index: usize,
    pub reference_norm: f64,
}

impl WaveFunction {
    pub fn new(amplitudes: Vec<Complex64>, grid: Grid) -> Result<Self, QuantumError> {
        if amplitudes.len() != grid.n {
            return Err(invalid(
                "amplitudes",
                format!("{} amplitudes for a {}-point grid", amplitudes.len(), grid.n),
            ));
        }
        let mut wf = Self {
            amplitudes,
            grid,
            t: 0.0,
            step_index: 0,
            reference_norm: 0.0,
        };
        wf.reference_norm = wf.norm();
        if !wf.reference_norm.is_finite() {
            return Err(invalid("amplitudes", "norm must be finite"));
        }
        Ok(wf)
    }

    /// Normalised Gaussian packet `∝ exp(−(x−x_c)²/(4σ²) + i k₀ x)`; `sigma`
    /// is the standard deviation of `|ψ|²`.
    pub fn gaussian(grid: Grid, center: f64, sigma: f64, k0: f64) -> Result<Self, QuantumError> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        let amps = (0..grid.n)
            .map(|j| {
                let x = grid.x(j);
                let env = (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
                Complex64::from_polar(env, k0 * x)
            })
            .collect();
        let mut wf = Self::new(amps, grid)?;
        wf.normalize()?;
        Ok(wf)
    }

    /// Gaussian matching the harmonic ground state of the well at `Θ = 0`.
    pub fn harmonic_ground_state(grid: Grid, params: &SchwingerParams, center: f64) -> Result<Self, QuantumError> {
        let k = params.well_stiffness();
        if !(k > 0.0) {
            return Err(invalid("params", "well has no curvature"));
        }
        let omega = (k / params.d_coeff).sqrt();
        let sigma = (params.hbar / (2.0 * params.d_coeff * omega)).sqrt();
        Self::gaussian(grid, center, sigma, 0.0)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            amplitudes: vec![ZERO; grid.n],
            grid,
            t: 0.0,
            step_index: 0,
            reference_norm: 0.0,
        }
    }

    /// Rescales to unit norm and resets the blow-up reference.
    pub fn normalize(&mut self) -> Result<(), QuantumError> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("amplitudes", "cannot normalise a zero or non-finite state"));
        }
        let s = 1.0 / norm.sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
        self.reference_norm = 1.0;
        Ok(())
    }

    /// `Σ |ψ_j|² Δx`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    /// `⟨x⟩ = Σ x_j |ψ_j|² Δx / norm`.
    pub fn mean_x(&self) -> f64 {
        let weighted: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| self.grid.x(j) * a.norm_sqr())
            .sum();
        weighted * self.grid.dx / self.norm()
    }

    /// Position variance of `|ψ|²`.
    pub fn variance_x(&self) -> f64 {
        let mean = self.mean_x();
        let weighted: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| (self.grid.x(j) - mean).powi(2) * a.norm_sqr())
            .sum();
        weighted * self.grid.dx / self.norm()
    }

    /// Fraction of probability at `x > x_barrier`.
    pub fn probability_beyond(&self, x_barrier: f64) -> f64 {
        let beyond: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| self.grid.x(*j) > x_barrier)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        beyond * self.grid.dx / self.norm()
    }

    fn successor(&self, amplitudes: Vec<Complex64>, dt: f64) -> Result<Self, QuantumError> {
        let next = Self {
            amplitudes,
            grid: self.grid,
            t: self.t + dt,
            step_index: self.step_index + 1,
            reference_norm: self.reference_norm,
        };
        let norm = next.norm();
        let ratio = if self.reference_norm > 0.0 {
            norm / self.reference_norm
        } else if norm > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if !(ratio <= BLOWUP_FACTOR) {
            return Err(QuantumError::BlowUp {
                step: next.step_index,
                t: next.t,
                ratio,
            });
        }
        Ok(next)
    }

    fn same_grid(&self, other: &Self) -> Result<(), QuantumError> {
        if self.grid != other.grid {
            return Err(QuantumError::LevelMismatch);
        }
        Ok(())
    }
}

/// Neighbour value with the grid's boundary condition applied.
fn neighbours(psi: &[Complex64], j: usize, boundary: Boundary) -> (Complex64, Complex64) {
    let n = psi.len();
    let left = match (j, boundary) {
        (0, Boundary::Dirichlet) => ZERO,
        (0, Boundary::Periodic) => psi[n - 1],
        _ => psi[j - 1],
    };
    let right = match (j + 1 == n, boundary) {
        (true, Boundary::Dirichlet) => ZERO,
        (true, Boundary::Periodic) => psi[0],
        _ => psi[j + 1],
    };
    (left, right)
}

fn potential_on_grid(grid: &Grid, params: &SchwingerParams, t: f64) -> Vec<f64> {
    (0..grid.n).map(|j| washboard_potential(grid.x(j), t, params)).collect()
}

fn solve(
    boundary: Boundary,
    lower: Complex64,
    diag: &[Complex64],
    upper: Complex64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, QuantumError> {
    Ok(match boundary {
        Boundary::Dirichlet => solve_constant_offdiag(lower, diag, upper, rhs)?,
        Boundary::Periodic => solve_cyclic_constant_offdiag(lower, diag, upper, rhs)?,
    })
}

/// One Crank–Nicolson step `(1 + iΔt H/2ħ) ψⁿ⁺¹ = (1 − iΔt H/2ħ) ψⁿ` with
/// `H` evaluated at `t + Δt/2`.
pub fn step_crank_nicolson(
    wf: &WaveFunction,
    params: &SchwingerParams,
    dt: f64,
) -> Result<WaveFunction, QuantumError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    let grid = wf.grid;
    let hbar = params.hbar;
    // H ψ_j = −κ (ψ_{j+1} + ψ_{j−1} − 2ψ_j) + V_j ψ_j
    let kappa = hbar * hbar / (2.0 * params.d_coeff * grid.dx * grid.dx);
    let v = potential_on_grid(&grid, params, wf.t + 0.5 * dt);
    let half = I * (dt / (2.0 * hbar));

    let off = -half * kappa;
    let diag: Vec<Complex64> = v
        .iter()
        .map(|vj| Complex64::new(1.0, 0.0) + half * (2.0 * kappa + vj))
        .collect();
    let psi = &wf.amplitudes;
    let rhs: Vec<Complex64> = (0..grid.n)
        .map(|j| {
            let (l, r) = neighbours(psi, j, grid.boundary);
            let h_psi = -kappa * (l + r - 2.0 * psi[j]) + v[j] * psi[j];
            psi[j] - half * h_psi
        })
        .collect();
    let next = solve(grid.boundary, off, &diag, off, &rhs)?;
    wf.successor(next, dt)
}

/// Three-level implicit stencil in the mixed-time-level form
/// `ψⁿ⁺¹ = ψⁿ⁻¹ + iΔt[(ħ/D)(ψⁿ_{j+1} − ψⁿ_{j−1} − 2ψⁿ_j + ψⁿ⁺¹_{j+1} + ψⁿ⁺¹_{j−1} − 2ψⁿ⁺¹_j)/Δx² − 2Vⁿ_j ψⁿ_j/ħ]`.
/// Kept for comparison only; it is not a consistent discretisation.
pub fn step_literal_stencil(
    current: &WaveFunction,
    previous: &WaveFunction,
    params: &SchwingerParams,
    dt: f64,
) -> Result<WaveFunction, QuantumError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    current.same_grid(previous)?;
    let grid = current.grid;
    let c = I * dt * params.hbar / (params.d_coeff * grid.dx * grid.dx);
    let v = potential_on_grid(&grid, params, current.t);
    let psi = &current.amplitudes;
    let prev = &previous.amplitudes;
    // ψⁿ⁺¹ − c (ψⁿ⁺¹_{j+1} + ψⁿ⁺¹_{j−1} − 2ψⁿ⁺¹_j) = rhs
    let diag = vec![Complex64::new(1.0, 0.0) + 2.0 * c; grid.n];
    let rhs: Vec<Complex64> = (0..grid.n)
        .map(|j| {
            let (l, r) = neighbours(psi, j, grid.boundary);
            prev[j] + c * (r - l - 2.0 * psi[j]) - I * dt * 2.0 * v[j] / params.hbar * psi[j]
        })
        .collect();
    let next = solve(grid.boundary, -c, &diag, -c, &rhs)?;
    current.successor(next, dt)
}

/// `R̃ = −iΔt ħ / (2 D Δx²)` in the sign convention of the printed
/// three-level update.
pub fn r_tilde(params: &SchwingerParams, dt: f64, dx: f64) -> Complex64 {
    -I * (dt * params.hbar / (2.0 * params.d_coeff * dx * dx))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DufortFrankelForm {
    /// Consistent Dufort–Frankel update of the Schrödinger equation:
    /// `r = iħΔt/(2DΔx²)`, neighbour sum, explicit potential over `2Δt`.
    #[default]
    Standard,
    /// The update with `R̃`, the neighbour difference `ψ_{j−1} − ψ_{j+1}`
    /// and the `−iΔt V ψⁿ/ħ` potential term taken literally.
    Printed,
}

/// One three-level Dufort–Frankel step from levels `n` (`current`) and
/// `n − 1` (`previous`).
pub fn step_dufort_frankel(
    current: &WaveFunction,
    previous: &WaveFunction,
    params: &SchwingerParams,
    dt: f64,
    form: DufortFrankelForm,
) -> Result<WaveFunction, QuantumError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    current.same_grid(previous)?;
    let grid = current.grid;
    let v = potential_on_grid(&grid, params, current.t);
    let psi = &current.amplitudes;
    let prev = &previous.amplitudes;
    let one = Complex64::new(1.0, 0.0);
    let next: Vec<Complex64> = match form {
        DufortFrankelForm::Standard => {
            let r = -r_tilde(params, dt, grid.dx);
            let denom = one + 2.0 * r;
            let a = 2.0 * r / denom;
            let b = (one - 2.0 * r) / denom;
            let pot = -I * (2.0 * dt / params.hbar) / denom;
            (0..grid.n)
                .map(|j| {
                    let (l, rn) = neighbours(psi, j, grid.boundary);
                    a * (l + rn) + b * prev[j] + pot * v[j] * psi[j]
                })
                .collect()
        }
        DufortFrankelForm::Printed => {
            let rt = r_tilde(params, dt, grid.dx);
            let denom = one + 2.0 * rt;
            let a = 2.0 * rt / denom;
            let b = (one - 2.0 * rt) / denom;
            let pot = -I * (dt / params.hbar);
            (0..grid.n)
                .map(|j| {
                    let (l, rn) = neighbours(psi, j, grid.boundary);
                    a * (l - rn) + b * prev[j] + pot * v[j] * psi[j]
                })
                .collect()
        }
    };
    current.successor(next, dt)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    #[serde(alias = "cn")]
    CrankNicolson,
    #[serde(alias = "df")]
    DufortFrankel,
    /// Mixed-level implicit stencil (see [`step_literal_stencil`]).
    #[serde(alias = "literal")]
    LiteralStencil,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::CrankNicolson => "cn",
            Scheme::DufortFrankel => "df",
            Scheme::LiteralStencil => "literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub t: f64,
    pub mean_x: f64,
    pub norm: f64,
    /// Probability beyond the barrier position configured for the run.
    pub transmitted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub scheme: Scheme,
    /// Row 0 is the initial state; one row per completed step after that.
    pub rows: Vec<ChainRow>,
    pub final_state: WaveFunction,
    /// Set when the run stopped early.
    pub failure: Option<QuantumError>,
}

impl ChainTrace {
    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.rows[0].norm;
        self.rows.iter().map(|r| (r.norm / n0 - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub df_form: DufortFrankelForm,
    /// Position whose right-hand side counts as transmitted.
    pub barrier: f64,
    /// Record every `stride`-th step (the final step is always recorded).
    pub stride: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            df_form: DufortFrankelForm::Standard,
            barrier: PI,
            stride: 1,
        }
    }
}

fn row(wf: &WaveFunction, barrier: f64) -> ChainRow {
    ChainRow {
        t: wf.t,
        mean_x: wf.mean_x(),
        norm: wf.norm(),
        transmitted: wf.probability_beyond(barrier),
    }
}

/// Steps `wf0` with the chosen scheme, recording `(t, ⟨x⟩, norm)`. The
/// three-level schemes are bootstrapped with one Crank–Nicolson step. A
/// blow-up or singular solve ends the run and is stored in
/// [`ChainTrace::failure`].
pub fn evolve_chain(
    wf0: &WaveFunction,
    params: &SchwingerParams,
    scheme: Scheme,
    dt: f64,
    n_steps: usize,
    opts: &EvolveOptions,
) -> Result<ChainTrace, QuantumError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(wf0.norm() > 0.0) {
        return Err(invalid("wf0", "initial state has zero norm"));
    }
    let stride = opts.stride.max(1);
    let mut rows = vec![row(wf0, opts.barrier)];
    let mut previous: Option<WaveFunction> = None;
    let mut current = wf0.clone();
    let mut failure = None;
    for k in 0..n_steps {
        let stepped = match (scheme, &previous) {
            (Scheme::CrankNicolson, _) | (_, None) => step_crank_nicolson(&current, params, dt),
            (Scheme::DufortFrankel, Some(prev)) => step_dufort_frankel(&current, prev, params, dt, opts.df_form),
            (Scheme::LiteralStencil, Some(prev)) => step_literal_stencil(&current, prev, params, dt),
        };
        match stepped {
            Ok(next) => {
                previous = Some(std::mem::replace(&mut current, next));
                if (k + 1) % stride == 0 || k + 1 == n_steps {
                    rows.push(row(&current, opts.barrier));
                }
            }
            Err(e @ (QuantumError::BlowUp { .. } | QuantumError::SolverSingular { .. })) => {
                failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ChainTrace {
        scheme,
        rows,
        final_state: current,
        failure,
    })
}
