//! Sine-Gordon kinks and the coupled-pendulum chain.
//!
//! In dimensionless variables `z = ω₁x/v`, `τ = ω₁t` the continuum field obeys
//! `∂²ϕ/∂τ² − ∂²ϕ/∂z² + sin ϕ = 0`, with the travelling kink
//! `ϕ± = 4 atan(exp(±(z + βτ)/√(1−β²)))`. The discrete chain behind it is
//!
//! ```text
//! ϕ̈_i = ω₀² (ϕ_{i+1} − 2ϕ_i + ϕ_{i−1}) − ω₁² sin ϕ_i
//! ```
//!
//! with `v² = ω₀² d²` for pendulum spacing `d`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

/// Largest phase or velocity magnitude accepted by the chain integrator.
pub const OVERFLOW_LIMIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SineGordonError {
    #[error("soliton velocity must satisfy |beta| < 1, got {0}")]
    InvalidBeta(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("residual grid needs at least 5 points per axis, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("chain state has {phases} phases and {velocities} velocities for {n} pendulums")]
    Misaligned { phases: usize, velocities: usize, n: usize },
    #[error("chain overflowed at t = {t} (|value| = {max_abs:e})")]
    Overflow { t: f64, max_abs: f64 },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> SineGordonError {
    SineGordonError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Rises from 0 to 2π.
    Soliton,
    /// Falls from 2π to 0.
    Antisoliton,
}

impl Branch {
    pub fn sign(&self) -> f64 {
        match self {
            Branch::Soliton => 1.0,
            Branch::Antisoliton => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    beta: f64,
    branch: Branch,
}

impl SolitonSpec {
    pub fn new(beta: f64, branch: Branch) -> Result<Self, SineGordonError> {
        if !(beta.abs() < 1.0) {
            return Err(SineGordonError::InvalidBeta(beta));
        }
        Ok(Self { beta, branch })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    fn gamma_inv(&self) -> f64 {
        (1.0 - self.beta * self.beta).sqrt()
    }

    /// Kink velocity in `z` per unit `τ` (the profile depends on `z + βτ`).
    pub fn z_velocity(&self) -> f64 {
        -self.beta
    }
}

fn argument(z: f64, tau: f64, spec: &SolitonSpec) -> f64 {
    spec.branch.sign() * (z + spec.beta * tau) / spec.gamma_inv()
}

pub fn soliton_profile(z: f64, tau: f64, spec: &SolitonSpec) -> f64 {
    4.0 * argument(z, tau, spec).exp().atan()
}

/// `∂ϕ/∂τ` of [`soliton_profile`].
pub fn soliton_rate(z: f64, tau: f64, spec: &SolitonSpec) -> f64 {
    let u = argument(z, tau, spec);
    // d/du 4 atan(e^u) = 2 sech u
    2.0 / u.cosh() * spec.branch.sign() * spec.beta / spec.gamma_inv()
}

pub fn to_dimensionless(x: f64, t: f64, omega1: f64, v: f64) -> Result<(f64, f64), SineGordonError> {
    check_scales(omega1, v)?;
    Ok((omega1 * x / v, omega1 * t))
}

pub fn from_dimensionless(z: f64, tau: f64, omega1: f64, v: f64) -> Result<(f64, f64), SineGordonError> {
    check_scales(omega1, v)?;
    Ok((z * v / omega1, tau / omega1))
}

fn check_scales(omega1: f64, v: f64) -> Result<(), SineGordonError> {
    if !(omega1 > 0.0 && omega1.is_finite()) {
        return Err(invalid("omega1", "must be positive"));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid("v", "must be positive"));
    }
    Ok(())
}

/// Samples `ϕ(z, τ)` on a grid; row `r` is `τ = tau0 + r·dtau`, column `c`
/// is `z = z0 + c·dz`.
pub fn sample_soliton(
    spec: &SolitonSpec,
    (z0, dz, nz): (f64, f64, usize),
    (tau0, dtau, ntau): (f64, f64, usize),
) -> Array2<f64> {
    Array2::from_shape_fn((ntau, nz), |(r, c)| {
        soliton_profile(z0 + c as f64 * dz, tau0 + r as f64 * dtau, spec)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub max: f64,
    /// Root-mean-square over interior points.
    pub l2: f64,
}

/// Central-difference residual of `ϕ_ττ − ϕ_zz + sin ϕ` at interior points
/// of a field laid out as in [`sample_soliton`].
pub fn sg_residual(field: &Array2<f64>, dz: f64, dtau: f64) -> Result<ResidualNorms, SineGordonError> {
    let (rows, cols) = field.dim();
    if rows < 5 || cols < 5 {
        return Err(SineGordonError::GridTooSmall { rows, cols });
    }
    if !(dz > 0.0 && dtau > 0.0) {
        return Err(invalid("spacing", "dz and dtau must be positive"));
    }
    let (iz2, it2) = (1.0 / (dz * dz), 1.0 / (dtau * dtau));
    let per_row = par::map_range(rows - 2, |k| {
        let r = k + 1;
        let (mut max, mut sq) = (0.0_f64, 0.0);
        for c in 1..cols - 1 {
            let phi = field[[r, c]];
            let tt = (field[[r + 1, c]] - 2.0 * phi + field[[r - 1, c]]) * it2;
            let zz = (field[[r, c + 1]] - 2.0 * phi + field[[r, c - 1]]) * iz2;
            let res = tt - zz + phi.sin();
            max = max.max(res.abs());
            sq += res * res;
        }
        (max, sq)
    });
    let max = per_row.iter().map(|p| p.0).fold(0.0, f64::max);
    let sq: f64 = per_row.iter().map(|p| p.1).sum();
    let count = ((rows - 2) * (cols - 2)) as f64;
    Ok(ResidualNorms {
        max,
        l2: (sq / count).sqrt(),
    })
}

/// Physical pendulum description; the chain only sees the frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumPhysics {
    /// Inter-pendulum coupling `Δ'`.
    pub delta_prime: f64,
    /// Gravity-like restoring energy `E₁`.
    pub e1: f64,
    pub m_e: f64,
    pub l: f64,
    pub d: f64,
}

impl PendulumPhysics {
    /// Builds from torsion modulus `η = Δ'd` and line density `ρ = m_e/d`.
    pub fn from_continuum(eta: f64, rho: f64, e1: f64, l: f64, d: f64) -> Self {
        Self {
            delta_prime: eta / d,
            e1,
            m_e: rho * d,
            l,
            d,
        }
    }

    pub fn eta(&self) -> f64 {
        self.delta_prime * self.d
    }

    pub fn rho(&self) -> f64 {
        self.m_e / self.d
    }

    pub fn chain(&self, n: usize) -> Result<PendulumChainParams, SineGordonError> {
        let inertia = self.m_e * self.l * self.l;
        if !(inertia > 0.0) {
            return Err(invalid("m_e", "mass and length must be positive"));
        }
        PendulumChainParams::new(self.delta_prime / inertia, self.e1 / inertia, self.d, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumChainParams {
    pub omega0_sq: f64,
    pub omega1_sq: f64,
    pub d: f64,
    pub n: usize,
}

impl PendulumChainParams {
    pub fn new(omega0_sq: f64, omega1_sq: f64, d: f64, n: usize) -> Result<Self, SineGordonError> {
        if !(omega0_sq > 0.0 && omega0_sq.is_finite()) {
            return Err(invalid("omega0_sq", "must be positive"));
        }
        if !(omega1_sq >= 0.0 && omega1_sq.is_finite()) {
            return Err(invalid("omega1_sq", "must be non-negative"));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid("d", "must be positive"));
        }
        if n == 0 {
            return Err(invalid("n", "chain needs at least one pendulum"));
        }
        Ok(Self {
            omega0_sq,
            omega1_sq,
            d,
            n,
        })
    }

    /// A single free pendulum: no coupling partner, so `ω₀²` is irrelevant.
    pub fn single(omega1_sq: f64) -> Result<Self, SineGordonError> {
        Self::new(1.0, omega1_sq, 1.0, 1)
    }

    /// Continuum wave speed `v = ω₀ d`.
    pub fn v(&self) -> f64 {
        self.omega0_sq.sqrt() * self.d
    }

    pub fn omega1(&self) -> f64 {
        self.omega1_sq.sqrt()
    }

    /// Largest leapfrog step that stays stable for the linearised chain.
    pub fn stable_dt(&self) -> f64 {
        2.0 / (4.0 * self.omega0_sq + self.omega1_sq).sqrt()
    }

    /// Site position `x_i = i·d`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainEnds {
    /// Ghost pendulums held at fixed angles beyond each end.
    Clamped { left: f64, right: f64 },
    /// No neighbour beyond the ends.
    Free,
}

impl ChainEnds {
    /// Clamped at 0 and 2π, hosting one soliton.
    pub fn kink() -> Self {
        ChainEnds::Clamped {
            left: 0.0,
            right: 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub phases: Vec<f64>,
    pub velocities: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    pub fn at_rest(n: usize) -> Self {
        Self {
            phases: vec![0.0; n],
            velocities: vec![0.0; n],
            t: 0.0,
        }
    }

    /// Discretised travelling kink centred at `x_center` at `t = 0`.
    pub fn from_soliton(params: &PendulumChainParams, spec: &SolitonSpec, x_center: f64) -> Result<Self, SineGordonError> {
        let (omega1, v) = (params.omega1(), params.v());
        let mut phases = Vec::with_capacity(params.n);
        let mut velocities = Vec::with_capacity(params.n);
        for i in 0..params.n {
            let (z, _) = to_dimensionless(params.x(i) - x_center, 0.0, omega1, v)?;
            phases.push(soliton_profile(z, 0.0, spec));
            velocities.push(omega1 * soliton_rate(z, 0.0, spec));
        }
        Ok(Self {
            phases,
            velocities,
            t: 0.0,
        })
    }

    fn check(&self, n: usize) -> Result<(), SineGordonError> {
        if self.phases.len() != n || self.velocities.len() != n {
            return Err(SineGordonError::Misaligned {
                phases: self.phases.len(),
                velocities: self.velocities.len(),
                n,
            });
        }
        Ok(())
    }
}

fn accelerations(phases: &[f64], params: &PendulumChainParams, ends: ChainEnds, out: &mut [f64]) {
    let n = phases.len();
    for i in 0..n {
        let phi = phases[i];
        let left = match (i, ends) {
            (0, ChainEnds::Clamped { left, .. }) => left - phi,
            (0, ChainEnds::Free) => 0.0,
            _ => phases[i - 1] - phi,
        };
        let right = match (i + 1 == n, ends) {
            (true, ChainEnds::Clamped { right, .. }) => right - phi,
            (true, ChainEnds::Free) => 0.0,
            _ => phases[i + 1] - phi,
        };
        out[i] = params.omega0_sq * (left + right) - params.omega1_sq * phi.sin();
    }
}

/// Energy per unit `m_e l²`: kinetic, bond and gravity terms. Clamped ends
/// contribute the bonds to their ghost pendulums.
pub fn chain_energy(state: &ChainState, params: &PendulumChainParams, ends: ChainEnds) -> f64 {
    let ph = &state.phases;
    let kinetic: f64 = state.velocities.iter().map(|w| 0.5 * w * w).sum();
    let mut bonds: f64 = ph.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    if let (ChainEnds::Clamped { left, right }, Some(first), Some(last)) = (ends, ph.first(), ph.last()) {
        bonds += (first - left).powi(2) + (right - last).powi(2);
    }
    let gravity: f64 = ph.iter().map(|p| 1.0 - p.cos()).sum();
    kinetic + 0.5 * params.omega0_sq * bonds + params.omega1_sq * gravity
}

/// One kick-drift-kick leapfrog step.
pub fn pendulum_chain_step(
    state: &ChainState,
    params: &PendulumChainParams,
    ends: ChainEnds,
    dt: f64,
) -> Result<ChainState, SineGordonError> {
    let mut next = state.clone();
    let mut acc = vec![0.0; params.n];
    leapfrog_in_place(&mut next, params, ends, dt, &mut acc)?;
    Ok(next)
}

fn leapfrog_in_place(
    state: &mut ChainState,
    params: &PendulumChainParams,
    ends: ChainEnds,
    dt: f64,
    acc: &mut [f64],
) -> Result<(), SineGordonError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    state.check(params.n)?;
    accelerations(&state.phases, params, ends, acc);
    for ((p, w), a) in state.phases.iter_mut().zip(state.velocities.iter_mut()).zip(acc.iter()) {
        *w += 0.5 * dt * a;
        *p += dt * *w;
    }
    accelerations(&state.phases, params, ends, acc);
    let mut max_abs = 0.0_f64;
    for ((p, w), a) in state.phases.iter().zip(state.velocities.iter_mut()).zip(acc.iter()) {
        *w += 0.5 * dt * a;
        max_abs = max_abs.max(p.abs()).max(w.abs());
    }
    state.t += dt;
    if !(max_abs <= OVERFLOW_LIMIT) {
        return Err(SineGordonError::Overflow { t: state.t, max_abs });
    }
    Ok(())
}

/// Position of the first upward (or, for falling profiles, downward) crossing
/// of `ϕ = π`, linearly interpolated between pendulums.
pub fn kink_center(phases: &[f64], d: f64) -> Option<f64> {
    phases.windows(2).enumerate().find_map(|(i, w)| {
        let (a, b) = (w[0] - PI, w[1] - PI);
        if a == 0.0 {
            Some(i as f64 * d)
        } else if a * b < 0.0 || b == 0.0 {
            Some((i as f64 + a / (a - b)) * d)
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub t: f64,
    pub center: Option<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub rows: Vec<ChainRow>,
    pub final_state: ChainState,
}

impl ChainRun {
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.rows[0].energy;
        self.rows
            .iter()
            .map(|r| ((r.energy - e0) / e0).abs())
            .fold(0.0, f64::max)
    }

    /// Least-squares slope of kink centre against time over rows where a
    /// centre was found.
    pub fn kink_velocity(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.rows.iter().filter_map(|r| r.center.map(|c| (r.t, c))).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mc = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mc)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        (var > 0.0).then(|| cov / var)
    }
}

/// Integrates `steps` leapfrog steps, recording every `record_every`-th.
pub fn run_chain(
    initial: &ChainState,
    params: &PendulumChainParams,
    ends: ChainEnds,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<ChainRun, SineGordonError> {
    initial.check(params.n)?;
    let every = record_every.max(1);
    let record = |s: &ChainState| ChainRow {
        t: s.t,
        center: kink_center(&s.phases, params.d),
        energy: chain_energy(s, params, ends),
    };
    let mut state = initial.clone();
    let mut rows = vec![record(&state)];
    let mut acc = vec![0.0; params.n];
    for k in 1..=steps {
        leapfrog_in_place(&mut state, params, ends, dt, &mut acc)?;
        if k % every == 0 || k == steps {
            rows.push(record(&state));
        }
    }
    Ok(ChainRun {
        rows,
        final_state: state,
    })
}
