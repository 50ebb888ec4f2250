//! Variational ground states of coupled chains.
//!
//! Each chain `n` carries a packet sum `ψ_n(ϕ) = Σ_m b_{n,m} exp(−α(ϕ − 2πm)²)`
//! and the trial state is the product `Ψ = N Π_n ψ_n(ϕ_n)`. The Hamiltonian is
//!
//! ```text
//! H = Σ_n [ Π_n²/2D₁ + E₁(1 − cos ϕ_n) + E₂(ϕ_n − Θ)² ]
//!   + Δ' Σ_{n≥2} (1 − cos(ϕ_n − ϕ_{n−1}))
//! ```
//!
//! Because `Ψ` is a product and `cos(a − b) = cos a cos b + sin a sin b`, every
//! term reduces to one-dimensional packet integrals, which are evaluated once
//! per `α` as small matrices. A dense tensor-product quadrature is kept for
//! one and two chains as an independent check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::par;

/// Coefficient vectors must have unit norm to this tolerance.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Largest relative change allowed between a grid and its half-spacing
/// refinement.
pub const RICHARDSON_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("quadrature under-resolved: {coarse:e} vs {fine:e} on the refined grid (relative change {relative:e})")]
    QuadratureUnderresolved { coarse: f64, fine: f64, relative: f64 },
    #[error("dense quadrature supports at most 2 chains, got {0}")]
    TooManyChains(usize),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> VariationalError {
    VariationalError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainHamiltonianParams {
    pub d1: f64,
    /// Pinning energy `E₁`.
    pub e1: f64,
    /// Charging energy `E₂`.
    pub e2: f64,
    /// Inter-chain coupling `Δ'`.
    pub delta_p: f64,
    pub theta: f64,
    pub n_chains: usize,
    pub hbar: f64,
}

impl ChainHamiltonianParams {
    pub fn new(
        d1: f64,
        e1: f64,
        e2: f64,
        delta_p: f64,
        theta: f64,
        n_chains: usize,
        hbar: f64,
    ) -> Result<Self, VariationalError> {
        if !(d1 > 0.0 && d1.is_finite()) {
            return Err(invalid("d1", "must be positive"));
        }
        for (name, v) in [("e1", e1), ("e2", e2), ("delta_p", delta_p)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        if !theta.is_finite() {
            return Err(invalid("theta", "must be finite"));
        }
        if n_chains == 0 {
            return Err(invalid("n_chains", "need at least one chain"));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(invalid("hbar", "must be positive"));
        }
        let p = Self {
            d1,
            e1,
            e2,
            delta_p,
            theta,
            n_chains,
            hbar,
        };
        for w in p.regime_warnings() {
            log::warn!("{w}");
        }
        Ok(p)
    }

    /// `D₁ = 174.091`, `E₁ = 1e-5`, `E₂ = 1e-6`, `Δ' = 0.005`, two chains.
    pub fn reference() -> Self {
        Self {
            d1: 174.091,
            e1: 1e-5,
            e2: 1e-6,
            delta_p: 0.005,
            theta: 0.0,
            n_chains: 2,
            hbar: 1.0,
        }
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..*self }
    }

    /// Notes where the parameters leave the `Δ' ≫ E₁ ≫ E₂` ordering (taken
    /// as a factor of at least 10).
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_chains > 1 && self.delta_p < 10.0 * self.e1 {
            out.push(format!("delta_p = {} is not >> e1 = {}", self.delta_p, self.e1));
        }
        if self.e1 < 10.0 * self.e2 {
            out.push(format!("e1 = {} is not >> e2 = {}", self.e1, self.e2));
        }
        out
    }
}

/// Contiguous packet indices `lo..=hi`; packet `m` is centred at `2πm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRange {
    lo: i32,
    hi: i32,
}

impl PacketRange {
    pub fn new(lo: i32, hi: i32) -> Result<Self, VariationalError> {
        if lo > hi {
            return Err(invalid("packets", format!("empty range {lo}..={hi}")));
        }
        Ok(Self { lo, hi })
    }

    /// `−m..=m`.
    pub fn symmetric(m: u32) -> Self {
        Self {
            lo: -(m as i32),
            hi: m as i32,
        }
    }

    /// The two-packet form with centres 0 and 2π.
    pub fn two_packet() -> Self {
        Self { lo: 0, hi: 1 }
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> impl Iterator<Item = i32> {
        self.lo..=self.hi
    }

    pub fn index_of(&self, m: i32) -> Option<usize> {
        (self.lo..=self.hi).contains(&m).then(|| (m - self.lo) as usize)
    }

    pub fn center(&self, index: usize) -> f64 {
        2.0 * PI * (self.lo + index as i32) as f64
    }

    fn is_symmetric(&self) -> bool {
        self.lo == -self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    coefficients: Vec<Vec<f64>>,
    packets: PacketRange,
    alpha: f64,
}

impl VariationalState {
    pub fn new(coefficients: Vec<Vec<f64>>, packets: PacketRange, alpha: f64) -> Result<Self, VariationalError> {
        if coefficients.is_empty() {
            return Err(VariationalError::InvalidState("no chains".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(VariationalError::InvalidState(format!("alpha must be positive, got {alpha}")));
        }
        for (n, b) in coefficients.iter().enumerate() {
            if b.len() != packets.len() {
                return Err(VariationalError::InvalidState(format!(
                    "chain {n} has {} coefficients for {} packets",
                    b.len(),
                    packets.len()
                )));
            }
            let norm: f64 = b.iter().map(|x| x * x).sum();
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(VariationalError::InvalidState(format!(
                    "chain {n} coefficients have squared norm {norm}"
                )));
            }
        }
        Ok(Self {
            coefficients,
            packets,
            alpha,
        })
    }

    /// Every chain entirely in packet `m`.
    pub fn single_packet(n_chains: usize, packets: PacketRange, m: i32, alpha: f64) -> Result<Self, VariationalError> {
        let k = packets
            .index_of(m)
            .ok_or_else(|| VariationalError::InvalidState(format!("packet {m} outside range")))?;
        let mut b = vec![0.0; packets.len()];
        b[k] = 1.0;
        Self::new(vec![b; n_chains], packets, alpha)
    }

    pub fn uniform(n_chains: usize, packets: PacketRange, alpha: f64) -> Result<Self, VariationalError> {
        let w = 1.0 / (packets.len() as f64).sqrt();
        Self::new(vec![vec![w; packets.len()]; n_chains], packets, alpha)
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn packets(&self) -> PacketRange {
        self.packets
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_chains(&self) -> usize {
        self.coefficients.len()
    }

    /// `b_m → b_{−m}` on every chain; needs a symmetric packet range.
    pub fn mirrored(&self) -> Result<Self, VariationalError> {
        if !self.packets.is_symmetric() {
            return Err(VariationalError::InvalidState("mirror needs a symmetric packet range".into()));
        }
        let coefficients = self
            .coefficients
            .iter()
            .map(|b| b.iter().rev().copied().collect())
            .collect();
        Ok(Self {
            coefficients,
            ..self.clone()
        })
    }

    /// Moves every coefficient from packet `m` to `m + shift`; the range
    /// moves with it.
    pub fn relabeled(&self, shift: i32) -> Self {
        Self {
            packets: PacketRange {
                lo: self.packets.lo + shift,
                hi: self.packets.hi + shift,
            },
            ..self.clone()
        }
    }

    /// Packet with the largest weight on chain `n` (lowest label on ties).
    pub fn dominant_m_of(&self, n: usize) -> i32 {
        let b = &self.coefficients[n];
        self.packets.lo + argmax(b.iter().map(|x| x * x)) as i32
    }

    /// Packet with the largest weight summed over chains.
    pub fn dominant_m(&self) -> i32 {
        let weights = (0..self.packets.len()).map(|k| self.coefficients.iter().map(|b| b[k] * b[k]).sum::<f64>());
        self.packets.lo + argmax(weights) as i32
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 + 1e-12 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Composite trapezoid; spectrally accurate for decaying Gaussians.
    #[default]
    Trapezoid,
    /// Composite Simpson; needs an odd number of points.
    Simpson,
}

/// Nodes on `[−ηπ, ηπ]` per axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub eta: f64,
    pub points_per_axis: usize,
    pub rule: QuadratureRule,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            eta: 20.0,
            points_per_axis: 256,
            rule: QuadratureRule::Trapezoid,
        }
    }
}

impl QuadratureGrid {
    pub fn new(eta: f64, points_per_axis: usize, rule: QuadratureRule) -> Result<Self, VariationalError> {
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(invalid("eta", "must be at least 1"));
        }
        if points_per_axis < 32 {
            return Err(invalid("points_per_axis", "need at least 32 points"));
        }
        if rule == QuadratureRule::Simpson && points_per_axis % 2 == 0 {
            return Err(invalid("points_per_axis", "Simpson's rule needs an odd count"));
        }
        Ok(Self {
            eta,
            points_per_axis,
            rule,
        })
    }

    /// Same domain at half the spacing (nodes nested in the refinement).
    pub fn refined(&self) -> Self {
        Self {
            points_per_axis: 2 * self.points_per_axis - 1,
            ..*self
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.eta * PI / (self.points_per_axis - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let (a, h) = (-self.eta * PI, self.spacing());
        (0..self.points_per_axis).map(|j| a + j as f64 * h).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.points_per_axis;
        let h = self.spacing();
        (0..n)
            .map(|j| {
                let end = j == 0 || j + 1 == n;
                match self.rule {
                    QuadratureRule::Trapezoid => {
                        if end {
                            0.5 * h
                        } else {
                            h
                        }
                    }
                    QuadratureRule::Simpson => {
                        if end {
                            h / 3.0
                        } else if j % 2 == 1 {
                            4.0 * h / 3.0
                        } else {
                            2.0 * h / 3.0
                        }
                    }
                }
            })
            .collect()
    }
}

/// Packet overlap integrals at one `α`; all `k × k`, row-major.
#[derive(Debug, Clone)]
struct PacketMatrices {
    k: usize,
    overlap: Vec<f64>,
    kinetic: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl PacketMatrices {
    fn build(alpha: f64, packets: PacketRange, nodes: &[f64], weights: &[f64]) -> Self {
        let k = packets.len();
        let n = nodes.len();
        let mut g = vec![0.0; k * n];
        let mut dg = vec![0.0; k * n];
        for a in 0..k {
            let c = packets.center(a);
            for j in 0..n {
                let u = nodes[j] - c;
                let v = (-alpha * u * u).exp();
                g[a * n + j] = v;
                dg[a * n + j] = -2.0 * alpha * u * v;
            }
        }
        let (cos, sin): (Vec<f64>, Vec<f64>) = nodes.iter().map(|x| (x.cos(), x.sin())).unzip();
        let mut m = Self {
            k,
            overlap: vec![0.0; k * k],
            kinetic: vec![0.0; k * k],
            cos: vec![0.0; k * k],
            sin: vec![0.0; k * k],
            x1: vec![0.0; k * k],
            x2: vec![0.0; k * k],
        };
        for a in 0..k {
            for b in a..k {
                let (mut s, mut t, mut c, mut sn, mut x1, mut x2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..n {
                    let w = weights[j] * g[a * n + j] * g[b * n + j];
                    s += w;
                    t += weights[j] * dg[a * n + j] * dg[b * n + j];
                    c += w * cos[j];
                    sn += w * sin[j];
                    x1 += w * nodes[j];
                    x2 += w * nodes[j] * nodes[j];
                }
                for (mat, v) in [
                    (&mut m.overlap, s),
                    (&mut m.kinetic, t),
                    (&mut m.cos, c),
                    (&mut m.sin, sn),
                    (&mut m.x1, x1),
                    (&mut m.x2, x2),
                ] {
                    mat[a * k + b] = v;
                    mat[b * k + a] = v;
                }
            }
        }
        m
    }

    fn form(&self, mat: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.k {
            let mut row = 0.0;
            for j in 0..self.k {
                row += mat[i * self.k + j] * b[j];
            }
            acc += b[i] * row;
        }
        acc
    }

    fn moments(&self, b: &[f64], theta: f64) -> ChainMoments {
        let s = self.form(&self.overlap, b);
        let x1 = self.form(&self.x1, b) / s;
        let x2 = self.form(&self.x2, b) / s;
        ChainMoments {
            grad_sq: self.form(&self.kinetic, b) / s,
            cos: self.form(&self.cos, b) / s,
            sin: self.form(&self.sin, b) / s,
            mean: x1,
            shifted_sq: x2 - 2.0 * theta * x1 + theta * theta,
        }
    }
}

/// Normalised one-chain expectation values.
#[derive(Debug, Clone, Copy)]
struct ChainMoments {
    /// `∫|ψ'|² / ∫|ψ|²`.
    grad_sq: f64,
    cos: f64,
    sin: f64,
    mean: f64,
    /// `⟨(ϕ − Θ)²⟩`.
    shifted_sq: f64,
}

fn check_chains(params: &ChainHamiltonianParams, state: &VariationalState) -> Result<(), VariationalError> {
    if params.n_chains != state.n_chains() {
        return Err(VariationalError::InvalidState(format!(
            "state has {} chains, Hamiltonian has {}",
            state.n_chains(),
            params.n_chains
        )));
    }
    Ok(())
}

fn energy_from_moments(params: &ChainHamiltonianParams, moments: &[ChainMoments]) -> f64 {
    let kin = params.hbar * params.hbar / (2.0 * params.d1);
    let on_site: f64 = moments
        .iter()
        .map(|m| kin * m.grad_sq + params.e1 * (1.0 - m.cos) + params.e2 * m.shifted_sq)
        .sum();
    let coupling: f64 = moments
        .windows(2)
        .map(|w| 1.0 - (w[0].cos * w[1].cos + w[0].sin * w[1].sin))
        .sum();
    on_site + params.delta_p * coupling
}

/// Energy by one-dimensional packet integrals, without a resolution check.
pub fn energy_separable(params: &ChainHamiltonianParams, state: &VariationalState, grid: &QuadratureGrid) -> Result<f64, VariationalError> {
    check_chains(params, state)?;
    let mats = PacketMatrices::build(state.alpha, state.packets, &grid.nodes(), &grid.weights());
    Ok(energy_with(params, state.coefficients(), &mats))
}

fn energy_with(params: &ChainHamiltonianParams, coefficients: &[Vec<f64>], mats: &PacketMatrices) -> f64 {
    let moments: Vec<ChainMoments> = coefficients.iter().map(|b| mats.moments(b, params.theta)).collect();
    energy_from_moments(params, &moments)
}

fn richardson(coarse: f64, fine: f64) -> Result<f64, VariationalError> {
    let relative = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if !(relative <= RICHARDSON_TOLERANCE) {
        return Err(VariationalError::QuadratureUnderresolved { coarse, fine, relative });
    }
    Ok(relative)
}

/// `⟨Ψ|H|Ψ⟩` on `grid`, checked against the half-spacing grid.
pub fn energy_expectation(
    params: &ChainHamiltonianParams,
    state: &VariationalState,
    grid: &QuadratureGrid,
) -> Result<f64, VariationalError> {
    let coarse = energy_separable(params, state, grid)?;
    let fine = energy_separable(params, state, &grid.refined())?;
    richardson(coarse, fine)?;
    Ok(coarse)
}

fn chain_values(state: &VariationalState, n: usize, x: f64) -> (f64, f64) {
    let (mut v, mut dv) = (0.0, 0.0);
    for (k, b) in state.coefficients[n].iter().enumerate() {
        let u = x - state.packets.center(k);
        let g = (-state.alpha * u * u).exp();
        v += b * g;
        dv += b * (-2.0 * state.alpha * u) * g;
    }
    (v, dv)
}

/// Energy by direct quadrature of `Ψ` on the full tensor grid (one or two
/// chains). The kinetic term uses `∫|∂Ψ/∂ϕ_n|²`.
pub fn energy_dense(params: &ChainHamiltonianParams, state: &VariationalState, grid: &QuadratureGrid) -> Result<f64, VariationalError> {
    check_chains(params, state)?;
    let nodes = grid.nodes();
    let w = grid.weights();
    let kin = params.hbar * params.hbar / (2.0 * params.d1);
    let on_site = |x: f64| params.e1 * (1.0 - x.cos()) + params.e2 * (x - params.theta).powi(2);
    match state.n_chains() {
        1 => {
            let (mut norm, mut e) = (0.0, 0.0);
            for (x, wx) in nodes.iter().zip(&w) {
                let (v, dv) = chain_values(state, 0, *x);
                norm += wx * v * v;
                e += wx * (kin * dv * dv + on_site(*x) * v * v);
            }
            Ok(e / norm)
        }
        2 => {
            let a: Vec<(f64, f64)> = nodes.iter().map(|&x| chain_values(state, 0, x)).collect();
            let b: Vec<(f64, f64)> = nodes.iter().map(|&x| chain_values(state, 1, x)).collect();
            let rows = par::map_range(nodes.len(), |i| {
                let (mut norm, mut e) = (0.0, 0.0);
                let (va, dva) = a[i];
                for j in 0..nodes.len() {
                    let (vb, dvb) = b[j];
                    let psi = va * vb;
                    let p2 = psi * psi;
                    let ww = w[i] * w[j];
                    let grad = (dva * vb).powi(2) + (va * dvb).powi(2);
                    let pot = on_site(nodes[i]) + on_site(nodes[j]) + params.delta_p * (1.0 - (nodes[j] - nodes[i]).cos());
                    norm += ww * p2;
                    e += ww * (kin * grad + pot * p2);
                }
                (norm, e)
            });
            let norm: f64 = rows.iter().map(|r| r.0).sum();
            let e: f64 = rows.iter().map(|r| r.1).sum();
            Ok(e / norm)
        }
        n => Err(VariationalError::TooManyChains(n)),
    }
}

/// Normalised trial wavefunction with its constant cached.
#[derive(Debug, Clone)]
pub struct TrialWavefunction {
    state: VariationalState,
    norm_const: f64,
}

impl TrialWavefunction {
    pub fn new(state: VariationalState, grid: &QuadratureGrid) -> Self {
        let mats = PacketMatrices::build(state.alpha, state.packets, &grid.nodes(), &grid.weights());
        let total: f64 = state.coefficients.iter().map(|b| mats.form(&mats.overlap, b)).product();
        Self {
            norm_const: 1.0 / total.sqrt(),
            state,
        }
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub fn state(&self) -> &VariationalState {
        &self.state
    }

    pub fn amplitude(&self, phis: &[f64]) -> Result<f64, VariationalError> {
        if phis.len() != self.state.n_chains() {
            return Err(VariationalError::InvalidState(format!(
                "{} coordinates for {} chains",
                phis.len(),
                self.state.n_chains()
            )));
        }
        Ok(self.norm_const
            * phis
                .iter()
                .enumerate()
                .map(|(n, &x)| chain_values(&self.state, n, x).0)
                .product::<f64>())
    }
}

/// `Ψ(ϕ₁, …, ϕ_N)` normalised on `grid`.
pub fn trial_amplitude(phis: &[f64], state: &VariationalState, grid: &QuadratureGrid) -> Result<f64, VariationalError> {
    TrialWavefunction::new(state.clone(), grid).amplitude(phis)
}

fn mean_phase_separable(state: &VariationalState, grid: &QuadratureGrid) -> f64 {
    let mats = PacketMatrices::build(state.alpha, state.packets, &grid.nodes(), &grid.weights());
    let sum: f64 = state.coefficients.iter().map(|b| mats.moments(b, 0.0).mean).sum();
    sum / state.n_chains() as f64
}

/// `⟨Φ⟩` with `Φ` the chain-averaged phase, checked against the
/// half-spacing grid.
pub fn mean_phase(state: &VariationalState, grid: &QuadratureGrid) -> Result<f64, VariationalError> {
    let coarse = mean_phase_separable(state, grid);
    let fine = mean_phase_separable(state, &grid.refined());
    // an absolute floor keeps symmetric states (⟨Φ⟩ ≈ 0) from tripping the check
    if (coarse - fine).abs() > RICHARDSON_TOLERANCE * fine.abs().max(1.0) {
        return Err(VariationalError::QuadratureUnderresolved {
            coarse,
            fine,
            relative: (coarse - fine).abs() / fine.abs().max(1.0),
        });
    }
    Ok(coarse)
}

/// `⟨Φ⟩` by tensor quadrature for two chains.
pub fn mean_phase_dense(state: &VariationalState, grid: &QuadratureGrid) -> Result<f64, VariationalError> {
    if state.n_chains() != 2 {
        return Err(VariationalError::TooManyChains(state.n_chains()));
    }
    let nodes = grid.nodes();
    let w = grid.weights();
    let a: Vec<f64> = nodes.iter().map(|&x| chain_values(state, 0, x).0).collect();
    let b: Vec<f64> = nodes.iter().map(|&x| chain_values(state, 1, x).0).collect();
    let rows = par::map_range(nodes.len(), |i| {
        let (mut norm, mut m) = (0.0, 0.0);
        for j in 0..nodes.len() {
            let p2 = (a[i] * b[j]).powi(2) * w[i] * w[j];
            norm += p2;
            m += 0.5 * (nodes[i] + nodes[j]) * p2;
        }
        (norm, m)
    });
    let norm: f64 = rows.iter().map(|r| r.0).sum();
    Ok(rows.iter().map(|r| r.1).sum::<f64>() / norm)
}

/// Hyperspherical angles for a unit vector: `b₀ = cos θ₁`,
/// `b₁ = sin θ₁ cos θ₂`, …, `b_{k−1} = sin θ₁ ⋯ sin θ_{k−1}`.
pub fn to_angles(b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut angles = Vec::with_capacity(k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        if i + 2 == k {
            angles.push(b[i + 1].atan2(b[i]));
        } else {
            let tail = b[i + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            angles.push(tail.atan2(b[i]));
        }
    }
    angles
}

pub fn from_angles(angles: &[f64]) -> Vec<f64> {
    let k = angles.len() + 1;
    let mut b = Vec::with_capacity(k);
    let mut sin_prod = 1.0;
    for a in angles {
        b.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    b.push(sin_prod);
    // guard against rounding drift of the unit norm
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    b.iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Systematic starts in addition to the supplied state: each packet
    /// basis vector, the uniform mixture, then adjacent equal pairs.
    pub restarts: usize,
    pub simplex: NelderMeadOptions,
    /// Initial simplex offsets for the angles and for `ln α`.
    pub angle_step: f64,
    pub log_alpha_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            simplex: NelderMeadOptions::default(),
            angle_step: 0.4,
            log_alpha_step: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMinimum {
    pub energy: f64,
    pub state: VariationalState,
    pub evals: usize,
    /// False if the best descent ran out of evaluations.
    pub converged: bool,
    /// Relative change of the energy on the half-spacing grid.
    pub richardson: f64,
}

fn systematic_starts(packets: PacketRange, count: usize) -> Vec<Vec<f64>> {
    let k = packets.len();
    let mut out = Vec::new();
    for i in 0..k {
        let mut b = vec![0.0; k];
        b[i] = 1.0;
        out.push(b);
    }
    if k > 1 {
        out.push(vec![1.0 / (k as f64).sqrt(); k]);
        for i in 0..k - 1 {
            let mut b = vec![0.0; k];
            b[i] = std::f64::consts::FRAC_1_SQRT_2;
            b[i + 1] = std::f64::consts::FRAC_1_SQRT_2;
            out.push(b);
        }
    }
    out.truncate(count);
    out
}

struct Packing {
    n_chains: usize,
    k: usize,
}

impl Packing {
    fn encode(&self, coefficients: &[Vec<f64>], alpha: f64) -> Vec<f64> {
        let mut x: Vec<f64> = coefficients.iter().flat_map(|b| to_angles(b)).collect();
        x.push(alpha.ln());
        x
    }

    fn decode(&self, x: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let per = self.k - 1;
        let coefficients = (0..self.n_chains).map(|n| from_angles(&x[n * per..(n + 1) * per])).collect();
        (coefficients, x[self.n_chains * per].exp())
    }
}

/// Minimises the energy over coefficients (unit sphere per chain, via
/// angles) and `ln α` by Nelder–Mead from `init` and the systematic starts.
/// The winning state is checked on the half-spacing grid.
pub fn minimize_energy(
    params: &ChainHamiltonianParams,
    grid: &QuadratureGrid,
    init: &VariationalState,
    opts: &MinimizeOptions,
) -> Result<EnergyMinimum, VariationalError> {
    check_chains(params, init)?;
    let packets = init.packets;
    let packing = Packing {
        n_chains: init.n_chains(),
        k: packets.len(),
    };
    let nodes = grid.nodes();
    let weights = grid.weights();
    let objective = |x: &[f64]| {
        let (coefficients, alpha) = packing.decode(x);
        if !(alpha > 1e-8 && alpha < 1e8) {
            return f64::INFINITY;
        }
        let mats = PacketMatrices::build(alpha, packets, &nodes, &weights);
        energy_with(params, &coefficients, &mats)
    };

    let mut starts = vec![packing.encode(&init.coefficients, init.alpha)];
    for b in systematic_starts(packets, opts.restarts) {
        starts.push(packing.encode(&vec![b; init.n_chains()], init.alpha));
    }
    let mut step = vec![opts.angle_step; starts[0].len()];
    *step.last_mut().expect("alpha is always present") = opts.log_alpha_step;

    let mut evals = 0;
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for x0 in &starts {
        let m = nelder_mead(objective, x0, &step, &opts.simplex);
        evals += m.evals;
        if best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f, m.converged));
        }
    }
    let (x, energy, converged) = best.expect("at least one start");
    let (coefficients, alpha) = packing.decode(&x);
    let state = VariationalState::new(coefficients, packets, alpha)?;
    let fine = energy_separable(params, &state, &grid.refined())?;
    let richardson = richardson(energy, fine)?;
    Ok(EnergyMinimum {
        energy,
        state,
        evals,
        converged,
        richardson,
    })
}

/// Evenly spaced `n` points on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    /// Best of fresh restarts and a descent warm-started from the previous
    /// point's global minimum.
    pub global: Result<EnergyMinimum, VariationalError>,
    /// Descent warm-started from the previous point's tracked minimum only.
    pub tracked: Result<EnergyMinimum, VariationalError>,
}

impl SweepPoint {
    pub fn dominant_m(&self) -> Option<i32> {
        self.global.as_ref().ok().map(|m| m.state.dominant_m())
    }
}

fn better(a: Result<EnergyMinimum, VariationalError>, b: Result<EnergyMinimum, VariationalError>) -> Result<EnergyMinimum, VariationalError> {
    match (a, b) {
        (Ok(x), Ok(y)) => Ok(if y.energy < x.energy { y } else { x }),
        (Ok(x), Err(_)) | (Err(_), Ok(x)) => Ok(x),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Minimises at every `Θ` on `thetas`. Fresh restarts run in parallel across
/// the grid; the warm-started descents then run in order along it. Point
/// failures are kept in place.
pub fn band_structure(
    params: &ChainHamiltonianParams,
    thetas: &[f64],
    grid: &QuadratureGrid,
    init: &VariationalState,
    opts: &MinimizeOptions,
) -> Result<Vec<SweepPoint>, VariationalError> {
    if thetas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("thetas", "must be strictly increasing"));
    }
    check_chains(params, init)?;
    let fresh = par::map(thetas, |&th| minimize_energy(&params.with_theta(th), grid, init, opts));
    let warm_opts = MinimizeOptions { restarts: 0, ..*opts };
    let mut out: Vec<SweepPoint> = Vec::with_capacity(thetas.len());
    for (i, (&theta, fresh)) in thetas.iter().zip(fresh).enumerate() {
        let p = params.with_theta(theta);
        let (global, tracked) = match out.last() {
            None => (fresh.clone(), fresh),
            Some(prev) => {
                let from_global = prev
                    .global
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|g| minimize_energy(&p, grid, &g.state, &warm_opts));
                let tracked = match &prev.tracked {
                    Ok(t) => minimize_energy(&p, grid, &t.state, &warm_opts),
                    Err(_) => fresh.clone(),
                };
                (better(fresh, from_global), tracked)
            }
        };
        log::debug!("theta[{i}] = {theta}: global {:?}", global.as_ref().map(|g| g.energy));
        out.push(SweepPoint { theta, global, tracked });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaircasePoint {
    pub theta: f64,
    pub mean_phi_global: Result<f64, VariationalError>,
    pub mean_phi_tracked: Result<f64, VariationalError>,
}

/// `⟨Φ⟩` of the global and tracked minimisers along a sweep.
pub fn staircase_from(sweep: &[SweepPoint], grid: &QuadratureGrid) -> Vec<StaircasePoint> {
    sweep
        .iter()
        .map(|p| StaircasePoint {
            theta: p.theta,
            mean_phi_global: p.global.as_ref().map_err(Clone::clone).and_then(|m| mean_phase(&m.state, grid)),
            mean_phi_tracked: p.tracked.as_ref().map_err(Clone::clone).and_then(|m| mean_phase(&m.state, grid)),
        })
        .collect()
}

/// Runs [`band_structure`] and evaluates the mean phase along it.
pub fn phase_staircase(
    params: &ChainHamiltonianParams,
    thetas: &[f64],
    grid: &QuadratureGrid,
    init: &VariationalState,
    opts: &MinimizeOptions,
) -> Result<Vec<StaircasePoint>, VariationalError> {
    Ok(staircase_from(&band_structure(params, thetas, grid, init, opts)?, grid))
}

/// Number of maximal runs of equal dominant packet labels along a sweep
/// (failed points are skipped).
pub fn arc_count(sweep: &[SweepPoint]) -> usize {
    let labels: Vec<i32> = sweep.iter().filter_map(SweepPoint::dominant_m).collect();
    if labels.is_empty() {
        return 0;
    }
    1 + labels.windows(2).filter(|w| w[0] != w[1]).count()
}
