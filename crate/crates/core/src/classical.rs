//! Overdamped random-pinning phase dynamics.
//!
//! Each impurity site carries a phase `ϕ_i` obeying
//!
//! ```text
//! ϕ̇_i = Δ²ϕ_i + ½·E(t)·(X_{i+1} − X_i) + V·sin(θ_i + ϕ_i)
//! ```
//!
//! on a periodic line of length `L`. The mean phase velocity `⟨ϕ̇⟩` is the
//! current; its cosine/sine transform is accumulated inside the integrator
//! loop, step by step, and converted to conductivity and dielectric response.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{field_at, DriveField, ImpurityLattice, ModelError, WashboardParams};
use crate::par;

/// Any `|ϕ_i|` above this is treated as a blow-up.
pub const OVERFLOW_GUARD: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state has {got} phases but the lattice has {expected} sites")]
    Misaligned { expected: usize, got: usize },
    #[error("zero gap next to site {index}")]
    DegenerateGap { index: usize },
    #[error("phase diverged at step {step} (t = {t}, max |phi| = {max_abs:e})")]
    Divergence {
        step: usize,
        t: f64,
        max_abs: f64,
        state: Box<PhaseState>,
    },
    #[error("frequency {0} is not a probe frequency of this accumulator")]
    UnknownFrequency(f64),
    #[error("dielectric response undefined at omega = {0}")]
    ZeroFrequency(f64),
    #[error("all {count} fields classified as {class:?}; threshold not bracketed")]
    UnresolvedThreshold { count: usize, class: Motion },
    #[error("state at e_dc = {e_dc} did not relax to a pinned configuration within {steps} steps (max |phi_dot| = {residual:e})")]
    NotPinned { e_dc: f64, steps: usize, residual: f64 },
    #[error("probe at e_dc = {e_dc} neither settled nor slipped within {steps} steps")]
    Undecided { e_dc: f64, steps: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ClassicalError {
    ClassicalError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Phases aligned index-for-index with an [`ImpurityLattice`], plus the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phases: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn zeros(n: usize) -> Self {
        Self {
            phases: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn mean_phase(&self) -> f64 {
        self.phases.iter().sum::<f64>() / self.phases.len() as f64
    }

    fn check_aligned(&self, lattice: &ImpurityLattice) -> Result<(), ClassicalError> {
        if self.phases.len() != lattice.len() {
            return Err(ClassicalError::Misaligned {
                expected: lattice.len(),
                got: self.phases.len(),
            });
        }
        Ok(())
    }
}

/// Second-order Runge–Kutta flavour. Midpoint is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rk2Variant {
    #[default]
    Midpoint,
    Heun,
}

/// Discrete second difference on raw slices; `i = 0` and `i = n-1` wrap with
/// `X_{n-1} − L` and `X_0 + L` respectively.
pub(crate) fn laplacian_at(
    phases: &[f64],
    sites: &[f64],
    length: f64,
    i: usize,
) -> Result<f64, ClassicalError> {
    let n = sites.len();
    let (phi_l, x_l) = if i == 0 {
        (phases[n - 1], sites[n - 1] - length)
    } else {
        (phases[i - 1], sites[i - 1])
    };
    let (phi_r, x_r) = if i + 1 == n {
        (phases[0], sites[0] + length)
    } else {
        (phases[i + 1], sites[i + 1])
    };
    let right_gap = x_r - sites[i];
    let left_gap = sites[i] - x_l;
    if right_gap == 0.0 || left_gap == 0.0 {
        return Err(ClassicalError::DegenerateGap { index: i });
    }
    Ok((phi_r - phases[i]) / right_gap - (phases[i] - phi_l) / left_gap)
}

pub fn discrete_laplacian(
    state: &PhaseState,
    lattice: &ImpurityLattice,
    i: usize,
) -> Result<f64, ClassicalError> {
    state.check_aligned(lattice)?;
    if i >= lattice.len() {
        return Err(invalid("i", format!("index {i} out of range")));
    }
    laplacian_at(&state.phases, lattice.sites(), lattice.grid_length(), i)
}

/// Lattice geometry flattened for the inner loop.
#[derive(Debug, Clone)]
struct PinningSystem {
    inv_gap: Vec<f64>,
    half_gap: Vec<f64>,
    theta: Vec<f64>,
}

impl PinningSystem {
    fn new(lattice: &ImpurityLattice) -> Result<Self, ClassicalError> {
        let n = lattice.len();
        let mut inv_gap = Vec::with_capacity(n);
        let mut half_gap = Vec::with_capacity(n);
        for i in 0..n {
            let g = lattice.gap(i);
            if g == 0.0 {
                return Err(ClassicalError::DegenerateGap { index: i });
            }
            inv_gap.push(1.0 / g);
            half_gap.push(0.5 * g);
        }
        Ok(Self {
            inv_gap,
            half_gap,
            theta: lattice.pinning_phases().to_vec(),
        })
    }

    /// Writes the right-hand side into `out` and returns its lattice mean.
    fn rhs_into(&self, phases: &[f64], field: f64, v: f64, out: &mut [f64]) -> f64 {
        let n = phases.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (l, r) = (if i == 0 { n - 1 } else { i - 1 }, if i + 1 == n { 0 } else { i + 1 });
            let lap = self.inv_gap[i] * (phases[r] - phases[i]) - self.inv_gap[l] * (phases[i] - phases[l]);
            let d = lap + field * self.half_gap[i] + v * (self.theta[i] + phases[i]).sin();
            out[i] = d;
            sum += d;
        }
        sum / n as f64
    }
}

pub fn phase_rhs(
    state: &PhaseState,
    lattice: &ImpurityLattice,
    drive: &DriveField,
    v_strength: f64,
    t: f64,
) -> Result<Vec<f64>, ClassicalError> {
    state.check_aligned(lattice)?;
    let sys = PinningSystem::new(lattice)?;
    let mut out = vec![0.0; lattice.len()];
    sys.rhs_into(&state.phases, field_at(drive, t), v_strength, &mut out);
    Ok(out)
}

/// Reusable RK2 stepper holding scratch buffers.
struct Rk2 {
    sys: PinningSystem,
    drive: DriveField,
    v: f64,
    dt: f64,
    variant: Rk2Variant,
    k1: Vec<f64>,
    k2: Vec<f64>,
    mid: Vec<f64>,
}

impl Rk2 {
    fn new(
        lattice: &ImpurityLattice,
        drive: DriveField,
        v: f64,
        dt: f64,
        variant: Rk2Variant,
    ) -> Result<Self, ClassicalError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !v.is_finite() {
            return Err(invalid("v_strength", "must be finite"));
        }
        let n = lattice.len();
        Ok(Self {
            sys: PinningSystem::new(lattice)?,
            drive,
            v,
            dt,
            variant,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            mid: vec![0.0; n],
        })
    }

    /// Advances `state` in place. Returns `(⟨ϕ̇⟩ at the start state, max |ϕ̇_i| at start)`.
    fn step(&mut self, state: &mut PhaseState, step: usize) -> Result<(f64, f64), ClassicalError> {
        let dt = self.dt;
        let t = state.t;
        let mean_rate = self
            .sys
            .rhs_into(&state.phases, field_at(&self.drive, t), self.v, &mut self.k1);
        let max_rate = self.k1.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        match self.variant {
            Rk2Variant::Midpoint => {
                for ((m, p), k) in self.mid.iter_mut().zip(&state.phases).zip(&self.k1) {
                    *m = p + 0.5 * dt * k;
                }
                self.sys
                    .rhs_into(&self.mid, field_at(&self.drive, t + 0.5 * dt), self.v, &mut self.k2);
                for (p, k) in state.phases.iter_mut().zip(&self.k2) {
                    *p += dt * k;
                }
            }
            Rk2Variant::Heun => {
                for ((m, p), k) in self.mid.iter_mut().zip(&state.phases).zip(&self.k1) {
                    *m = p + dt * k;
                }
                self.sys
                    .rhs_into(&self.mid, field_at(&self.drive, t + dt), self.v, &mut self.k2);
                for ((p, a), b) in state.phases.iter_mut().zip(&self.k1).zip(&self.k2) {
                    *p += 0.5 * dt * (a + b);
                }
            }
        }
        state.t = t + dt;
        let max_abs = state.phases.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        if !(max_abs <= OVERFLOW_GUARD) {
            return Err(ClassicalError::Divergence {
                step,
                t: state.t,
                max_abs,
                state: Box::new(state.clone()),
            });
        }
        Ok((mean_rate, max_rate))
    }
}

/// One second-order Runge–Kutta step (midpoint).
pub fn step_rk2(
    state: &PhaseState,
    lattice: &ImpurityLattice,
    drive: &DriveField,
    v_strength: f64,
    dt: f64,
) -> Result<PhaseState, ClassicalError> {
    step_rk2_with(state, lattice, drive, v_strength, dt, Rk2Variant::Midpoint)
}

pub fn step_rk2_with(
    state: &PhaseState,
    lattice: &ImpurityLattice,
    drive: &DriveField,
    v_strength: f64,
    dt: f64,
    variant: Rk2Variant,
) -> Result<PhaseState, ClassicalError> {
    state.check_aligned(lattice)?;
    if state.phases.iter().any(|p| !p.is_finite()) {
        return Err(invalid("state", "phases must be finite"));
    }
    let mut rk = Rk2::new(lattice, *drive, v_strength, dt, variant)?;
    let mut next = state.clone();
    rk.step(&mut next, 0)?;
    Ok(next)
}

/// Running cosine/sine transform of `⟨ϕ̇⟩` at a fixed set of probe
/// frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseAccumulator {
    probe_frequencies: Vec<f64>,
    cos_sum: Vec<f64>,
    sin_sum: Vec<f64>,
    g1: f64,
    samples: usize,
    duration: f64,
}

impl ResponseAccumulator {
    pub fn new(probe_frequencies: Vec<f64>, g1: f64) -> Self {
        let n = probe_frequencies.len();
        Self {
            probe_frequencies,
            cos_sum: vec![0.0; n],
            sin_sum: vec![0.0; n],
            g1,
            samples: 0,
            duration: 0.0,
        }
    }

    /// Adds one accepted step: `rate` is `⟨ϕ̇⟩` at time `t`, `dt` the step.
    pub fn record(&mut self, t: f64, rate: f64, dt: f64) {
        for ((w, c), s) in self
            .probe_frequencies
            .iter()
            .zip(self.cos_sum.iter_mut())
            .zip(self.sin_sum.iter_mut())
        {
            let (sin, cos) = (w * t).sin_cos();
            *c += rate * cos * dt;
            *s += rate * sin * dt;
        }
        self.samples += 1;
        self.duration += dt;
    }

    pub fn probe_frequencies(&self) -> &[f64] {
        &self.probe_frequencies
    }

    pub fn cos_sums(&self) -> &[f64] {
        &self.cos_sum
    }

    pub fn sin_sums(&self) -> &[f64] {
        &self.sin_sum
    }

    pub fn g1(&self) -> f64 {
        self.g1
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    fn index_of(&self, omega: f64) -> Option<usize> {
        self.probe_frequencies
            .iter()
            .position(|&w| w == omega || (w - omega).abs() <= 1e-12 * w.abs().max(omega.abs()))
    }
}

/// `σ(ω) = g₁·Σ⟨ϕ̇⟩cos(ωt)Δt + i·g₁·Σ⟨ϕ̇⟩sin(ωt)Δt`.
pub fn conductivity(acc: &ResponseAccumulator, omega: f64) -> Result<Complex64, ClassicalError> {
    let k = acc.index_of(omega).ok_or(ClassicalError::UnknownFrequency(omega))?;
    Ok(Complex64::new(acc.g1 * acc.cos_sum[k], acc.g1 * acc.sin_sum[k]))
}

/// `Re ε = 4π·Im σ/ω`, `Im ε = 4π·Re σ/ω`.
pub fn dielectric(sigma: Complex64, omega: f64) -> Result<Complex64, ClassicalError> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(ClassicalError::ZeroFrequency(omega));
    }
    Ok(Complex64::new(4.0 * PI * sigma.im / omega, 4.0 * PI * sigma.re / omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub mean_phase: f64,
    pub mean_phase_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    pub g1: f64,
    pub variant: Rk2Variant,
    /// Keep one trace row per step.
    pub record_trace: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            g1: 1.0,
            variant: Rk2Variant::Midpoint,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportRun {
    /// Row `n` describes the start state of step `n`.
    pub trace: Vec<TraceRow>,
    pub response: ResponseAccumulator,
    pub final_state: PhaseState,
}

impl TransportRun {
    /// Mean of `⟨ϕ̇⟩` over the trailing `fraction` of recorded steps.
    pub fn late_velocity(&self, fraction: f64) -> f64 {
        late_velocity(&self.trace, fraction)
    }
}

pub fn late_velocity(trace: &[TraceRow], fraction: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let keep = ((trace.len() as f64 * fraction).ceil() as usize).clamp(1, trace.len());
    let tail = &trace[trace.len() - keep..];
    tail.iter().map(|r| r.mean_phase_dot).sum::<f64>() / keep as f64
}

/// Integrates `n_steps` RK2 steps from `ϕ ≡ 0`, accumulating the response
/// at every probe frequency using each step's start-state `⟨ϕ̇⟩`.
pub fn run_transport(
    lattice: &ImpurityLattice,
    drive: &DriveField,
    v_strength: f64,
    dt: f64,
    n_steps: usize,
    probe_frequencies: &[f64],
) -> Result<TransportRun, ClassicalError> {
    run_transport_from(
        PhaseState::zeros(lattice.len()),
        lattice,
        drive,
        v_strength,
        dt,
        n_steps,
        probe_frequencies,
        &TransportOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_transport_from(
    initial: PhaseState,
    lattice: &ImpurityLattice,
    drive: &DriveField,
    v_strength: f64,
    dt: f64,
    n_steps: usize,
    probe_frequencies: &[f64],
    opts: &TransportOptions,
) -> Result<TransportRun, ClassicalError> {
    initial.check_aligned(lattice)?;
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    let mut rk = Rk2::new(lattice, *drive, v_strength, dt, opts.variant)?;
    let mut acc = ResponseAccumulator::new(probe_frequencies.to_vec(), opts.g1);
    let mut trace = Vec::with_capacity(if opts.record_trace { n_steps } else { 0 });
    let mut state = initial;
    for step in 0..n_steps {
        let t = state.t;
        let mean_phase = state.mean_phase();
        let (rate, _) = rk.step(&mut state, step)?;
        acc.record(t, rate, dt);
        if opts.record_trace {
            trace.push(TraceRow {
                t,
                mean_phase,
                mean_phase_dot: rate,
            });
        }
    }
    Ok(TransportRun {
        trace,
        response: acc,
        final_state: state,
    })
}

/// Integrates at constant drive until every `|ϕ̇_i|` drops below `tol`.
/// Fails with [`ClassicalError::NotPinned`] if that never happens within
/// `max_steps` (the state is sliding or relaxing too slowly).
pub fn relax(
    initial: PhaseState,
    lattice: &ImpurityLattice,
    e_dc: f64,
    v_strength: f64,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<PhaseState, ClassicalError> {
    initial.check_aligned(lattice)?;
    let mut rk = Rk2::new(lattice, DriveField::dc(e_dc), v_strength, dt, Rk2Variant::Midpoint)?;
    let mut state = initial;
    let mut residual = f64::INFINITY;
    for step in 0..max_steps {
        let (_, max_rate) = rk.step(&mut state, step)?;
        residual = max_rate;
        if max_rate < tol {
            return Ok(state);
        }
    }
    Err(ClassicalError::NotPinned {
        e_dc,
        steps: max_steps,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Pinned,
    Sliding,
}

impl Motion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Motion::Pinned => "pinned",
            Motion::Sliding => "sliding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Trailing fraction of steps averaged for the late-time velocity.
    pub window: f64,
    /// Pinned iff the late-time mean `|⟨ϕ̇⟩|` is below this.
    pub tolerance: f64,
    /// Bisection refinements inside the bracketing grid cell.
    pub bisections: usize,
    pub v_strength: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            window: 0.25,
            tolerance: 1e-6,
            bisections: 8,
            v_strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub e_dc: f64,
    pub motion: Motion,
    pub late_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub points: Vec<ScanPoint>,
    /// Bisection probes in evaluation order.
    pub refinements: Vec<ScanPoint>,
    /// Final `(pinned, sliding)` bracket.
    pub bracket: (f64, f64),
    pub e_th: f64,
}

impl ThresholdScan {
    /// Number of pinned↔sliding changes along the field grid.
    pub fn crossovers(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[0].motion != w[1].motion)
            .count()
    }
}

pub fn classify_field(
    lattice: &ImpurityLattice,
    e_dc: f64,
    dt: f64,
    n_steps: usize,
    opts: &ScanOptions,
) -> Result<ScanPoint, ClassicalError> {
    let run = run_transport_from(
        PhaseState::zeros(lattice.len()),
        lattice,
        &DriveField::dc(e_dc),
        opts.v_strength,
        dt,
        n_steps,
        &[],
        &TransportOptions::default(),
    )?;
    let late = run.late_velocity(opts.window);
    let motion = if late.abs() < opts.tolerance {
        Motion::Pinned
    } else {
        Motion::Sliding
    };
    Ok(ScanPoint {
        e_dc,
        motion,
        late_velocity: late,
    })
}

/// Classifies each DC field (runs in parallel), then bisects the threshold
/// between the largest pinned field below the smallest sliding field and that
/// sliding field.
pub fn threshold_scan(
    lattice: &ImpurityLattice,
    fields: &[f64],
    dt: f64,
    n_steps: usize,
    opts: &ScanOptions,
) -> Result<ThresholdScan, ClassicalError> {
    if fields.is_empty() {
        return Err(invalid("fields", "need at least one field"));
    }
    if fields.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("fields", "field grid must be strictly increasing"));
    }
    let points = par::map(fields, |&e| classify_field(lattice, e, dt, n_steps, opts))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let first_sliding = points.iter().position(|p| p.motion == Motion::Sliding);
    let (mut lo, mut hi) = match first_sliding {
        Some(k) if k > 0 => (points[k - 1].e_dc, points[k].e_dc),
        _ => {
            return Err(ClassicalError::UnresolvedThreshold {
                count: points.len(),
                class: points[0].motion,
            })
        }
    };
    let mut refinements = Vec::with_capacity(opts.bisections);
    for _ in 0..opts.bisections {
        let mid = 0.5 * (lo + hi);
        let p = classify_field(lattice, mid, dt, n_steps, opts)?;
        match p.motion {
            Motion::Pinned => lo = mid,
            Motion::Sliding => hi = mid,
        }
        refinements.push(p);
    }
    Ok(ThresholdScan {
        points,
        refinements,
        bracket: (lo, hi),
        e_th: 0.5 * (lo + hi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub v_strength: f64,
    pub dt: f64,
    /// Stop once the bracket is narrower than this fraction of its lower end.
    pub rel_width: f64,
    /// A probe counts as pinned once every `|ϕ̇_i|` is below
    /// `settle_fraction · width · ⟨gap⟩/2`, where `width` is the current
    /// bracket width.
    pub settle_fraction: f64,
    /// Step budget per probe.
    pub max_steps: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            v_strength: 1.0,
            dt: 0.02,
            rel_width: 1e-8,
            settle_fraction: 1e-3,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRefinement {
    /// Final `(pinned, sliding)` bracket.
    pub bracket: (f64, f64),
    /// Relaxed configuration at the pinned end of the bracket.
    pub pinned_state: PhaseState,
    /// Probes in evaluation order; `late_velocity` holds the final `⟨ϕ̇⟩`.
    pub probes: Vec<ScanPoint>,
}

const PROBE_CHECK_EVERY: usize = 16;

/// Narrows a `(pinned, sliding)` bracket by bisection. Each probe starts from
/// the relaxed state at the current pinned end, so the phases only move
/// forward; the probe slides once any phase has advanced by 2π and is pinned
/// once the residual falls below a tolerance tied to the bracket width.
pub fn refine_threshold(
    lattice: &ImpurityLattice,
    bracket: (f64, f64),
    opts: &RefineOptions,
) -> Result<ThresholdRefinement, ClassicalError> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(invalid("bracket", "lower end must be below upper end"));
    }
    let n = lattice.len();
    let half_gap = 0.5 * lattice.grid_length() / n as f64;
    let tol_for = |width: f64| (opts.settle_fraction * width * half_gap).max(1e-14);
    let mut lo_state = relax(
        PhaseState::zeros(n),
        lattice,
        lo,
        opts.v_strength,
        opts.dt,
        tol_for(hi - lo),
        opts.max_steps,
    )?;
    let mut probes = Vec::new();
    while hi - lo > opts.rel_width * lo.abs() {
        let mid = 0.5 * (lo + hi);
        let tol = tol_for(hi - lo);
        let mut rk = Rk2::new(lattice, DriveField::dc(mid), opts.v_strength, opts.dt, Rk2Variant::Midpoint)?;
        let mut state = lo_state.clone();
        let mut outcome = None;
        let mut mean_rate = 0.0;
        for step in 0..opts.max_steps {
            let (mean, max_rate) = rk.step(&mut state, step)?;
            mean_rate = mean;
            if max_rate < tol {
                outcome = Some(Motion::Pinned);
                break;
            }
            if step % PROBE_CHECK_EVERY == 0
                && state
                    .phases
                    .iter()
                    .zip(&lo_state.phases)
                    .any(|(p, p0)| p - p0 > 2.0 * PI)
            {
                outcome = Some(Motion::Sliding);
                break;
            }
        }
        let motion = outcome.ok_or(ClassicalError::Undecided {
            e_dc: mid,
            steps: opts.max_steps,
        })?;
        probes.push(ScanPoint {
            e_dc: mid,
            motion,
            late_velocity: mean_rate,
        });
        match motion {
            Motion::Pinned => {
                lo = mid;
                lo_state = state;
            }
            Motion::Sliding => hi = mid,
        }
    }
    lo_state.t = 0.0;
    Ok(ThresholdRefinement {
        bracket: (lo, hi),
        pinned_state: lo_state,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DielectricOptions {
    pub v_strength: f64,
    pub dt: f64,
    pub g1: f64,
    /// Relaxation stops once every `|ϕ̇_i|` is below this.
    pub relax_tolerance: f64,
    pub relax_max_steps: usize,
    /// Whole drive periods integrated after relaxation.
    pub periods: usize,
}

impl Default for DielectricOptions {
    fn default() -> Self {
        Self {
            v_strength: 1.0,
            dt: 0.01,
            g1: 1.0,
            relax_tolerance: 1e-12,
            relax_max_steps: 2_000_000,
            periods: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricPoint {
    pub e_dc: f64,
    pub omega: f64,
    pub sigma: Complex64,
    pub epsilon: Complex64,
}

/// Small-signal response at `e_dc`: relax the pinned configuration under the
/// DC field, then apply `e_ac·sin(ωt)` for whole periods and read `σ(ω)` and
/// `ε(ω)` off the in-loop accumulator.
pub fn dielectric_response(
    lattice: &ImpurityLattice,
    e_dc: f64,
    e_ac: f64,
    omega: f64,
    opts: &DielectricOptions,
) -> Result<DielectricPoint, ClassicalError> {
    dielectric_response_from(PhaseState::zeros(lattice.len()), lattice, e_dc, e_ac, omega, opts)
}

/// As [`dielectric_response`], relaxing from `initial` instead of zeros.
pub fn dielectric_response_from(
    initial: PhaseState,
    lattice: &ImpurityLattice,
    e_dc: f64,
    e_ac: f64,
    omega: f64,
    opts: &DielectricOptions,
) -> Result<DielectricPoint, ClassicalError> {
    if !(omega > 0.0) {
        return Err(ClassicalError::ZeroFrequency(omega));
    }
    let drive = DriveField::new(e_dc, e_ac, omega)?;
    let mut state = relax(
        initial,
        lattice,
        e_dc,
        opts.v_strength,
        opts.dt,
        opts.relax_tolerance,
        opts.relax_max_steps,
    )?;
    state.t = 0.0;
    let period = 2.0 * PI / omega;
    let n_steps = ((opts.periods as f64 * period) / opts.dt).round().max(1.0) as usize;
    // snap dt so the window holds exactly `periods` cycles
    let dt = opts.periods as f64 * period / n_steps as f64;
    let run = run_transport_from(
        state,
        lattice,
        &drive,
        opts.v_strength,
        dt,
        n_steps,
        &[omega],
        &TransportOptions {
            g1: opts.g1,
            variant: Rk2Variant::Midpoint,
            record_trace: false,
        },
    )?;
    let sigma = conductivity(&run.response, omega)?;
    Ok(DielectricPoint {
        e_dc,
        omega,
        sigma,
        epsilon: dielectric(sigma, omega)?,
    })
}

/// Runs [`dielectric_response`] for every field in parallel.
pub fn dielectric_sweep(
    lattice: &ImpurityLattice,
    fields: &[f64],
    e_ac: f64,
    omega: f64,
    opts: &DielectricOptions,
) -> Result<Vec<DielectricPoint>, ClassicalError> {
    par::map(fields, |&e| dielectric_response(lattice, e, e_ac, omega, opts))
        .into_iter()
        .collect()
}

/// `|ε/ε_initial|` with the first point as reference.
pub fn rescaled_magnitudes(points: &[DielectricPoint]) -> Vec<f64> {
    match points.first() {
        Some(first) => {
            let base = first.epsilon.norm();
            points.iter().map(|p| p.epsilon.norm() / base).collect()
        }
        None => Vec::new(),
    }
}

/// One midpoint step of the rigid-phase damped driven pendulum. `t` is the
/// time at the start of the step.
pub fn step_washboard(
    phi: f64,
    phi_dot: f64,
    params: &WashboardParams,
    drive: &DriveField,
    t: f64,
    dt: f64,
) -> Result<(f64, f64), ClassicalError> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let accel = |p: f64, v: f64, t: f64| {
        params.coupling * field_at(drive, t) - v / params.tau - params.omega0_sq * p.sin()
    };
    let a1 = accel(phi, phi_dot, t);
    let p_mid = phi + 0.5 * dt * phi_dot;
    let v_mid = phi_dot + 0.5 * dt * a1;
    let a2 = accel(p_mid, v_mid, t + 0.5 * dt);
    let next = (phi + dt * v_mid, phi_dot + dt * a2);
    if !(next.0.abs() <= OVERFLOW_GUARD && next.1.abs() <= OVERFLOW_GUARD) {
        return Err(ClassicalError::Divergence {
            step: 0,
            t: t + dt,
            max_abs: next.0.abs().max(next.1.abs()),
            state: Box::new(PhaseState {
                phases: vec![next.0],
                t: t + dt,
            }),
        });
    }
    Ok(next)
}
