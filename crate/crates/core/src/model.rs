//! Shared model records: the random impurity lattice, the drive field and the
//! rigid-phase washboard parameters.
//!
//! All quantities are dimensionless.

use std::f64::consts::TAU;

use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The pinned generator behind every seeded draw in the crate.
pub type SimRng = rand_pcg::Pcg64;

/// Recorded in run metadata so outputs can be matched to the generator.
pub const RNG_NAME: &str = "pcg64 (Lcg128Xsl64, rand_pcg 0.10)";

/// Maximum number of re-draws spent repairing gaps below the floor.
pub const MAX_GAP_REPAIRS: usize = 10_000;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("cannot pack {n} sites with gap >= {min_gap} into length {length}")]
    InfeasiblePacking { n: usize, min_gap: f64, length: f64 },
    #[error("gap repair did not converge after {attempts} re-draws")]
    RepairExhausted { attempts: usize },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Ordered pinning sites on a periodic line of length `grid_length`, each with
/// a random pinning phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpurityLattice {
    sites: Vec<f64>,
    pinning_phases: Vec<f64>,
    concentration: f64,
    grid_length: f64,
    seed: u64,
    min_gap: f64,
}

impl ImpurityLattice {
    /// Builds a lattice from explicit sites and phases, checking every
    /// invariant (ordering, gap floor including the periodic wrap, range).
    pub fn from_parts(
        sites: Vec<f64>,
        pinning_phases: Vec<f64>,
        grid_length: f64,
        min_gap: f64,
    ) -> Result<Self, ModelError> {
        if sites.is_empty() {
            return Err(invalid("n_sites", "lattice needs at least one site"));
        }
        if sites.len() != pinning_phases.len() {
            return Err(invalid(
                "pinning_phases",
                format!("{} phases for {} sites", pinning_phases.len(), sites.len()),
            ));
        }
        if !(grid_length > 0.0 && grid_length.is_finite()) {
            return Err(invalid("grid_length", "must be positive and finite"));
        }
        if !(min_gap >= 0.0) {
            return Err(invalid("min_gap", "must be non-negative"));
        }
        if sites.iter().any(|&x| !(x > 0.0 && x < grid_length)) {
            return Err(invalid("sites", "all sites must lie in (0, L)"));
        }
        if pinning_phases.iter().any(|&p| !(0.0..TAU).contains(&p)) {
            return Err(invalid("pinning_phases", "phases must lie in [0, 2pi)"));
        }
        let lattice = Self {
            sites,
            pinning_phases,
            concentration: 1.0,
            grid_length,
            seed: 0,
            min_gap,
        };
        if let Some(i) = lattice.first_bad_gap() {
            return Err(invalid(
                "sites",
                format!("gap after site {i} is {} (< {min_gap} or not increasing)", lattice.gap(i)),
            ));
        }
        Ok(lattice)
    }

    /// Evenly spaced sites at `(i + 1/2)·L/n` with the given pinning phases.
    pub fn uniform(grid_length: f64, pinning_phases: Vec<f64>) -> Result<Self, ModelError> {
        let n = pinning_phases.len();
        let spacing = grid_length / n.max(1) as f64;
        let sites = (0..n).map(|i| (i as f64 + 0.5) * spacing).collect();
        Self::from_parts(sites, pinning_phases, grid_length, 0.0)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn pinning_phases(&self) -> &[f64] {
        &self.pinning_phases
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn grid_length(&self) -> f64 {
        self.grid_length
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// Forward gap `X_{i+1} - X_i`; the last site wraps to `X_0 + L`.
    pub fn gap(&self, i: usize) -> f64 {
        let n = self.sites.len();
        if i + 1 < n {
            self.sites[i + 1] - self.sites[i]
        } else {
            self.sites[0] + self.grid_length - self.sites[n - 1]
        }
    }

    fn first_bad_gap(&self) -> Option<usize> {
        (0..self.sites.len()).find(|&i| {
            let g = self.gap(i);
            !(g > 0.0) || g < self.min_gap
        })
    }
}

/// Draws `n` pinning sites uniformly on `(0, L)`, sorts them and re-draws any
/// site that sits closer than `min_gap` to its left neighbour (periodic wrap
/// included). Sites are `X_i = c·R_i` with `R_i` uniform on `(0, L/c)`.
pub fn generate_impurities(
    n: usize,
    concentration: f64,
    grid_length: f64,
    seed: u64,
    min_gap: f64,
) -> Result<ImpurityLattice, ModelError> {
    if n == 0 {
        return Err(invalid("n_sites", "must be at least 1"));
    }
    if !(grid_length > 0.0 && grid_length.is_finite()) {
        return Err(invalid("grid_length", "must be positive and finite"));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(invalid("concentration", "must be positive and finite"));
    }
    if !(min_gap >= 0.0 && min_gap.is_finite()) {
        return Err(invalid("min_gap", "must be non-negative and finite"));
    }
    if min_gap * n as f64 >= grid_length {
        return Err(ModelError::InfeasiblePacking {
            n,
            min_gap,
            length: grid_length,
        });
    }

    let mut rng = seeded_rng(seed);
    let raw_length = grid_length / concentration;
    let draw = |rng: &mut SimRng| loop {
        let r = rng.random::<f64>() * raw_length;
        let x = concentration * r;
        if x > 0.0 && x < grid_length {
            return x;
        }
    };

    let mut sites: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
    sites.sort_by(f64::total_cmp);

    let mut lattice = ImpurityLattice {
        sites,
        pinning_phases: Vec::new(),
        concentration,
        grid_length,
        seed,
        min_gap,
    };
    let mut attempts = 0;
    while let Some(i) = lattice.first_bad_gap() {
        if attempts == MAX_GAP_REPAIRS {
            return Err(ModelError::RepairExhausted { attempts });
        }
        attempts += 1;
        // re-draw the right-hand member of the offending pair
        let j = (i + 1) % n;
        lattice.sites[j] = draw(&mut rng);
        lattice.sites.sort_by(f64::total_cmp);
    }

    lattice.pinning_phases = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
    Ok(lattice)
}

/// Default gap floor, `0.01·L/n`.
pub fn default_min_gap(n: usize, grid_length: f64) -> f64 {
    0.01 * grid_length / n.max(1) as f64
}

/// `E(t) = E_dc + E_ac·sin(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveField {
    pub e_dc: f64,
    pub e_ac: f64,
    pub omega: f64,
}

impl DriveField {
    pub fn new(e_dc: f64, e_ac: f64, omega: f64) -> Result<Self, ModelError> {
        if !e_dc.is_finite() {
            return Err(invalid("e_dc", "must be finite"));
        }
        if !(e_ac >= 0.0 && e_ac.is_finite()) {
            return Err(invalid("e_ac", "must be non-negative"));
        }
        if e_ac > 0.0 && !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid("omega", "must be positive when e_ac > 0"));
        }
        Ok(Self { e_dc, e_ac, omega })
    }

    pub fn dc(e_dc: f64) -> Self {
        Self {
            e_dc,
            e_ac: 0.0,
            omega: 1.0,
        }
    }

    pub fn field_at(&self, t: f64) -> f64 {
        field_at(self, t)
    }
}

pub fn field_at(drive: &DriveField, t: f64) -> f64 {
    drive.e_dc + drive.e_ac * (drive.omega * t).sin()
}

/// Rigid-phase damped pendulum: `ϕ̈ + ϕ̇/τ + ω₀² sin ϕ = coupling·E(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashboardParams {
    pub tau: f64,
    pub omega0_sq: f64,
    pub coupling: f64,
}

impl WashboardParams {
    pub fn new(tau: f64, omega0_sq: f64, coupling: f64) -> Result<Self, ModelError> {
        if !(tau > 0.0) {
            return Err(invalid("tau", "must be positive"));
        }
        if !(omega0_sq >= 0.0 && omega0_sq.is_finite()) {
            return Err(invalid("omega0_sq", "must be non-negative"));
        }
        if !coupling.is_finite() {
            return Err(invalid("coupling", "must be finite"));
        }
        Ok(Self {
            tau,
            omega0_sq,
            coupling,
        })
    }
}
