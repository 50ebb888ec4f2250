//! Run configuration: TOML with one experiment section, a seed and optional
//! sweep axes.
//!
//! ```toml
//! seed = 42
//!
//! [classical]
//! n_sites = 16
//! e_dc = 0.3
//!
//! [[sweep]]
//! param = "e_dc"
//! from = 0.0
//! to = 1.0
//! points = 10
//! ```
//!
//! Unknown keys are rejected. Sweep parameters are paths relative to the
//! experiment section (`threshold.n_steps`, `e_dc`, ...).

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use cdw_core::classical::Rk2Variant;
use cdw_core::current_laws::{Law, Loss};
use cdw_core::quantum::{Boundary, DufortFrankelForm, Scheme};
use cdw_core::sine_gordon::Branch;
use cdw_core::variational::QuadratureRule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Classical,
    Quantum,
    Soliton,
    Variational,
    Fit,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Classical, Kind::Quantum, Kind::Soliton, Kind::Variational, Kind::Fit];

    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Classical => "classical",
            Kind::Quantum => "quantum",
            Kind::Soliton => "soliton",
            Kind::Variational => "variational",
            Kind::Fit => "fit",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum: Option<QuantumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soliton: Option<SolitonConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variational: Option<VariationalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub n_sites: usize,
    pub concentration: f64,
    pub grid_length: f64,
    /// Defaults to `0.01·L/n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    pub e_dc: f64,
    pub e_ac: f64,
    pub omega: f64,
    pub v_strength: f64,
    pub g1: f64,
    pub rk2: Rk2Variant,
    pub dt: f64,
    pub n_steps: usize,
    /// Empty means `[omega]`.
    pub probe_frequencies: Vec<f64>,
    pub trace_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dielectric: Option<DielectricConfig>,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            n_sites: 64,
            concentration: 1.0,
            grid_length: 64.0,
            min_gap: None,
            e_dc: 0.0,
            e_ac: 0.0,
            omega: 1.0,
            v_strength: 1.0,
            g1: 1.0,
            rk2: Rk2Variant::Midpoint,
            dt: 0.02,
            n_steps: 10_000,
            probe_frequencies: Vec::new(),
            trace_stride: 1,
            threshold: None,
            dielectric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub fields: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub window: f64,
    pub tolerance: f64,
    pub bisections: usize,
    /// Follow the scan with the warm-started refinement.
    pub refine: bool,
    pub rel_width: f64,
    pub settle_fraction: f64,
    pub max_steps: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            fields: (0..12).map(|k| 0.2 * k as f64).collect(),
            dt: 0.02,
            n_steps: 40_000,
            window: 0.25,
            tolerance: 1e-6,
            bisections: 6,
            refine: false,
            rel_width: 1e-8,
            settle_fraction: 1e-3,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DielectricConfig {
    pub omega: f64,
    /// AC amplitude as a fraction of the measured threshold.
    pub e_ac_fraction: f64,
    /// Fields are `(1 − offset)·E_th`; the first is the rescaling reference.
    pub offsets: Vec<f64>,
    pub dt: f64,
    pub relax_tolerance: f64,
    pub relax_max_steps: usize,
    pub periods: usize,
}

impl Default for DielectricConfig {
    fn default() -> Self {
        Self {
            omega: 1e-4,
            e_ac_fraction: 1e-8,
            offsets: vec![0.5, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            dt: 0.02,
            relax_tolerance: 1e-13,
            relax_max_steps: 50_000_000,
            periods: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Packet {
    #[default]
    Gaussian,
    /// Harmonic ground state of the well at `center`.
    Ground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    pub scheme: Scheme,
    pub df_form: DufortFrankelForm,
    pub d_coeff: f64,
    pub mu_e_sq: f64,
    pub omega_p_sq: f64,
    pub omega_d: f64,
    pub hbar: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub boundary: Boundary,
    pub packet: Packet,
    pub center: f64,
    pub sigma: f64,
    pub k0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
    pub barrier: f64,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CrankNicolson,
            df_form: DufortFrankelForm::Standard,
            d_coeff: 1.0,
            mu_e_sq: 0.0,
            omega_p_sq: 0.0,
            omega_d: 0.0,
            hbar: 1.0,
            x_min: -20.0,
            x_max: 20.0,
            points: 512,
            boundary: Boundary::Dirichlet,
            packet: Packet::Gaussian,
            center: 0.0,
            sigma: 1.0,
            k0: 0.0,
            dt: 1e-3,
            n_steps: 1000,
            stride: 1,
            barrier: PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolitonConfig {
    pub beta: f64,
    pub branch: Branch,
    pub z_min: f64,
    pub z_max: f64,
    pub profile_points: usize,
    pub tau: f64,
    /// Side of the square `(z, τ)` box centred on the origin.
    pub residual_extent: f64,
    pub residual_h: f64,
    pub residual_levels: usize,
    pub omega0_sq: f64,
    pub omega1_sq: f64,
    pub d: f64,
    pub n: usize,
    pub x_center: f64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for SolitonConfig {
    fn default() -> Self {
        Self {
            beta: -0.5,
            branch: Branch::Soliton,
            z_min: -10.0,
            z_max: 10.0,
            profile_points: 201,
            tau: 0.0,
            residual_extent: 8.0,
            residual_h: 0.2,
            residual_levels: 4,
            omega0_sq: 100.0,
            omega1_sq: 1.0,
            d: 1.0,
            n: 120,
            x_center: 50.0,
            dt: 0.01,
            steps: 400,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationalConfig {
    pub d1: f64,
    pub e1: f64,
    pub e2: f64,
    pub delta_p: f64,
    pub n_chains: usize,
    pub hbar: f64,
    /// Packets `m = −M..=M`.
    pub m: u32,
    pub alpha0: f64,
    pub eta: f64,
    pub points: usize,
    pub rule: QuadratureRule,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_points: usize,
    pub restarts: usize,
    pub max_evals: usize,
    pub staircase: bool,
    /// Informational: the sweep axis is `Θ = ω_D·t`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<f64>,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            d1: 174.091,
            e1: 1e-5,
            e2: 1e-6,
            delta_p: 0.005,
            n_chains: 2,
            hbar: 1.0,
            m: 2,
            alpha0: 0.5,
            eta: 20.0,
            points: 128,
            rule: QuadratureRule::Trapezoid,
            theta_min: -4.0 * PI,
            theta_max: 4.0 * PI,
            theta_points: 161,
            restarts: 8,
            max_evals: 20_000,
            staircase: true,
            omega_d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub law: Law,
    /// CSV with header `e,i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub loss: Loss,
    pub e_t: f64,
    pub c_v: f64,
    pub c_tilde: f64,
    pub g_p: f64,
    pub curve_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            law: Law::Ss,
            data: None,
            loss: Loss::Linear,
            e_t: 1.0,
            c_v: 1.0,
            c_tilde: 1.0,
            g_p: 1.0,
            curve_points: 200,
        }
    }
}

/// One sweep axis: explicit `values`, or `points` evenly spaced on
/// `[from, to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<toml::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl SweepAxis {
    pub fn grid(&self) -> Result<Vec<toml::Value>, ConfigError> {
        let key = format!("sweep.{}", self.param);
        match (&self.values, self.from, self.to, self.points) {
            (Some(v), None, None, None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(a), Some(b), Some(n)) if n >= 1 => Ok(cdw_core::variational::linspace(a, b, n)
                .into_iter()
                .map(toml::Value::Float)
                .collect()),
            _ => Err(invalid(key, "give either a non-empty `values` list or `from`, `to` and `points`")),
        }
    }
}

/// A fully resolved member of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildRun {
    pub coords: Vec<(String, toml::Value)>,
    /// Output subdirectory, `param=value` pairs joined by commas.
    pub dir: String,
    pub config: RunConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// A config holding only the defaults for `kind`.
    pub fn defaults(kind: Kind, seed: u64) -> Self {
        let mut c = RunConfig {
            seed,
            out: None,
            classical: None,
            quantum: None,
            soliton: None,
            variational: None,
            fit: None,
            sweep: Vec::new(),
        };
        match kind {
            Kind::Classical => c.classical = Some(Default::default()),
            Kind::Quantum => c.quantum = Some(Default::default()),
            Kind::Soliton => c.soliton = Some(Default::default()),
            Kind::Variational => c.variational = Some(Default::default()),
            Kind::Fit => c.fit = Some(Default::default()),
        }
        c
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn kind(&self) -> Kind {
        self.kinds()[0]
    }

    fn kinds(&self) -> Vec<Kind> {
        let present = [
            self.classical.is_some(),
            self.quantum.is_some(),
            self.soliton.is_some(),
            self.variational.is_some(),
            self.fit.is_some(),
        ];
        Kind::ALL.iter().zip(present).filter(|(_, p)| *p).map(|(k, _)| *k).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let kinds = self.kinds();
        if kinds.len() != 1 {
            let names: Vec<&str> = kinds.iter().map(Kind::as_str).collect();
            return Err(invalid(
                "experiment",
                format!("exactly one experiment section is required, found [{}]", names.join(", ")),
            ));
        }
        if let Some(c) = &self.classical {
            if c.dielectric.is_some() && c.threshold.is_none() {
                return Err(invalid("classical.dielectric", "needs a `classical.threshold` section"));
            }
            if c.trace_stride == 0 {
                return Err(invalid("classical.trace_stride", "must be at least 1"));
            }
        }
        for axis in &self.sweep {
            axis.grid()?;
        }
        let mut names: Vec<&str> = self.sweep.iter().map(|a| a.param.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("sweep", "each parameter may be swept at most once"));
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, each child with its override
    /// applied, sweeps removed and a seed derived from the parent seed and
    /// its coordinates. A config without sweeps expands to itself.
    pub fn expand(&self) -> Result<Vec<ChildRun>, ConfigError> {
        if self.sweep.is_empty() {
            return Ok(vec![ChildRun {
                coords: Vec::new(),
                dir: String::new(),
                config: self.clone(),
            }]);
        }
        let grids: Vec<Vec<toml::Value>> = self.sweep.iter().map(SweepAxis::grid).collect::<Result<_, _>>()?;
        let mut base = self.clone();
        base.sweep.clear();
        let base_value = toml::Value::try_from(&base).map_err(|e| invalid("sweep", e.to_string()))?;
        let kind = self.kind();

        let total: usize = grids.iter().map(Vec::len).product();
        let mut children = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; grids.len()];
            for (a, g) in grids.iter().enumerate().rev() {
                idx[a] = rem % g.len();
                rem /= g.len();
            }
            let coords: Vec<(String, toml::Value)> = self
                .sweep
                .iter()
                .enumerate()
                .map(|(a, axis)| (axis.param.clone(), grids[a][idx[a]].clone()))
                .collect();
            let mut value = base_value.clone();
            for (param, v) in &coords {
                let path: Vec<&str> = std::iter::once(kind.as_str()).chain(param.split('.')).collect();
                set_path(&mut value, &path, v.clone()).map_err(|r| invalid(format!("sweep.{param}"), r))?;
            }
            let dir = coords
                .iter()
                .map(|(p, v)| format!("{p}={}", value_label(v)))
                .collect::<Vec<_>>()
                .join(",");
            let mut config: RunConfig = value.try_into().map_err(|e: toml::de::Error| {
                let key = coords.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(", ");
                invalid(format!("sweep.{key}"), e.message().to_string())
            })?;
            config.seed = child_seed(self.seed, &dir);
            config.validate()?;
            children.push(ChildRun { coords, dir, config });
        }
        Ok(children)
    }
}

fn set_path(root: &mut toml::Value, path: &[&str], v: toml::Value) -> Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty parameter path")?;
    let mut node = root;
    for key in parents {
        let table = node.as_table_mut().ok_or_else(|| format!("`{key}` is not a section"))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| format!("cannot set `{last}` inside a plain value"))?
        .insert(last.to_string(), v);
    Ok(())
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => crate::output::fmt_float(*f),
        other => other.to_string(),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 of the parent seed XOR the FNV-1a hash of the coordinate label.
pub fn child_seed(parent: u64, coords: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in coords.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(parent ^ h)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    RunConfig::parse(&text)
}
