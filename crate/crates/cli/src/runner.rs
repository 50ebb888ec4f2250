//! Executes a [`RunConfig`]: one experiment, or every child of a sweep, each
//! into its own directory with CSVs, `meta.txt` and, on failure, `error.txt`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cdw_core::classical::{
    self, conductivity, dielectric, dielectric_response_from, refine_threshold, threshold_scan, ClassicalError,
    DielectricOptions, PhaseState, RefineOptions, ScanOptions, TransportOptions,
};
use cdw_core::current_laws::{self, fit_current_law, fitted_parameters, CurrentLawError, CurrentLawParams, FitOptions};
use cdw_core::model::{default_min_gap, generate_impurities, DriveField, ModelError, RNG_NAME};
use cdw_core::optim::NelderMeadOptions;
use cdw_core::par;
use cdw_core::quantum::{evolve_chain, EvolveOptions, Grid, QuantumError, SchwingerParams, WaveFunction};
use cdw_core::sine_gordon::{
    run_chain, sample_soliton, sg_residual, soliton_profile, Branch, ChainEnds, ChainState, PendulumChainParams,
    SineGordonError, SolitonSpec,
};
use cdw_core::variational::{
    arc_count, band_structure, linspace, staircase_from, ChainHamiltonianParams, MinimizeOptions, PacketRange,
    QuadratureGrid, VariationalError, VariationalState,
};
use thiserror::Error;

use crate::config::{ChildRun, ClassicalConfig, ConfigError, FitConfig, Kind, Packet, QuantumConfig, RunConfig, SolitonConfig, VariationalConfig};
use crate::output::{fmt_float, read_current_data, write_text, CsvFile, OutputError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    SineGordon(#[from] SineGordonError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    CurrentLaw(#[from] CurrentLawError),
    #[error("{failed} of {total} sweep children failed; first ({dir}): {first}")]
    Sweep {
        failed: usize,
        total: usize,
        dir: String,
        first: Box<RunError>,
    },
}

impl RunError {
    pub fn class(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Output(_) => "io",
            RunError::Model(_) => "model",
            RunError::Classical(_) => "classical",
            RunError::Quantum(_) => "quantum",
            RunError::SineGordon(_) => "soliton",
            RunError::Variational(_) => "variational",
            RunError::CurrentLaw(_) => "fit",
            RunError::Sweep { first, .. } => first.class(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "config" => 2,
            "io" => 3,
            "model" => 4,
            "classical" => 5,
            "quantum" => 6,
            "soliton" => 7,
            "variational" => 8,
            _ => 9,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Command line echoed into `meta.txt`.
    pub invocation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub children: usize,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `config` into `out`. Sweep children run concurrently and all of them
/// run even when some fail; the first failure (in sweep order) is returned.
pub fn run(config: &RunConfig, out: &Path, opts: &RunOptions) -> Result<RunReport, RunError> {
    config.validate()?;
    let children = config.expand()?;
    create_dir(out)?;
    if config.sweep.is_empty() {
        par::with_jobs(opts.jobs, || run_child(config, out, opts))?;
        return Ok(RunReport {
            dir: out.to_path_buf(),
            children: 1,
        });
    }

    let results = par::with_jobs(opts.jobs, || {
        par::map(&children, |c: &ChildRun| run_child(&c.config, &out.join(&c.dir), opts))
    });
    let mut index = CsvFile::create(&out.join("sweep.csv"), &["dir", "seed", "status"])?;
    for (c, r) in children.iter().zip(&results) {
        let status = match r {
            Ok(()) => "ok".to_string(),
            Err(e) => e.class().to_string(),
        };
        index.row([c.dir.clone(), c.config.seed.to_string(), status])?;
    }
    index.finish()?;
    write_text(&out.join("sweep.toml"), &config.to_toml())?;

    let total = results.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    match results.into_iter().zip(&children).find_map(|(r, c)| r.err().map(|e| (e, c))) {
        Some((first, c)) => Err(RunError::Sweep {
            failed,
            total,
            dir: c.dir.clone(),
            first: Box::new(first),
        }),
        None => Ok(RunReport {
            dir: out.to_path_buf(),
            children: total,
        }),
    }
}

fn create_dir(path: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

type Summary = Vec<(String, String)>;

fn run_child(config: &RunConfig, dir: &Path, opts: &RunOptions) -> Result<(), RunError> {
    create_dir(dir)?;
    let start = Instant::now();
    let mut summary = Summary::new();
    let result = execute(config, dir, &mut summary);
    let wall = start.elapsed().as_secs_f64();
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => {
            log::error!("{}: {e}", dir.display());
            write_text(&dir.join("error.txt"), &format!("{}: {e}\n", e.class()))?;
            format!("error ({})", e.class())
        }
    };
    write_text(&dir.join("meta.txt"), &meta(config, dir, opts, wall, &status, &summary))?;
    result
}

fn meta(config: &RunConfig, dir: &Path, opts: &RunOptions, wall: f64, status: &str, summary: &Summary) -> String {
    let kind = config.kind();
    let mut echo = config.clone();
    echo.out = None;
    let mut s = String::new();
    s.push_str(&format!("# cdw-lab {VERSION} (cdw-core {})\n", cdw_core::VERSION));
    s.push_str(&format!("# kind: {kind}\n"));
    s.push_str(&format!("# seed: {}\n", config.seed));
    s.push_str(&format!("# rng: {RNG_NAME}\n"));
    if let Some(c) = &config.classical {
        s.push_str(&format!("# rk2: {:?}\n", c.rk2).to_lowercase());
    }
    s.push_str(&format!("# jobs: {}\n", par::current_jobs()));
    if !opts.invocation.is_empty() {
        s.push_str(&format!("# invocation: {}\n", opts.invocation));
    }
    s.push_str(&format!("# wall_time_s: {wall:.3}\n"));
    s.push_str(&format!("# status: {status}\n"));
    for (k, v) in summary {
        s.push_str(&format!("# result {k}: {v}\n"));
    }
    s.push_str(&format!(
        "# rerun: cdw-lab {kind} --config {} --out {}\n\n",
        dir.join("meta.txt").display(),
        dir.display()
    ));
    s.push_str(&echo.to_toml());
    s
}

fn execute(config: &RunConfig, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    match config.kind() {
        Kind::Classical => run_classical(config.classical.as_ref().expect("kind checked"), config.seed, dir, summary),
        Kind::Quantum => run_quantum(config.quantum.as_ref().expect("kind checked"), dir, summary),
        Kind::Soliton => run_soliton(config.soliton.as_ref().expect("kind checked"), dir, summary),
        Kind::Variational => run_variational(config.variational.as_ref().expect("kind checked"), dir, summary),
        Kind::Fit => run_fit(config.fit.as_ref().expect("kind checked"), dir, summary),
    }
}

fn note(summary: &mut Summary, key: &str, value: impl ToString) {
    summary.push((key.to_string(), value.to_string()));
}

fn run_classical(c: &ClassicalConfig, seed: u64, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    let min_gap = c.min_gap.unwrap_or_else(|| default_min_gap(c.n_sites, c.grid_length));
    let lattice = generate_impurities(c.n_sites, c.concentration, c.grid_length, seed, min_gap)?;
    let drive = DriveField::new(c.e_dc, c.e_ac, c.omega)?;
    let probes = if c.probe_frequencies.is_empty() {
        vec![c.omega]
    } else {
        c.probe_frequencies.clone()
    };
    let run = classical::run_transport_from(
        PhaseState::zeros(lattice.len()),
        &lattice,
        &drive,
        c.v_strength,
        c.dt,
        c.n_steps,
        &probes,
        &TransportOptions {
            g1: c.g1,
            variant: c.rk2,
            record_trace: true,
        },
    )?;

    let mut trace = CsvFile::create(&dir.join("trace.csv"), &["t", "mean_phase", "mean_phase_dot"])?;
    let last = run.trace.len().saturating_sub(1);
    for (k, r) in run.trace.iter().enumerate() {
        if k % c.trace_stride == 0 || k == last {
            trace.floats(&[r.t, r.mean_phase, r.mean_phase_dot])?;
        }
    }
    trace.finish()?;

    let mut response = CsvFile::create(&dir.join("response.csv"), &["omega", "re_sigma", "im_sigma", "re_eps", "im_eps"])?;
    for &w in &probes {
        let sigma = conductivity(&run.response, w)?;
        let eps = dielectric(sigma, w)?;
        response.floats(&[w, sigma.re, sigma.im, eps.re, eps.im])?;
    }
    response.finish()?;
    note(summary, "late_velocity", fmt_float(run.late_velocity(0.25)));

    let Some(th) = &c.threshold else {
        return Ok(());
    };
    let scan = threshold_scan(
        &lattice,
        &th.fields,
        th.dt,
        th.n_steps,
        &ScanOptions {
            window: th.window,
            tolerance: th.tolerance,
            bisections: th.bisections,
            v_strength: c.v_strength,
        },
    )?;
    let mut probes_done: Vec<_> = scan.points.iter().chain(&scan.refinements).copied().collect();
    let mut bracket = scan.bracket;
    let mut pinned = PhaseState::zeros(lattice.len());
    if th.refine {
        let refined = refine_threshold(
            &lattice,
            scan.bracket,
            &RefineOptions {
                v_strength: c.v_strength,
                dt: th.dt,
                rel_width: th.rel_width,
                settle_fraction: th.settle_fraction,
                max_steps: th.max_steps,
            },
        )?;
        probes_done.extend(&refined.probes);
        bracket = refined.bracket;
        pinned = refined.pinned_state;
    }
    let mut out = CsvFile::create(&dir.join("threshold.csv"), &["e_dc", "class"])?;
    for p in &probes_done {
        out.row([fmt_float(p.e_dc), p.motion.as_str().to_string()])?;
    }
    out.finish()?;
    let e_th = 0.5 * (bracket.0 + bracket.1);
    note(summary, "e_th", fmt_float(e_th));
    note(summary, "bracket", format!("{} {}", fmt_float(bracket.0), fmt_float(bracket.1)));
    note(summary, "crossovers", scan.crossovers());

    let Some(d) = &c.dielectric else {
        return Ok(());
    };
    let fields: Vec<f64> = d.offsets.iter().map(|o| (1.0 - o) * e_th).collect();
    let dopts = DielectricOptions {
        v_strength: c.v_strength,
        dt: d.dt,
        g1: c.g1,
        relax_tolerance: d.relax_tolerance,
        relax_max_steps: d.relax_max_steps,
        periods: d.periods,
    };
    let points = par::map(&fields, |&e| {
        dielectric_response_from(pinned.clone(), &lattice, e, d.e_ac_fraction * e_th, d.omega, &dopts)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let rescaled = classical::rescaled_magnitudes(&points);
    let mut out = CsvFile::create(&dir.join("dielectric.csv"), &["e_dc", "omega", "re_eps", "im_eps", "rescaled"])?;
    for (p, r) in points.iter().zip(&rescaled) {
        out.floats(&[p.e_dc, p.omega, p.epsilon.re, p.epsilon.im, *r])?;
    }
    out.finish()?;
    Ok(())
}

fn run_quantum(q: &QuantumConfig, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    let params = SchwingerParams::new(q.d_coeff, q.mu_e_sq, q.omega_p_sq, q.omega_d, q.hbar)?;
    let grid = Grid::spanning(q.x_min, q.x_max, q.points, q.boundary)?;
    let wf0 = match q.packet {
        Packet::Gaussian => WaveFunction::gaussian(grid, q.center, q.sigma, q.k0)?,
        Packet::Ground => WaveFunction::harmonic_ground_state(grid, &params, q.center)?,
    };
    let trace = evolve_chain(
        &wf0,
        &params,
        q.scheme,
        q.dt,
        q.n_steps,
        &EvolveOptions {
            df_form: q.df_form,
            barrier: q.barrier,
            stride: q.stride,
        },
    )?;
    let mut out = CsvFile::create(&dir.join("qtrace.csv"), &["t", "mean_x", "norm", "flag"])?;
    for r in &trace.rows {
        out.row([fmt_float(r.t), fmt_float(r.mean_x), fmt_float(r.norm), "ok".to_string()])?;
    }
    if let Some(f) = &trace.failure {
        let (t, flag) = match f {
            QuantumError::BlowUp { t, .. } => (*t, "blow_up"),
            _ => (trace.final_state.t, "singular"),
        };
        out.row([fmt_float(t), fmt_float(f64::NAN), fmt_float(f64::NAN), flag.to_string()])?;
    }
    out.finish()?;
    note(summary, "scheme", trace.scheme.label());
    note(summary, "max_norm_drift", fmt_float(trace.max_norm_drift()));
    match trace.failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_soliton(s: &SolitonConfig, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    let spec = SolitonSpec::new(s.beta, s.branch)?;
    if s.profile_points < 2 {
        return Err(ConfigError::Invalid {
            key: "soliton.profile_points".into(),
            reason: "need at least 2 points".into(),
        }
        .into());
    }
    let mut out = CsvFile::create(&dir.join("profile.csv"), &["z", "phi"])?;
    for z in linspace(s.z_min, s.z_max, s.profile_points) {
        out.floats(&[z, soliton_profile(z, s.tau, &spec)])?;
    }
    out.finish()?;

    let mut out = CsvFile::create(&dir.join("residual.csv"), &["h", "max_resid"])?;
    let mut h = s.residual_h;
    for _ in 0..s.residual_levels {
        let n = (s.residual_extent / h).round() as usize + 1;
        let corner = -0.5 * s.residual_extent;
        let field = sample_soliton(&spec, (corner, h, n), (corner, h, n));
        out.floats(&[h, sg_residual(&field, h, h)?.max])?;
        h *= 0.5;
    }
    out.finish()?;

    let params = PendulumChainParams::new(s.omega0_sq, s.omega1_sq, s.d, s.n)?;
    let initial = ChainState::from_soliton(&params, &spec, s.x_center)?;
    let ends = match s.branch {
        Branch::Soliton => ChainEnds::kink(),
        Branch::Antisoliton => ChainEnds::Clamped {
            left: 2.0 * PI,
            right: 0.0,
        },
    };
    let run = run_chain(&initial, &params, ends, s.dt, s.steps, s.record_every)?;
    let mut out = CsvFile::create(&dir.join("chain.csv"), &["t", "center", "energy"])?;
    for r in &run.rows {
        out.floats(&[r.t, r.center.unwrap_or(f64::NAN), r.energy])?;
    }
    out.finish()?;
    if let Some(v) = run.kink_velocity() {
        note(summary, "kink_velocity", fmt_float(v));
    }
    note(summary, "expected_velocity", fmt_float(spec.z_velocity() * params.v()));
    note(summary, "max_energy_drift", fmt_float(run.max_energy_drift()));
    Ok(())
}

fn run_variational(v: &VariationalConfig, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    let params = ChainHamiltonianParams::new(v.d1, v.e1, v.e2, v.delta_p, 0.0, v.n_chains, v.hbar)?;
    let grid = QuadratureGrid::new(v.eta, v.points, v.rule)?;
    let init = VariationalState::uniform(v.n_chains, PacketRange::symmetric(v.m), v.alpha0)?;
    let opts = MinimizeOptions {
        restarts: v.restarts,
        simplex: NelderMeadOptions {
            max_evals: v.max_evals,
            ..NelderMeadOptions::default()
        },
        ..MinimizeOptions::default()
    };
    let thetas = linspace(v.theta_min, v.theta_max, v.theta_points);
    let sweep = band_structure(&params, &thetas, &grid, &init, &opts)?;

    let nan = || fmt_float(f64::NAN);
    let mut band = CsvFile::create(
        &dir.join("band.csv"),
        &["theta", "e_min", "dominant_m", "alpha", "e_min_tracked", "dominant_m_tracked", "alpha_tracked"],
    )?;
    let mut states = CsvFile::create(&dir.join("state.csv"), &["theta", "branch", "chain", "m", "b"])?;
    let mut first_error: Option<VariationalError> = None;
    for p in &sweep {
        let mut row = vec![fmt_float(p.theta)];
        for (label, r) in [("global", &p.global), ("tracked", &p.tracked)] {
            match r {
                Ok(m) => {
                    row.extend([fmt_float(m.energy), m.state.dominant_m().to_string(), fmt_float(m.state.alpha())]);
                    let packets = m.state.packets();
                    for (chain, b) in m.state.coefficients().iter().enumerate() {
                        for (label_m, bm) in packets.labels().zip(b) {
                            states.row([
                                fmt_float(p.theta),
                                label.to_string(),
                                chain.to_string(),
                                label_m.to_string(),
                                fmt_float(*bm),
                            ])?;
                        }
                    }
                }
                Err(e) => {
                    log::warn!("theta = {}: {label} minimum failed: {e}", p.theta);
                    first_error.get_or_insert_with(|| e.clone());
                    row.extend([nan(), String::new(), nan()]);
                }
            }
        }
        band.row(row)?;
    }
    band.finish()?;
    states.finish()?;
    note(summary, "arcs", arc_count(&sweep));

    if v.staircase {
        let stair = staircase_from(&sweep, &grid);
        let mut out = CsvFile::create(&dir.join("staircase.csv"), &["theta", "mean_phi", "mean_phi_tracked"])?;
        for s in &stair {
            let cell = |r: &Result<f64, VariationalError>| match r {
                Ok(x) => fmt_float(*x),
                Err(_) => nan(),
            };
            if let Err(e) = s.mean_phi_global.as_ref().and(s.mean_phi_tracked.as_ref()) {
                first_error.get_or_insert_with(|| e.clone());
            }
            out.row([fmt_float(s.theta), cell(&s.mean_phi_global), cell(&s.mean_phi_tracked)])?;
        }
        out.finish()?;
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_fit(f: &FitConfig, dir: &Path, summary: &mut Summary) -> Result<(), RunError> {
    let path = f.data.as_ref().ok_or_else(|| ConfigError::Invalid {
        key: "fit.data".into(),
        reason: "a data file is required".into(),
    })?;
    let data = read_current_data(path)?;
    let init = CurrentLawParams::new(f.e_t, f.c_v, f.c_tilde, f.g_p)?;
    let fit = fit_current_law(
        &data,
        f.law,
        &init,
        &FitOptions {
            loss: f.loss,
            ..FitOptions::default()
        },
    )?;
    let mut out = CsvFile::create(&dir.join("fit.csv"), &["param", "value"])?;
    for (name, value) in fitted_parameters(f.law, &fit.params) {
        out.row([name.to_string(), fmt_float(value)])?;
    }
    out.row(["rms_residual".to_string(), fmt_float(fit.rms_residual)])?;
    out.row(["loss".to_string(), fmt_float(fit.loss)])?;
    out.row(["converged".to_string(), fit.converged.to_string()])?;
    out.finish()?;

    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(e, _)| (lo.min(e), hi.max(e)));
    let mut out = CsvFile::create(&dir.join("fitcurve.csv"), &["e", "i_model"])?;
    for e in current_laws::logspace(lo, hi, f.curve_points) {
        out.floats(&[e, f.law.eval(e, &fit.params)?])?;
    }
    out.finish()?;
    note(summary, "law", f.law.as_str());
    note(summary, "converged", fit.converged);
    for w in &fit.warnings {
        note(summary, "warning", w);
    }
    Ok(())
}
