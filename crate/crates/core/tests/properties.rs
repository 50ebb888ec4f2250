use std::f64::consts::PI;

use approx::assert_relative_eq;
use cdw_core::classical::{threshold_scan, ScanOptions};
use cdw_core::model::{generate_impurities, ImpurityLattice};
use cdw_core::par;
use cdw_core::quantum::{evolve_chain, Boundary, EvolveOptions, Grid, Scheme, SchwingerParams, WaveFunction};
use cdw_core::sine_gordon::{run_chain, Branch, ChainEnds, ChainState, PendulumChainParams, SolitonSpec};
use cdw_core::variational::{
    band_structure, linspace, ChainHamiltonianParams, MinimizeOptions, PacketRange, QuadratureGrid, QuadratureRule,
    VariationalState,
};

fn fields(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| hi * k as f64 / (n - 1) as f64).collect()
}

fn scan_opts(bisections: usize) -> ScanOptions {
    ScanOptions {
        bisections,
        ..ScanOptions::default()
    }
}

// A lone impurity on a ring feels no elastic force, so ϕ̇ = E·L/2 + V sin(θ + ϕ)
// has a fixed point iff E ≤ 2V/L.
#[test]
fn single_impurity_threshold_is_closed_form() {
    let lattice = ImpurityLattice::uniform(4.0, vec![1.3]).unwrap();
    let scan = threshold_scan(&lattice, &fields(1.0, 11), 0.02, 40_000, &scan_opts(6)).unwrap();
    let (lo, hi) = scan.bracket;
    assert!(lo <= 0.5 && 0.5 <= hi + 1e-3, "{:?}", scan.bracket);
    assert_relative_eq!(scan.e_th, 0.5, epsilon = 0.01);
}

// Equal phases on equal gaps keep the phase uniform, reducing the chain to a
// single site with gap L/n.
#[test]
fn commensurate_lattice_threshold_is_closed_form() {
    let lattice = ImpurityLattice::uniform(8.0, vec![0.4; 4]).unwrap();
    let scan = threshold_scan(&lattice, &fields(2.0, 11), 0.02, 40_000, &scan_opts(6)).unwrap();
    assert_relative_eq!(scan.e_th, 1.0, epsilon = 0.02);
    assert_eq!(scan.crossovers(), 1);
}

#[test]
fn threshold_scan_is_independent_of_thread_count() {
    let lattice = generate_impurities(16, 1.0, 16.0, 42, 0.3).unwrap();
    let run = || threshold_scan(&lattice, &fields(2.2, 12), 0.02, 5_000, &scan_opts(3)).unwrap();
    assert_eq!(par::with_jobs(Some(1), run), run());
    assert_eq!(par::with_jobs(Some(3), run), run());
}

#[test]
fn band_structure_is_independent_of_thread_count() {
    let params = ChainHamiltonianParams::reference();
    let grid = QuadratureGrid::new(20.0, 128, QuadratureRule::Trapezoid).unwrap();
    let init = VariationalState::uniform(params.n_chains, PacketRange::two_packet(), 0.5).unwrap();
    let opts = MinimizeOptions {
        restarts: 2,
        ..MinimizeOptions::default()
    };
    let thetas = linspace(0.0, PI, 3);
    let run = || band_structure(&params, &thetas, &grid, &init, &opts).unwrap();
    let reference = run();
    assert!(reference.iter().all(|p| p.global.is_ok() && p.tracked.is_ok()));
    assert_eq!(par::with_jobs(Some(1), run), reference);
}

// Dufort–Frankel carries a (dt/dx)² consistency error, so at fixed dx its gap
// to Crank–Nicolson shrinks about fourfold per halving of dt.
#[test]
fn dufort_frankel_converges_to_crank_nicolson_in_dt() {
    let grid = Grid::spanning(-12.0, 12.0, 400, Boundary::Dirichlet).unwrap();
    let params = SchwingerParams::new(1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
    let wf = WaveFunction::gaussian(grid, 1.5, 1.0, 0.0).unwrap();
    let gap = |dt: f64| {
        let steps = (2.0 / dt).round() as usize;
        let opts = EvolveOptions {
            stride: (0.1 / dt).round() as usize,
            ..EvolveOptions::default()
        };
        let cn = evolve_chain(&wf, &params, Scheme::CrankNicolson, dt, steps, &opts).unwrap();
        let df = evolve_chain(&wf, &params, Scheme::DufortFrankel, dt, steps, &opts).unwrap();
        assert!(cn.failure.is_none() && df.failure.is_none());
        assert!(cn.max_norm_drift() < 1e-10);
        cn.rows
            .iter()
            .zip(&df.rows)
            .map(|(a, b)| (a.mean_x - b.mean_x).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (gap(1e-3), gap(5e-4));
    assert!(coarse < 5e-3, "{coarse}");
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "{coarse} / {fine} = {ratio}");
}

// In a harmonic well ⟨x⟩ oscillates at √(μ²D) when ħ = 1 (Ehrenfest).
#[test]
fn crank_nicolson_mean_follows_ehrenfest() {
    let grid = Grid::spanning(-12.0, 12.0, 600, Boundary::Dirichlet).unwrap();
    let params = SchwingerParams::new(1.0, 4.0, 0.0, 0.0, 1.0).unwrap();
    let wf = WaveFunction::gaussian(grid, 1.0, 0.7, 0.0).unwrap();
    let dt = 1e-3;
    let trace = evolve_chain(&wf, &params, Scheme::CrankNicolson, dt, 1_500, &EvolveOptions::default()).unwrap();
    let omega = (params.mu_e_sq * params.d_coeff).sqrt();
    for r in trace.rows.iter().step_by(100) {
        let expected = (omega * r.t).cos();
        assert!((r.mean_x - expected).abs() < 5e-3, "t = {}: {} vs {expected}", r.t, r.mean_x);
    }
}

// The analytic kink travels at −β·v on a chain fine enough to be continuous.
#[test]
fn chain_kink_moves_at_continuum_speed() {
    let params = PendulumChainParams::new(100.0, 1.0, 1.0, 120).unwrap();
    for beta in [-0.5, 0.3] {
        let spec = SolitonSpec::new(beta, Branch::Soliton).unwrap();
        let initial = ChainState::from_soliton(&params, &spec, 60.0).unwrap();
        let run = run_chain(&initial, &params, ChainEnds::kink(), 0.01, 400, 10).unwrap();
        let v = run.kink_velocity().unwrap();
        assert_relative_eq!(v, -beta * params.v(), max_relative = 0.01);
        assert!(run.max_energy_drift() < 1e-5);
    }
}
