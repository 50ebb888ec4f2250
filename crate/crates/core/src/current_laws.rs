//! Current–field laws and least-squares fits.
//!
//! Soliton tunnelling law, with `E₀ = E_T·c_V`:
//!
//! ```text
//! I = C̃₁ cosh(√(2E/E₀) − √(E₀/E)) exp(−E₀/E)
//! ```
//!
//! Zener-style law: `I = G_p (E − E_T) exp(−E_T/E)` above `E_T`, zero below.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurrentLawError {
    #[error("field must be positive, got {0}")]
    Domain(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no usable data: {0}")]
    NoData(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> CurrentLawError {
    CurrentLawError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentLawParams {
    pub e_t: f64,
    pub c_v: f64,
    pub c_tilde: f64,
    pub g_p: f64,
}

impl CurrentLawParams {
    pub fn new(e_t: f64, c_v: f64, c_tilde: f64, g_p: f64) -> Result<Self, CurrentLawError> {
        for (name, v) in [("e_t", e_t), ("c_v", c_v), ("c_tilde", c_tilde), ("g_p", g_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(Self { e_t, c_v, c_tilde, g_p })
    }

    /// `E_T·c_V`, the only combination of the two the tunnelling law sees.
    pub fn e0(&self) -> f64 {
        self.e_t * self.c_v
    }
}

pub fn current_ss(e: f64, p: &CurrentLawParams) -> Result<f64, CurrentLawError> {
    if !(e > 0.0) {
        return Err(CurrentLawError::Domain(e));
    }
    let e0 = p.e0();
    let arg = (2.0 * e / e0).sqrt() - (e0 / e).sqrt();
    Ok(p.c_tilde * arg.cosh() * (-e0 / e).exp())
}

pub fn current_zener(e: f64, p: &CurrentLawParams) -> f64 {
    if e > p.e_t {
        p.g_p * (e - p.e_t) * (-p.e_t / e).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// Soliton tunnelling law.
    Ss,
    Zener,
}

impl Law {
    pub fn as_str(&self) -> &'static str {
        match self {
            Law::Ss => "ss",
            Law::Zener => "zener",
        }
    }

    pub fn eval(&self, e: f64, p: &CurrentLawParams) -> Result<f64, CurrentLawError> {
        match self {
            Law::Ss => current_ss(e, p),
            Law::Zener => Ok(current_zener(e, p)),
        }
    }
}

impl std::str::FromStr for Law {
    type Err = CurrentLawError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ss" => Ok(Law::Ss),
            "zener" => Ok(Law::Zener),
            other => Err(invalid("law", format!("unknown law `{other}` (expected ss or zener)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Squared error of the current itself.
    #[default]
    Linear,
    /// Squared error of `ln I`; points with `I ≤ 0` are dropped.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub loss: Loss,
    pub simplex: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            loss: Loss::Linear,
            simplex: NelderMeadOptions {
                f_abs_tol: 0.0,
                f_rel_tol: 1e-15,
                x_tol: 1e-12,
                ..NelderMeadOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitWarning {
    /// Fewer than four points for a two-parameter fit.
    TooFewPoints { n: usize },
    /// Fields span less than one decade.
    NarrowSpan { decades: f64 },
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::TooFewPoints { n } => write!(f, "rank deficient: only {n} data points"),
            FitWarning::NarrowSpan { decades } => write!(f, "rank deficient: fields span {decades:.2} decades"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentFit {
    pub law: Law,
    /// Fitted values; parameters the law does not use are copied from the
    /// initial guess (for the tunnelling law `e_t` is held fixed and `c_v`
    /// carries `E₀`).
    pub params: CurrentLawParams,
    /// Root-mean-square residual of the current.
    pub rms_residual: f64,
    /// Final value of the minimised loss.
    pub loss: f64,
    pub evals: usize,
    pub converged: bool,
    pub warnings: Vec<FitWarning>,
}

/// Names and values of the parameters a law actually fits.
pub fn fitted_parameters(law: Law, p: &CurrentLawParams) -> Vec<(&'static str, f64)> {
    match law {
        Law::Ss => vec![("c_tilde", p.c_tilde), ("c_v", p.c_v), ("e_t", p.e_t)],
        Law::Zener => vec![("g_p", p.g_p), ("e_t", p.e_t)],
    }
}

fn shape_params(law: Law, base: &CurrentLawParams, scale: f64, shape: f64) -> CurrentLawParams {
    match law {
        Law::Ss => CurrentLawParams {
            c_tilde: scale,
            c_v: shape / base.e_t,
            ..*base
        },
        Law::Zener => CurrentLawParams {
            g_p: scale,
            e_t: shape,
            ..*base
        },
    }
}

/// Least-squares fit of `law` to `(e, i)` pairs over log-parameterised
/// positives: `(C̃₁, E₀)` for the tunnelling law, `(G_p, E_T)` for Zener.
pub fn fit_current_law(
    data: &[(f64, f64)],
    law: Law,
    init: &CurrentLawParams,
    opts: &FitOptions,
) -> Result<CurrentFit, CurrentLawError> {
    if data.is_empty() {
        return Err(CurrentLawError::NoData("empty data set".into()));
    }
    for &(e, i) in data {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CurrentLawError::Domain(e));
        }
        if !i.is_finite() {
            return Err(CurrentLawError::NoData(format!("non-finite current at e = {e}")));
        }
    }
    let used: Vec<(f64, f64)> = match opts.loss {
        Loss::Linear => data.to_vec(),
        Loss::Log => data.iter().copied().filter(|&(_, i)| i > 0.0).collect(),
    };
    if used.is_empty() {
        return Err(CurrentLawError::NoData("no positive currents for the log loss".into()));
    }

    let mut warnings = Vec::new();
    let mut distinct: Vec<f64> = used.iter().map(|d| d.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        warnings.push(FitWarning::TooFewPoints { n: distinct.len() });
    }
    let decades = (distinct[distinct.len() - 1] / distinct[0]).log10();
    if decades < 1.0 {
        warnings.push(FitWarning::NarrowSpan { decades });
    }
    for w in &warnings {
        log::warn!("{}: {w}", law.as_str());
    }

    let shape0 = match law {
        Law::Ss => init.e0(),
        Law::Zener => init.e_t,
    };
    // start the scale at its least-squares value for the initial shape
    let unit = shape_params(law, init, 1.0, shape0);
    let (num, den) = used.iter().fold((0.0, 0.0), |(n, d), &(e, i)| {
        let f = law.eval(e, &unit).unwrap_or(0.0);
        (n + f * i, d + f * f)
    });
    let scale0 = if num > 0.0 && den > 0.0 { num / den } else { 1.0 };

    let loss_of = |p: &CurrentLawParams| -> f64 {
        let mut acc = 0.0;
        for &(e, i) in &used {
            let m = law.eval(e, p).unwrap_or(f64::NAN);
            let r = match opts.loss {
                Loss::Linear => m - i,
                Loss::Log => m.max(f64::MIN_POSITIVE).ln() - i.ln(),
            };
            acc += r * r;
        }
        acc / used.len() as f64
    };
    let objective = |x: &[f64]| loss_of(&shape_params(law, init, x[0].exp(), x[1].exp()));
    let m = nelder_mead(objective, &[scale0.ln(), shape0.ln()], &[0.5, 0.5], &opts.simplex);
    let params = shape_params(law, init, m.x[0].exp(), m.x[1].exp());
    let sq: f64 = data
        .iter()
        .map(|&(e, i)| (law.eval(e, &params).unwrap_or(f64::NAN) - i).powi(2))
        .sum();
    Ok(CurrentFit {
        law,
        params,
        rms_residual: (sq / data.len() as f64).sqrt(),
        loss: m.f,
        evals: m.evals,
        converged: m.converged,
        warnings,
    })
}

/// `n` log-spaced fields on `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> CurrentLawParams {
        CurrentLawParams::new(1.0, 1.5, 2.0, 2.0).unwrap()
    }

    fn synthetic(law: Law, params: &CurrentLawParams, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        logspace(lo, hi, 40).into_iter().map(|e| (e, law.eval(e, params).unwrap())).collect()
    }

    #[test]
    fn ss_hand_values() {
        let q = p();
        let v = current_ss(q.e0(), &q).unwrap();
        assert_relative_eq!(v, 2.0 * (2.0f64.sqrt() - 1.0).cosh() * (-1.0f64).exp(), max_relative = 1e-15);
        assert!(current_ss(q.e0() / 100.0, &q).unwrap() < 1e-30 * q.c_tilde);
        assert_eq!(current_ss(0.0, &q), Err(CurrentLawError::Domain(0.0)));
        assert!(current_ss(-1.0, &q).is_err());
    }

    #[test]
    fn ss_increasing_above_e0() {
        let q = p();
        let grid = logspace(q.e0(), 1e3 * q.e0(), 5000);
        let vals: Vec<f64> = grid.iter().map(|&e| current_ss(e, &q).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zener_hand_values() {
        let q = p();
        assert_eq!(current_zener(1.0, &q), 0.0);
        assert_eq!(current_zener(0.5, &q), 0.0);
        assert_relative_eq!(current_zener(2.0, &q), 2.0 * (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn zener_fit_recovers_generator() {
        let truth = CurrentLawParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let data = synthetic(Law::Zener, &truth, 1.1, 30.0);
        let init = CurrentLawParams::new(0.7, 1.0, 1.0, 1.0).unwrap();
        let fit = fit_current_law(&data, Law::Zener, &init, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.g_p, 2.0, max_relative = 1e-4);
        assert_relative_eq!(fit.params.e_t, 1.0, max_relative = 1e-4);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn ss_fit_recovers_and_beats_zener() {
        let truth = p();
        let data = synthetic(Law::Ss, &truth, 0.5, 40.0);
        let scale = data.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
        let init = CurrentLawParams::new(1.0, 0.8, 1.0, 1.0).unwrap();
        let ss = fit_current_law(&data, Law::Ss, &init, &FitOptions::default()).unwrap();
        assert_relative_eq!(ss.params.c_tilde, truth.c_tilde, max_relative = 1e-4);
        assert_relative_eq!(ss.params.c_v, truth.c_v, max_relative = 1e-4);
        assert!(ss.rms_residual < 1e-6 * scale);
        let zener = fit_current_law(&data, Law::Zener, &init, &FitOptions::default()).unwrap();
        assert!(zener.rms_residual > ss.rms_residual);
    }

    #[test]
    fn generating_law_wins_both_ways() {
        let truth = p();
        let init = CurrentLawParams::new(1.2, 1.0, 1.0, 1.0).unwrap();
        for law in [Law::Ss, Law::Zener] {
            let other = if law == Law::Ss { Law::Zener } else { Law::Ss };
            let data = synthetic(law, &truth, 1.2, 30.0);
            let own = fit_current_law(&data, law, &init, &FitOptions::default()).unwrap();
            let cross = fit_current_law(&data, other, &init, &FitOptions::default()).unwrap();
            assert!(own.rms_residual <= cross.rms_residual, "{law:?}");
        }
    }

    #[test]
    fn log_loss_fits_across_decades() {
        let truth = p();
        let data = synthetic(Law::Ss, &truth, 0.2, 20.0);
        let init = CurrentLawParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let opts = FitOptions {
            loss: Loss::Log,
            ..Default::default()
        };
        let fit = fit_current_law(&data, Law::Ss, &init, &opts).unwrap();
        assert_relative_eq!(fit.params.c_v, truth.c_v, max_relative = 1e-4);
    }

    #[test]
    fn rank_deficiency_warnings() {
        let q = p();
        let one = vec![(2.0, current_ss(2.0, &q).unwrap())];
        let fit = fit_current_law(&one, Law::Ss, &q, &FitOptions::default()).unwrap();
        assert!(fit.warnings.contains(&FitWarning::TooFewPoints { n: 1 }));
        assert!(fit.warnings.iter().any(|w| matches!(w, FitWarning::NarrowSpan { .. })));
        assert!(fit_current_law(&[], Law::Ss, &q, &FitOptions::default()).is_err());
        assert!(fit_current_law(&[(0.0, 1.0)], Law::Ss, &q, &FitOptions::default()).is_err());
    }

    #[test]
    fn law_parsing() {
        assert_eq!("ss".parse::<Law>().unwrap(), Law::Ss);
        assert_eq!("zener".parse::<Law>().unwrap(), Law::Zener);
        assert!("ohm".parse::<Law>().is_err());
    }

    #[test]
    fn scale_covariance() {
        let truth = p();
        let init = CurrentLawParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        for law in [Law::Ss, Law::Zener] {
            let data = synthetic(law, &truth, 1.2, 30.0);
            let base = fit_current_law(&data, law, &init, &FitOptions::default()).unwrap();
            for k in [0.01, 7.0, 1e4] {
                let scaled: Vec<(f64, f64)> = data.iter().map(|&(e, i)| (e, k * i)).collect();
                let fit = fit_current_law(&scaled, law, &init, &FitOptions::default()).unwrap();
                let (a, b) = (fitted_parameters(law, &base.params), fitted_parameters(law, &fit.params));
                assert_relative_eq!(b[0].1, k * a[0].1, max_relative = 1e-6);
                assert_relative_eq!(b[1].1, a[1].1, max_relative = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn ss_is_continuous(e in 0.05f64..50.0) {
            let q = p();
            let h = 1e-7 * e;
            let (a, b) = (current_ss(e, &q).unwrap(), current_ss(e + h, &q).unwrap());
            prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-300) + 1e-300);
        }

        #[test]
        fn zener_vanishes_at_and_below_threshold(e_t in 0.1f64..10.0, frac in 0.0f64..=1.0) {
            let q = CurrentLawParams::new(e_t, 1.0, 1.0, 3.0).unwrap();
            prop_assert_eq!(current_zener(frac * e_t, &q), 0.0);
        }
    }
}
