//! Derivative-free Nelder–Mead simplex minimisation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Budget of objective evaluations across all polish rounds.
    pub max_evals: usize,
    /// Stop when the simplex's value spread falls below
    /// `f_abs_tol + f_rel_tol·|f_best|` and its extent below `x_tol`.
    pub f_abs_tol: f64,
    pub f_rel_tol: f64,
    pub x_tol: f64,
    /// Rebuild the simplex around the best vertex and descend again until a
    /// round improves by less than the tolerance, at most this many times.
    pub polish_rounds: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_abs_tol: 1e-14,
            f_rel_tol: 1e-12,
            x_tol: 1e-9,
            polish_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Counter<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        // NaN compares badly in the ordering below
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimises `f` from `x0` with an initial simplex offset by `step[i]` along
/// each axis.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), step.len(), "step must match dimension");
    let mut counter = Counter { f, evals: 0 };
    let (mut x, mut fx, mut converged) = descend(&mut counter, x0, step, opts);
    for _ in 0..opts.polish_rounds {
        if !converged || counter.evals >= opts.max_evals {
            break;
        }
        let (x2, f2, c2) = descend(&mut counter, &x, step, opts);
        let gain = fx - f2;
        if f2 <= fx {
            x = x2;
            fx = f2;
        }
        converged = c2;
        if gain <= opts.f_abs_tol + opts.f_rel_tol * fx.abs() {
            break;
        }
    }
    Minimum {
        x,
        f: fx,
        evals: counter.evals,
        converged,
    }
}

fn descend<F: FnMut(&[f64]) -> f64>(
    counter: &mut Counter<F>,
    x0: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| counter.call(v)).collect();
    if n == 0 {
        return (x0.to_vec(), values[0], true);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let spread = values[worst] - values[best];
        let extent = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_abs_tol + opts.f_rel_tol * values[best].abs() && extent <= opts.x_tol {
            return (simplex[best].clone(), values[best], true);
        }
        if counter.evals >= opts.max_evals {
            return (simplex[best].clone(), values[best], false);
        }

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = towards(REFLECT);
        let fr = counter.call(&xr);
        if fr < values[best] {
            let xe = towards(EXPAND);
            let fe = counter.call(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = towards(REFLECT * CONTRACT);
            let fc = counter.call(&xc);
            (xc, fc)
        } else {
            let xc = towards(-CONTRACT);
            let fc = counter.call(&xc);
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                *v = a + SHRINK * (*v - a);
            }
            values[i] = counter.call(&simplex[i]);
        }
    }
}
