//! Weighted-norm decay of `P^n` towards an invariant probability and Cesaro
//! convergence of single orbits.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Measure, StateFn};
use crate::matrix::{matrix_power, Matrix};
use crate::solver;

/// Invariance residual above which the weighted norms refuse to run.
pub const INVARIANCE_TOL: f64 = 1e-10;
/// Coefficient of determination needed to call the decay geometric.
pub const R2_THRESHOLD: f64 = 0.95;
/// Norms below this fraction of the largest one are treated as converged and
/// dropped from the fit.
const FLOOR: f64 = 1e-12;

fn check_inputs(p: &Kernel, m: &Measure, v: &StateFn) -> Result<()> {
    p.space().ensure_same(m.space(), "weighted_gap_norm")?;
    p.space().ensure_same(v.space(), "weighted_gap_norm")?;
    if v.values().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidStateFn("V must be finite and nonnegative".into()));
    }
    if !m.is_probability(1e-9) {
        return Err(Error::NotProbability(m.mass()));
    }
    let r = solver::markov_residual(p, m.weights());
    if !(r <= INVARIANCE_TOL) {
        return Err(Error::NotInvariant(r));
    }
    Ok(())
}

/// Norm of `f -> T f - m(f)` for `||f|| = max |f|/(1+V)`; the extremal `f`
/// is `sign(T(x,a) - m(a)) (1 + V(a))`, so this is exact.
fn gap_norm_of(t: &Matrix, m: &[f64], v: &[f64]) -> f64 {
    (0..t.nrows())
        .map(|x| {
            let s: f64 = t.row(x).iter().zip(m).zip(v).map(|((q, w), va)| (q - w).abs() * (1.0 + va)).sum();
            s / (1.0 + v[x])
        })
        .fold(0.0, f64::max)
}

/// `max_x (1+V(x))^{-1} sum_a |P^n(x,a) - m(a)| (1+V(a))`.
pub fn weighted_gap_norm(p: &Kernel, m: &Measure, v: &StateFn, n: u64) -> Result<f64> {
    check_inputs(p, m, v)?;
    Ok(gap_norm_of(&matrix_power(p.matrix(), n), m.weights(), v.values()))
}

/// `max_x sum_a P^n(x,a)(1+V(a))/(1+V(x))`, the uncentered weighted norm of `P^n`.
pub fn weighted_norm(p: &Kernel, v: &StateFn, n: u64) -> f64 {
    let t = matrix_power(p.matrix(), n);
    let v = v.values();
    (0..t.nrows())
        .map(|x| t.row(x).iter().zip(v).map(|(q, va)| q * (1.0 + va)).sum::<f64>() / (1.0 + v[x]))
        .fold(0.0, f64::max)
}

/// Log-linear fit `beta_n ~ C gamma^n` over a horizon grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub ns: Vec<u64>,
    pub norms: Vec<f64>,
    pub fitted_gamma: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    /// Smallest `C` with `beta_n <= C fitted_gamma^n` on the whole grid.
    pub envelope_c: f64,
    pub r2: f64,
    /// Number of grid points used by the fit.
    pub fit_points: usize,
    pub geometric: bool,
}

impl DecayReport {
    /// CSV series `n,beta_n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,beta_n\n");
        for (n, b) in self.ns.iter().zip(&self.norms) {
            s.push_str(&format!("{n},{b:e}\n"));
        }
        s
    }
}

pub fn default_n_grid() -> Vec<u64> {
    (0..=8).map(|k| 1u64 << k).collect()
}

/// Least squares for `log beta_n = log C + n log gamma`. Points past the first
/// norm below `FLOOR * max` are dropped; if that leaves fewer than two points
/// the chain has converged to machine precision and `gamma = 0` is reported.
pub fn decay_report(p: &Kernel, m: &Measure, v: &StateFn, n_grid: &[u64]) -> Result<DecayReport> {
    check_inputs(p, m, v)?;
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(Error::InvalidParam("empty horizon grid".into()));
    }
    let norms: Vec<f64> = ns
        .par_iter()
        .map(|&n| gap_norm_of(&matrix_power(p.matrix(), n), m.weights(), v.values()))
        .collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let cut = norms.iter().position(|&b| !(b > FLOOR * top)).unwrap_or(norms.len());
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns[..cut].iter().zip(&norms[..cut]).map(|(&n, &b)| (n as f64, b.ln())).unzip();
    let (gamma, c, r2) = if xs.len() < 2 {
        (0.0, norms[0], 1.0)
    } else {
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        (slope.exp().min(1.0), icpt.exp(), r2)
    };
    let envelope_c = ns
        .iter()
        .zip(&norms)
        .map(|(&n, &b)| if b == 0.0 { 0.0 } else { b / gamma.powi(n as i32) })
        .fold(0.0, f64::max);
    let geometric = gamma < 1.0 - 1e-6 && r2 >= R2_THRESHOLD;
    Ok(DecayReport { ns, norms, fitted_gamma: gamma, fitted_c: c, envelope_c, r2, fit_points: xs.len(), geometric })
}

/// `(1/N) sum_{k=1}^N P^k(x,.)` and its TV distance to the limit
/// `delta_x Pi` predicted by the ergodic decomposition.
pub fn cesaro_limit_check(p: &Kernel, x: usize, n: u64) -> Result<(Measure, f64)> {
    if x >= p.size() {
        return Err(Error::InvalidParam(format!("state {x} out of range")));
    }
    if n == 0 {
        return Err(Error::InvalidParam("N must be positive".into()));
    }
    let dec = solver::decompose(p)?;
    let mut row = vec![0.0; p.size()];
    row[x] = 1.0;
    let limit = Measure::new(p.space().clone(), dec.limit_of(&row))?;
    let mut sum = vec![0.0; p.size()];
    for _ in 0..n {
        row = p.push_vec(&row);
        sum.iter_mut().zip(&row).for_each(|(s, r)| *s += r);
    }
    let avg = Measure::new(p.space().clone(), sum.iter().map(|s| s / n as f64).collect())?;
    let r = avg.tv_distance(&limit);
    Ok((avg, r))
}
