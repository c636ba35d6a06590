use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Measure;
use crate::semigroup::{self, Semigroup};
use crate::solver;

use super::{Certificate, ConditionId, Witness};

/// Relative margin for the strict inequality `c < m(E)`.
pub const INDEX_MARGIN: f64 = 1e-9;
/// Branch-and-bound nodes allowed per epsilon, shared by all rows.
const NODE_LIMIT: usize = 2_000_000;
/// Simpson sub-steps per unit time for continuous-time profiles.
pub const STEPS_PER_UNIT: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMethod {
    ExactDp,
    Fractional,
    #[default]
    Both,
}

/// `eps -> sup_{m(A) <= eps} sup_n (m S_n)(A)` on a decreasing grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexProfile {
    pub epsilons: Vec<f64>,
    /// Exact 0/1 values; empty when only the relaxation was requested.
    pub crisp: Vec<f64>,
    pub fractional: Vec<f64>,
    /// Horizon that achieved each crisp value (`None` = Cesaro limit).
    pub argmax: Vec<Option<f64>>,
    pub horizon: usize,
    pub verdict: bool,
    #[serde(rename = "mE")]
    pub m_e: f64,
    /// False when branch and bound hit its node limit somewhere.
    pub exact: bool,
    pub includes_limit: bool,
}

impl IndexProfile {
    /// Value at the smallest epsilon that decides the verdict.
    pub fn decisive(&self) -> f64 {
        match self.crisp.last() {
            Some(&c) => c,
            None => *self.fractional.last().unwrap_or(&0.0),
        }
    }

    pub fn certificate(&self) -> Certificate {
        let mut cert = Certificate::new(ConditionId::IndexC);
        cert.set("index_estimate", self.decisive());
        cert.set("mE", self.m_e);
        cert.set("eps_min", *self.epsilons.last().unwrap_or(&0.0));
        cert.set("horizon", self.horizon as f64);
        if let Some(&f) = self.fractional.last() {
            cert.set("fractional", f);
        }
        if !self.exact {
            cert.note("branch and bound hit its node limit; crisp values are lower bounds");
        }
        cert.note("bounded-horizon estimate over n <= N plus the Cesaro limit");
        if self.verdict {
            cert.hold();
        } else {
            let n = self.argmax.last().copied().flatten();
            let mut w = Witness::detail("index reaches m(E) on vanishing-mass sets").with_value(self.decisive());
            w.time = n;
            cert.fail(w);
        }
        cert
    }
}

/// Halving grid from `m(E)` down past half the smallest positive atom.
pub fn default_eps_grid(m: &Measure) -> Result<Vec<f64>> {
    let m_e = m.mass();
    if m_e <= 0.0 {
        return Err(Error::InvalidMeasure("index profile needs a nonzero measure".into()));
    }
    let min_atom = m.weights().iter().copied().filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min);
    let stop = (0.5 * min_atom).min(m_e * 2f64.powi(-8));
    let mut grid = vec![m_e];
    let mut e = m_e;
    while e > stop && grid.len() < 64 {
        e *= 0.5;
        grid.push(e);
    }
    Ok(grid)
}

/// Greedy ratio relaxation of the 0/1 knapsack; zero-weight items are free.
pub fn knapsack_fractional(values: &[f64], weights: &[f64], capacity: f64) -> f64 {
    let items = sorted_items(values, weights);
    let mut total: f64 = free_value(values, weights);
    let mut cap = capacity;
    for &i in &items {
        if cap <= 0.0 {
            break;
        }
        if weights[i] <= cap {
            total += values[i];
            cap -= weights[i];
        } else {
            total += values[i] * cap / weights[i];
            cap = 0.0;
        }
    }
    total
}

fn free_value(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).filter(|(v, w)| **w == 0.0 && **v > 0.0).map(|(v, _)| v).sum()
}

fn sorted_items(values: &[f64], weights: &[f64]) -> Vec<usize> {
    let mut items: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0 && values[i] > 0.0).collect();
    items.sort_by(|&a, &b| (values[b] / weights[b]).total_cmp(&(values[a] / weights[a])).then(a.cmp(&b)));
    items
}

/// Exact 0/1 knapsack with real weights. Up to `MITM_ITEMS` usable items
/// are solved by meet in the middle; larger instances by depth-first branch
/// and bound (bound = greedy relaxation of the remaining items). Returns the
/// value and whether the search finished within the node limit.
pub fn knapsack_exact(values: &[f64], weights: &[f64], capacity: f64) -> (f64, bool) {
    let mut budget = NODE_LIMIT;
    knapsack_above(values, weights, capacity, 0.0, &mut budget)
}

/// Item count up to which meet in the middle (`2^{k/2}` subsets per half) is used.
const MITM_ITEMS: usize = 26;

/// Searches only for packings worth more than `floor` and returns
/// `max(floor, optimum)`. Sharing the floor across rows lets most rows be
/// discarded near the root; `budget` caps the branch-and-bound nodes.
fn knapsack_above(values: &[f64], weights: &[f64], capacity: f64, floor: f64, budget: &mut usize) -> (f64, bool) {
    let free = free_value(values, weights);
    let cap = capacity * (1.0 + 1e-12);
    let items: Vec<usize> = sorted_items(values, weights).into_iter().filter(|&i| weights[i] <= cap).collect();
    let v: Vec<f64> = items.iter().map(|&i| values[i]).collect();
    let w: Vec<f64> = items.iter().map(|&i| weights[i]).collect();
    if v.len() <= MITM_ITEMS {
        return ((meet_in_middle(&v, &w, cap) + free).max(floor), true);
    }
    let k = v.len();
    let bound = |start: usize, mut room: f64| -> f64 {
        let mut b = 0.0;
        for j in start..k {
            if w[j] <= room {
                b += v[j];
                room -= w[j];
            } else {
                b += v[j] * room / w[j];
                break;
            }
        }
        b
    };
    // greedy incumbent
    let mut best = {
        let (mut g, mut room) = (0.0, cap);
        for j in 0..k {
            if w[j] <= room {
                g += v[j];
                room -= w[j];
            }
        }
        g
    };
    best = best.max(floor - free);
    // values within this of the incumbent are not worth a branch
    let tol = 1e-13 * v.iter().sum::<f64>();
    // stack of (next item, value so far, room left)
    let mut stack = vec![(0usize, 0.0f64, cap)];
    while let Some((j, val, room)) = stack.pop() {
        if *budget == 0 {
            return ((best + free).max(floor), false);
        }
        *budget -= 1;
        if val > best {
            best = val;
        }
        if j == k || val + bound(j, room) <= best + tol {
            continue;
        }
        stack.push((j + 1, val, room));
        if w[j] <= room {
            stack.push((j + 1, val + v[j], room - w[j]));
        }
    }
    ((best + free).max(floor), true)
}

/// Subset sums `(weight, value)` of the given items.
fn subset_sums(v: &[f64], w: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    for (&vi, &wi) in v.iter().zip(w) {
        let n = out.len();
        for j in 0..n {
            let (a, b) = out[j];
            out.push((a + wi, b + vi));
        }
    }
    out
}

fn meet_in_middle(v: &[f64], w: &[f64], cap: f64) -> f64 {
    let h = v.len() / 2;
    let left = subset_sums(&v[..h], &w[..h]);
    let mut right = subset_sums(&v[h..], &w[h..]);
    right.sort_by(|a, b| a.0.total_cmp(&b.0));
    // running maximum of value over increasing weight
    let mut run = f64::NEG_INFINITY;
    for r in right.iter_mut() {
        run = run.max(r.1);
        r.1 = run;
    }
    let mut best = 0.0f64;
    for &(lw, lv) in &left {
        if lw > cap {
            continue;
        }
        let room = cap - lw;
        let pos = right.partition_point(|r| r.0 <= room);
        if pos > 0 {
            best = best.max(lv + right[pos - 1].1);
        }
    }
    best
}

/// Profile from explicit average rows (`label` = horizon, `None` = limit).
pub(crate) fn profile_from_rows(
    rows: &[(Option<f64>, Vec<f64>)],
    base: &[f64],
    eps_grid: &[f64],
    method: IndexMethod,
    horizon: usize,
) -> Result<IndexProfile> {
    validate_grid(eps_grid)?;
    let m_e: f64 = base.iter().sum();
    let mut crisp = Vec::new();
    let mut fractional = Vec::with_capacity(eps_grid.len());
    let mut argmax = Vec::new();
    let mut exact = true;
    let mut last_exact = true;
    for &eps in eps_grid {
        let fr: Vec<f64> = rows.iter().map(|(_, r)| knapsack_fractional(r, base, eps)).collect();
        fractional.push(fr.iter().copied().fold(0.0, f64::max));
        if method == IndexMethod::Fractional {
            continue;
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| fr[b].total_cmp(&fr[a]));
        let (mut best, mut arg) = (0.0, None);
        let mut budget = NODE_LIMIT;
        last_exact = true;
        for i in order {
            if fr[i] <= best * (1.0 + 1e-13) {
                break;
            }
            let (v, done) = knapsack_above(&rows[i].1, base, eps, best, &mut budget);
            exact &= done;
            last_exact &= done;
            if v > best {
                best = v;
                arg = rows[i].0;
            }
        }
        crisp.push(best);
        argmax.push(arg);
    }
    // an unfinished crisp value is only a lower bound; fall back to the relaxation
    let decisive = match crisp.last() {
        Some(&c) if last_exact => c,
        _ => fractional.last().copied().unwrap_or(0.0),
    };
    Ok(IndexProfile {
        epsilons: eps_grid.to_vec(),
        crisp,
        fractional,
        argmax,
        horizon,
        verdict: decisive < m_e * (1.0 - INDEX_MARGIN),
        m_e,
        exact,
        includes_limit: rows.iter().any(|(l, _)| l.is_none()),
    })
}

fn validate_grid(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::InvalidParam("epsilon grid is empty".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParam("epsilon grid must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Cesaro averages `w S_n`, `n = 1..=horizon`, plus the Cesaro limit when `p` is markovian.
pub(crate) fn cesaro_rows(p: &crate::kernel::Kernel, w: &[f64], from: usize, horizon: usize) -> Result<Vec<(Option<f64>, Vec<f64>)>> {
    let mut rows = Vec::with_capacity(horizon + 1);
    let mut cur = w.to_vec();
    let mut acc = vec![0.0; w.len()];
    for n in 1..=horizon {
        acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += c);
        if n >= from {
            rows.push((Some(n as f64), acc.iter().map(|a| a / n as f64).collect()));
        }
        cur = p.push_vec(&cur);
    }
    if p.is_markovian() {
        rows.push((None, solver::decompose(p)?.limit_of(w)));
    }
    Ok(rows)
}

/// Geometric time grid `2^{j/2}` from 1/4 up to `t_max`.
pub(crate) fn time_grid(t_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = -4i32;
    loop {
        let t = 2f64.powf(j as f64 / 2.0);
        if t > t_max * (1.0 + 1e-12) {
            break;
        }
        out.push(t);
        j += 1;
    }
    if out.last().is_none_or(|&t| t < t_max) {
        out.push(t_max);
    }
    out
}

/// Occupation averages of `w` under the semigroup: `w S_n` for `n <= horizon`
/// (discrete) or Simpson averages on a geometric grid up to `t = horizon`
/// (continuous), followed by the Cesaro limit.
pub(crate) fn occupation_rows(s: &Semigroup, w: &[f64], horizon: usize) -> Result<Vec<(Option<f64>, Vec<f64>)>> {
    match s {
        Semigroup::Discrete(p) => cesaro_rows(p, w, 1, horizon),
        Semigroup::Continuous(g) => {
            let times = time_grid(horizon as f64);
            let mut rows: Vec<(Option<f64>, Vec<f64>)> = semigroup::cesaro_orbit_grid(g, w, &times, STEPS_PER_UNIT)?
                .into_iter()
                .map(|(t, r)| (Some(t), r))
                .collect();
            rows.push((None, solver::decompose(&g.uniformized())?.limit_of(w)));
            Ok(rows)
        }
    }
}

/// Index profile of `m` under a kernel or semigroup. For continuous time the
/// horizon is the largest averaging time.
pub fn index_profile(s: &Semigroup, m: &Measure, eps_grid: &[f64], horizon: usize, method: IndexMethod) -> Result<IndexProfile> {
    s.space().ensure_same(m.space(), "index_profile")?;
    if horizon == 0 {
        return Err(Error::InvalidParam("horizon must be >= 1".into()));
    }
    let rows = occupation_rows(s, m.weights(), horizon)?;
    profile_from_rows(&rows, m.weights(), eps_grid, method, horizon)
}
