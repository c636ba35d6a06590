//! Invariant measures: spectral solves per recurrent class, the constructive
//! adjoint Cesaro density, generator null spaces and ergodic decomposition.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::certificates::{self, Certificate, ConditionId, Phi, Witness};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Measure, StateFn, StateSet};
use crate::matrix::{self, Matrix};
use crate::semigroup::Semigroup;

/// Residual tolerance for spectral solves.
pub const EIGEN_TOL: f64 = 1e-12;
/// Default L1(m) tolerance of the Cesaro-adjoint iteration.
pub const CESARO_TOL: f64 = 1e-10;
/// Default largest horizon of the Cesaro-adjoint iteration.
pub const CESARO_MAX_N: u64 = 1 << 26;
const MAX_PERIOD_LCM: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Eigen,
    CesaroAdjoint,
    GeneratorNullspace,
}

#[derive(Clone, Debug)]
pub struct InvariantResult {
    /// Density of `nu` with respect to the reference measure (`m`, or counting measure).
    pub rho: StateFn,
    pub nu: Measure,
    /// `||nu P - nu||_1`
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub converged: bool,
    pub notes: Vec<String>,
    /// `(n, L1(m) distance between successive extrapolated averages)`
    pub trajectory: Vec<(u64, f64)>,
}

impl InvariantResult {
    pub fn is_zero(&self) -> bool {
        self.nu.mass() <= 1e-12
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "rho": self.rho.values(),
            "nu": self.nu.weights(),
            "mass": self.nu.mass(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "notes": self.notes,
            "trajectory": self.trajectory,
        })
    }
}

/// Closed communicating classes, their invariant laws and the transient rest.
#[derive(Clone, Debug)]
pub struct ErgodicDecomposition {
    pub classes: Vec<StateSet>,
    pub class_measures: Vec<Measure>,
    pub transient: StateSet,
    pub periods: Vec<u64>,
    /// `absorption[x][i]`: probability of ending in class `i` from `x`.
    pub absorption: Vec<Vec<f64>>,
}

impl ErgodicDecomposition {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Cesaro limit `lim (1/n) sum_k w P^k` of a row vector.
    pub fn limit_of(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let mut out = vec![0.0; n];
        for (i, cm) in self.class_measures.iter().enumerate() {
            let mass: f64 = w.iter().enumerate().map(|(x, &wx)| wx * self.absorption[x][i]).sum();
            if mass == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(cm.weights()) {
                *o += mass * p;
            }
        }
        out
    }

    /// Cesaro limit projector `Pi(x, .) = sum_i h_i(x) pi_i`.
    pub fn limit_projector(&self) -> Matrix {
        let n = self.absorption.len();
        let mut pi = Matrix::zeros(n, n);
        for x in 0..n {
            let mut e = vec![0.0; n];
            e[x] = 1.0;
            let row = self.limit_of(&e);
            pi.row_mut(x).copy_from_slice(&row);
        }
        pi
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "classes": self.classes.iter().map(|c| c.labels()).collect::<Vec<_>>(),
            "class_measures": self.class_measures.iter().map(|m| m.weights().to_vec()).collect::<Vec<_>>(),
            "periods": self.periods,
            "transient": self.transient.labels(),
        })
    }
}

/// Strongly connected components of the support graph, with a closed flag.
pub(crate) fn components(p: &Matrix) -> Vec<(Vec<usize>, bool)> {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 4);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for x in 0..n {
        for (a, &v) in p.row(x).iter().enumerate() {
            if v > 0.0 {
                g.add_edge(nodes[x], nodes[a], ());
            }
        }
    }
    let mut comp_of = vec![0usize; n];
    let sccs = tarjan_scc(&g);
    for (c, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp_of[v.index()] = c;
        }
    }
    let mut out: Vec<(Vec<usize>, bool)> = sccs
        .iter()
        .enumerate()
        .map(|(c, scc)| {
            let mut members: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            members.sort_unstable();
            let closed = members.iter().all(|&x| {
                p.row(x).iter().enumerate().all(|(a, &v)| v == 0.0 || comp_of[a] == c)
            });
            (members, closed)
        })
        .collect();
    out.sort_by_key(|(m, _)| m[0]);
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an SCC (0 when it has no internal edge).
pub(crate) fn period(p: &Matrix, members: &[usize]) -> u64 {
    let n = p.nrows();
    let mut inside = vec![false; n];
    members.iter().for_each(|&x| inside[x] = true);
    let mut level = vec![u64::MAX; n];
    level[members[0]] = 0;
    let mut queue = std::collections::VecDeque::from([members[0]]);
    let mut g = 0u64;
    while let Some(u) = queue.pop_front() {
        for (v, &w) in p.row(u).iter().enumerate() {
            if w <= 0.0 || !inside[v] {
                continue;
            }
            if level[v] == u64::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

/// Invariant probability of a closed class, by LU on `(P_C^T - I)` with a
/// normalization row.
fn class_law(p: &Matrix, class: &[usize]) -> Result<Vec<f64>> {
    let k = class.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let sub = p.submatrix(class);
    let mut a = sub.transpose();
    for i in 0..k {
        a.set(i, i, a.get(i, i) - 1.0);
    }
    for j in 0..k {
        a.set(k - 1, j, 1.0);
    }
    let mut b = vec![0.0; k];
    b[k - 1] = 1.0;
    let mut pi = a.solve(&b, "invariant law")?;
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(pi)
}

pub(crate) fn markov_residual(p: &Kernel, nu: &[f64]) -> f64 {
    p.push_vec(nu).iter().zip(nu).map(|(a, b)| (a - b).abs()).sum()
}

fn require_markovian(p: &Kernel, what: &str) -> Result<()> {
    if p.is_markovian() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} needs a markovian kernel")))
    }
}

/// Ergodic decomposition from the closed strongly connected components.
pub fn decompose(p: &Kernel) -> Result<ErgodicDecomposition> {
    require_markovian(p, "decompose")?;
    let n = p.size();
    let space = p.space();
    let comps = components(p.matrix());
    let mut classes = Vec::new();
    let mut class_measures = Vec::new();
    let mut periods = Vec::new();
    let mut class_of = vec![usize::MAX; n];
    for (members, closed) in comps.iter() {
        if !closed {
            continue;
        }
        let law = class_law(p.matrix(), members)?;
        let mut w = vec![0.0; n];
        for (&x, &v) in members.iter().zip(&law) {
            w[x] = v;
            class_of[x] = classes.len();
        }
        periods.push(period(p.matrix(), members));
        classes.push(StateSet::new(space.clone(), members.clone())?);
        class_measures.push(Measure::from_parts(space.clone(), w));
    }
    let transient_idx: Vec<usize> = (0..n).filter(|&x| class_of[x] == usize::MAX).collect();
    let k = classes.len();
    let mut absorption = vec![vec![0.0; k]; n];
    for x in 0..n {
        if class_of[x] != usize::MAX {
            absorption[x][class_of[x]] = 1.0;
        }
    }
    if !transient_idx.is_empty() {
        let t = transient_idx.len();
        let mut b = p.matrix().submatrix(&transient_idx).scale(-1.0);
        for i in 0..t {
            b.set(i, i, b.get(i, i) + 1.0);
        }
        let inv = b.inverse("absorption probabilities")?;
        for c in 0..k {
            let rhs: Vec<f64> = transient_idx
                .iter()
                .map(|&x| classes[c].members().iter().map(|&a| p.get(x, a)).sum())
                .collect();
            let h = inv.matvec(&rhs);
            for (i, &x) in transient_idx.iter().enumerate() {
                absorption[x][c] = h[i].clamp(0.0, 1.0);
            }
        }
    }
    Ok(ErgodicDecomposition {
        classes,
        class_measures,
        transient: StateSet::new(space.clone(), transient_idx)?,
        periods,
        absorption,
    })
}

/// One invariant probability per recurrent class.
pub fn solve_eigen(p: &Kernel) -> Result<Vec<InvariantResult>> {
    let dec = decompose(p)?;
    dec.class_measures
        .iter()
        .map(|nu| {
            let residual = markov_residual(p, nu.weights());
            let mut notes = Vec::new();
            if residual > EIGEN_TOL {
                notes.push(format!("residual {residual:e} above {EIGEN_TOL:e}"));
            }
            Ok(InvariantResult {
                rho: StateFn::from_parts(p.space().clone(), nu.weights().to_vec()),
                nu: nu.clone(),
                residual,
                method: SolveMethod::Eigen,
                iterations: 0,
                converged: residual <= EIGEN_TOL,
                notes,
                trajectory: Vec::new(),
            })
        })
        .collect()
}

/// Invariant laws of a continuous-time chain from the null space of `Q` on
/// each closed class, cross-checked as fixed points of `alpha R_alpha`.
pub fn solve_continuous(s: &Semigroup) -> Result<Vec<InvariantResult>> {
    let g = match s {
        Semigroup::Continuous(g) => g,
        Semigroup::Discrete(_) => return Err(Error::Unsupported("solve_continuous needs a generator".into())),
    };
    let n = g.size();
    let space = g.space();
    let comps = components(&g.uniformized().matrix().clone());
    let resolvents = [0.5, 1.0, 2.0].iter().map(|&a| s.resolvent(a)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (members, closed) in comps {
        if !closed {
            continue;
        }
        let k = members.len();
        let law = if k == 1 {
            vec![1.0]
        } else {
            let mut a = g.rates().submatrix(&members).transpose();
            for j in 0..k {
                a.set(k - 1, j, 1.0);
            }
            let mut b = vec![0.0; k];
            b[k - 1] = 1.0;
            let mut pi = a.solve(&b, "generator null space")?;
            pi.iter_mut().for_each(|v| *v = v.max(0.0));
            let sum: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= sum);
            pi
        };
        let mut w = vec![0.0; n];
        for (&x, &v) in members.iter().zip(&law) {
            w[x] = v;
        }
        let residual = resolvents
            .iter()
            .map(|r| markov_residual(&r.scaled, &w))
            .fold(0.0, f64::max);
        out.push(InvariantResult {
            rho: StateFn::from_parts(space.clone(), w.clone()),
            nu: Measure::from_parts(space.clone(), w),
            residual,
            method: SolveMethod::GeneratorNullspace,
            iterations: 0,
            converged: residual <= 1e-10,
            notes: vec!["residual is the largest ||nu alpha R_alpha - nu||_1 over alpha in {0.5, 1, 2}".into()],
            trajectory: Vec::new(),
        });
    }
    Ok(out)
}

/// Constructive invariant density: the limit of `S_n^{*m} 1`, the Cesaro
/// averages of the `m`-adjoint applied to the constant function.
///
/// Horizons run over `n = M 2^j` with `M` a common multiple of the periods,
/// where `f_n = rho + D/n` up to geometrically small terms; the Richardson
/// step `2 f_{2n} - f_n` removes the `1/n` term. A zero limit is a valid
/// outcome and means no invariant measure is absolutely continuous w.r.t. `m`.
pub fn solve_cesaro_adjoint(p: &Kernel, m: &Measure, tol: f64, max_n: u64) -> Result<InvariantResult> {
    p.space().ensure_same(m.space(), "solve_cesaro_adjoint")?;
    let n = p.size();
    let space = p.space().clone();
    let supp = m.support();
    let zero = |notes: Vec<String>| InvariantResult {
        rho: StateFn::constant(&space, 0.0),
        nu: Measure::zero(&space),
        residual: 0.0,
        method: SolveMethod::CesaroAdjoint,
        iterations: 0,
        converged: true,
        notes,
        trajectory: Vec::new(),
    };
    if supp.is_empty() {
        return Ok(zero(vec!["reference measure is zero".into()]));
    }
    let k = supp.len();
    let w: Vec<f64> = supp.iter().map(|&a| m.weight(a)).collect();
    let m_e: f64 = w.iter().sum();
    let compressed = p.matrix().submatrix(&supp);
    let mut adj = Matrix::zeros(k, k);
    for a in 0..k {
        for x in 0..k {
            adj.set(a, x, w[x] * compressed.get(x, a) / w[a]);
        }
    }

    let mut notes = Vec::new();
    let mut lcm = 1u64;
    for (members, _) in components(&compressed) {
        let d = period(&compressed, &members);
        if d > 1 {
            lcm = lcm / gcd(lcm, d) * d;
        }
    }
    if lcm > MAX_PERIOD_LCM {
        notes.push(format!("period lcm {lcm} exceeds {MAX_PERIOD_LCM}; extrapolation may converge slowly"));
        lcm = 1;
    }

    let l1m = |f: &[f64], g: &[f64]| -> f64 { f.iter().zip(g).zip(&w).map(|((a, b), wi)| wi * (a - b).abs()).sum() };
    let ones = vec![1.0; k];
    let (mut t, mut pow) = matrix::power_and_partial_sum(&adj, lcm);
    let mut horizon = lcm;
    let mut prev_f: Option<Vec<f64>> = None;
    let mut prev_ext: Option<Vec<f64>> = None;
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stall = 0;
    let mut last_diff = f64::INFINITY;
    let mut ext_final: Vec<f64>;
    loop {
        iterations += 1;
        let f: Vec<f64> = t.matvec(&ones).into_iter().map(|v| v / horizon as f64).collect();
        let af = adj.matvec(&f);
        let sub_excess: f64 = af.iter().zip(&f).zip(&w).map(|((a, b), wi)| wi * (a - b).max(0.0)).sum();
        if sub_excess > m_e / horizon as f64 * (1.0 + 1e-9) + 1e-12 {
            notes.push(format!("sub-invariance stage bound violated at n={horizon}: {sub_excess:e}"));
        }
        let ext: Option<Vec<f64>> = prev_f.as_ref().map(|pf| f.iter().zip(pf).map(|(a, b)| 2.0 * a - b).collect());
        if let (Some(e), Some(pe)) = (&ext, &prev_ext) {
            let diff = l1m(e, pe);
            trajectory.push((horizon, diff));
            if diff <= tol {
                converged = true;
            } else if diff >= last_diff * 0.9 && diff <= 1e3 * tol.max(1e-13) {
                stall += 1;
                if stall >= 3 {
                    notes.push(format!("stalled at round-off level {diff:e}; accepted"));
                    converged = true;
                }
            } else {
                stall = 0;
            }
            last_diff = diff;
        }
        ext_final = ext.clone().unwrap_or_else(|| f.clone());
        if converged || horizon >= max_n {
            break;
        }
        prev_f = Some(f);
        prev_ext = ext;
        t = t.add_scaled(&pow.matmul(&t), 1.0);
        pow = pow.matmul(&pow);
        horizon *= 2;
    }

    let floor = tol.max(1e-12);
    let mut rho_c: Vec<f64> = ext_final.iter().map(|&v| if v < floor { 0.0 } else { v }).collect();
    if rho_c.iter().zip(&w).map(|(r, wi)| r * wi).sum::<f64>() <= floor * m_e {
        rho_c.iter_mut().for_each(|v| *v = 0.0);
        let mf: f64 = ext_final.iter().zip(&w).map(|(r, wi)| r.abs() * wi).sum();
        notes.push(format!("no invariant measure absolutely continuous w.r.t. m; m(f_n) -> {mf:e}"));
    }
    let arho = adj.matvec(&rho_c);
    let check_tol = 1e3 * floor * (1.0 + rho_c.iter().copied().fold(0.0, f64::max));
    let worst_sub = arho.iter().zip(&rho_c).map(|(a, r)| a - r).fold(0.0, f64::max);
    if worst_sub > check_tol {
        notes.push(format!("adjoint sub-invariance P* rho <= rho violated by {worst_sub:e}"));
        converged = false;
    }
    let mass_gap = (arho.iter().zip(&w).map(|(a, wi)| a * wi).sum::<f64>()
        - rho_c.iter().zip(&w).map(|(a, wi)| a * wi).sum::<f64>())
    .abs();
    if mass_gap > check_tol * m_e.max(1.0) {
        notes.push(format!("mass balance m(P* rho) = m(rho) violated by {mass_gap:e}"));
        converged = false;
    }
    if !converged && horizon >= max_n {
        notes.push(format!("not converged within horizon {max_n}"));
    }
    let mut rho = vec![0.0; n];
    let mut nu = vec![0.0; n];
    for (i, &a) in supp.iter().enumerate() {
        rho[a] = rho_c[i];
        nu[a] = rho_c[i] * w[i];
    }
    let residual = markov_residual(p, &nu);
    Ok(InvariantResult {
        rho: StateFn::from_parts(space.clone(), rho),
        nu: Measure::from_parts(space, nu),
        residual,
        method: SolveMethod::CesaroAdjoint,
        iterations,
        converged,
        notes,
        trajectory,
    })
}

/// Compares the number of recurrent classes with `m(E) / phi^{-1}(1 - delta)`,
/// given the one-step bound `Pf <= phi(m(f)) + delta` on the whole space.
pub fn verify_count_bound(p: &Kernel, m: &Measure, phi: &Phi, delta: f64) -> Result<Certificate> {
    let mut cert = Certificate::new(ConditionId::ClassCount);
    let all = StateSet::all(p.space());
    let (pre_ok, pre_sup, pre_witness) = certificates::cprime_one_step(p, m, phi, delta, &all)?;
    cert.set("one_step_sup", pre_sup);
    cert.set("delta", delta);
    if !pre_ok {
        cert.inconclusive("precondition Pf <= phi(m(f)) + delta on E does not hold");
        cert.witness = pre_witness;
        return Ok(cert);
    }
    let bound = certificates::class_count_bound(m, phi, delta)?;
    let threshold = phi.inverse(1.0 - delta)?;
    let dec = decompose(p)?;
    let count = dec.len() as f64;
    cert.set("bound", bound);
    cert.set("class_count", count);
    cert.set("min_class_mass_required", threshold);
    if (count - bound).abs() <= 1e-9 * bound.max(1.0) {
        cert.note("boundary case: class count equals the bound (checked as <=)");
    }
    for (i, class) in dec.classes.iter().enumerate() {
        let mass = m.of_set(class);
        cert.set(&format!("class_mass_{i}"), mass);
        if mass < threshold - 1e-9 {
            cert.fail(Witness::detail("closed class lighter than phi^{-1}(1-delta)").with_set(class.labels()).with_value(mass));
            return Ok(cert);
        }
    }
    if count <= bound * (1.0 + 1e-12) {
        cert.hold();
    } else {
        cert.fail(Witness::detail("more recurrent classes than the bound").with_value(count));
    }
    Ok(cert)
}
