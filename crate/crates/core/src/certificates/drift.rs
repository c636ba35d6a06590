use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Measure, StateFn, StateSet};
use crate::semigroup;

use super::almost::{self, check_a2, check_mean_almost_invariant, optimal_almost_invariance, AlmostInvarianceParams};
use super::phi::Phi;
use super::worst_set::{worst_set_slices, DP_CUTOFF};
use super::{Certificate, ConditionId, Witness};

const TOL: f64 = 1e-12;

/// `(alpha, nu)` with `nu_hat(a) = min_{x in C} P(x,a)`, `alpha = nu_hat(E)`, `nu = nu_hat/alpha`.
pub fn minorization(p: &Kernel, c: &StateSet) -> Result<(f64, Vec<f64>)> {
    p.space().ensure_same(c.space(), "minorization")?;
    if c.is_empty() {
        return Err(Error::EmptySet("small-set candidate C"));
    }
    let d = p.size();
    let mut nu = vec![f64::INFINITY; d];
    for &x in c.members() {
        for (v, &r) in nu.iter_mut().zip(p.row(x)) {
            *v = v.min(r);
        }
    }
    let alpha: f64 = nu.iter().sum();
    if alpha > 0.0 {
        nu.iter_mut().for_each(|v| *v /= alpha);
    }
    Ok((alpha, nu))
}

/// `inf_{x in C} P(x,.) >= alpha nu` with `alpha > 0`.
pub fn check_smallness(p: &Kernel, c: &StateSet) -> Result<Certificate> {
    let (alpha, nu) = minorization(p, c)?;
    let mut cert = Certificate::new(ConditionId::Smallness).with("alpha", alpha);
    if alpha > 0.0 {
        for (a, &v) in nu.iter().enumerate().filter(|(_, v)| **v > 0.0) {
            cert.set(&format!("nu[{}]", p.space().label(a)), v);
        }
        cert.hold();
    } else {
        cert.fail(Witness::detail("rows over C have disjoint supports").with_set(c.labels()).with_value(0.0));
    }
    Ok(cert)
}

fn apply_v(p: &Kernel, v: &StateFn) -> Result<Vec<f64>> {
    p.space().ensure_same(v.space(), "drift")?;
    Ok(p.apply(v)?.values().to_vec())
}

/// Pointwise `lhs(x) <= rhs(x)` over the given states; returns the worst violation.
fn worst_violation(lhs: &[f64], rhs: impl Fn(usize) -> f64, states: impl Iterator<Item = usize>) -> Option<(usize, f64)> {
    let mut worst: Option<(usize, f64)> = None;
    for x in states {
        let r = rhs(x);
        let gap = if lhs[x].is_infinite() { f64::INFINITY } else { lhs[x] - r };
        if gap > TOL * r.abs().max(1.0) && worst.is_none_or(|(_, g)| gap > g) {
            worst = Some((x, gap));
        }
    }
    worst
}

fn drift_witness(p: &Kernel, x: usize, gap: f64) -> Witness {
    Witness::state(p.space().label(x)).with_value(gap).with_detail("drift inequality violated")
}

/// Geometric drift `PV <= gamma V + b` on `[V < inf]`, the threshold
/// `r > 2b/(1 - gamma)` and smallness of `[V <= r]`.
pub fn check_assumption_a(p: &Kernel, v: &StateFn, gamma: f64, b: f64, r: f64) -> Result<Certificate> {
    if !(gamma > 0.0 && gamma < 1.0) || !(b >= 0.0) || v.min() < 0.0 {
        return Err(Error::InvalidParam("need gamma in (0,1), b >= 0 and V >= 0".into()));
    }
    let pv = apply_v(p, v)?;
    let vv = v.values();
    let finite: Vec<usize> = (0..p.size()).filter(|&x| vv[x].is_finite()).collect();
    let mut cert = Certificate::new(ConditionId::AssumpA).with("gamma", gamma).with("b", b).with("r", r);
    let b_required = finite.iter().map(|&x| pv[x] - gamma * vv[x]).fold(0.0, f64::max);
    cert.set("b_required", b_required);
    let mut top: Vec<usize> = finite.iter().copied().filter(|&x| vv[x] > 0.0).collect();
    top.sort_by(|&a, &b| vv[b].total_cmp(&vv[a]));
    top.truncate(top.len().div_ceil(2));
    if !top.is_empty() {
        cert.set("gamma_tail", top.iter().map(|&x| pv[x] / vv[x]).fold(0.0, f64::max));
    }
    let threshold = 2.0 * b / (1.0 - gamma);
    cert.set("r_threshold", threshold);
    if let Some((x, gap)) = worst_violation(&pv, |x| gamma * vv[x] + b, finite.iter().copied()) {
        cert.fail(drift_witness(p, x, gap));
        return Ok(cert);
    }
    if r <= threshold {
        cert.note("strict inequality required");
        cert.fail(Witness::detail("r must exceed 2b/(1-gamma)").with_value(r - threshold));
        return Ok(cert);
    }
    let level = StateSet::sublevel(v, r);
    if level.is_empty() {
        cert.fail(Witness::detail("sub-level set [V <= r] is empty"));
        return Ok(cert);
    }
    let small = check_smallness(p, &level)?;
    cert.set("alpha", small.get("alpha").unwrap_or(0.0));
    if small.holds() {
        cert.hold();
    } else {
        cert.fail(small.witness.clone().unwrap_or_default().with_detail("sub-level set [V <= r] is not small"));
    }
    cert.attach(small);
    Ok(cert)
}

/// `PV <= gamma V + b 1_S` with `V >= 1` and `S` small.
pub fn check_assumption_a_prime(p: &Kernel, v: &StateFn, gamma: f64, b: f64, s: &StateSet) -> Result<Certificate> {
    if v.min() < 1.0 {
        return Err(Error::InvalidParam("V must be >= 1".into()));
    }
    p.space().ensure_same(s.space(), "check_assumption_a_prime")?;
    let pv = apply_v(p, v)?;
    let vv = v.values();
    let mut cert = Certificate::new(ConditionId::AssumpAPrime).with("gamma", gamma).with("b", b);
    let rhs = |x: usize| gamma * vv[x] + if s.contains(x) { b } else { 0.0 };
    if let Some((x, gap)) = worst_violation(&pv, rhs, (0..p.size()).filter(|&x| vv[x].is_finite())) {
        cert.fail(drift_witness(p, x, gap));
        return Ok(cert);
    }
    if s.is_empty() {
        cert.fail(Witness::detail("S is empty"));
        return Ok(cert);
    }
    let small = check_smallness(p, s)?;
    cert.set("alpha", small.get("alpha").unwrap_or(0.0));
    if !small.holds() {
        cert.fail(Witness::detail("S is not small").with_set(s.labels()));
        return Ok(cert);
    }
    let mut gap = 0.0f64;
    for &x in s.members() {
        for &y in s.members() {
            for n in 1..=4 {
                for k in 1..=4 {
                    gap = gap.max(positive_part_gap(p, x, y, n, k)?);
                }
            }
        }
    }
    cert.set("max_gap_on_s", gap);
    cert.note("max_gap_on_s: sup over x, y in S and 1 <= n, m <= 4 of the positive-part gap");
    cert.attach(small);
    cert.hold();
    Ok(cert)
}

/// `sup_{f in B_1^+} [P^k f(y) - P^n f(x)] = sum_a (P^k(y,a) - P^n(x,a))^+`.
pub fn positive_part_gap(p: &Kernel, x: usize, y: usize, n: u64, k: u64) -> Result<f64> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidParam("powers must be >= 1".into()));
    }
    if x >= p.size() || y >= p.size() {
        return Err(Error::InvalidParam("state index out of range".into()));
    }
    let row = |s: usize, m: u64| {
        let mut e = vec![0.0; p.size()];
        e[s] = 1.0;
        for _ in 0..m {
            e = p.push_vec(&e);
        }
        e
    };
    let a = row(x, n);
    let b = row(y, k);
    Ok(almost::excess(&b, &a, 1.0))
}

/// `PV <= V - 1 + b 1_C` on E, plus the decay of `sup_{x in C} P(x, A_k)` over
/// caller-supplied decreasing tail sets and the domination mass `sum_a max_{x in C} P(x,a)`.
pub fn check_assumption_b(p: &Kernel, v: &StateFn, b: f64, c: &StateSet, tail_sets: &[StateSet]) -> Result<Certificate> {
    for w in tail_sets.windows(2) {
        if !w[1].is_subset_of(&w[0]) {
            return Err(Error::InvalidParam("tail sets must be decreasing".into()));
        }
    }
    let pv = apply_v(p, v)?;
    let vv = v.values();
    let mut cert = Certificate::new(ConditionId::AssumpB).with("b", b);
    for (k, t) in tail_sets.iter().enumerate() {
        let sup = c.members().iter().map(|&x| t.members().iter().map(|&a| p.get(x, a)).sum::<f64>()).fold(0.0, f64::max);
        cert.set(&format!("tail_sup[{k}]"), sup);
    }
    let dom: f64 = (0..p.size()).map(|a| c.members().iter().map(|&x| p.get(x, a)).fold(0.0, f64::max)).sum();
    cert.set("domination_mass", dom);
    cert.note("uniform additivity holds on finite spaces: the rows over C are dominated by a finite measure");
    let rhs = |x: usize| vv[x] - 1.0 + if c.contains(x) { b } else { 0.0 };
    if let Some((x, gap)) = worst_violation(&pv, rhs, 0..p.size()) {
        cert.fail(drift_witness(p, x, gap));
    } else {
        cert.hold();
    }
    Ok(cert)
}

/// `PV <= V - 1 + b 1_C` with a state-dependent `b`, checked on all of E.
pub fn check_generalized_drift(p: &Kernel, v: &StateFn, b_fn: &StateFn, c: &StateSet) -> Result<Certificate> {
    p.space().ensure_same(b_fn.space(), "check_generalized_drift")?;
    if v.min() < 0.0 || b_fn.min() < 0.0 {
        return Err(Error::InvalidParam("V and b must be nonnegative".into()));
    }
    let pv = apply_v(p, v)?;
    let (vv, bb) = (v.values(), b_fn.values());
    let mut cert = Certificate::new(ConditionId::GenDrift);
    let rhs = |x: usize| vv[x] - 1.0 + if c.contains(x) { bb[x] } else { 0.0 };
    let max_violation = (0..p.size()).map(|x| pv[x] - rhs(x)).fold(f64::NEG_INFINITY, f64::max);
    cert.set("max_violation", max_violation);
    if let Some((x, gap)) = worst_violation(&pv, rhs, 0..p.size()) {
        cert.fail(drift_witness(p, x, gap));
    } else {
        cert.hold();
    }
    Ok(cert)
}

/// Profile of `m(1_{[V <= r]} S_n(b^2))` for `N0 <= n <= N` and in the limit.
pub fn check_condition_d(p: &Kernel, m: &Measure, v: &StateFn, b_fn: &StateFn, r: f64, n0: usize, n: usize) -> Result<Certificate> {
    if n0 > n {
        return Err(Error::EmptyRange { n0, n });
    }
    p.space().ensure_same(m.space(), "check_condition_d")?;
    let level = StateSet::sublevel(v, r);
    let w = m.restrict(&level);
    let b2: Vec<f64> = b_fn.values().iter().map(|b| b * b).collect();
    let rows = super::index::cesaro_rows(p, w.weights(), n0.max(1), n)?;
    let vals: Vec<(Option<f64>, f64)> = rows.iter().map(|(l, row)| (*l, row.iter().zip(&b2).map(|(a, b)| a * b).sum())).collect();
    let mut cert = Certificate::new(ConditionId::CondD).with("r", r).with("N0", n0 as f64).with("N", n as f64);
    let max = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    cert.set("sup", max);
    if let Some(last) = vals.iter().rev().find(|v| v.0.is_some()) {
        cert.set("value_at_horizon", last.1);
    }
    if let Some(lim) = vals.iter().find(|v| v.0.is_none()) {
        cert.set("limit", lim.1);
    }
    cert.set("bound_sup_b2", b2.iter().copied().fold(0.0, f64::max) * w.mass());
    if max.is_finite() {
        cert.hold();
    } else {
        cert.fail(Witness::detail("profile is infinite").with_value(max));
    }
    Ok(cert)
}

fn check_range(n0: usize, n: usize) -> Result<()> {
    if n0 > n {
        return Err(Error::EmptyRange { n0, n });
    }
    Ok(())
}

/// Smallest `n1 > from` with `1 + 1/n1 - kappa/m(E) < 1`, and that value (clamped at 0).
fn conclusion_constants(kappa: f64, m_e: f64, from: usize) -> (usize, f64) {
    let n1 = (from + 1).max((m_e / kappa).floor() as usize + 1).max(2);
    (n1, (1.0 + 1.0 / n1 as f64 - kappa / m_e).max(0.0))
}

/// Assumption with linear `phi(f) = L m(f)` and a state function `gamma`:
/// i) `P(x,.) - L m` has positive mass at most `gamma(x)` on C;
/// ii.1) support condition for `m R`;
/// ii.2) `sup_{n >= n0} m(S_n(1_C (gamma - 1))) < 0`.
/// When it holds, mean almost invariance of `m R` is attached with slope
/// `m(E) L` and `delta' = 1 + 1/n1 - kappa/m(E)`, `kappa` the negated ii.2 value.
#[allow(clippy::too_many_arguments)]
pub fn check_assumption_c(
    p: &Kernel,
    m: &Measure,
    l: f64,
    gamma_fn: &StateFn,
    c: &StateSet,
    n0: usize,
    n: usize,
) -> Result<Certificate> {
    check_range(n0, n)?;
    if !(l >= 0.0) || gamma_fn.min() < 0.0 {
        return Err(Error::InvalidParam("need L >= 0 and gamma >= 0".into()));
    }
    p.space().ensure_same(m.space(), "check_assumption_c")?;
    let m_e = m.mass();
    if m_e <= 0.0 {
        return Err(Error::InvalidMeasure("m must be nonzero".into()));
    }
    let mut cert = Certificate::new(ConditionId::AssumpC).with("L", l);
    for &x in c.members() {
        let e = almost::excess(p.row(x), m.weights(), l);
        if e > gamma_fn.value(x) + TOL {
            cert.fail(Witness::state(p.space().label(x)).with_value(e).with_detail("part i: row excess exceeds gamma(x)"));
            return Ok(cert);
        }
    }
    let mr = semigroup::auxiliary_measure_kernel(p, &m.normalized()?)?.scaled(m_e);
    let a2 = check_a2(p, &mr)?;
    if !a2.holds() {
        cert.fail(a2.witness.clone().unwrap_or_default().with_detail("part ii.1: support condition fails for m R"));
        return Ok(cert);
    }
    let g: Vec<f64> = (0..p.size()).map(|a| if c.contains(a) { gamma_fn.value(a) - 1.0 } else { 0.0 }).collect();
    let rows = super::index::cesaro_rows(p, m.weights(), n0.max(1), n)?;
    let sup = rows.iter().map(|(_, r)| r.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
    cert.set("part_ii2_sup", sup);
    if !(sup < -TOL * m_e) {
        cert.fail(Witness::detail("part ii.2: sup_n m(S_n(1_C(gamma-1))) is not negative").with_value(sup));
        return Ok(cert);
    }
    let (n1, delta) = conclusion_constants(-sup, m_e, n0.max(1));
    cert.set("conclusion_delta", delta);
    cert.set("conclusion_n0", n1 as f64);
    cert.set("conclusion_c", m_e * l);
    let params = AlmostInvarianceParams { phi: Phi::linear(m_e * l), delta, horizon: n.max(n1), n0: n1 };
    cert.attach(check_mean_almost_invariant(p, &mr, &params)?);
    cert.hold();
    Ok(cert)
}

/// Controls for the one-step bound `Pf(x) <= phi(m(f)) + delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPrimeOptions {
    /// Spaces up to this size also get a brute-force sweep over `f` in a grid of `[0,1]^E`.
    pub fgrid_max_states: usize,
    pub fgrid_levels: usize,
    /// Attach the mean almost invariance of `m R` when both parts hold.
    pub attach_conclusion: bool,
}

impl Default for CPrimeOptions {
    fn default() -> Self {
        CPrimeOptions { fgrid_max_states: 6, fgrid_levels: 4, attach_conclusion: true }
    }
}

/// `sup_{x in C} sup_A [P(x,A) - phi(m(A))]` against `delta`. Sets suffice:
/// `f -> Pf(x) - phi(m(f))` is convex on the cube, so its max sits at a vertex.
pub(crate) fn cprime_one_step(p: &Kernel, m: &Measure, phi: &Phi, delta: f64, c: &StateSet) -> Result<(bool, f64, Option<Witness>)> {
    phi.validate()?;
    p.space().ensure_same(m.space(), "one-step bound")?;
    let mut sup = 0.0f64;
    let mut wit = None;
    for &x in c.members() {
        let ws = worst_set_slices(p.row(x), m.weights(), phi, DP_CUTOFF);
        if ws.value > sup || wit.is_none() {
            sup = sup.max(ws.value);
            wit = Some(
                Witness::state(p.space().label(x))
                    .with_set(ws.set.iter().map(|&a| p.space().label(a).to_string()).collect())
                    .with_value(ws.value),
            );
        }
    }
    let ok = sup <= delta + TOL;
    Ok((ok, sup, if ok { None } else { wit }))
}

/// Brute force of `sup_f [Pf(x) - phi(m(f))]` over `f` with values in `{0, 1/g, ..., 1}`.
fn fgrid_sup(p: &Kernel, m: &Measure, phi: &Phi, c: &StateSet, levels: usize) -> f64 {
    let d = p.size();
    let g = levels.max(1);
    let total = (g + 1).pow(d as u32);
    let mut best = f64::NEG_INFINITY;
    let mut f = vec![0.0; d];
    for code in 0..total {
        let mut k = code;
        for v in f.iter_mut() {
            *v = (k % (g + 1)) as f64 / g as f64;
            k /= g + 1;
        }
        let mf: f64 = f.iter().zip(m.weights()).map(|(a, b)| a * b).sum();
        let ph = phi.eval(mf);
        for &x in c.members() {
            let pf: f64 = p.row(x).iter().zip(&f).map(|(a, b)| a * b).sum();
            best = best.max(pf - ph);
        }
    }
    best
}

/// i) `Pf(x) <= phi(m(f)) + delta` on C; ii) `inf_{n >= n0} m(S_n 1_C) > 0`.
/// When both hold, the conclusion `m R` mean almost invariant is attached with
/// `phi' = m(E) phi` and `delta' = 1 + 1/n1 - (1 - delta) kappa/m(E)`,
/// `kappa` the part ii infimum.
pub fn check_assumption_c_prime(
    p: &Kernel,
    m: &Measure,
    params: &AlmostInvarianceParams,
    c: &StateSet,
    opts: &CPrimeOptions,
) -> Result<Certificate> {
    params.validate()?;
    let m_e = m.mass();
    if m_e <= 0.0 {
        return Err(Error::InvalidMeasure("m must be nonzero".into()));
    }
    let mut cert = Certificate::new(ConditionId::AssumpCPrime).with("delta", params.delta);
    let (ok, sup, wit) = cprime_one_step(p, m, &params.phi, params.delta, c)?;
    cert.set("part_i_sup", sup);
    if p.size() <= opts.fgrid_max_states && !c.is_empty() {
        let fs = fgrid_sup(p, m, &params.phi, c, opts.fgrid_levels);
        cert.set("part_i_fgrid_sup", fs);
        cert.set("part_i_fgrid_gap", fs - sup);
    }
    if !ok {
        cert.fail(wit.unwrap_or_default().with_detail("part i: one-step bound fails"));
        return Ok(cert);
    }
    let vals = almost::cesaro_mass_on(p, m.weights(), c, params.n0.max(1), params.horizon)?;
    let kappa = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    cert.set("part_ii_inf", kappa);
    if !(kappa > TOL * m_e) {
        let at = vals.iter().find(|v| v.1 == kappa).and_then(|v| v.0);
        let mut w = Witness::detail("part ii: m(S_n 1_C) vanishes").with_value(kappa);
        w.time = at;
        cert.fail(w);
        return Ok(cert);
    }
    cert.hold();
    if opts.attach_conclusion {
        let kappa_eff = (1.0 - params.delta) * kappa;
        let (n1, delta) = conclusion_constants(kappa_eff, m_e, params.n0.max(1));
        cert.set("conclusion_delta", delta);
        cert.set("conclusion_n0", n1 as f64);
        let mr = semigroup::auxiliary_measure_kernel(p, &m.normalized()?)?.scaled(m_e);
        let conc = AlmostInvarianceParams { phi: params.phi.scale(m_e), delta, horizon: params.horizon.max(n1), n0: n1 };
        cert.attach(check_mean_almost_invariant(p, &mr, &conc)?);
    }
    Ok(cert)
}

/// `m(E) / phi^{-1}(1 - delta)`: each closed class carries m-mass at least `phi^{-1}(1 - delta)`.
pub fn class_count_bound(m: &Measure, phi: &Phi, delta: f64) -> Result<f64> {
    phi.validate()?;
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParam(format!("delta must lie in [0,1), got {delta}")));
    }
    let t = phi.inverse(1.0 - delta)?;
    Ok(m.mass() / t)
}

/// Generalized drift, Condition D at `r = n0` and `r = max_C V`, and part i of
/// the one-step bound. When all hold, verifies the occupation lower bound
/// `m(S_n 1_C) >= eps^2 / (4 m(1_{[V <= n0]} S_n(b^2)))` for `n >= 2 n0`
/// and attaches mean almost invariance of `m R` and its optimal-slope almost invariance.
pub fn check_condition_e(
    p: &Kernel,
    m: &Measure,
    v: &StateFn,
    b_fn: &StateFn,
    c: &StateSet,
    params: &AlmostInvarianceParams,
) -> Result<Certificate> {
    params.validate()?;
    let m_e = m.mass();
    if m_e <= 0.0 {
        return Err(Error::InvalidMeasure("m must be nonzero".into()));
    }
    let mut cert = Certificate::new(ConditionId::CondE);
    let drift = check_generalized_drift(p, v, b_fn, c)?;
    if !drift.holds() {
        cert.fail(drift.witness.clone().unwrap_or_default());
        cert.attach(drift);
        return Ok(cert);
    }
    cert.attach(drift);
    let (ok, sup, wit) = cprime_one_step(p, m, &params.phi, params.delta, c)?;
    cert.set("part_i_sup", sup);
    if !ok {
        cert.fail(wit.unwrap_or_default().with_detail("one-step bound fails on C"));
        return Ok(cert);
    }
    // n0: smallest integer level with m([V <= n0]) > 0
    let vv = v.values();
    let min_v = m.support().iter().map(|&a| vv[a]).fold(f64::INFINITY, f64::min);
    let n0 = (min_v.ceil() as usize).max(1);
    let eps = m.of_set(&StateSet::sublevel(v, n0 as f64));
    let horizon = params.horizon.max(2 * n0);
    cert.set("n0", n0 as f64);
    cert.set("eps", eps);
    let r_c = c.members().iter().map(|&a| vv[a]).fold(n0 as f64, f64::max);
    for r in [n0 as f64, r_c] {
        let d = check_condition_d(p, m, v, b_fn, r, 2 * n0, horizon)?;
        if !d.holds() {
            cert.fail(Witness::detail("Condition D profile is infinite").with_value(r));
            return Ok(cert);
        }
        cert.attach(d);
    }
    // occupation lower bound from the drift and Cauchy-Schwarz
    let level = m.restrict(&StateSet::sublevel(v, n0 as f64));
    let b2: Vec<f64> = b_fn.values().iter().map(|b| b * b).collect();
    let occ = almost::cesaro_mass_on(p, m.weights(), c, 2 * n0, horizon)?;
    let dens = super::index::cesaro_rows(p, level.weights(), 2 * n0, horizon)?;
    let mut min_slack = f64::INFINITY;
    let mut min_occ = f64::INFINITY;
    for ((l, o), (_, row)) in occ.iter().zip(&dens) {
        if l.is_none() {
            continue;
        }
        let denom: f64 = row.iter().zip(&b2).map(|(a, b)| a * b).sum();
        let bound = if denom > 0.0 { eps * eps / (4.0 * denom) } else { f64::INFINITY };
        min_slack = min_slack.min(o - bound);
        min_occ = min_occ.min(*o);
    }
    cert.set("occupation_inf", min_occ);
    cert.set("occupation_bound_slack", min_slack);
    if min_slack < -1e-10 {
        cert.fail(Witness::detail("occupation lower bound violated").with_value(min_slack));
        return Ok(cert);
    }
    let bmax = b_fn.max();
    if bmax >= 1.0 {
        cert.note("the lower bound with an extra 1/b^2 factor is implied since max b >= 1");
    }
    let cp = AlmostInvarianceParams { n0: 2 * n0, horizon, ..params.clone() };
    let cprime = check_assumption_c_prime(p, m, &cp, c, &CPrimeOptions { fgrid_max_states: 0, ..Default::default() })?;
    if !cprime.holds() {
        cert.fail(cprime.witness.clone().unwrap_or_default().with_detail("one-step bound conclusion failed"));
        cert.attach(cprime);
        return Ok(cert);
    }
    let mr = semigroup::auxiliary_measure_kernel(p, &m.normalized()?)?.scaled(m_e);
    let opt = optimal_almost_invariance(p, &mr, horizon)?;
    cert.set("mR_delta_min", opt.get("delta_min").unwrap_or(f64::NAN));
    cert.attach(cprime);
    cert.attach(opt);
    cert.hold();
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(rows: &[Vec<f64>]) -> Kernel {
        Kernel::from_rows(rows).unwrap()
    }

    fn f(p: &Kernel, v: Vec<f64>) -> StateFn {
        StateFn::new(p.space().clone(), v).unwrap()
    }

    fn set(p: &Kernel, m: &[usize]) -> StateSet {
        StateSet::new(p.space().clone(), m.to_vec()).unwrap()
    }

    /// Birth-death chain on `0..n` moving down with probability `down`.
    fn birth_death(n: usize, down: f64) -> Kernel {
        let mut rows = vec![vec![0.0; n]; n];
        for x in 0..n {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(n - 1);
            rows[x][lo] += down;
            rows[x][hi] += 1.0 - down;
        }
        k(&rows)
    }

    #[test]
    fn smallness_examples() {
        let p = k(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        let c = check_smallness(&p, &set(&p, &[0])).unwrap();
        assert_eq!(c.get("alpha"), Some(1.0));
        let (alpha, nu) = minorization(&p, &set(&p, &[0, 1])).unwrap();
        assert!((alpha - 0.75).abs() < 1e-15);
        assert!((nu[0] - 1.0 / 3.0).abs() < 1e-15);
        let q = k(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(check_smallness(&q, &set(&q, &[0, 1])).unwrap().fails());
        assert!(check_smallness(&q, &set(&q, &[])).is_err());
    }

    #[test]
    fn assumption_a_examples() {
        let p = k(&[vec![0.3, 0.7], vec![0.3, 0.7]]);
        let v = f(&p, vec![0.0, 0.0]);
        assert!(check_assumption_a(&p, &v, 0.5, 0.1, 1.0).unwrap().holds());
        let c = check_assumption_a(&p, &v, 0.5, 0.25, 2.0 * 0.25 / 0.5).unwrap();
        assert!(c.fails());
        assert!(c.notes.contains("strict inequality required"));

        let bd = birth_death(5, 0.7);
        let v = f(&bd, (0..5).map(|x| 1.5f64.powi(x)).collect());
        let pv = bd.apply(&v).unwrap();
        let gamma = (2..5).map(|x| pv.value(x) / v.value(x)).fold(0.0, f64::max);
        let b = (0..5).map(|x| pv.value(x) - gamma * v.value(x)).fold(0.0, f64::max);
        // drift holds with the fitted constants; the sub-level set is the whole
        // space, whose end rows are disjoint, so one-step smallness fails
        let c = check_assumption_a(&bd, &v, gamma, b, 2.0 * b / (1.0 - gamma) + 1.0).unwrap();
        assert!((c.get("b_required").unwrap() - b).abs() < 1e-12);
        assert!(c.witness.unwrap().detail.unwrap().contains("not small"));

        // renewal chain: reset to 0 or step up, each with probability 1/2
        let n = 8;
        let mut rows = vec![vec![0.0; n]; n];
        for (x, row) in rows.iter_mut().enumerate() {
            row[0] += 0.5;
            row[(x + 1).min(n - 1)] += 0.5;
        }
        let ren = k(&rows);
        let v = f(&ren, (0..n).map(|x| x as f64).collect());
        let c = check_assumption_a(&ren, &v, 0.5, 0.5, 2.5).unwrap();
        assert!(c.holds(), "{c:?}");
        assert_eq!(c.get("alpha"), Some(0.5));
    }

    #[test]
    fn assumption_a_prime_examples() {
        let p = k(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        let one = f(&p, vec![1.0, 1.0]);
        assert!(check_assumption_a_prime(&p, &one, 0.9, 0.2, &StateSet::all(p.space())).unwrap().holds());
        assert!(check_assumption_a_prime(&p, &one, 0.9, 0.2, &StateSet::empty(p.space())).unwrap().fails());
    }

    #[test]
    fn gap_examples() {
        let p = k(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        assert_eq!(positive_part_gap(&p, 0, 0, 1, 1).unwrap(), 0.0);
        assert!((positive_part_gap(&p, 0, 1, 1, 1).unwrap() - 0.25).abs() < 1e-15);
        let (alpha, _) = minorization(&p, &StateSet::all(p.space())).unwrap();
        assert!(positive_part_gap(&p, 1, 0, 1, 1).unwrap() <= 1.0 - alpha + 1e-15);
        assert!(positive_part_gap(&p, 0, 0, 0, 1).is_err());
    }

    #[test]
    fn assumption_b_examples() {
        let bd = birth_death(101, 0.7);
        let v = f(&bd, (0..101).map(|x| x as f64 / 0.4).collect());
        let c = set(&bd, &(0..=5).collect::<Vec<_>>());
        let tails: Vec<StateSet> = (6..=8).map(|k| set(&bd, &(k..101).collect::<Vec<_>>())).collect();
        let cert = check_assumption_b(&bd, &v, 3.0, &c, &tails).unwrap();
        assert!(cert.holds(), "{cert:?}");
        assert!(cert.get("tail_sup[1]").unwrap() == 0.0);
        let out = birth_death(101, 0.3);
        let cert = check_assumption_b(&out, &v, 3.0, &c, &[]).unwrap();
        assert!(cert.fails());
        let bad = [tails[2].clone(), tails[0].clone()];
        assert!(check_assumption_b(&bd, &v, 3.0, &c, &bad).is_err());
        let all = StateSet::all(bd.space());
        let cert = check_assumption_b(&bd, &v, 1e6, &all, &[]).unwrap();
        assert!(cert.get("domination_mass").unwrap().is_finite());
    }

    #[test]
    fn generalized_drift_examples() {
        let bd = birth_death(20, 0.7);
        let v = f(&bd, (0..20).map(|x| x as f64 / 0.4).collect());
        let mut b = vec![0.0; 20];
        b[0] = 1.75;
        let cert = check_generalized_drift(&bd, &v, &f(&bd, b), &set(&bd, &[0])).unwrap();
        assert!(cert.holds(), "{cert:?}");
        let zero = f(&bd, vec![0.0; 20]);
        assert!(check_generalized_drift(&bd, &zero, &zero, &set(&bd, &[0])).unwrap().fails());
    }

    #[test]
    fn condition_d_examples() {
        let bd = birth_death(10, 0.7);
        let m = Measure::uniform(bd.space());
        let v = f(&bd, (0..10).map(|x| x as f64).collect());
        let b = f(&bd, vec![2.0; 10]);
        let c = check_condition_d(&bd, &m, &v, &b, 4.0, 1, 64).unwrap();
        assert!(c.holds());
        assert!(c.get("sup").unwrap() <= c.get("bound_sup_b2").unwrap() + 1e-12);
        assert!(matches!(check_condition_d(&bd, &m, &v, &b, 4.0, 5, 4), Err(Error::EmptyRange { .. })));
    }

    #[test]
    fn assumption_c_examples() {
        let p = k(&[vec![0.6, 0.4], vec![0.5, 0.5]]);
        let m = Measure::uniform(p.space());
        let one = f(&p, vec![1.0, 1.0]);
        let c = check_assumption_c(&p, &m, 0.0, &one, &StateSet::all(p.space()), 1, 32).unwrap();
        assert!(c.fails());
        assert_eq!(c.get("part_ii2_sup"), Some(0.0));

        // Doeblin rows dominated by L m with gamma = 0.2 < 1 on C
        let g = f(&p, vec![0.2, 0.2]);
        let c = check_assumption_c(&p, &m, 1.0, &g, &StateSet::all(p.space()), 1, 32).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(c.attached_for(ConditionId::MeanAlmostInv).unwrap().holds());

        let q = k(&[vec![0.5, 0.5], vec![0.2, 0.8]]);
        let c = check_assumption_c(&q, &m, 1.0, &f(&q, vec![0.0, 1.0]), &set(&q, &[0]), 1, 32).unwrap();
        assert!(c.holds(), "{c:?}");
    }

    #[test]
    fn c_prime_examples() {
        let p = k(&[vec![0.5, 0.5], vec![0.2, 0.8]]);
        let m = Measure::uniform(p.space());
        let params = AlmostInvarianceParams::linear(1.0, 0.0).with_horizon(64);
        let c = check_assumption_c_prime(&p, &m, &params, &set(&p, &[0]), &CPrimeOptions::default()).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(c.get("part_i_fgrid_gap").unwrap() <= 1e-12);
        assert!(c.attached_for(ConditionId::MeanAlmostInv).unwrap().holds());

        let params = AlmostInvarianceParams { phi: Phi::harnack(1.0, 2.0), delta: 0.1, horizon: 64, n0: 1 };
        let q = k(&[vec![0.3, 0.3, 0.4], vec![0.1, 0.6, 0.3], vec![0.2, 0.2, 0.6]]);
        let m = Measure::new(q.space().clone(), vec![0.2, 0.5, 0.3]).unwrap();
        let c = check_assumption_c_prime(&q, &m, &params, &StateSet::all(q.space()), &CPrimeOptions::default()).unwrap();
        assert!(c.get("part_i_fgrid_gap").unwrap() <= 1e-12);
    }

    #[test]
    fn count_bound_examples() {
        let m = Measure::from_weights(vec![0.5, 0.5]).unwrap();
        assert!((class_count_bound(&m, &Phi::linear(1.0), 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((class_count_bound(&m, &Phi::linear(3.0), 0.1).unwrap() - 1.0 / 0.3).abs() < 1e-12);
        assert!((class_count_bound(&m, &Phi::harnack(1.0, 2.0), 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_e_unbounded_b() {
        let n = 30;
        let bd = birth_death(n, 0.7);
        let v = f(&bd, (0..n).map(|x| x as f64 / 0.4).collect());
        let b = f(&bd, (0..n).map(|x| 1.75 + x as f64).collect());
        let c = set(&bd, &[0]);
        let params = AlmostInvarianceParams::linear(2.0, 0.5).with_horizon(128);
        let cert = check_condition_e(&bd, &bd.row_measure(0), &v, &b, &c, &params).unwrap();
        assert!(cert.holds(), "{cert:?}");
        let opt = cert.attached_for(ConditionId::AlmostInv).unwrap();
        assert!(opt.get("delta_min").unwrap() < 1.0);
    }
}
