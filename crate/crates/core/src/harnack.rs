//! Kernel-level Harnack constants, the Harnack-plus-drift certification
//! pipeline, and the perturbed kernels `rho P + (1 - rho) Q`.

use serde::Serialize;

use crate::certificates::{
    check_assumption_c_prime, AlmostInvarianceParams, CPrimeOptions, Certificate, ConditionId, Phi, Witness,
};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Measure, StateFn, StateSet};
use crate::semigroup;
use crate::solver;

/// Sharp constant in `(Pf(y))^p <= M P(f^p)(x)` over `f >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HarnackConstant {
    pub p: f64,
    pub x: usize,
    pub y: usize,
    #[serde(rename = "M")]
    pub value: f64,
}

impl HarnackConstant {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParam(format!("Harnack exponent must exceed 1, got {p}")));
    }
    Ok(())
}

fn check_state(k: &Kernel, s: usize) -> Result<()> {
    if s >= k.size() {
        return Err(Error::InvalidParam(format!("state {s} out of range")));
    }
    Ok(())
}

/// `M = (sum_a P(y,a)^{p/(p-1)} P(x,a)^{-1/(p-1)})^{p-1}`, infinite when
/// `supp P(y,.)` is not contained in `supp P(x,.)`. Hoelder gives the bound
/// and [`harnack_maximizer`] attains it.
pub fn harnack_constant(k: &Kernel, x: usize, y: usize, p: f64) -> Result<HarnackConstant> {
    check_p(p)?;
    check_state(k, x)?;
    check_state(k, y)?;
    let q = p / (p - 1.0);
    let e = 1.0 / (p - 1.0);
    let mut sum = 0.0;
    for (&py, &px) in k.row(y).iter().zip(k.row(x)) {
        if py == 0.0 {
            continue;
        }
        if px == 0.0 {
            return Ok(HarnackConstant { p, x, y, value: f64::INFINITY });
        }
        sum += py.powf(q) * px.powf(-e);
    }
    Ok(HarnackConstant { p, x, y, value: sum.powf(p - 1.0) })
}

/// Equality case of Hoelder: `f(a) = (P(y,a)/P(x,a))^{1/(p-1)}` on `supp P(x,.)`.
pub fn harnack_maximizer(k: &Kernel, x: usize, y: usize, p: f64) -> Result<StateFn> {
    check_p(p)?;
    check_state(k, x)?;
    check_state(k, y)?;
    let f = k
        .row(y)
        .iter()
        .zip(k.row(x))
        .map(|(&py, &px)| if px > 0.0 { (py / px).powf(1.0 / (p - 1.0)) } else { 0.0 })
        .collect();
    StateFn::new(k.space().clone(), f)
}

/// `(Pf(y))^p / P(f^p)(x)` for a nonnegative `f`.
pub fn harnack_ratio(k: &Kernel, x: usize, y: usize, p: f64, f: &[f64]) -> f64 {
    let num: f64 = k.row(y).iter().zip(f).map(|(a, b)| a * b).sum();
    let den: f64 = k.row(x).iter().zip(f).map(|(a, b)| a * b.powf(p)).sum();
    num.powf(p) / den
}

/// Reference point used when none is given: the first minimizer of `V`.
pub fn default_z0(v: &StateFn) -> usize {
    let vals = v.values();
    (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0)
}

/// Drift `PV <= gamma V + c` on E and the Harnack bound
/// `(Pf(x))^p <= M P(f^p)(z0)` on C with `M = max_{x in C} M_p(z0, x)` finite.
pub fn check_hl(k: &Kernel, v: &StateFn, gamma: f64, c: f64, set: &StateSet, z0: usize, p: f64) -> Result<Certificate> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParam(format!("gamma must lie in (0,1), got {gamma}")));
    }
    check_p(p)?;
    check_state(k, z0)?;
    k.space().ensure_same(v.space(), "check_hl")?;
    let mut cert = Certificate::new(ConditionId::HarnackDrift).with("gamma", gamma).with("c", c).with("p", p);
    cert.set("z0", z0 as f64);
    cert.note(format!("z0 = {}", k.space().label(z0)));
    let pv = k.apply(v)?;
    for x in 0..k.size() {
        let rhs = gamma * v.value(x) + c;
        if pv.value(x) > rhs + 1e-12 * rhs.abs().max(1.0) {
            cert.fail(Witness::state(k.space().label(x)).with_value(pv.value(x) - rhs).with_detail("drift inequality violated"));
            return Ok(cert);
        }
    }
    if set.is_empty() {
        cert.fail(Witness::detail("C is empty"));
        return Ok(cert);
    }
    let (mut m, mut arg) = (1.0f64, set.members()[0]);
    for &x in set.members() {
        let h = harnack_constant(k, z0, x, p)?;
        if h.value > m || h.value.is_nan() {
            m = h.value;
            arg = x;
        }
    }
    cert.set("M", m);
    if m.is_finite() {
        cert.hold();
    } else {
        cert.fail(Witness::state(k.space().label(arg)).with_detail("row charges a state the row of z0 does not").with_value(m));
    }
    Ok(cert)
}

/// Certificate plus the invariant probability it produced.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub certificate: Certificate,
    pub invariant: Option<Measure>,
}

/// Invariant probability charged by the Cesaro limit of `m`, with its residual.
fn invariant_from(k: &Kernel, m: &Measure) -> Result<(Measure, f64)> {
    let dec = solver::decompose(k)?;
    let lim = dec.limit_of(m.weights());
    let mass: f64 = lim.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidMeasure("Cesaro limit of m vanishes".into()));
    }
    let nu = Measure::new(k.space().clone(), lim.iter().map(|w| w / mass).collect())?;
    let r = solver::markov_residual(k, nu.weights());
    Ok((nu, r))
}

/// Harnack-plus-drift route to existence: from `check_hl`, take
/// `m = delta_{z0} P`, `phi(t) = (M t)^{1/p}`, `delta = 0` and check the
/// one-step bound with positive occupation of C; when it holds, solve for the
/// invariant probability.
#[allow(clippy::too_many_arguments)]
pub fn certify_harnack_pipeline(
    k: &Kernel,
    v: &StateFn,
    gamma: f64,
    c: f64,
    set: &StateSet,
    z0: usize,
    p: f64,
    horizon: usize,
) -> Result<PipelineOutcome> {
    let mut cert = Certificate::new(ConditionId::HarnackPipeline);
    let hl = check_hl(k, v, gamma, c, set, z0, p)?;
    let big_m = hl.get("M").unwrap_or(f64::NAN);
    cert.set("M", big_m);
    cert.set("p", p);
    if !hl.holds() {
        let w = hl.witness.clone().unwrap_or_default();
        if big_m.is_infinite() {
            cert.fail(w);
        } else {
            cert.inconclusive("drift part fails");
            cert.witness = Some(w);
        }
        cert.attach(hl);
        return Ok(PipelineOutcome { certificate: cert, invariant: None });
    }
    cert.attach(hl);
    let m = k.row_measure(z0);
    let params = AlmostInvarianceParams { phi: Phi::harnack(big_m, p), delta: 0.0, horizon, n0: 1 };
    let cp = check_assumption_c_prime(k, &m, &params, set, &CPrimeOptions { fgrid_max_states: 0, ..Default::default() })?;
    let ok = cp.holds();
    let wit = cp.witness.clone();
    cert.attach(cp);
    if !ok {
        cert.fail(wit.unwrap_or_default().with_detail("one-step bound from the Harnack constant fails"));
        return Ok(PipelineOutcome { certificate: cert, invariant: None });
    }
    let aux = semigroup::auxiliary_measure_kernel(k, &m)?;
    let (nu, residual) = invariant_from(k, &aux)?;
    cert.set("invariant_residual", residual);
    cert.set("recurrent_classes", solver::decompose(k)?.len() as f64);
    cert.hold();
    Ok(PipelineOutcome { certificate: cert, invariant: Some(nu) })
}

/// Perturbation weights `0 < a <= rho <= b < 1` and the second kernel (`None` = identity).
#[derive(Clone, Debug)]
pub struct PerturbationSpec {
    rho: StateFn,
    q: Option<Kernel>,
}

impl PerturbationSpec {
    pub fn new(rho: StateFn, q: Option<Kernel>) -> Result<Self> {
        if !(rho.min() > 0.0 && rho.max() < 1.0) {
            return Err(Error::InvalidParam(format!(
                "rho must take values in (0,1), found range [{}, {}]",
                rho.min(),
                rho.max()
            )));
        }
        if let Some(q) = &q {
            rho.space().ensure_same(q.space(), "perturbation")?;
            if !q.is_markovian() {
                return Err(Error::InvalidParam("Q must be markovian".into()));
            }
        }
        Ok(PerturbationSpec { rho, q })
    }

    pub fn rho(&self) -> &StateFn {
        &self.rho
    }

    pub fn q(&self) -> Option<&Kernel> {
        self.q.as_ref()
    }

    pub fn a(&self) -> f64 {
        self.rho.min()
    }

    pub fn b(&self) -> f64 {
        self.rho.max()
    }

    fn q_kernel(&self) -> Kernel {
        self.q.clone().unwrap_or_else(|| Kernel::identity(self.rho.space()))
    }
}

/// Row `x` is `rho(x) P(x,.) + (1 - rho(x)) Q(x,.)`.
///
/// Also accepts `rho` touching 0 or 1 (so `rho = 1` returns `P`), which
/// [`PerturbationSpec`] rejects.
pub fn perturb_with(k: &Kernel, rho: &StateFn, q: Option<&Kernel>) -> Result<Kernel> {
    k.space().ensure_same(rho.space(), "perturb")?;
    if rho.min() < 0.0 || rho.max() > 1.0 {
        return Err(Error::InvalidParam("rho must take values in [0,1]".into()));
    }
    let id;
    let q = match q {
        Some(q) => q,
        None => {
            id = Kernel::identity(k.space());
            &id
        }
    };
    k.mix_rows(q, rho.values())
}

pub fn perturb(k: &Kernel, spec: &PerturbationSpec) -> Result<Kernel> {
    perturb_with(k, &spec.rho, spec.q.as_ref())
}

/// Constants of the perturbed-kernel route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationConstants {
    pub gamma: f64,
    pub c: f64,
    pub l: f64,
    pub eta: f64,
    pub p: f64,
    /// `C = [V <= r]`
    pub r: f64,
}

/// Existence for `rho P + (1 - rho) Q` when `P` satisfies drift plus Harnack
/// and `QV <= lV + eta` with `l < (1 - b gamma)/(1 - a)`.
///
/// Checks the threshold, the `Q` drift, the composite drift
/// `P_bar V <= (b gamma + (1-a) l) V + b c + (1-a) eta`, the Harnack bound of
/// `P` on `C = [V <= r]`, and then the one-step bound for `P_bar` with
/// `m = delta_{z0} P_bar`, `phi(t) = b (M t / a)^{1/p}`, `delta = 1 - a`.
pub fn certify_perturbed(
    k: &Kernel,
    v: &StateFn,
    spec: &PerturbationSpec,
    consts: &PerturbationConstants,
    z0: usize,
    horizon: usize,
) -> Result<PipelineOutcome> {
    let PerturbationConstants { gamma, c, l, eta, p, r } = *consts;
    let (a, b) = (spec.a(), spec.b());
    let mut cert = Certificate::new(ConditionId::PerturbedKernel);
    let threshold = (1.0 - b * gamma) / (1.0 - a);
    cert.set("a", a);
    cert.set("b", b);
    cert.set("l", l);
    cert.set("threshold", threshold);
    let done = |cert: Certificate| Ok(PipelineOutcome { certificate: cert, invariant: None });
    if !(l < threshold) {
        cert.fail(Witness::detail("l must be below (1 - b gamma)/(1 - a)").with_value(l - threshold));
        return done(cert);
    }
    let q = spec.q_kernel();
    let qv = q.apply(v)?;
    for x in 0..k.size() {
        let rhs = l * v.value(x) + eta;
        if qv.value(x) > rhs + 1e-12 * rhs.abs().max(1.0) {
            cert.fail(Witness::state(k.space().label(x)).with_value(qv.value(x) - rhs).with_detail("QV <= lV + eta violated"));
            return done(cert);
        }
    }
    let set = StateSet::sublevel(v, r);
    let hl = check_hl(k, v, gamma, c, &set, z0, p)?;
    let big_m = hl.get("M").unwrap_or(f64::NAN);
    cert.set("M", big_m);
    if !hl.holds() {
        cert.fail(hl.witness.clone().unwrap_or_default().with_detail("drift or Harnack bound for P fails"));
        cert.attach(hl);
        return done(cert);
    }
    cert.attach(hl);
    let pbar = perturb(k, spec)?;
    let gbar = b * gamma + (1.0 - a) * l;
    let cbar = b * c + (1.0 - a) * eta;
    cert.set("gamma_bar", gbar);
    cert.set("c_bar", cbar);
    let pv = pbar.apply(v)?;
    for x in 0..k.size() {
        let rhs = gbar * v.value(x) + cbar;
        if pv.value(x) > rhs + 1e-12 * rhs.abs().max(1.0) {
            cert.fail(Witness::state(k.space().label(x)).with_value(pv.value(x) - rhs).with_detail("composite drift violated"));
            return done(cert);
        }
    }
    let m = pbar.row_measure(z0);
    let params = AlmostInvarianceParams { phi: Phi::power(b, big_m, a, p), delta: 1.0 - a, horizon, n0: 1 };
    let cp = check_assumption_c_prime(&pbar, &m, &params, &set, &CPrimeOptions { fgrid_max_states: 0, ..Default::default() })?;
    let ok = cp.holds();
    let wit = cp.witness.clone();
    cert.attach(cp);
    if !ok {
        cert.fail(wit.unwrap_or_default().with_detail("one-step bound for the perturbed kernel fails"));
        return done(cert);
    }
    let aux = semigroup::auxiliary_measure_kernel(&pbar, &m)?;
    let (nu, residual) = invariant_from(&pbar, &aux)?;
    cert.set("invariant_residual", residual);
    cert.hold();
    Ok(PipelineOutcome { certificate: cert, invariant: Some(nu) })
}

/// Atom diagnostics for the lazy kernel `P^rho = rho P + (1 - rho) I`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LazyAtomReport {
    /// `max_{x,y} P(x,{y})`; the identity below is exact only when this is 0.
    pub max_atom: f64,
    /// `max |(P^rho)^n(x,{y}) - (1-rho(y))^n 1_{x=y}|` over `n <= horizon`.
    pub identity_defect: f64,
    /// `min_{y,n} [(P^rho)^n(y,{y}) - (1-rho(y))^n]`, never negative.
    pub staying_slack: f64,
    /// `sup_{x in C} P^rho(x, A_k)` over `A_k` = C without its first k states.
    pub tail_sups: Vec<f64>,
    /// `1 - max rho`
    pub lower_bound: f64,
    pub horizon: usize,
    pub note: String,
}

/// Compares powers of `P^rho` on atoms with `(1 - rho(y))^n 1_{x = y}` and
/// reports the `1 - b` floor of `sup_{x in C} P^rho(x, A)` over shrinking
/// `A ⊆ C`. On a finite space every row charges some atom, so this is an
/// illustration of the non-atomic argument, not evidence for it.
pub fn diagnose_lazy_atoms(k: &Kernel, rho: &StateFn, set: &StateSet, horizon: usize) -> Result<LazyAtomReport> {
    let lazy = perturb_with(k, rho, None)?;
    let d = k.size();
    let max_atom = k.matrix().as_slice().iter().copied().fold(0.0, f64::max);
    let mut defect = 0.0f64;
    let mut slack = f64::INFINITY;
    let mut pow = Kernel::identity(k.space()).matrix().clone();
    for n in 1..=horizon as i32 {
        pow = pow.matmul(lazy.matrix());
        for y in 0..d {
            let stay = (1.0 - rho.value(y)).powi(n);
            slack = slack.min(pow.get(y, y) - stay);
            for x in 0..d {
                let target = if x == y { stay } else { 0.0 };
                defect = defect.max((pow.get(x, y) - target).abs());
            }
        }
    }
    let mut tail_sups = Vec::new();
    for k0 in 0..set.len() {
        let a = &set.members()[k0..];
        let sup = set.members().iter().map(|&x| a.iter().map(|&y| lazy.get(x, y)).sum::<f64>()).fold(0.0, f64::max);
        tail_sups.push(sup);
    }
    Ok(LazyAtomReport {
        max_atom,
        identity_defect: defect,
        staying_slack: if slack.is_finite() { slack } else { 0.0 },
        tail_sups,
        lower_bound: 1.0 - rho.max(),
        horizon,
        note: "illustrative only: a finite kernel always charges atoms".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(rows: &[Vec<f64>]) -> Kernel {
        Kernel::from_rows(rows).unwrap()
    }

    #[test]
    fn harnack_examples() {
        let p = k(&[vec![0.25, 0.75, 0.0], vec![0.5, 0.5, 0.0], vec![1.0, 0.0, 0.0]]);
        assert!((harnack_constant(&p, 1, 1, 2.0).unwrap().value - 1.0).abs() < 1e-15);
        let h = harnack_constant(&p, 0, 1, 2.0).unwrap();
        assert!((h.value - 4.0 / 3.0).abs() < 1e-15);
        let f = harnack_maximizer(&p, 0, 1, 2.0).unwrap();
        assert!((harnack_ratio(&p, 0, 1, 2.0, f.values()) - h.value).abs() < 1e-14);
        assert!(harnack_constant(&p, 2, 1, 2.0).unwrap().value.is_infinite());
        assert!(harnack_constant(&p, 0, 1, 1.0).is_err());
    }

    #[test]
    fn hl_examples() {
        let p = k(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]]);
        let v = StateFn::from_values(vec![0.0, 1.0, 2.0]).unwrap();
        let v = StateFn::new(p.space().clone(), v.values().to_vec()).unwrap();
        let all = StateSet::all(p.space());
        let c = check_hl(&p, &v, 0.5, 1.5, &all, 0, 2.0).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(c.get("M").unwrap().is_finite());
        let q = k(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = StateFn::constant(q.space(), 0.0);
        let c = check_hl(&q, &v, 0.5, 1.0, &StateSet::all(q.space()), 0, 2.0).unwrap();
        assert!(c.fails());
    }

    #[test]
    fn pipeline_on_a_mixing_chain() {
        let p = k(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]]);
        let v = StateFn::new(p.space().clone(), vec![0.0, 1.0, 2.0]).unwrap();
        let all = StateSet::all(p.space());
        let out = certify_harnack_pipeline(&p, &v, 0.5, 1.5, &all, 0, 2.0, 64).unwrap();
        assert!(out.certificate.holds(), "{:?}", out.certificate);
        let nu = out.invariant.unwrap();
        let eig = solver::solve_eigen(&p).unwrap();
        assert!(nu.tv_distance(&eig[0].nu) < 1e-8);
        // drift fails: gamma too small for c = 0
        let out = certify_harnack_pipeline(&p, &v, 0.1, 0.0, &all, 0, 2.0, 64).unwrap();
        assert_eq!(out.certificate.verdict, crate::certificates::Verdict::Inconclusive);
        assert!(out.certificate.witness.is_some());
    }

    #[test]
    fn perturb_examples() {
        let p = k(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let rho = StateFn::new(p.space().clone(), vec![0.3, 0.8]).unwrap();
        let spec = PerturbationSpec::new(rho, None).unwrap();
        let pb = perturb(&p, &spec).unwrap();
        for (r, e) in pb.matrix().to_rows().iter().flatten().zip([0.7, 0.3, 0.8, 0.2]) {
            assert!((r - e).abs() < 1e-15);
        }
        assert!(pb.is_markovian());
        let one = StateFn::constant(p.space(), 1.0);
        assert_eq!(perturb_with(&p, &one, None).unwrap().matrix(), p.matrix());
        assert!(PerturbationSpec::new(one, None).is_err());
        let half = StateFn::constant(p.space(), 0.5);
        let lazy = perturb_with(&p, &half, None).unwrap();
        assert_eq!(lazy.matrix().to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn perturbed_threshold_flips() {
        let p = k(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]]);
        let v = StateFn::new(p.space().clone(), vec![0.0, 1.0, 2.0]).unwrap();
        let rho = StateFn::new(p.space().clone(), vec![0.4, 0.5, 0.6]).unwrap();
        let spec = PerturbationSpec::new(rho, None).unwrap();
        let mut consts = PerturbationConstants { gamma: 0.3, c: 1.5, l: 1.0, eta: 0.0, p: 2.0, r: 2.0 };
        let out = certify_perturbed(&p, &v, &spec, &consts, 0, 64).unwrap();
        assert!(out.certificate.holds(), "{:?}", out.certificate);
        let nu = out.invariant.unwrap();
        let pbar = perturb(&p, &spec).unwrap();
        assert!(solver::markov_residual(&pbar, nu.weights()) < 1e-10);
        consts.l = 1.5;
        let out = certify_perturbed(&p, &v, &spec, &consts, 0, 64).unwrap();
        assert!(out.certificate.fails());
        assert!(out.certificate.get("threshold").unwrap() < 1.5);
    }

    #[test]
    fn lazy_atoms() {
        let p = k(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]);
        let half = StateFn::constant(p.space(), 0.5);
        let rep = diagnose_lazy_atoms(&p, &half, &StateSet::all(p.space()), 16).unwrap();
        assert!(rep.staying_slack >= -1e-15);
        assert!(rep.tail_sups.iter().all(|&s| s >= rep.lower_bound - 1e-15));
        assert!(rep.identity_defect > 0.0);
        let one = StateFn::constant(p.space(), 1.0);
        let rep = diagnose_lazy_atoms(&p, &one, &StateSet::all(p.space()), 4).unwrap();
        assert_eq!(rep.lower_bound, 0.0);
    }
}
