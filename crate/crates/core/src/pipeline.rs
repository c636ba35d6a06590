//! Condition dispatch and the batch pipeline behind the CLI.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificates::{self as cert, AlmostInvarianceParams, CPrimeOptions, Certificate, ConditionId, IndexMethod, IndexProfile, Phi, Verdict};
use crate::convergence::{self, DecayReport};
use crate::error::{Error, Result};
use crate::harnack::{self, PerturbationConstants, PerturbationSpec};
use crate::io;
use crate::kernel::{Kernel, Measure, StateFn, StateSet};
use crate::scenario::{self, Bundle, Scenario};
use crate::semigroup::{self, Semigroup};
use crate::solver;

/// Chain plus whatever companions were supplied or generated.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub chain: Semigroup,
    pub m: Option<Measure>,
    pub measures: BTreeMap<String, Measure>,
    pub v: Option<StateFn>,
    pub set: Option<StateSet>,
    pub b_fn: Option<StateFn>,
    pub rho: Option<StateFn>,
    pub q: Option<Kernel>,
    pub constants: BTreeMap<String, f64>,
}

impl Inputs {
    pub fn new(chain: Semigroup) -> Self {
        Inputs {
            chain,
            m: None,
            measures: BTreeMap::new(),
            v: None,
            set: None,
            b_fn: None,
            rho: None,
            q: None,
            constants: BTreeMap::new(),
        }
    }

    pub fn from_bundle(b: Bundle) -> Self {
        Inputs {
            chain: b.chain,
            m: Some(b.m),
            measures: b.measures,
            v: b.v,
            set: b.set,
            b_fn: b.b_fn,
            rho: b.rho,
            q: None,
            constants: b.constants,
        }
    }

    fn kernel(&self) -> Result<&Kernel> {
        match &self.chain {
            Semigroup::Discrete(k) => Ok(k),
            Semigroup::Continuous(_) => Err(Error::Unsupported("this condition needs a discrete-time kernel".into())),
        }
    }

    fn m(&self) -> Result<&Measure> {
        self.m.as_ref().ok_or_else(|| missing("measure"))
    }

    fn v(&self) -> Result<&StateFn> {
        self.v.as_ref().ok_or_else(|| missing("lyapunov function"))
    }

    fn set(&self) -> Result<&StateSet> {
        self.set.as_ref().ok_or_else(|| missing("set"))
    }

    /// `dirac:<label>`, `uniform`, `m`, or the name of a bundled measure.
    pub fn resolve_measure(&self, spec: &str) -> Result<Measure> {
        let space = self.chain.space();
        if let Some(label) = spec.strip_prefix("dirac:") {
            return Ok(Measure::dirac(space, space.resolve(label)?));
        }
        match spec {
            "uniform" => Ok(Measure::uniform(space)),
            "m" => self.m().cloned(),
            name => self.measures.get(name).cloned().ok_or_else(|| Error::InvalidParam(format!("unknown measure {name:?}"))),
        }
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidParam(format!("missing input: {what}"))
}

/// Parameters shared by all conditions; unset values fall back to the
/// scenario constants and then to defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    /// Linear slope; `phi` takes precedence.
    pub c: Option<f64>,
    pub phi: Option<Phi>,
    pub delta: Option<f64>,
    pub horizon: Option<usize>,
    pub n0: Option<usize>,
    pub n: Option<usize>,
    pub gamma: Option<f64>,
    pub b: Option<f64>,
    pub r: Option<f64>,
    #[serde(rename = "L")]
    pub big_l: Option<f64>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub z0: Option<String>,
    pub l: Option<f64>,
    pub eta: Option<f64>,
}

const DEFAULT_ALPHAS: [f64; 5] = [4.0, 1.0, 0.25, 0.0625, 0.015625];

fn pick(v: Option<f64>, consts: &BTreeMap<String, f64>, key: &str) -> Option<f64> {
    v.or_else(|| consts.get(key).copied())
}

fn need(v: Option<f64>, consts: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    pick(v, consts, key).ok_or_else(|| Error::InvalidParam(format!("missing parameter {key}")))
}

/// Runs one checker with inputs and parameters.
pub fn certify(id: ConditionId, inp: &Inputs, prm: &CertifyParams) -> Result<Certificate> {
    let k = &inp.constants;
    let horizon = prm.horizon.unwrap_or(256);
    let alphas = prm.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    let phi_given = prm.phi.clone().or_else(|| pick(prm.c, k, "phi_c").map(Phi::linear));
    let ai_params = |phi: Phi| -> AlmostInvarianceParams {
        AlmostInvarianceParams { phi, delta: prm.delta.or(k.get("delta").copied()).unwrap_or(0.0), horizon, n0: prm.n0.unwrap_or(1) }
    };
    let z0 = || -> Result<usize> {
        match &prm.z0 {
            Some(s) => inp.chain.space().resolve(s),
            None => match k.get("z0") {
                Some(&z) => Ok(z as usize),
                None => Ok(harnack::default_z0(inp.v()?)),
            },
        }
    };
    match id {
        ConditionId::SupportA2 => cert::check_a2_semigroup(&inp.chain, inp.m()?),
        ConditionId::AlmostInv => match phi_given {
            Some(phi) => cert::check_almost_invariant(inp.kernel()?, inp.m()?, &ai_params(phi)),
            None => cert::optimal_almost_invariance(inp.kernel()?, inp.m()?, horizon),
        },
        ConditionId::MeanAlmostInv => match phi_given {
            Some(phi) => cert::check_mean_almost_invariant(inp.kernel()?, inp.m()?, &ai_params(phi)),
            None => cert::optimal_mean_almost_invariance(inp.kernel()?, inp.m()?, horizon),
        },
        ConditionId::ResolventAlmostInv => {
            let phi = phi_given.unwrap_or(Phi::linear(1.0));
            cert::check_resolvent_almost_invariant(&inp.chain, inp.m()?, &ai_params(phi), &alphas)
        }
        ConditionId::IndexC => {
            let m = inp.m()?;
            Ok(cert::index_profile(&inp.chain, m, &cert::default_eps_grid(m)?, horizon, IndexMethod::Both)?.certificate())
        }
        ConditionId::AuxiliaryIndexBound => {
            let mu = inp.m()?.normalized()?;
            cert::check_auxiliary_index_bound(&inp.chain, &mu, prm.alpha.unwrap_or(1.0), None, horizon)
        }
        ConditionId::AssumpA => cert::check_assumption_a(inp.kernel()?, inp.v()?, need(prm.gamma, k, "gamma")?, need(prm.b, k, "b")?, need(prm.r, k, "r")?),
        ConditionId::AssumpAPrime => {
            cert::check_assumption_a_prime(inp.kernel()?, inp.v()?, need(prm.gamma, k, "gamma")?, need(prm.b, k, "b")?, inp.set()?)
        }
        ConditionId::AssumpB => {
            let v = inp.v()?;
            let tails = tail_sets(v);
            cert::check_assumption_b(inp.kernel()?, v, need(prm.b, k, "b")?, inp.set()?, &tails)
        }
        ConditionId::AssumpC => {
            let p = inp.kernel()?;
            let gamma = StateFn::constant(p.space(), need(prm.gamma, k, "gamma")?);
            cert::check_assumption_c(p, inp.m()?, need(prm.big_l, k, "L")?, &gamma, inp.set()?, prm.n0.unwrap_or(1), prm.n.unwrap_or(horizon))
        }
        ConditionId::AssumpCPrime => {
            let phi = phi_given.ok_or_else(|| missing("phi"))?;
            cert::check_assumption_c_prime(inp.kernel()?, inp.m()?, &ai_params(phi), inp.set()?, &CPrimeOptions::default())
        }
        ConditionId::GenDrift => cert::check_generalized_drift(inp.kernel()?, inp.v()?, b_fn(inp, prm)?.as_ref(), inp.set()?),
        ConditionId::CondD => {
            let p = inp.kernel()?;
            let n0 = prm.n0.unwrap_or(1);
            cert::check_condition_d(p, inp.m()?, inp.v()?, b_fn(inp, prm)?.as_ref(), need(prm.r, k, "r")?, n0, prm.n.unwrap_or(horizon))
        }
        ConditionId::CondE => {
            let phi = phi_given.unwrap_or(Phi::linear(1.0));
            cert::check_condition_e(inp.kernel()?, inp.m()?, inp.v()?, b_fn(inp, prm)?.as_ref(), inp.set()?, &ai_params(phi))
        }
        ConditionId::Smallness => cert::check_smallness(inp.kernel()?, inp.set()?),
        ConditionId::PartialSubInv => cert::check_partial_subinvariance(inp.kernel()?, inp.m()?, horizon),
        ConditionId::LasotaSzarekHalf => {
            let nu = inp.m()?.normalized()?;
            let grid = prm.t_grid.clone().unwrap_or_else(|| vec![1.0, 4.0, 16.0, 64.0]);
            cert::check_lasota_szarek_half(&inp.chain, &nu, inp.set()?, &grid)
        }
        ConditionId::UniformBoundLp => cert::check_uniform_bound_lp(&inp.chain, inp.m()?, prm.p.unwrap_or(2.0), &alphas),
        ConditionId::ClassCount => {
            let phi = phi_given.ok_or_else(|| missing("phi"))?;
            solver::verify_count_bound(inp.kernel()?, inp.m()?, &phi, prm.delta.or(k.get("delta").copied()).unwrap_or(0.0))
        }
        ConditionId::HarnackDrift => harnack::check_hl(
            inp.kernel()?,
            inp.v()?,
            need(prm.gamma, k, "gamma")?,
            need(prm.c, k, "c")?,
            inp.set()?,
            z0()?,
            pick(prm.p, k, "p").unwrap_or(2.0),
        ),
        ConditionId::HarnackPipeline => Ok(harnack::certify_harnack_pipeline(
            inp.kernel()?,
            inp.v()?,
            need(prm.gamma, k, "gamma")?,
            need(prm.c, k, "c")?,
            inp.set()?,
            z0()?,
            pick(prm.p, k, "p").unwrap_or(2.0),
            horizon,
        )?
        .certificate),
        ConditionId::PerturbedKernel => {
            let rho = inp.rho.clone().ok_or_else(|| missing("rho"))?;
            let spec = PerturbationSpec::new(rho, inp.q.clone())?;
            let consts = PerturbationConstants {
                gamma: need(prm.gamma, k, "gamma")?,
                c: need(prm.c, k, "c")?,
                l: need(prm.l, k, "l")?,
                eta: pick(prm.eta, k, "eta").unwrap_or(0.0),
                p: pick(prm.p, k, "p").unwrap_or(2.0),
                r: need(prm.r, k, "r")?,
            };
            Ok(harnack::certify_perturbed(inp.kernel()?, inp.v()?, &spec, &consts, z0()?, horizon)?.certificate)
        }
    }
}

/// `b_fn` input, else the constant `b`.
fn b_fn<'a>(inp: &'a Inputs, prm: &CertifyParams) -> Result<std::borrow::Cow<'a, StateFn>> {
    match (&inp.b_fn, prm.b) {
        (_, Some(b)) => Ok(std::borrow::Cow::Owned(StateFn::constant(inp.chain.space(), b))),
        (Some(f), None) => Ok(std::borrow::Cow::Borrowed(f)),
        (None, None) => match inp.constants.get("b") {
            Some(&b) => Ok(std::borrow::Cow::Owned(StateFn::constant(inp.chain.space(), b))),
            None => Err(missing("b")),
        },
    }
}

/// `[V > v_k]` for the distinct finite levels of `V`, decreasing.
fn tail_sets(v: &StateFn) -> Vec<StateSet> {
    let mut levels: Vec<f64> = v.values().iter().copied().filter(|x| x.is_finite()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels.iter().map(|&r| StateSet::sublevel(v, r).complement()).collect()
}

/// Verdicts of the four equivalent descriptions of "an invariant measure
/// absolutely continuous with respect to m exists".
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub almost_invariant: bool,
    pub mean_almost_invariant: bool,
    pub index_below_mass: bool,
    pub solver_nonzero: bool,
    pub consistent: bool,
    pub index_estimate: f64,
    #[serde(rename = "mE")]
    pub m_e: f64,
    pub nu_mass: f64,
}

pub fn four_way(p: &Kernel, m: &Measure, horizon: usize) -> Result<Agreement> {
    let ai = cert::optimal_almost_invariance(p, m, horizon)?.holds();
    let mai = cert::optimal_mean_almost_invariance(p, m, horizon)?.holds();
    let prof = cert::index_profile(&Semigroup::Discrete(p.clone()), m, &cert::default_eps_grid(m)?, horizon, IndexMethod::Both)?;
    let sol = solver::solve_cesaro_adjoint(p, m, 1e-12, 1 << 16)?;
    let nz = !sol.is_zero();
    Ok(Agreement {
        almost_invariant: ai,
        mean_almost_invariant: mai,
        index_below_mass: prof.verdict,
        solver_nonzero: nz,
        consistent: ai == mai && mai == prof.verdict && prof.verdict == nz,
        index_estimate: prof.decisive(),
        m_e: m.mass(),
        nu_mass: sol.nu.mass(),
    })
}

/// File inputs; relative paths resolve against the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileInputs {
    pub chain: PathBuf,
    pub measure: Option<PathBuf>,
    pub lyapunov: Option<PathBuf>,
    pub set: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub rho: Option<PathBuf>,
    pub q: Option<PathBuf>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl FileInputs {
    pub fn load(&self, base: &Path) -> Result<Inputs> {
        let at = |p: &PathBuf| base.join(p);
        let chain = io::load_chain(at(&self.chain))?;
        let space = chain.space().clone();
        let mut inp = Inputs::new(chain);
        if let Some(p) = &self.measure {
            inp.m = Some(io::load_measure(at(p), &space)?);
        }
        if let Some(p) = &self.lyapunov {
            inp.v = Some(io::load_statefn(at(p), &space)?);
        }
        if let Some(p) = &self.set {
            inp.set = Some(io::load_set(at(p), &space)?);
        }
        if let Some(p) = &self.b {
            inp.b_fn = Some(io::load_statefn(at(p), &space)?);
        }
        if let Some(p) = &self.rho {
            inp.rho = Some(io::load_statefn(at(p), &space)?);
        }
        if let Some(p) = &self.q {
            inp.q = Some(io::load_kernel(at(p))?);
        }
        inp.constants = self.constants.clone();
        Ok(inp)
    }
}

fn one() -> f64 {
    1.0
}

fn default_horizon() -> usize {
    256
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    Auto,
    Eigen,
    Cesaro,
}

/// One pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Replace `m` by `mu R_alpha` (discrete time: `mu R`).
    Auxiliary {
        #[serde(default)]
        mu: Option<String>,
        #[serde(default = "one")]
        alpha: f64,
    },
    A2,
    IndexProfile {
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    Certify {
        condition: ConditionId,
        #[serde(default)]
        params: CertifyParams,
    },
    Solve {
        #[serde(default)]
        method: SolveMethod,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    Convergence {
        #[serde(default)]
        n_grid: Option<Vec<u64>>,
    },
}

/// Inline file inputs, or the path of a JSON file holding them (as written by
/// `ergocert gen`). Paths inside that file resolve against its own directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputsRef {
    Path(PathBuf),
    Inline(FileInputs),
}

impl InputsRef {
    pub fn load(&self, base: &Path) -> Result<Inputs> {
        match self {
            InputsRef::Inline(f) => f.load(base),
            InputsRef::Path(p) => {
                let p = base.join(p);
                let f: FileInputs = io::read_json(&p)?;
                f.load(p.parent().unwrap_or(Path::new("")))
            }
        }
    }
}

/// `{"scenario": {...} | "inputs": {...}, "measure": name, "steps": [...]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub inputs: Option<InputsRef>,
    /// Which measure plays `m` initially (see [`Inputs::resolve_measure`]).
    #[serde(default)]
    pub measure: Option<String>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub scenario: Option<Scenario>,
    pub states: Vec<String>,
    /// Reference measure after the auxiliary stage.
    pub measure: Option<Vec<f64>>,
    pub certificates: Vec<Certificate>,
    pub invariants_found: Vec<serde_json::Value>,
    pub index_profiles: Vec<IndexProfile>,
    pub decay: Option<DecayReport>,
    pub agreement: Option<Agreement>,
    pub flags: Vec<String>,
    pub errors: Vec<StageError>,
    /// Wall-clock seconds per stage; excluded from reproducibility comparisons.
    pub timing: BTreeMap<String, f64>,
}

impl Report {
    /// True when a certificate requested by a `certify` step failed.
    pub fn any_failed(&self) -> bool {
        self.certificates.iter().any(|c| c.verdict == Verdict::Fails)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// JSON without the timing block.
    pub fn to_json_untimed(&self) -> serde_json::Value {
        let mut v = self.to_json();
        v.as_object_mut().expect("object").remove("timing");
        v
    }

    /// `(file name, csv)` plot series: `index_profile_<i>.csv` with columns
    /// `eps,crisp,fractional` and `decay.csv` with `n,beta_n`.
    pub fn csv_series(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, p) in self.index_profiles.iter().enumerate() {
            let mut s = String::from("eps,crisp,fractional\n");
            for (j, e) in p.epsilons.iter().enumerate() {
                let c = p.crisp.get(j).map(|v| format!("{v:e}")).unwrap_or_default();
                let f = p.fractional.get(j).map(|v| format!("{v:e}")).unwrap_or_default();
                s.push_str(&format!("{e:e},{c},{f}\n"));
            }
            out.push((format!("index_profile_{i}.csv"), s));
        }
        if let Some(d) = &self.decay {
            out.push(("decay.csv".into(), d.to_csv()));
        }
        out
    }
}

fn invariant_json(r: &solver::InvariantResult) -> serde_json::Value {
    r.to_json()
}

/// Loads the config's inputs (scenario or files, relative to `base`) and runs it.
pub fn run_config(cfg: &Config, base: &Path) -> Result<Report> {
    let (inputs, scen) = match (&cfg.scenario, &cfg.inputs) {
        (Some(s), None) => (Inputs::from_bundle(scenario::generate(s)?), Some(s.clone())),
        (None, Some(r)) => (r.load(base)?, None),
        _ => return Err(Error::InvalidParam("config needs exactly one of scenario and inputs".into())),
    };
    run_pipeline(cfg, inputs, scen)
}

/// Executes the steps in order. Stage errors are recorded and later stages
/// that do not depend on the failed one still run.
pub fn run_pipeline(cfg: &Config, mut inputs: Inputs, scen: Option<Scenario>) -> Result<Report> {
    if let Some(name) = &cfg.measure {
        inputs.m = Some(inputs.resolve_measure(name)?);
    }
    let mut rep = Report { scenario: scen, states: inputs.chain.space().labels().to_vec(), ..Default::default() };
    let mut unique: Option<Measure> = None;
    for (i, step) in cfg.steps.iter().enumerate() {
        let name = stage_name(i, step);
        let t0 = Instant::now();
        if let Err(e) = run_step(step, &mut inputs, &mut rep, &mut unique) {
            rep.errors.push(StageError { stage: name.clone(), message: e.to_string() });
        }
        rep.timing.insert(name, t0.elapsed().as_secs_f64());
    }
    rep.measure = inputs.m.as_ref().map(|m| m.weights().to_vec());
    Ok(rep)
}

fn stage_name(i: usize, step: &Step) -> String {
    let s = match step {
        Step::Auxiliary { .. } => "auxiliary".to_string(),
        Step::A2 => "a2".to_string(),
        Step::IndexProfile { .. } => "index_profile".to_string(),
        Step::Certify { condition, .. } => format!("certify:{condition}"),
        Step::Solve { .. } => "solve".to_string(),
        Step::Convergence { .. } => "convergence".to_string(),
    };
    format!("{i}:{s}")
}

fn run_step(step: &Step, inp: &mut Inputs, rep: &mut Report, unique: &mut Option<Measure>) -> Result<()> {
    match step {
        Step::Auxiliary { mu, alpha } => {
            let mu = match mu {
                Some(s) => inp.resolve_measure(s)?,
                None => match &inp.v {
                    Some(v) => Measure::dirac(inp.chain.space(), harnack::default_z0(v)),
                    None => Measure::uniform(inp.chain.space()),
                },
            };
            inp.m = Some(semigroup::auxiliary_measure(&inp.chain, &mu.normalized()?, *alpha, false)?);
        }
        Step::A2 => rep.certificates.push(cert::check_a2_semigroup(&inp.chain, inp.m()?)?),
        Step::IndexProfile { horizon } => {
            let m = inp.m()?;
            rep.index_profiles.push(cert::index_profile(&inp.chain, m, &cert::default_eps_grid(m)?, *horizon, IndexMethod::Both)?);
        }
        Step::Certify { condition, params } => rep.certificates.push(certify(*condition, inp, params)?),
        Step::Solve { method, horizon } => {
            let results = match &inp.chain {
                Semigroup::Continuous(_) => solver::solve_continuous(&inp.chain)?,
                Semigroup::Discrete(p) => {
                    let mut out = Vec::new();
                    if *method != SolveMethod::Cesaro {
                        out.extend(solver::solve_eigen(p)?);
                    }
                    if *method != SolveMethod::Eigen {
                        if let Some(m) = &inp.m {
                            out.push(solver::solve_cesaro_adjoint(p, m, 1e-12, 1 << 16)?);
                        }
                    }
                    if let Some(m) = &inp.m {
                        let a = four_way(p, m, *horizon)?;
                        if !a.solver_nonzero {
                            rep.flags.push("no invariant measure absolutely continuous with respect to m".into());
                        }
                        if !a.consistent {
                            rep.flags.push("four-way verdicts disagree".into());
                        }
                        rep.agreement = Some(a);
                    }
                    out
                }
            };
            let classes = solver::decompose(&inp.chain.skeleton())?.len();
            if classes == 1 {
                rep.flags.push("unique invariant probability".into());
                *unique = results.iter().find(|r| r.method != solver::SolveMethod::CesaroAdjoint).map(|r| r.nu.clone());
            }
            rep.invariants_found.extend(results.iter().map(invariant_json));
        }
        Step::Convergence { n_grid } => {
            let p = inp.kernel()?;
            let nu = match unique.clone() {
                Some(nu) => nu,
                None => {
                    let r = solver::solve_eigen(p)?;
                    if r.len() != 1 {
                        return Err(Error::Unsupported("convergence needs a unique invariant probability".into()));
                    }
                    r[0].nu.clone()
                }
            };
            let v = inp.v.clone().unwrap_or_else(|| StateFn::constant(p.space(), 0.0)).map(|x| if x.is_finite() { x } else { 0.0 });
            let grid = n_grid.clone().unwrap_or_else(convergence::default_n_grid);
            rep.decay = Some(convergence::decay_report(p, &nu, &v, &grid)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioKind;

    fn cfg(json: &str) -> Config {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn absorbing_pair_dirac() {
        let c = cfg(r#"{"scenario":{"id":"absorbing_pair"},"measure":"dirac0",
            "steps":[{"step":"index_profile"},{"step":"solve"}]}"#);
        let r = run_config(&c, Path::new(".")).unwrap();
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        let a = r.agreement.as_ref().unwrap();
        assert!(a.consistent && !a.solver_nonzero && !a.index_below_mass);
        assert!(r.flags.iter().any(|f| f.starts_with("no invariant")));
        assert!(!r.index_profiles[0].verdict);
    }

    #[test]
    fn birth_death_from_dirac() {
        let c = cfg(r#"{"scenario":{"id":"birth_death","n":20,"p_down":0.7},
            "steps":[{"step":"auxiliary","mu":"dirac:s0"},{"step":"a2"},{"step":"certify","condition":"gen-drift"},
                     {"step":"certify","condition":"almost-inv"},{"step":"solve"},{"step":"convergence"}]}"#);
        let r = run_config(&c, Path::new(".")).unwrap();
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert!(r.certificates.iter().all(|c| c.holds()), "{:?}", r.certificates);
        assert!(r.agreement.as_ref().unwrap().consistent);
        assert!(r.decay.as_ref().unwrap().geometric);
        assert!(!r.any_failed());
        assert_eq!(r.csv_series().last().unwrap().0, "decay.csv");
    }

    #[test]
    fn ou_harnack_pipeline() {
        let c = Config {
            scenario: Some(Scenario::new(ScenarioKind::OuGrid { n: 41, dt: 0.5, theta: 1.0, sigma: 1.0, l: 4.0 })),
            inputs: None,
            measure: None,
            steps: vec![
                Step::Certify { condition: ConditionId::HarnackPipeline, params: CertifyParams::default() },
                Step::Certify { condition: ConditionId::PerturbedKernel, params: CertifyParams::default() },
                Step::Solve { method: SolveMethod::Eigen, horizon: 64 },
            ],
        };
        let r = run_config(&c, Path::new(".")).unwrap();
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert!(r.certificates.iter().all(|c| c.holds()));
        assert!(r.certificates[0].get("M").unwrap().is_finite());
        assert!(r.flags.iter().any(|f| f == "unique invariant probability"));
    }

    #[test]
    fn stage_errors_do_not_stop_the_run() {
        let c = cfg(r#"{"scenario":{"id":"two_state","p":0.1,"q":0.2},
            "steps":[{"step":"certify","condition":"assump-a"},{"step":"solve","method":"eigen"}]}"#);
        let r = run_config(&c, Path::new(".")).unwrap();
        assert_eq!(r.errors.len(), 1);
        assert!(r.errors[0].message.contains("lyapunov"));
        assert_eq!(r.invariants_found.len(), 1);
    }

    #[test]
    fn deterministic_modulo_timing() {
        let c = cfg(r#"{"scenario":{"id":"random","n":8,"density":0.5,"seed":11},
            "steps":[{"step":"auxiliary","mu":"uniform"},{"step":"index_profile","horizon":32},{"step":"solve"}]}"#);
        let a = run_config(&c, Path::new(".")).unwrap().to_json_untimed();
        let b = run_config(&c, Path::new(".")).unwrap().to_json_untimed();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
