//! Desk-scale scenario generators with their canonical companions `V`, `m`, `C`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harnack;
use crate::kernel::{Kernel, Measure, StateFn, StateSet};
use crate::semigroup::{self, Generator, Semigroup};

/// Parameters of a generated chain; the tag is the `id` field in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Walk on `0..n` stepping down w.p. `p_down`; blocked moves hold when
    /// `reflect`, otherwise 0 is absorbing.
    BirthDeath { n: usize, p_down: f64, #[serde(default = "yes")] reflect: bool },
    /// Walk on `0..n` stepping up w.p. `p_out > 1/2`, holding at both ends.
    OutwardWalk { n: usize, p_out: f64 },
    AbsorbingPair,
    TwoState { p: f64, q: f64 },
    /// Euler-Maruyama step of `dX = -theta X dt + sigma dW` on `n` points of `[-l, l]`.
    OuGrid {
        #[serde(default = "ou_n")]
        n: usize,
        #[serde(default = "half")]
        dt: f64,
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "ou_l")]
        l: f64,
    },
    /// `k` closed blocks, each row uniform on its block.
    BlockChain { k: usize, block_size: usize },
    /// `rho P + (1 - rho) I` for a discrete base scenario.
    Lazy { base: Box<ScenarioKind>, rho: f64 },
    /// Continuous-time nearest-neighbour chain on a path with symmetric rates.
    CtmcSymmetric { n: usize, #[serde(default = "one")] rate: f64 },
    /// Reset to 0 w.p. `q`, otherwise step up (holding at the top).
    Renewal { n: usize, q: f64 },
    /// Random dense-ish kernel drawn from the seed.
    Random { n: usize, #[serde(default = "one")] density: f64 },
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn ou_n() -> usize {
    41
}
fn ou_l() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Scenario { kind, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A generated chain plus the companions the certificates expect.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub scenario: Scenario,
    pub chain: Semigroup,
    /// Lyapunov function.
    pub v: Option<StateFn>,
    /// Default reference measure.
    pub m: Measure,
    /// Further reference measures, by name.
    pub measures: BTreeMap<String, Measure>,
    pub set: Option<StateSet>,
    /// `b(x)` for the generalized drift `PV <= V - 1 + b 1_C`.
    pub b_fn: Option<StateFn>,
    /// Perturbation weights.
    pub rho: Option<StateFn>,
    /// Scalar constants (`gamma`, `b`, `r`, `c`, `z0`, ...).
    pub constants: BTreeMap<String, f64>,
}

impl Bundle {
    fn new(scenario: Scenario, chain: Semigroup, m: Measure) -> Self {
        Bundle {
            scenario,
            chain,
            v: None,
            m,
            measures: BTreeMap::new(),
            set: None,
            b_fn: None,
            rho: None,
            constants: BTreeMap::new(),
        }
    }

    /// The discrete kernel, or the uniformized kernel of a generator.
    pub fn kernel(&self) -> Kernel {
        self.chain.skeleton()
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0,1), got {v}")))
    }
}

fn check_size(n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(invalid(format!("need at least {min} states, got {n}")))
    }
}

fn fn_on(k: &Kernel, f: impl Fn(usize) -> f64) -> StateFn {
    StateFn::new(k.space().clone(), (0..k.size()).map(f).collect()).expect("finite values")
}

fn aux_from(k: &Kernel, x: usize) -> Result<Measure> {
    semigroup::auxiliary_measure_kernel(k, &Measure::dirac(k.space(), x))
}

/// `b = max_{x in C} (PV - V + 1)^+` so that the generalized drift holds on C;
/// outside C the caller must already have `PV <= V - 1`.
fn drift_b(k: &Kernel, v: &StateFn, c: &StateSet) -> Result<StateFn> {
    let pv = k.apply(v)?;
    let b = c.members().iter().map(|&x| pv.value(x) - v.value(x) + 1.0).fold(0.0, f64::max);
    Ok(StateFn::constant(k.space(), b))
}

fn walk(n: usize, p_down: f64, reflect: bool) -> Result<Kernel> {
    let mut rows = vec![vec![0.0; n]; n];
    for (x, row) in rows.iter_mut().enumerate() {
        if x == 0 && !reflect {
            row[0] = 1.0;
            continue;
        }
        row[x.saturating_sub(1)] += p_down;
        row[(x + 1).min(n - 1)] += 1.0 - p_down;
    }
    Kernel::from_rows(&rows)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp()
}

fn ou_kernel(n: usize, dt: f64, theta: f64, sigma: f64, l: f64) -> Result<(Kernel, Vec<f64>)> {
    let xs: Vec<f64> = (0..n).map(|i| -l + 2.0 * l * i as f64 / (n - 1) as f64).collect();
    let s = sigma * dt.sqrt();
    let mut rows = Vec::with_capacity(n);
    for &x in &xs {
        let mean = x - theta * x * dt;
        // density at the grid points plus its mirror images in the walls
        let mut row: Vec<f64> = xs
            .iter()
            .map(|&y| normal_pdf((y - mean) / s) + normal_pdf((2.0 * l - y - mean) / s) + normal_pdf((-2.0 * l - y - mean) / s))
            .collect();
        let tot: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= tot);
        rows.push(row);
    }
    Ok((Kernel::from_rows(&rows)?, xs))
}

/// Random markov kernel: each entry is kept with probability `density`
/// (the diagonal always), then weights are uniform and rows normalized.
pub fn random_kernel(n: usize, density: f64, rng: &mut impl Rng) -> Result<Kernel> {
    check_size(n, 1)?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid("density must lie in (0,1]"));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            let mut r: Vec<f64> = (0..n)
                .map(|y| if x == y || rng.random::<f64>() < density { rng.random::<f64>() + 1e-3 } else { 0.0 })
                .collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|w| *w /= s);
            r
        })
        .collect();
    Kernel::from_rows(&rows)
}

/// Builds the chain and its companions. Deterministic in the seed.
pub fn generate(s: &Scenario) -> Result<Bundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    match &s.kind {
        &ScenarioKind::BirthDeath { n, p_down, reflect } => {
            check_size(n, 2)?;
            check_prob("p_down", p_down)?;
            let k = walk(n, p_down, reflect)?;
            let drift = 2.0 * p_down - 1.0;
            let scale = if drift > 0.0 { drift } else { 1.0 };
            let v = fn_on(&k, |x| x as f64 / scale);
            let c = StateSet::new(k.space().clone(), vec![0])?;
            let b = drift_b(&k, &v, &c)?;
            let m = aux_from(&k, 0)?;
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k), m);
            out.constants.insert("b".into(), b.value(0));
            out.v = Some(v);
            out.set = Some(c);
            out.b_fn = Some(b);
            Ok(out)
        }
        &ScenarioKind::OutwardWalk { n, p_out } => {
            check_size(n, 2)?;
            if !(p_out > 0.5 && p_out < 1.0) {
                return Err(invalid("p_out must lie in (1/2, 1)"));
            }
            let k = walk(n, 1.0 - p_out, true)?;
            let v = fn_on(&k, |x| x as f64);
            let m = aux_from(&k, 0)?;
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k.clone()), m);
            out.v = Some(v);
            out.set = Some(StateSet::new(k.space().clone(), vec![0])?);
            Ok(out)
        }
        ScenarioKind::AbsorbingPair => {
            let k = Kernel::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]])?;
            let m = Measure::new(k.space().clone(), vec![0.5, 0.5])?;
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k.clone()), m.clone());
            out.measures.insert("half".into(), m);
            out.measures.insert("dirac0".into(), Measure::dirac(k.space(), 0));
            Ok(out)
        }
        &ScenarioKind::TwoState { p, q } => {
            check_prob("p", p)?;
            check_prob("q", q)?;
            let k = Kernel::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]])?;
            let m = Measure::uniform(k.space());
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k.clone()), m);
            out.measures.insert("invariant".into(), Measure::new(k.space().clone(), vec![q / (p + q), p / (p + q)])?);
            Ok(out)
        }
        &ScenarioKind::OuGrid { n, dt, theta, sigma, l } => {
            check_size(n, 3)?;
            if !(dt > 0.0 && theta > 0.0 && theta * dt < 1.0 && sigma > 0.0 && l > 0.0) {
                return Err(invalid("need dt, theta, sigma, l > 0 and theta dt < 1"));
            }
            let (k, xs) = ou_kernel(n, dt, theta, sigma, l)?;
            let v = fn_on(&k, |i| xs[i] * xs[i]);
            let gamma = ((1.0 - theta * dt).powi(2) + 0.05).min(0.99);
            let pv = k.apply(&v)?;
            let c = (0..n).map(|x| pv.value(x) - gamma * v.value(x)).fold(0.0, f64::max);
            let r = 2.0 * c / (1.0 - gamma) + 1.0;
            let z0 = harnack::default_z0(&v);
            let rho = fn_on(&k, |i| 0.4 + 0.2 * i as f64 / (n - 1) as f64);
            let m = k.row_measure(z0);
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k.clone()), m);
            for (key, val) in [("gamma", gamma), ("c", c), ("r", r), ("z0", z0 as f64), ("p", 2.0), ("l", 1.0), ("eta", 0.0)] {
                out.constants.insert(key.into(), val);
            }
            out.set = Some(StateSet::sublevel(&v, r));
            out.v = Some(v);
            out.rho = Some(rho);
            Ok(out)
        }
        &ScenarioKind::BlockChain { k: blocks, block_size } => {
            if blocks == 0 || block_size == 0 {
                return Err(invalid("need at least one block of positive size"));
            }
            let n = blocks * block_size;
            let mut rows = vec![vec![0.0; n]; n];
            for (x, row) in rows.iter_mut().enumerate() {
                let b0 = (x / block_size) * block_size;
                row[b0..b0 + block_size].iter_mut().for_each(|w| *w = 1.0 / block_size as f64);
            }
            let k = Kernel::from_rows(&rows)?;
            let m = Measure::new(k.space().clone(), vec![1.0; n])?;
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k), m);
            out.constants.insert("phi_c".into(), 1.0 / block_size as f64);
            out.constants.insert("delta".into(), 0.0);
            Ok(out)
        }
        ScenarioKind::Lazy { base, rho } => {
            let inner = generate(&Scenario { kind: (**base).clone(), seed: s.seed })?;
            let Semigroup::Discrete(k) = &inner.chain else {
                return Err(invalid("lazy needs a discrete base scenario"));
            };
            if !(0.0..=1.0).contains(rho) {
                return Err(invalid("rho must lie in [0,1]"));
            }
            let rf = StateFn::constant(k.space(), *rho);
            let lazy = harnack::perturb_with(k, &rf, None)?;
            let mut out = inner.clone();
            out.scenario = s.clone();
            out.chain = Semigroup::Discrete(lazy);
            out.rho = Some(rf);
            Ok(out)
        }
        &ScenarioKind::CtmcSymmetric { n, rate } => {
            check_size(n, 2)?;
            if !(rate > 0.0) {
                return Err(invalid("rate must be positive"));
            }
            let mut q = vec![vec![0.0; n]; n];
            for x in 0..n - 1 {
                q[x][x + 1] = rate;
                q[x + 1][x] = rate;
            }
            for (x, row) in q.iter_mut().enumerate() {
                row[x] = -row.iter().sum::<f64>();
            }
            let g = Generator::from_rows(&q)?;
            let m = Measure::uniform(g.space());
            Ok(Bundle::new(s.clone(), Semigroup::Continuous(g), m))
        }
        &ScenarioKind::Renewal { n, q } => {
            check_size(n, 2)?;
            check_prob("q", q)?;
            let mut rows = vec![vec![0.0; n]; n];
            for (x, row) in rows.iter_mut().enumerate() {
                row[0] += q;
                row[(x + 1).min(n - 1)] += 1.0 - q;
            }
            let k = Kernel::from_rows(&rows)?;
            let v = fn_on(&k, |x| x as f64);
            let gamma = 1.0 - q;
            let pv = k.apply(&v)?;
            let b = (0..n).map(|x| pv.value(x) - gamma * v.value(x)).fold(0.0, f64::max);
            let r = 2.0 * b / (1.0 - gamma) + 0.5;
            let m = aux_from(&k, 0)?;
            let mut out = Bundle::new(s.clone(), Semigroup::Discrete(k.clone()), m);
            for (key, val) in [("gamma", gamma), ("b", b), ("r", r)] {
                out.constants.insert(key.into(), val);
            }
            out.set = Some(StateSet::sublevel(&v, r));
            out.v = Some(v);
            Ok(out)
        }
        &ScenarioKind::Random { n, density } => {
            let k = random_kernel(n, density, &mut rng)?;
            let m = Measure::uniform(k.space());
            Ok(Bundle::new(s.clone(), Semigroup::Discrete(k), m))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::check_generalized_drift;

    fn gen(kind: ScenarioKind) -> Bundle {
        generate(&Scenario::new(kind)).unwrap()
    }

    #[test]
    fn fixed_examples() {
        let b = gen(ScenarioKind::TwoState { p: 0.1, q: 0.2 });
        assert_eq!(b.kernel().matrix().to_rows(), vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let b = gen(ScenarioKind::AbsorbingPair);
        assert_eq!(b.kernel().matrix().to_rows(), vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(b.measures["dirac0"].weights(), &[1.0, 0.0]);
        assert_eq!(b.measures["half"].weights(), &[0.5, 0.5]);
        assert!(generate(&Scenario::new(ScenarioKind::TwoState { p: 0.0, q: 0.2 })).is_err());
    }

    #[test]
    fn birth_death_drift_companion() {
        let b = gen(ScenarioKind::BirthDeath { n: 100, p_down: 0.7, reflect: true });
        let k = b.kernel();
        assert!(k.is_markovian());
        let v = b.v.as_ref().unwrap();
        assert!((v.value(10) - 10.0 / 0.4).abs() < 1e-12);
        let c = check_generalized_drift(&k, v, b.b_fn.as_ref().unwrap(), b.set.as_ref().unwrap()).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(generate(&Scenario::new(ScenarioKind::BirthDeath { n: 10, p_down: 1.0, reflect: true })).is_err());
    }

    #[test]
    fn ou_grid_rows() {
        let b = gen(ScenarioKind::OuGrid { n: 41, dt: 0.5, theta: 1.0, sigma: 1.0, l: 4.0 });
        let k = b.kernel();
        assert!(k.is_markovian());
        assert!(k.matrix().as_slice().iter().all(|&w| w > 0.0));
        assert_eq!(b.constant("z0"), Some(20.0));
        assert!((b.constant("gamma").unwrap() - 0.3).abs() < 1e-12);
        // symmetric grid gives a symmetric kernel under x -> -x
        assert!((k.get(3, 10) - k.get(37, 30)).abs() < 1e-14);
    }

    #[test]
    fn seeded_determinism() {
        let s = Scenario::new(ScenarioKind::Random { n: 12, density: 0.4 }).with_seed(7);
        let a = generate(&s).unwrap().kernel();
        let b = generate(&s).unwrap().kernel();
        assert_eq!(a.matrix(), b.matrix());
        let c = generate(&s.clone().with_seed(8)).unwrap().kernel();
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::new(ScenarioKind::Lazy { base: Box::new(ScenarioKind::TwoState { p: 0.5, q: 0.5 }), rho: 0.5 }).with_seed(3);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"id\":\"lazy\""));
        let back: Scenario = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let ou: Scenario = serde_json::from_str(r#"{"id":"ou_grid"}"#).unwrap();
        assert_eq!(ou.kind, ScenarioKind::OuGrid { n: 41, dt: 0.5, theta: 1.0, sigma: 1.0, l: 4.0 });
        let lazy = generate(&s).unwrap().kernel();
        assert_eq!(lazy.matrix().to_rows(), vec![vec![0.75, 0.25], vec![0.25, 0.75]]);
    }

    #[test]
    fn blocks_and_ctmc() {
        let b = gen(ScenarioKind::BlockChain { k: 3, block_size: 2 });
        assert_eq!(crate::solver::decompose(&b.kernel()).unwrap().len(), 3);
        let c = gen(ScenarioKind::CtmcSymmetric { n: 4, rate: 1.0 });
        assert!(!c.chain.is_discrete());
    }
}
