//! JSON file formats for kernels, generators, measures, state functions and sets.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelKind, Measure, RowSumPolicy, StateFn, StateSet, StateSpace};
use crate::matrix::Matrix;
use crate::semigroup::{Generator, Semigroup};

fn markovian() -> KernelKind {
    KernelKind::Markovian
}

/// `{"states": [...], "kind": "markovian" | "sub-markovian", "rows": [[...]]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub states: Vec<String>,
    #[serde(default = "markovian")]
    pub kind: KernelKind,
    pub rows: Vec<Vec<f64>>,
}

/// `{"states": [...], "rates": [[...]]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub states: Vec<String>,
    pub rates: Vec<Vec<f64>>,
}

/// Either chain format, told apart by the `rates`/`rows` key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainFile {
    Generator(GeneratorFile),
    Kernel(KernelFile),
}

/// `{"states": [...], "values": [...]}`; `null` stands for `+inf` in state functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuesFile {
    pub states: Vec<String>,
    pub values: Vec<Option<f64>>,
}

/// `{"states": [...], "members": [labels]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetFile {
    pub states: Vec<String>,
    pub members: Vec<String>,
}

impl KernelFile {
    pub fn from_kernel(k: &Kernel) -> Self {
        KernelFile { states: k.space().labels().to_vec(), kind: k.kind(), rows: k.matrix().to_rows() }
    }

    pub fn to_kernel(&self) -> Result<Kernel> {
        let space = StateSpace::new(self.states.clone())?;
        let m = Matrix::from_rows(&self.rows)?;
        Kernel::new(space, m, self.kind, RowSumPolicy::Reject)
    }
}

impl GeneratorFile {
    pub fn from_generator(g: &Generator) -> Self {
        GeneratorFile { states: g.space().labels().to_vec(), rates: g.rates().to_rows() }
    }

    pub fn to_generator(&self) -> Result<Generator> {
        let space = StateSpace::new(self.states.clone())?;
        Generator::new(space, Matrix::from_rows(&self.rates)?, None)
    }
}

impl ChainFile {
    pub fn from_semigroup(s: &Semigroup) -> Self {
        match s {
            Semigroup::Discrete(k) => ChainFile::Kernel(KernelFile::from_kernel(k)),
            Semigroup::Continuous(g) => ChainFile::Generator(GeneratorFile::from_generator(g)),
        }
    }

    pub fn to_semigroup(&self) -> Result<Semigroup> {
        Ok(match self {
            ChainFile::Kernel(k) => Semigroup::Discrete(k.to_kernel()?),
            ChainFile::Generator(g) => Semigroup::Continuous(g.to_generator()?),
        })
    }
}

/// Reorders labelled values into the order of `space`.
fn align(space: &StateSpace, states: &[String], len: usize, what: &str) -> Result<Vec<usize>> {
    if states.len() != len {
        return Err(Error::InvalidParam(format!("{what}: {} states but {len} values", states.len())));
    }
    if states.len() != space.size() {
        return Err(Error::SpaceMismatch(format!("{what} has {} states, chain has {}", states.len(), space.size())));
    }
    states.iter().map(|s| space.index_of(s)).collect()
}

impl ValuesFile {
    pub fn from_measure(m: &Measure) -> Self {
        ValuesFile { states: m.space().labels().to_vec(), values: m.weights().iter().map(|&w| Some(w)).collect() }
    }

    pub fn from_statefn(f: &StateFn) -> Self {
        let values = f.values().iter().map(|&v| if v.is_finite() { Some(v) } else { None }).collect();
        ValuesFile { states: f.space().labels().to_vec(), values }
    }

    fn ordered(&self, space: &StateSpace, what: &str) -> Result<Vec<Option<f64>>> {
        let idx = align(space, &self.states, self.values.len(), what)?;
        let mut out = vec![None; space.size()];
        for (i, v) in idx.into_iter().zip(&self.values) {
            out[i] = *v;
        }
        Ok(out)
    }

    pub fn to_measure(&self, space: &StateSpace) -> Result<Measure> {
        let w = self
            .ordered(space, "measure")?
            .into_iter()
            .map(|v| v.ok_or_else(|| Error::InvalidMeasure("null weight".into())))
            .collect::<Result<Vec<_>>>()?;
        Measure::new(space.clone(), w)
    }

    pub fn to_statefn(&self, space: &StateSpace) -> Result<StateFn> {
        let v = self.ordered(space, "state function")?.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        StateFn::extended(space.clone(), v)
    }
}

impl SetFile {
    pub fn from_set(s: &StateSet) -> Self {
        SetFile { states: s.space().labels().to_vec(), members: s.labels() }
    }

    pub fn to_set(&self, space: &StateSpace) -> Result<StateSet> {
        StateSet::from_labels(space, &self.members)
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<Semigroup> {
    read_json::<ChainFile>(path)?.to_semigroup()
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    match load_chain(path)? {
        Semigroup::Discrete(k) => Ok(k),
        Semigroup::Continuous(_) => Err(Error::Unsupported("expected a kernel file, found a generator".into())),
    }
}

pub fn load_measure(path: impl AsRef<Path>, space: &StateSpace) -> Result<Measure> {
    read_json::<ValuesFile>(path)?.to_measure(space)
}

pub fn load_statefn(path: impl AsRef<Path>, space: &StateSpace) -> Result<StateFn> {
    read_json::<ValuesFile>(path)?.to_statefn(space)
}

pub fn load_set(path: impl AsRef<Path>, space: &StateSpace) -> Result<StateSet> {
    read_json::<SetFile>(path)?.to_set(space)
}
