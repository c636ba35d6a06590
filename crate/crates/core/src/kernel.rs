//! State spaces, measures, functions and Markov kernels on finite state spaces.
//!
//! A [`Kernel`] is a nonnegative square matrix `P(x, a)` over a labelled
//! [`StateSpace`]. Functions act on the right (`Pf(x) = sum_a P(x,a) f(a)`),
//! measures on the left (`(mP)(a) = sum_x m(x) P(x,a)`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Tolerance on row sums when a kernel is constructed.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Ordered list of distinct state labels.
#[derive(Clone)]
pub struct StateSpace {
    labels: Arc<Vec<String>>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidSpace("a state space needs at least one state".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(StateSpace { labels: Arc::new(labels) })
    }

    /// Space with labels `s0, s1, ...`.
    pub fn indexed(n: usize) -> Self {
        assert!(n >= 1, "state space must be nonempty");
        StateSpace { labels: Arc::new((0..n).map(|i| format!("s{i}")).collect()) }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    /// Resolves a label, falling back to a numeric index.
    pub fn resolve(&self, key: &str) -> Result<usize> {
        self.index_of(key).or_else(|e| match key.parse::<usize>() {
            Ok(i) if i < self.size() => Ok(i),
            _ => Err(e),
        })
    }

    pub(crate) fn ensure_same(&self, other: &StateSpace, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!(
                "{what}: {} states vs {} states",
                self.size(),
                other.size()
            )))
        }
    }
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.size() <= 8 {
            f.debug_list().entries(self.labels.iter()).finish()
        } else {
            write!(f, "StateSpace({} states)", self.size())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Rows sum to one.
    Markovian,
    /// Rows sum to at most one.
    SubMarkovian,
    /// Nonnegative entries, no row-sum constraint (adjoints, raw resolvents).
    Positive,
}

/// What to do with rows whose sums miss the target by more than [`ROW_SUM_TOL`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowSumPolicy {
    #[default]
    Reject,
    Renormalize,
}

/// Nonnegative kernel on a finite state space.
#[derive(Clone, Debug)]
pub struct Kernel {
    space: StateSpace,
    matrix: Matrix,
    kind: KernelKind,
}

impl Kernel {
    pub fn new(space: StateSpace, mut matrix: Matrix, kind: KernelKind, policy: RowSumPolicy) -> Result<Self> {
        let n = space.size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidKernel {
                row: 0,
                reason: format!("expected {n}x{n} matrix, found {}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        for x in 0..n {
            let row = matrix.row_mut(x);
            if let Some(a) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidKernel {
                    row: x,
                    reason: format!("entry {a} is {} (must be finite and nonnegative)", row[a]),
                });
            }
            let sum: f64 = row.iter().sum();
            let bad = match kind {
                KernelKind::Markovian => (sum - 1.0).abs() > ROW_SUM_TOL,
                KernelKind::SubMarkovian => sum > 1.0 + ROW_SUM_TOL,
                KernelKind::Positive => false,
            };
            if bad {
                match policy {
                    RowSumPolicy::Reject => {
                        return Err(Error::InvalidKernel {
                            row: x,
                            reason: format!("row sum {sum} violates {kind:?} constraint"),
                        })
                    }
                    RowSumPolicy::Renormalize => {
                        if sum <= 0.0 {
                            return Err(Error::InvalidKernel {
                                row: x,
                                reason: "cannot renormalize a zero row".into(),
                            });
                        }
                        row.iter_mut().for_each(|v| *v /= sum);
                    }
                }
            }
        }
        Ok(Kernel { space, matrix, kind })
    }

    /// Markovian kernel on an indexed space, rejecting bad row sums.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Kernel::new(StateSpace::indexed(m.nrows().max(1)), m, KernelKind::Markovian, RowSumPolicy::Reject)
    }

    pub fn sub_markovian_from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Kernel::new(StateSpace::indexed(m.nrows().max(1)), m, KernelKind::SubMarkovian, RowSumPolicy::Reject)
    }

    /// Wraps a matrix produced by exact kernel algebra; skips validation.
    pub(crate) fn from_parts(space: StateSpace, matrix: Matrix, kind: KernelKind) -> Self {
        debug_assert_eq!(matrix.nrows(), space.size());
        Kernel { space, matrix, kind }
    }

    pub fn identity(space: &StateSpace) -> Self {
        Kernel::from_parts(space.clone(), Matrix::identity(space.size()), KernelKind::Markovian)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.matrix.row(x)
    }

    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.matrix.get(x, a)
    }

    pub fn is_markovian(&self) -> bool {
        self.kind == KernelKind::Markovian
    }

    /// Row `x` as a measure.
    pub fn row_measure(&self, x: usize) -> Measure {
        Measure::from_parts(self.space.clone(), self.row(x).to_vec())
    }

    /// `(Pf)(x) = sum_a P(x,a) f(a)`, with the convention `0 * inf = 0`.
    pub fn apply(&self, f: &StateFn) -> Result<StateFn> {
        self.space.ensure_same(f.space(), "apply")?;
        let values: Vec<f64> = (0..self.size())
            .map(|x| {
                self.row(x)
                    .iter()
                    .zip(f.values())
                    .filter(|(p, _)| **p != 0.0)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect();
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NaN("apply"));
        }
        Ok(StateFn { space: self.space.clone(), values, extended: f.extended })
    }

    /// `(mP)(a) = sum_x m(x) P(x,a)`.
    pub fn push(&self, m: &Measure) -> Result<Measure> {
        self.space.ensure_same(m.space(), "push")?;
        Ok(Measure::from_parts(self.space.clone(), self.matrix.vecmat(m.weights())))
    }

    pub(crate) fn push_vec(&self, w: &[f64]) -> Vec<f64> {
        self.matrix.vecmat(w)
    }

    /// `P^n` by exponentiation by squaring.
    pub fn power(&self, n: u64) -> Kernel {
        Kernel::from_parts(self.space.clone(), matrix::matrix_power(&self.matrix, n), self.kind)
    }

    /// Cesaro mean `S_n = (1/n) sum_{k<n} P^k`.
    pub fn cesaro(&self, n: u64) -> Result<Kernel> {
        if n == 0 {
            return Err(Error::InvalidParam("cesaro horizon must be >= 1".into()));
        }
        let (sum, _) = matrix::power_and_partial_sum(&self.matrix, n);
        Ok(Kernel::from_parts(self.space.clone(), sum.scale(1.0 / n as f64), self.kind))
    }

    /// Convex combination `w * self + (1 - w) * other`, row by row.
    pub fn mix_rows(&self, other: &Kernel, weight: &[f64]) -> Result<Kernel> {
        self.space.ensure_same(other.space(), "mix_rows")?;
        let n = self.size();
        let mut m = Matrix::zeros(n, n);
        for x in 0..n {
            let w = weight[x];
            for a in 0..n {
                m.set(x, a, w * self.get(x, a) + (1.0 - w) * other.get(x, a));
            }
        }
        let kind = match (self.kind, other.kind) {
            (KernelKind::Markovian, KernelKind::Markovian) => KernelKind::Markovian,
            (KernelKind::Positive, _) | (_, KernelKind::Positive) => KernelKind::Positive,
            _ => KernelKind::SubMarkovian,
        };
        Ok(Kernel::from_parts(self.space.clone(), m, kind))
    }

    /// First atom where `m P` charges a state that `m` does not.
    pub fn support_leak(&self, m: &Measure) -> Result<Option<usize>> {
        let pushed = self.push(m)?;
        Ok((0..self.size()).find(|&a| m.weight(a) == 0.0 && pushed.weight(a) > 0.0))
    }

    /// Adjoint with respect to `m`: `P*(a,x) = m(x) P(x,a) / m(a)` on `supp(m)`,
    /// zero rows off the support.
    ///
    /// Fails when `m P` charges an `m`-null atom, since the duality
    /// `m(f P*g) = m(g Pf)` cannot hold then.
    pub fn adjoint(&self, m: &Measure) -> Result<Kernel> {
        if let Some(atom) = self.support_leak(m)? {
            return Err(Error::SupportViolated { atom, label: self.space.label(atom).to_string() });
        }
        self.adjoint_on_support(m)
    }

    /// Adjoint of the compression of `P` to `supp(m)`; mass leaving the
    /// support is dropped instead of rejected.
    pub fn adjoint_on_support(&self, m: &Measure) -> Result<Kernel> {
        self.space.ensure_same(m.space(), "adjoint")?;
        let n = self.size();
        let w = m.weights();
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            if w[a] == 0.0 {
                continue;
            }
            for x in 0..n {
                if w[x] > 0.0 {
                    out.set(a, x, w[x] * self.get(x, a) / w[a]);
                }
            }
        }
        Ok(Kernel::from_parts(self.space.clone(), out, KernelKind::Positive))
    }
}

/// Nonnegative finite measure on a state space.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    space: StateSpace,
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(space: StateSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.size() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} weights, found {}",
                space.size(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(format!("weight {i} is {}", weights[i])));
        }
        Ok(Measure { space, weights })
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Measure::new(StateSpace::indexed(weights.len().max(1)), weights)
    }

    /// Clamps round-off negatives; callers guarantee nonnegativity up to rounding.
    pub(crate) fn from_parts(space: StateSpace, mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        Measure { space, weights }
    }

    pub fn dirac(space: &StateSpace, i: usize) -> Self {
        let mut w = vec![0.0; space.size()];
        w[i] = 1.0;
        Measure { space: space.clone(), weights: w }
    }

    pub fn uniform(space: &StateSpace) -> Self {
        let n = space.size();
        Measure { space: space.clone(), weights: vec![1.0 / n as f64; n] }
    }

    pub fn zero(space: &StateSpace) -> Self {
        Measure { space: space.clone(), weights: vec![0.0; space.size()] }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn has_full_support(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Measure> {
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::InvalidMeasure("cannot normalize the zero measure".into()));
        }
        Ok(self.scaled(1.0 / mass))
    }

    pub fn scaled(&self, s: f64) -> Measure {
        Measure::from_parts(self.space.clone(), self.weights.iter().map(|w| w * s).collect())
    }

    /// `m(A)`
    pub fn of_set(&self, set: &StateSet) -> f64 {
        set.members().iter().map(|&i| self.weights[i]).sum()
    }

    /// `m(f)`, with `0 * inf = 0`.
    pub fn integrate(&self, f: &StateFn) -> f64 {
        self.weights
            .iter()
            .zip(f.values())
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn restrict(&self, set: &StateSet) -> Measure {
        let mut w = vec![0.0; self.weights.len()];
        for &i in set.members() {
            w[i] = self.weights[i];
        }
        Measure { space: self.space.clone(), weights: w }
    }

    pub fn l1_distance(&self, other: &Measure) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Total variation distance `sup_A |m(A) - n(A)| = ||m - n||_1 / 2`.
    pub fn tv_distance(&self, other: &Measure) -> f64 {
        0.5 * self.l1_distance(other)
    }

    /// Pointwise density `rho * m`.
    pub fn with_density(&self, rho: &StateFn) -> Measure {
        Measure::from_parts(
            self.space.clone(),
            self.weights.iter().zip(rho.values()).map(|(w, r)| if *w == 0.0 { 0.0 } else { w * r }).collect(),
        )
    }
}

/// Real-valued function on a state space; `+inf` allowed only when extended.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFn {
    space: StateSpace,
    values: Vec<f64>,
    extended: bool,
}

impl StateFn {
    pub fn new(space: StateSpace, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&space, &values)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidStateFn(format!("value {i} is {} (finite required)", values[i])));
        }
        Ok(StateFn { space, values, extended: false })
    }

    /// Lyapunov-style function that may take the value `+inf`.
    pub fn extended(space: StateSpace, values: Vec<f64>) -> Result<Self> {
        Self::check_len(&space, &values)?;
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidStateFn(format!("value {i} is {}", values[i])));
        }
        Ok(StateFn { space, values, extended: true })
    }

    fn check_len(space: &StateSpace, values: &[f64]) -> Result<()> {
        if values.len() != space.size() {
            return Err(Error::InvalidStateFn(format!(
                "expected {} values, found {}",
                space.size(),
                values.len()
            )));
        }
        Ok(())
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        StateFn::new(StateSpace::indexed(values.len().max(1)), values)
    }

    pub(crate) fn from_parts(space: StateSpace, values: Vec<f64>) -> Self {
        let extended = values.iter().any(|v| v.is_infinite());
        StateFn { space, values, extended }
    }

    pub fn constant(space: &StateSpace, c: f64) -> Self {
        StateFn { space: space.clone(), values: vec![c; space.size()], extended: c.is_infinite() }
    }

    pub fn indicator(set: &StateSet) -> Self {
        let mut v = vec![0.0; set.space().size()];
        for &i in set.members() {
            v[i] = 1.0;
        }
        StateFn { space: set.space().clone(), values: v, extended: false }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    /// Membership in `B_1^+`: `0 <= f <= 1`.
    pub fn is_unit_bounded(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StateFn {
        StateFn::from_parts(self.space.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Subset of a state space, stored as sorted distinct indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    space: StateSpace,
    members: Vec<usize>,
}

impl StateSet {
    pub fn new(space: StateSpace, mut members: Vec<usize>) -> Result<Self> {
        if let Some(&i) = members.iter().find(|&&i| i >= space.size()) {
            return Err(Error::InvalidParam(format!("set member {i} outside the state space")));
        }
        members.sort_unstable();
        members.dedup();
        Ok(StateSet { space, members })
    }

    pub fn from_labels<S: AsRef<str>>(space: &StateSpace, labels: &[S]) -> Result<Self> {
        let members = labels.iter().map(|l| space.resolve(l.as_ref())).collect::<Result<Vec<_>>>()?;
        StateSet::new(space.clone(), members)
    }

    pub fn all(space: &StateSpace) -> Self {
        StateSet { space: space.clone(), members: (0..space.size()).collect() }
    }

    pub fn empty(space: &StateSpace) -> Self {
        StateSet { space: space.clone(), members: Vec::new() }
    }

    /// Sub-level set `[V <= r]`.
    pub fn sublevel(v: &StateFn, r: f64) -> Self {
        let members = (0..v.values().len()).filter(|&i| v.value(i) <= r).collect();
        StateSet { space: v.space().clone(), members }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn complement(&self) -> StateSet {
        let members = (0..self.space.size()).filter(|i| !self.contains(*i)).collect();
        StateSet { space: self.space.clone(), members }
    }

    pub fn is_subset_of(&self, other: &StateSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|&i| self.space.label(i).to_string()).collect()
    }
}
