//! Continuous-time chains through generators, resolvents, auxiliary measures
//! and occupation densities.

use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelKind, Measure, StateFn, StateSpace};
use crate::matrix::Matrix;

/// Poisson tail mass below which the uniformization series is cut.
pub const POISSON_TAIL: f64 = 1e-14;
const ROW_SUM_TOL: f64 = 1e-12;

/// Generator `Q` of a continuous-time chain together with its uniformization rate.
#[derive(Clone, Debug)]
pub struct Generator {
    space: StateSpace,
    rates: Matrix,
    lambda: f64,
}

impl Generator {
    /// Validates `Q`; `lambda` defaults to `1.05 * max |Q(x,x)|` (or 1 when `Q = 0`).
    pub fn new(space: StateSpace, rates: Matrix, lambda: Option<f64>) -> Result<Self> {
        let n = space.size();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::InvalidGenerator {
                row: 0,
                reason: format!("expected {n}x{n} rates, found {}x{}", rates.nrows(), rates.ncols()),
            });
        }
        let mut max_diag: f64 = 0.0;
        for x in 0..n {
            let row = rates.row(x);
            for (a, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    return Err(Error::InvalidGenerator { row: x, reason: format!("entry {a} is {q}") });
                }
                if a != x && q < 0.0 {
                    return Err(Error::InvalidGenerator { row: x, reason: format!("negative rate {q} to {a}") });
                }
            }
            let scale = row.iter().map(|q| q.abs()).fold(1.0, f64::max);
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidGenerator { row: x, reason: format!("row sum {sum} is not 0") });
            }
            max_diag = max_diag.max(-row[x]);
        }
        let lambda = match lambda {
            Some(l) if l.is_finite() && l >= max_diag && l > 0.0 => l,
            Some(l) => {
                return Err(Error::InvalidParam(format!(
                    "uniformization rate {l} must be positive and at least {max_diag}"
                )))
            }
            None if max_diag == 0.0 => 1.0,
            None => 1.05 * max_diag,
        };
        Ok(Generator { space, rates, lambda })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Generator::new(StateSpace::indexed(m.nrows().max(1)), m, None)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn rates(&self) -> &Matrix {
        &self.rates
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    /// `P_lambda = I + Q / lambda`.
    pub fn uniformized(&self) -> Kernel {
        let n = self.size();
        let mut m = self.rates.scale(1.0 / self.lambda);
        for x in 0..n {
            m.set(x, x, m.get(x, x) + 1.0);
            let row = m.row_mut(x);
            row.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Kernel::from_parts(self.space.clone(), m, KernelKind::Markovian)
    }

    /// `P_t` by uniformization, using squaring once `lambda * t > 1`.
    pub fn transition_at(&self, t: f64) -> Result<Kernel> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParam(format!("time must be finite and nonnegative, got {t}")));
        }
        let mut squarings = 0u32;
        let mut tau = t;
        while self.lambda * tau > 1.0 {
            tau /= 2.0;
            squarings += 1;
        }
        if self.rates.as_slice().iter().all(|&q| q == 0.0) {
            return Ok(Kernel::identity(&self.space));
        }
        let base = self.uniformized();
        let mut out = poisson_series(base.matrix(), self.lambda * tau);
        for _ in 0..squarings {
            out = out.matmul(&out);
        }
        if out.has_nan() {
            return Err(Error::NaN("transition_at"));
        }
        Ok(Kernel::from_parts(self.space.clone(), out, KernelKind::Markovian))
    }
}

/// `e^{-s} sum_k s^k/k! A^k`, cut when the remaining Poisson mass is below [`POISSON_TAIL`].
fn poisson_series(a: &Matrix, s: f64) -> Matrix {
    let n = a.nrows();
    let mut weight = (-s).exp();
    let mut cum = weight;
    let mut term = Matrix::identity(n);
    let mut out = term.scale(weight);
    let mut k = 0u32;
    while 1.0 - cum > POISSON_TAIL && k < 200 {
        k += 1;
        term = term.matmul(a);
        weight *= s / k as f64;
        cum += weight;
        out.add_assign_scaled(&term, weight);
    }
    out.scale(1.0 / cum)
}

/// Transition family: powers of a kernel or the exponential of a generator.
#[derive(Clone, Debug)]
pub enum Semigroup {
    Discrete(Kernel),
    Continuous(Generator),
}

/// Resolvent at rate `alpha`: the normalized kernel `alpha R_alpha` and the raw `R_alpha`.
#[derive(Clone, Debug)]
pub struct Resolvent {
    pub alpha: f64,
    pub scaled: Kernel,
    pub raw: Kernel,
}

impl Semigroup {
    pub fn space(&self) -> &StateSpace {
        match self {
            Semigroup::Discrete(k) => k.space(),
            Semigroup::Continuous(g) => g.space(),
        }
    }

    pub fn size(&self) -> usize {
        self.space().size()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Semigroup::Discrete(_))
    }

    /// Single kernel with the same closed classes and invariant laws:
    /// `P` itself, or the uniformized `I + Q/lambda`.
    pub fn skeleton(&self) -> Kernel {
        match self {
            Semigroup::Discrete(k) => k.clone(),
            Semigroup::Continuous(g) => g.uniformized(),
        }
    }

    pub fn transition_at(&self, t: f64) -> Result<Kernel> {
        match self {
            Semigroup::Discrete(k) => {
                if !(t >= 0.0) || t.fract() != 0.0 || !t.is_finite() {
                    return Err(Error::NonIntegerTime(t));
                }
                Ok(k.power(t as u64))
            }
            Semigroup::Continuous(g) => g.transition_at(t),
        }
    }

    /// Continuous: `R_alpha = (alpha I - Q)^{-1}`. Discrete: the geometric
    /// average `alpha R_alpha = (1 - e^{-alpha}) sum_n e^{-alpha n} P^n`, which is
    /// the discrete resolvent at `alpha = ln 2`.
    pub fn resolvent(&self, alpha: f64) -> Result<Resolvent> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be positive, got {alpha}")));
        }
        let space = self.space().clone();
        let n = space.size();
        let scaled = match self {
            Semigroup::Continuous(g) => {
                let a = Matrix::identity(n).scale(alpha).add_scaled(g.rates(), -1.0);
                a.inverse("resolvent")?.scale(alpha)
            }
            Semigroup::Discrete(k) => {
                let q = (-alpha).exp();
                let a = Matrix::identity(n).add_scaled(k.matrix(), -q);
                a.inverse("resolvent")?.scale(1.0 - q)
            }
        };
        let kind = match self {
            Semigroup::Discrete(k) if k.kind() != KernelKind::Markovian => KernelKind::SubMarkovian,
            _ => KernelKind::Markovian,
        };
        let scaled = clean_kernel(scaled, kind == KernelKind::Markovian);
        let raw = scaled.scale(1.0 / alpha);
        Ok(Resolvent {
            alpha,
            scaled: Kernel::from_parts(space.clone(), scaled, kind),
            raw: Kernel::from_parts(space, raw, KernelKind::Positive),
        })
    }
}

/// Clamps round-off negatives and, for stochastic targets, renormalizes rows.
fn clean_kernel(mut m: Matrix, stochastic: bool) -> Matrix {
    for x in 0..m.nrows() {
        let row = m.row_mut(x);
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        if stochastic {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    m
}

/// `R = sum_n 2^{-(n+1)} P^n = (1/2)(I - P/2)^{-1}`.
pub fn discrete_resolvent(p: &Kernel) -> Result<Kernel> {
    let n = p.size();
    let a = Matrix::identity(n).add_scaled(p.matrix(), -0.5);
    let r = a.inverse("discrete_resolvent")?.scale(0.5);
    let r = clean_kernel(r, p.is_markovian());
    let kind = if p.is_markovian() { KernelKind::Markovian } else { KernelKind::SubMarkovian };
    Ok(Kernel::from_parts(p.space().clone(), r, kind))
}

/// Auxiliary measure `mu R_alpha` (continuous, mass `1/alpha`) or `mu R`
/// (discrete, mass 1; `alpha` is ignored). With `normalize` the result is
/// rescaled to a probability.
pub fn auxiliary_measure(s: &Semigroup, mu: &Measure, alpha: f64, normalize: bool) -> Result<Measure> {
    s.space().ensure_same(mu.space(), "auxiliary_measure")?;
    if !mu.is_probability(1e-12) {
        return Err(Error::NotProbability(mu.mass()));
    }
    let (m, step) = match s {
        Semigroup::Discrete(p) => (discrete_resolvent(p)?.push(mu)?, p.clone()),
        Semigroup::Continuous(g) => (s.resolvent(alpha)?.raw.push(mu)?, g.uniformized()),
    };
    if let Some(atom) = step.support_leak(&m)? {
        return Err(Error::SupportViolated { atom, label: s.space().label(atom).to_string() });
    }
    if normalize {
        m.normalized()
    } else {
        Ok(m)
    }
}

/// Auxiliary measure for a single kernel: `m = mu R`.
pub fn auxiliary_measure_kernel(p: &Kernel, mu: &Measure) -> Result<Measure> {
    auxiliary_measure(&Semigroup::Discrete(p.clone()), mu, std::f64::consts::LN_2, false)
}

/// `int_0^t m P_s ds` by composite Simpson with `panels` double intervals.
pub fn integrated_orbit(g: &Generator, m: &Measure, t: f64, panels: usize) -> Result<Measure> {
    g.space().ensure_same(m.space(), "integrated_orbit")?;
    if !(t > 0.0 && t.is_finite()) || panels == 0 {
        return Err(Error::InvalidParam("integration needs t > 0 and at least one panel".into()));
    }
    let steps = 2 * panels;
    let h = t / steps as f64;
    let step = g.transition_at(h)?;
    let mut w = m.weights().to_vec();
    let mut acc: Vec<f64> = w.clone();
    for k in 1..=steps {
        w = step.push_vec(&w);
        let c = if k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc.iter_mut().zip(&w).for_each(|(a, v)| *a += c * v);
    }
    Ok(Measure::from_parts(m.space().clone(), acc.into_iter().map(|v| v * h / 3.0).collect()))
}

/// Cesaro occupation averages `(1/t) int_0^t m P_s ds` at every time of a
/// sorted grid, integrating once with `steps_per_unit` Simpson sub-steps per
/// unit time (grid times are rounded to the nearest even step).
pub fn cesaro_orbit_grid(g: &Generator, m: &[f64], times: &[f64], steps_per_unit: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] <= 0.0 {
        return Err(Error::InvalidParam("time grid must be positive and increasing".into()));
    }
    let h = 1.0 / steps_per_unit.max(1) as f64;
    let step = g.transition_at(h)?;
    let mut out = Vec::with_capacity(times.len());
    let mut w0 = m.to_vec();
    let mut integral = vec![0.0; m.len()];
    let mut k: usize = 0;
    for &t in times {
        let target = (((t / h) / 2.0).round() as usize).max(1) * 2;
        while k < target {
            let w1 = step.push_vec(&w0);
            let w2 = step.push_vec(&w1);
            for i in 0..integral.len() {
                integral[i] += h / 3.0 * (w0[i] + 4.0 * w1[i] + w2[i]);
            }
            w0 = w2;
            k += 2;
        }
        let tk = k as f64 * h;
        out.push((tk, integral.iter().map(|v| v / tk).collect()));
    }
    Ok(out)
}

/// Occupation density `phi_t = int_0^t P*_s 1 ds` with respect to a full-support `m`,
/// so that `m(int_0^t P_s f ds) = m(f phi_t)`.
pub fn occupation_density(s: &Semigroup, m: &Measure, t: f64, quad_steps: usize) -> Result<StateFn> {
    let g = match s {
        Semigroup::Continuous(g) => g,
        Semigroup::Discrete(_) => {
            return Err(Error::Unsupported(
                "occupation densities are defined for continuous time; use partial sums of the adjoint powers".into(),
            ))
        }
    };
    if !m.has_full_support() {
        return Err(Error::InvalidMeasure("occupation density needs a full-support measure".into()));
    }
    let occ = integrated_orbit(g, m, t, quad_steps)?;
    let values = occ.weights().iter().zip(m.weights()).map(|(o, w)| o / w).collect();
    StateFn::new(m.space().clone(), values)
}

/// Krylov-Bogoliubov average `(1/t) int_0^t mu P_s ds`; for a discrete
/// semigroup `t` must be a positive integer and the average is `mu S_t`.
pub fn kb_measure(s: &Semigroup, mu: &Measure, t: f64, quad_steps: usize) -> Result<Measure> {
    if !mu.is_probability(1e-12) {
        return Err(Error::NotProbability(mu.mass()));
    }
    match s {
        Semigroup::Discrete(p) => {
            if !(t >= 1.0) || t.fract() != 0.0 || !t.is_finite() {
                return Err(Error::NonIntegerTime(t));
            }
            let mut w = mu.weights().to_vec();
            let mut acc = vec![0.0; w.len()];
            for k in 0..t as u64 {
                if k > 0 {
                    w = p.push_vec(&w);
                }
                acc.iter_mut().zip(&w).for_each(|(a, v)| *a += v);
            }
            Ok(Measure::from_parts(mu.space().clone(), acc.into_iter().map(|v| v / t).collect()))
        }
        Semigroup::Continuous(g) => Ok(integrated_orbit(g, mu, t, quad_steps)?.scaled(1.0 / t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym() -> Semigroup {
        Semigroup::Continuous(Generator::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap())
    }

    #[test]
    fn transition_examples() {
        let s = sym();
        assert!(s.transition_at(0.0).unwrap().matrix().max_abs_diff(&Matrix::identity(2)) < 1e-15);
        for &t in &[0.3, 1.0, 5.0, 40.0] {
            let p = s.transition_at(t).unwrap();
            let e = (-2.0f64 * t).exp();
            assert!((p.get(0, 0) - 0.5 * (1.0 + e)).abs() < 1e-12, "t={t}");
            assert!((p.get(0, 1) - 0.5 * (1.0 - e)).abs() < 1e-12, "t={t}");
        }
        let zero = Semigroup::Continuous(Generator::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(zero.transition_at(7.5).unwrap().matrix(), &Matrix::identity(2));
        let d = Semigroup::Discrete(Kernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert!(matches!(d.transition_at(1.5), Err(Error::NonIntegerTime(_))));
    }

    #[test]
    fn generator_validation() {
        assert!(Generator::from_rows(&[vec![-1.0, 0.5], vec![1.0, -1.0]]).is_err());
        assert!(Generator::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]).is_err());
        let g = Generator::from_rows(&[vec![-2.0, 2.0], vec![1.0, -1.0]]).unwrap();
        assert!((g.lambda() - 2.1).abs() < 1e-15);
    }

    #[test]
    fn resolvent_examples() {
        let zero = Semigroup::Continuous(Generator::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap());
        assert!(zero.resolvent(0.7).unwrap().scaled.matrix().max_abs_diff(&Matrix::identity(2)) < 1e-15);
        let r = sym().resolvent(1.0).unwrap();
        let expect = Matrix::from_rows(&[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        assert!(r.scaled.matrix().max_abs_diff(&expect) < 1e-14);
        let (ra, rb) = (sym().resolvent(0.5).unwrap().raw, sym().resolvent(2.0).unwrap().raw);
        let lhs = ra.matrix().add_scaled(rb.matrix(), -1.0);
        let rhs = ra.matrix().matmul(rb.matrix()).scale(1.5);
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn discrete_resolvent_examples() {
        let id = Kernel::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(discrete_resolvent(&id).unwrap().matrix().max_abs_diff(&Matrix::identity(2)) < 1e-15);
        let swap = Kernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = discrete_resolvent(&swap).unwrap();
        let expect = Matrix::from_rows(&[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        assert!(r.matrix().max_abs_diff(&expect) < 1e-15);
        let jump = Kernel::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let r = discrete_resolvent(&jump).unwrap();
        // 1/2 from n = 0, the remaining 1/2 lands on the absorbing state
        let expect = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(r.matrix().max_abs_diff(&expect) < 1e-15);
        // discrete alpha-family at ln 2 is the same kernel
        let s = Semigroup::Discrete(jump);
        let ra = s.resolvent(std::f64::consts::LN_2).unwrap();
        assert!(ra.scaled.matrix().max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn auxiliary_measure_examples() {
        let swap = Kernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let d0 = Measure::dirac(swap.space(), 0);
        let m = auxiliary_measure_kernel(&swap, &d0).unwrap();
        assert!((m.weight(0) - 2.0 / 3.0).abs() < 1e-15 && (m.weight(1) - 1.0 / 3.0).abs() < 1e-15);

        let jump = Kernel::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let m = auxiliary_measure_kernel(&jump, &d0).unwrap();
        assert!((m.weight(0) - 0.5).abs() < 1e-15 && m.has_full_support());

        let u = Measure::uniform(sym().space());
        let m = auxiliary_measure(&sym(), &u, 2.0, false).unwrap();
        assert!((m.mass() - 0.5).abs() < 1e-14);
        assert!(m.l1_distance(&u.scaled(0.5)) < 1e-14);
        let half = Measure::new(u.space().clone(), vec![0.5, 0.6]).unwrap();
        assert!(matches!(auxiliary_measure(&sym(), &half, 1.0, false), Err(Error::NotProbability(_))));
    }

    #[test]
    fn occupation_density_examples() {
        let zero = Semigroup::Continuous(Generator::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let m = Measure::new(zero.space().clone(), vec![0.3, 0.9]).unwrap();
        let phi = occupation_density(&zero, &m, 2.5, 16).unwrap();
        assert!(phi.values().iter().all(|v| (v - 2.5).abs() < 1e-13));

        let u = Measure::uniform(sym().space());
        let phi = occupation_density(&sym(), &u, 1.0, 64).unwrap();
        assert!(phi.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let g = Generator::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
        let s = Semigroup::Continuous(g);
        let m = Measure::new(s.space().clone(), vec![0.2, 0.5]).unwrap();
        let phi = occupation_density(&s, &m, 3.0, 64).unwrap();
        assert!((m.integrate(&phi) - 3.0 * m.mass()).abs() < 1e-10);

        let d = Semigroup::Discrete(Kernel::from_rows(&[vec![1.0]]).unwrap());
        assert!(occupation_density(&d, &Measure::uniform(d.space()), 1.0, 4).is_err());
    }

    #[test]
    fn kb_measure_examples() {
        let swap = Semigroup::Discrete(Kernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let d0 = Measure::dirac(swap.space(), 0);
        assert_eq!(kb_measure(&swap, &d0, 2.0, 1).unwrap().weights(), &[0.5, 0.5]);
        let avg = kb_measure(&sym(), &d0, 200.0, 2000).unwrap();
        assert!((avg.weight(0) - 0.5).abs() < 2e-3);
        // closed form: (1/t) int_0^t (1 + e^{-2s})/2 ds
        let t = 2.0;
        let avg = kb_measure(&sym(), &d0, t, 64).unwrap();
        let exact = 0.5 + (1.0 - (-2.0 * t).exp()) / (4.0 * t);
        assert!((avg.weight(0) - exact).abs() < 1e-9);
    }
}
