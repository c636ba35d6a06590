use crate::error::{Error, Result};
use crate::kernel::{Measure, StateSet};
use crate::semigroup::{self, Semigroup};
use crate::solver;

use super::almost::{check_almost_invariant, AlmostInvarianceParams};
use super::index::STEPS_PER_UNIT;
use super::{Certificate, ConditionId, Witness};

const MARGIN: f64 = 1e-9;

/// `limsup_t (1/t) int_0^t nu(P_s 1_K) ds > 1/2`.
///
/// On a finite space the Cesaro averages converge, so the limsup is the
/// Cesaro limit `(nu Pi)(K)`; the grid values are reported alongside. When it
/// holds, `mu = (nu Pi) 1_K` and `m = mu alpha R_alpha` (alpha = 1; `mu R` in
/// discrete time) satisfy `m(P_1 1_A) <= m(A) + 1/2`, i.e. almost invariance
/// with `c = 1` and `delta = 1/(2 m(E))`, which is attached.
pub fn check_lasota_szarek_half(s: &Semigroup, nu: &Measure, k: &StateSet, t_grid: &[f64]) -> Result<Certificate> {
    s.space().ensure_same(nu.space(), "check_lasota_szarek_half")?;
    s.space().ensure_same(k.space(), "check_lasota_szarek_half")?;
    if !nu.is_probability(1e-9) {
        return Err(Error::NotProbability(nu.mass()));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParam("time grid must be nonempty and positive".into()));
    }
    let occ = |row: &[f64]| k.members().iter().map(|&a| row[a]).sum::<f64>();
    let grid_vals: Vec<f64> = match s {
        Semigroup::Discrete(p) => {
            let tmax = t_grid.iter().copied().fold(0.0, f64::max).ceil() as usize;
            let rows = super::index::cesaro_rows(p, nu.weights(), 1, tmax)?;
            t_grid
                .iter()
                .map(|&t| {
                    let n = (t.round() as usize).clamp(1, tmax);
                    occ(&rows[n - 1].1)
                })
                .collect()
        }
        Semigroup::Continuous(g) => {
            let mut ts = t_grid.to_vec();
            ts.sort_by(f64::total_cmp);
            semigroup::cesaro_orbit_grid(g, nu.weights(), &ts, STEPS_PER_UNIT)?.iter().map(|(_, r)| occ(r)).collect()
        }
    };
    let skel = s.skeleton();
    let limit = solver::decompose(&skel)?.limit_of(nu.weights());
    let lim_k = occ(&limit);
    let mut cert = Certificate::new(ConditionId::LasotaSzarekHalf);
    cert.set("limsup", lim_k);
    cert.set("grid_sup", grid_vals.iter().copied().fold(0.0, f64::max));
    let tail = &grid_vals[grid_vals.len() / 2..];
    cert.set("grid_tail_sup", tail.iter().copied().fold(0.0, f64::max));
    cert.note("limsup evaluated as the Cesaro limit of the occupation of K");
    if lim_k <= 0.5 + MARGIN {
        cert.fail(Witness::detail("asymptotic occupation of K does not exceed 1/2").with_value(lim_k));
        return Ok(cert);
    }
    cert.hold();
    // conclusion: almost invariance of m = mu alpha R_alpha
    let mut mu = vec![0.0; limit.len()];
    for &a in k.members() {
        mu[a] = limit[a];
    }
    let mu = Measure::new(s.space().clone(), mu)?;
    let (m, step) = match s {
        Semigroup::Discrete(p) => (semigroup::discrete_resolvent(p)?.push(&mu)?, p.clone()),
        Semigroup::Continuous(_) => (s.resolvent(1.0)?.scaled.push(&mu)?, s.transition_at(1.0)?),
    };
    let delta = 1.0 / (2.0 * m.mass());
    cert.set("conclusion_delta", delta);
    cert.set("conclusion_c", 1.0);
    cert.set("mE", m.mass());
    cert.attach(check_almost_invariant(&step, &m, &AlmostInvarianceParams::linear(1.0, delta).with_horizon(64))?);
    Ok(cert)
}
