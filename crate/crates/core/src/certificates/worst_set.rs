use crate::error::Result;
use crate::kernel::Measure;

use super::phi::Phi;

/// Largest support size for which the exhaustive subset search runs.
pub const DP_CUTOFF: usize = 22;

/// Maximizer of `row(A) - phi(m(A))` over subsets `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstSet {
    pub value: f64,
    pub set: Vec<usize>,
    /// Best value over ratio-ordered prefixes.
    pub prefix_value: f64,
    /// Exhaustive value over all subsets of `supp(row)`, when it ran.
    pub exhaustive_value: Option<f64>,
}

/// `sup_A [row(A) - phi(m(A))]` with the exhaustive cross-check up to [`DP_CUTOFF`] atoms.
pub fn worst_set_search(row: &Measure, m: &Measure, phi: &Phi) -> Result<WorstSet> {
    worst_set_with_cutoff(row, m, phi, DP_CUTOFF)
}

pub fn worst_set_with_cutoff(row: &Measure, m: &Measure, phi: &Phi, cutoff: usize) -> Result<WorstSet> {
    row.space().ensure_same(m.space(), "worst_set_search")?;
    phi.validate()?;
    Ok(worst_set_slices(row.weights(), m.weights(), phi, cutoff))
}

/// Slice version; `phi` must already be validated.
///
/// For concave `phi` some maximizer is a prefix of the atoms ordered by
/// `row(a)/m(a)` (zero-mass atoms first): an atom outside an optimal set
/// cannot beat the marginal slope of `phi` that every member exceeds, and
/// tied atoms can be swapped without loss.
pub(crate) fn worst_set_slices(row: &[f64], m: &[f64], phi: &Phi, cutoff: usize) -> WorstSet {
    if let Some(c) = phi.linear_coefficient() {
        let mut value = 0.0;
        let mut set = Vec::new();
        for (a, (&r, &w)) in row.iter().zip(m).enumerate() {
            let d = r - c * w;
            if d > 0.0 {
                value += d;
                set.push(a);
            }
        }
        return WorstSet { value, set: set.clone(), prefix_value: value, exhaustive_value: None };
    }

    let mut supp: Vec<usize> = (0..row.len()).filter(|&a| row[a] > 0.0).collect();
    supp.sort_by(|&a, &b| {
        let ra = if m[a] == 0.0 { f64::INFINITY } else { row[a] / m[a] };
        let rb = if m[b] == 0.0 { f64::INFINITY } else { row[b] / m[b] };
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let (mut acc_r, mut acc_m) = (0.0, 0.0);
    let (mut best, mut best_k) = (0.0, 0);
    for (k, &a) in supp.iter().enumerate() {
        acc_r += row[a];
        acc_m += m[a];
        let v = acc_r - phi.eval(acc_m);
        if v > best {
            best = v;
            best_k = k + 1;
        }
    }
    let mut set: Vec<usize> = supp[..best_k].to_vec();
    set.sort_unstable();
    let mut out = WorstSet { value: best, set, prefix_value: best, exhaustive_value: None };
    if supp.len() <= cutoff {
        let (v, s) = exhaustive(row, m, phi, &supp);
        out.exhaustive_value = Some(v);
        if v > out.value {
            out.value = v;
            out.set = s;
        }
    }
    out
}

/// All subsets of `atoms`, with subset sums assembled from two half tables.
fn exhaustive(row: &[f64], m: &[f64], phi: &Phi, atoms: &[usize]) -> (f64, Vec<usize>) {
    let k = atoms.len();
    let lo_n = k / 2;
    let (lo, hi) = atoms.split_at(lo_n);
    let table = |part: &[usize]| {
        let size = 1usize << part.len();
        let mut r = vec![0.0; size];
        let mut w = vec![0.0; size];
        for mask in 1..size {
            let bit = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            r[mask] = r[rest] + row[part[bit]];
            w[mask] = w[rest] + m[part[bit]];
        }
        (r, w)
    };
    let (lo_r, lo_w) = table(lo);
    let (hi_r, hi_w) = table(hi);
    let (mut best, mut best_mask) = (0.0, (0usize, 0usize));
    for j in 0..hi_r.len() {
        for i in 0..lo_r.len() {
            let v = (lo_r[i] + hi_r[j]) - phi.eval(lo_w[i] + hi_w[j]);
            if v > best {
                best = v;
                best_mask = (i, j);
            }
        }
    }
    let mut set: Vec<usize> = Vec::new();
    for (b, &a) in lo.iter().enumerate() {
        if best_mask.0 >> b & 1 == 1 {
            set.push(a);
        }
    }
    for (b, &a) in hi.iter().enumerate() {
        if best_mask.1 >> b & 1 == 1 {
            set.push(a);
        }
    }
    set.sort_unstable();
    (best, set)
}
