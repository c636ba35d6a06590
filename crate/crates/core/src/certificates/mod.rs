//! Checkers for almost invariance, drift, smallness and related existence conditions.
//!
//! Every checker returns a [`Certificate`]: a verdict, the constants it used or
//! found, a witness when the condition fails, and free-form notes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

mod almost;
mod drift;
mod index;
mod lasota;
mod lp;
mod phi;
mod worst_set;

pub use almost::{
    check_a2, check_a2_semigroup, check_almost_invariant, check_auxiliary_index_bound, check_mean_almost_invariant,
    check_partial_subinvariance, check_resolvent_almost_invariant, optimal_almost_invariance,
    optimal_mean_almost_invariance, signed_excess, AlmostInvarianceParams,
};
pub use drift::{
    check_assumption_a, check_assumption_a_prime, check_assumption_b, check_assumption_c,
    check_assumption_c_prime, check_condition_d, check_condition_e, check_generalized_drift,
    check_smallness, class_count_bound, minorization, positive_part_gap, CPrimeOptions,
};
pub(crate) use drift::cprime_one_step;
pub use index::{default_eps_grid, INDEX_MARGIN, index_profile, knapsack_exact, knapsack_fractional, IndexMethod, IndexProfile};
pub use lasota::check_lasota_szarek_half;
pub use lp::{check_uniform_bound_lp, lp_operator_norm, LpNorm};
pub use phi::Phi;
pub use worst_set::{worst_set_search, worst_set_with_cutoff, WorstSet, DP_CUTOFF};

/// Condition a certificate speaks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionId {
    SupportA2,
    AlmostInv,
    MeanAlmostInv,
    ResolventAlmostInv,
    IndexC,
    AuxiliaryIndexBound,
    AssumpA,
    AssumpAPrime,
    AssumpB,
    AssumpC,
    AssumpCPrime,
    GenDrift,
    CondD,
    CondE,
    Smallness,
    PartialSubInv,
    LasotaSzarekHalf,
    UniformBoundLp,
    ClassCount,
    HarnackDrift,
    HarnackPipeline,
    PerturbedKernel,
}

impl ConditionId {
    pub const ALL: [ConditionId; 22] = [
        ConditionId::SupportA2,
        ConditionId::AlmostInv,
        ConditionId::MeanAlmostInv,
        ConditionId::ResolventAlmostInv,
        ConditionId::IndexC,
        ConditionId::AuxiliaryIndexBound,
        ConditionId::AssumpA,
        ConditionId::AssumpAPrime,
        ConditionId::AssumpB,
        ConditionId::AssumpC,
        ConditionId::AssumpCPrime,
        ConditionId::GenDrift,
        ConditionId::CondD,
        ConditionId::CondE,
        ConditionId::Smallness,
        ConditionId::PartialSubInv,
        ConditionId::LasotaSzarekHalf,
        ConditionId::UniformBoundLp,
        ConditionId::ClassCount,
        ConditionId::HarnackDrift,
        ConditionId::HarnackPipeline,
        ConditionId::PerturbedKernel,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::SupportA2 => "support-a2",
            ConditionId::AlmostInv => "almost-inv",
            ConditionId::MeanAlmostInv => "mean-almost-inv",
            ConditionId::ResolventAlmostInv => "resolvent-almost-inv",
            ConditionId::IndexC => "index-c",
            ConditionId::AuxiliaryIndexBound => "auxiliary-index-bound",
            ConditionId::AssumpA => "assump-a",
            ConditionId::AssumpAPrime => "assump-a-prime",
            ConditionId::AssumpB => "assump-b",
            ConditionId::AssumpC => "assump-c",
            ConditionId::AssumpCPrime => "assump-c-prime",
            ConditionId::GenDrift => "gen-drift",
            ConditionId::CondD => "cond-d",
            ConditionId::CondE => "cond-e",
            ConditionId::Smallness => "smallness",
            ConditionId::PartialSubInv => "partial-sub-inv",
            ConditionId::LasotaSzarekHalf => "lasota-szarek-half",
            ConditionId::UniformBoundLp => "uniform-bound-lp",
            ConditionId::ClassCount => "class-count",
            ConditionId::HarnackDrift => "harnack-drift",
            ConditionId::HarnackPipeline => "harnack-pipeline",
            ConditionId::PerturbedKernel => "perturbed-kernel",
        }
    }

    pub fn parse(s: &str) -> Option<ConditionId> {
        ConditionId::ALL.iter().copied().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    /// Holds on the evidence computed, with an approximation flagged in the notes.
    HoldsHeuristic,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn is_hold(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::HoldsHeuristic)
    }
}

/// Counterexample data attached to a failing certificate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Witness {
    pub fn detail(msg: impl Into<String>) -> Self {
        Witness { detail: Some(msg.into()), ..Default::default() }
    }

    pub fn state(label: impl Into<String>) -> Self {
        Witness { state: Some(label.into()), ..Default::default() }
    }

    pub fn with_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_set(mut self, set: Vec<String>) -> Self {
        self.set = Some(set);
        self
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Structured verdict for one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub condition: ConditionId,
    pub verdict: Verdict,
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub witness: Option<Witness>,
    #[serde(default)]
    pub notes: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attached: Vec<Certificate>,
}

impl Certificate {
    pub fn new(condition: ConditionId) -> Self {
        Certificate {
            condition,
            verdict: Verdict::Inconclusive,
            constants: BTreeMap::new(),
            witness: None,
            notes: String::new(),
            attached: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict.is_hold()
    }

    pub fn fails(&self) -> bool {
        self.verdict == Verdict::Fails
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }

    pub fn note(&mut self, msg: impl AsRef<str>) {
        if !self.notes.is_empty() {
            self.notes.push_str("; ");
        }
        self.notes.push_str(msg.as_ref());
    }

    pub fn hold(&mut self) {
        self.verdict = Verdict::Holds;
    }

    pub fn fail(&mut self, witness: Witness) {
        self.verdict = Verdict::Fails;
        self.witness = Some(witness);
    }

    pub fn inconclusive(&mut self, why: impl AsRef<str>) {
        self.verdict = Verdict::Inconclusive;
        self.note(why);
    }

    pub fn attach(&mut self, cert: Certificate) {
        self.attached.push(cert);
    }

    /// First attached certificate for the given condition.
    pub fn attached_for(&self, id: ConditionId) -> Option<&Certificate> {
        self.attached.iter().find(|c| c.condition == id)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("certificates serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_ids_roundtrip() {
        for id in ConditionId::ALL {
            assert_eq!(ConditionId::parse(id.as_str()), Some(id));
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert_eq!(ConditionId::parse("nope"), None);
    }

    #[test]
    fn certificate_json_shape() {
        let mut c = Certificate::new(ConditionId::Smallness).with("alpha", 0.75);
        c.fail(Witness::state("s1").with_value(0.0));
        c.note("first");
        c.note("second");
        let v = c.to_json();
        assert_eq!(v["condition"], "smallness");
        assert_eq!(v["verdict"], "fails");
        assert_eq!(v["witness"]["state"], "s1");
        assert_eq!(v["notes"], "first; second");
        let back: Certificate = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }
}
