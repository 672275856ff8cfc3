//! Annotation oracles: the simulated initial annotator with its noise model,
//! and the reannotation oracles (lazy, simulated diligent, hierarchical).
//! The remote human oracle lives in [`crate::service`].

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, MatchOutcome, QuestionType, TermId};
use crate::error::{Error, Result};
use crate::policy::CaseLabel;
use crate::pools::{GroundTruth, InstanceId, NoiseKind};
use crate::rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Lazy,
    SimulatedDiligent,
    Hierarchical,
    RemoteHuman,
}

impl OracleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Lazy => "lazy",
            OracleKind::SimulatedDiligent => "simulated_diligent",
            OracleKind::Hierarchical => "hierarchical",
            OracleKind::RemoteHuman => "remote_human",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReannotationOutcome {
    Hit,
    Resolved,
    ManualReplaced,
    Unchanged,
}

impl ReannotationOutcome {
    pub const ALL: [ReannotationOutcome; 4] = [
        ReannotationOutcome::Hit,
        ReannotationOutcome::Resolved,
        ReannotationOutcome::ManualReplaced,
        ReannotationOutcome::Unchanged,
    ];
}

/// Rates of the three improper-answer kinds; the remainder is correct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub rate_alt_valid: f64,
    pub rate_non_canonical: f64,
    pub rate_irrelevant: f64,
    /// Derived from the run's master seed when absent.
    pub seed: Option<u64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel::with_rates(0.0, 0.0, 0.0)
    }

    pub fn with_rates(alt_valid: f64, non_canonical: f64, irrelevant: f64) -> Self {
        NoiseModel {
            rate_alt_valid: alt_valid,
            rate_non_canonical: non_canonical,
            rate_irrelevant: irrelevant,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.rate_alt_valid, self.rate_non_canonical, self.rate_irrelevant];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidParameter(format!("noise rates must lie in [0, 1]: {rates:?}")));
        }
        if rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!("noise rates sum above 1: {rates:?}")));
        }
        Ok(())
    }

    fn draw_kind(&self, seed: u64, id: InstanceId) -> NoiseKind {
        let u = rng::unit(seed, &[rng::label::NOISE, id.0, 0]);
        let mut edge = self.rate_alt_valid;
        if u < edge {
            return NoiseKind::AltValid;
        }
        edge += self.rate_non_canonical;
        if u < edge {
            return NoiseKind::NonCanonical;
        }
        edge += self.rate_irrelevant;
        if u < edge {
            return NoiseKind::Irrelevant;
        }
        NoiseKind::CanonicalCorrect
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitialAnnotation {
    pub label: TermId,
    pub surface: String,
    /// The kind actually produced (after any fallback to the correct answer).
    pub noise_kind: NoiseKind,
}

/// Simulated Ω_initial. The draw depends only on `(seed, id)`, so annotation
/// order never matters.
pub fn annotate_initial(
    bundle: &CorpusBundle,
    id: InstanceId,
    qtype: QuestionType,
    clean_label: TermId,
    noise: &NoiseModel,
    seed: u64,
) -> Result<InitialAnnotation> {
    bundle.corpus.check_id(clean_label)?;
    let drawn = noise.draw_kind(seed, id);
    let candidates: Vec<TermId> = match drawn {
        NoiseKind::CanonicalCorrect => Vec::new(),
        NoiseKind::AltValid => bundle.alternates_of(clean_label).to_vec(),
        NoiseKind::NonCanonical => bundle.refined.members_of(clean_label),
        NoiseKind::Irrelevant => bundle
            .irrelevant_for(qtype)
            .into_iter()
            .filter(|&t| t != clean_label)
            .collect(),
    };
    let (label, noise_kind) = if candidates.is_empty() {
        (clean_label, NoiseKind::CanonicalCorrect)
    } else {
        let u = rng::unit(seed, &[rng::label::NOISE, id.0, 1]);
        let pick = ((u * candidates.len() as f64) as usize).min(candidates.len() - 1);
        (candidates[pick], drawn)
    };
    Ok(InitialAnnotation {
        label,
        surface: bundle.corpus.surface(label).to_string(),
        noise_kind,
    })
}

/// Category of `label` as an answer whose clean label is `clean`.
pub fn classify_annotation(bundle: &CorpusBundle, label: TermId, clean: TermId) -> NoiseKind {
    if label == clean {
        NoiseKind::CanonicalCorrect
    } else if bundle.alternates_of(clean).contains(&label) {
        NoiseKind::AltValid
    } else if bundle.refined.merge_target(label) == Some(clean) {
        NoiseKind::NonCanonical
    } else {
        NoiseKind::Irrelevant
    }
}

/// Model evidence shown to a reannotating oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub top_predictions: Vec<(TermId, f64)>,
    pub logdet_cov: f64,
    pub loss: f64,
    pub case: CaseLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReannotationRequest {
    pub id: InstanceId,
    pub qtype: QuestionType,
    pub label: TermId,
    pub surface: String,
    /// Present only for simulated data; simulated oracles use it as the
    /// perfect manual answer.
    pub truth: Option<GroundTruth>,
    pub evidence: Evidence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reannotation {
    pub id: InstanceId,
    pub label: TermId,
    pub surface: String,
    pub outcome: ReannotationOutcome,
}

impl Reannotation {
    pub fn unchanged(req: &ReannotationRequest) -> Self {
        Reannotation {
            id: req.id,
            label: req.label,
            surface: req.surface.clone(),
            outcome: ReannotationOutcome::Unchanged,
        }
    }

    /// Relabels `req` as `label`; a Hit on the current label keeps its surface.
    pub fn to(bundle: &CorpusBundle, req: &ReannotationRequest, label: TermId, outcome: ReannotationOutcome) -> Self {
        if label == req.label && outcome == ReannotationOutcome::Hit {
            return Reannotation {
                outcome,
                ..Reannotation::unchanged(req)
            };
        }
        Reannotation {
            id: req.id,
            label,
            surface: bundle.corpus.surface(label).to_string(),
            outcome,
        }
    }
}

/// Ω_reannotation. Receives the whole queue of one reannotation phase and
/// returns one decision per request, in any order.
pub trait Oracle {
    fn kind(&self) -> OracleKind;

    fn reannotate(&mut self, bundle: &CorpusBundle, requests: &[ReannotationRequest]) -> Result<Vec<Reannotation>>;
}

/// Returns every instance untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct LazyOracle;

impl Oracle for LazyOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Lazy
    }

    fn reannotate(&mut self, _: &CorpusBundle, requests: &[ReannotationRequest]) -> Result<Vec<Reannotation>> {
        Ok(requests.iter().map(Reannotation::unchanged).collect())
    }
}

/// A perfect annotator that relabels every request by hand.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiligentOracle;

impl Oracle for DiligentOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::SimulatedDiligent
    }

    fn reannotate(&mut self, bundle: &CorpusBundle, requests: &[ReannotationRequest]) -> Result<Vec<Reannotation>> {
        requests
            .iter()
            .map(|req| {
                let truth = req
                    .truth
                    .ok_or_else(|| Error::Oracle(format!("instance {} has no ground truth", req.id)))?;
                Ok(if truth.clean_label == req.label {
                    Reannotation::to(bundle, req, req.label, ReannotationOutcome::Hit)
                } else {
                    Reannotation::to(bundle, req, truth.clean_label, ReannotationOutcome::ManualReplaced)
                })
            })
            .collect()
    }
}

/// Ω₀ first, manual reannotation only for what it cannot resolve. The manual
/// step is simulated with the clean label; without ground truth the label is
/// kept.
#[derive(Clone, Copy, Debug, Default)]
pub struct HierarchicalOracle;

impl HierarchicalOracle {
    pub fn decide(bundle: &CorpusBundle, req: &ReannotationRequest) -> Reannotation {
        match bundle.canonicalize(&req.surface, req.qtype) {
            MatchOutcome::Hit(_) => Reannotation::to(bundle, req, req.label, ReannotationOutcome::Hit),
            MatchOutcome::Resolved(id) => Reannotation::to(bundle, req, id, ReannotationOutcome::Resolved),
            MatchOutcome::Unresolved => match req.truth {
                Some(t) => Reannotation::to(bundle, req, t.clean_label, ReannotationOutcome::ManualReplaced),
                None => Reannotation::unchanged(req),
            },
        }
    }
}

impl Oracle for HierarchicalOracle {
    fn kind(&self) -> OracleKind {
        OracleKind::Hierarchical
    }

    fn reannotate(&mut self, bundle: &CorpusBundle, requests: &[ReannotationRequest]) -> Result<Vec<Reannotation>> {
        Ok(requests.iter().map(|r| HierarchicalOracle::decide(bundle, r)).collect())
    }
}
