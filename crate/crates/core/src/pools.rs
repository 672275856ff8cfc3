//! Dataset state machine: unlabeled pool D_U, labeled pool D_L and the
//! reannotation queue D_R, with count conservation checked by [`Pools::audit`].
//!
//! Dataset files are JSON lines, one [`InstanceRecord`] per line:
//!
//! ```json
//! {"id":3,"features":[0.1,-0.4],"qtype":"shape","surface_answer":"rectangular","clean_label":2,"noise_kind":"non_canonical"}
//! ```
//!
//! `annotated_label`, `state`, `surface_answer`, `clean_label` and
//! `noise_kind` are optional; the last two exist only for simulated data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{QuestionType, TermId};
use crate::error::{Error, Result};
use crate::oracle::ReannotationOutcome;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    CanonicalCorrect,
    AltValid,
    NonCanonical,
    Irrelevant,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    #[default]
    Unlabeled,
    Labeled,
    Flagged,
}

/// Simulation-only ground truth. Selection and training code paths never
/// receive it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub clean_label: TermId,
    pub noise_kind: NoiseKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: InstanceId,
    features: Vec<f64>,
    qtype: QuestionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotated_label: Option<TermId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surface_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<InstanceState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clean_label: Option<TermId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_kind: Option<NoiseKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordLine", into = "RecordLine")]
pub struct InstanceRecord {
    pub id: InstanceId,
    pub features: Vec<f64>,
    pub qtype: QuestionType,
    pub annotated_label: Option<TermId>,
    /// Raw answer text. For unlabeled simulated records this is the answer
    /// the simulated annotator will give.
    pub surface_answer: Option<String>,
    pub state: InstanceState,
    pub truth: Option<GroundTruth>,
}

impl TryFrom<RecordLine> for InstanceRecord {
    type Error = String;

    fn try_from(line: RecordLine) -> Result<Self, Self::Error> {
        let truth = match (line.clean_label, line.noise_kind) {
            (Some(clean_label), kind) => Some(GroundTruth {
                clean_label,
                noise_kind: kind.unwrap_or(NoiseKind::CanonicalCorrect),
            }),
            (None, None) => None,
            (None, Some(_)) => return Err("noise_kind given without clean_label".into()),
        };
        let state = line.state.unwrap_or(if line.annotated_label.is_some() {
            InstanceState::Labeled
        } else {
            InstanceState::Unlabeled
        });
        let record = InstanceRecord {
            id: line.id,
            features: line.features,
            qtype: line.qtype,
            annotated_label: line.annotated_label,
            surface_answer: line.surface_answer,
            state,
            truth,
        };
        record.check().map_err(|e| e.to_string())?;
        Ok(record)
    }
}

impl From<InstanceRecord> for RecordLine {
    fn from(r: InstanceRecord) -> Self {
        RecordLine {
            id: r.id,
            features: r.features,
            qtype: r.qtype,
            annotated_label: r.annotated_label,
            surface_answer: r.surface_answer,
            state: (r.state != InstanceState::Unlabeled).then_some(r.state),
            clean_label: r.truth.map(|t| t.clean_label),
            noise_kind: r.truth.map(|t| t.noise_kind),
        }
    }
}

impl InstanceRecord {
    pub fn unlabeled(id: InstanceId, features: Vec<f64>, qtype: QuestionType) -> Self {
        InstanceRecord {
            id,
            features,
            qtype,
            annotated_label: None,
            surface_answer: None,
            state: InstanceState::Unlabeled,
            truth: None,
        }
    }

    fn check(&self) -> Result<()> {
        let labeled = self.annotated_label.is_some();
        let ok = match self.state {
            InstanceState::Unlabeled => !labeled,
            InstanceState::Labeled | InstanceState::Flagged => labeled,
        };
        if !ok {
            return Err(Error::PoolAudit(format!(
                "instance {} is {:?} but annotated_label is {:?}",
                self.id, self.state, self.annotated_label
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }

    /// Whether the current annotation differs from the clean label. `None`
    /// when unlabeled or not simulated.
    pub fn is_improper(&self) -> Option<bool> {
        Some(self.annotated_label? != self.truth?.clean_label)
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<InstanceRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn format_dataset(records: &[InstanceRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[InstanceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_dataset(records)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSizes {
    pub unlabeled: usize,
    pub labeled: usize,
    pub queue: usize,
}

/// The three pools plus the records they index.
#[derive(Clone, Debug, PartialEq)]
pub struct Pools {
    records: BTreeMap<InstanceId, InstanceRecord>,
    unlabeled: BTreeSet<InstanceId>,
    labeled: BTreeSet<InstanceId>,
    queue: Vec<InstanceId>,
    ever_selected: BTreeSet<InstanceId>,
    outcomes: BTreeMap<ReannotationOutcome, usize>,
}

impl Pools {
    /// Every record enters D_U with its annotation cleared.
    pub fn ingest(instances: impl IntoIterator<Item = InstanceRecord>) -> Result<Self> {
        let mut records = BTreeMap::new();
        for mut r in instances {
            r.annotated_label = None;
            r.state = InstanceState::Unlabeled;
            let id = r.id;
            if records.insert(id, r).is_some() {
                return Err(Error::DuplicateInstance(id));
            }
        }
        let unlabeled = records.keys().copied().collect();
        Ok(Pools {
            records,
            unlabeled,
            labeled: BTreeSet::new(),
            queue: Vec::new(),
            ever_selected: BTreeSet::new(),
            outcomes: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: InstanceId) -> Option<&InstanceRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &InstanceRecord> {
        self.records.values()
    }

    pub fn unlabeled(&self) -> &BTreeSet<InstanceId> {
        &self.unlabeled
    }

    pub fn labeled(&self) -> &BTreeSet<InstanceId> {
        &self.labeled
    }

    pub fn queue(&self) -> &[InstanceId] {
        &self.queue
    }

    pub fn sizes(&self) -> PoolSizes {
        PoolSizes {
            unlabeled: self.unlabeled.len(),
            labeled: self.labeled.len(),
            queue: self.queue.len(),
        }
    }

    pub fn outcome_counts(&self) -> &BTreeMap<ReannotationOutcome, usize> {
        &self.outcomes
    }

    /// Moves `ids` from D_U to D_L with their annotations. Atomic: on error
    /// nothing changes.
    pub fn commit_selection(&mut self, ids: &[InstanceId], labels: &[(TermId, String)]) -> Result<()> {
        if labels.len() != ids.len() {
            let missing = ids.get(labels.len()).copied().unwrap_or(InstanceId(0));
            return Err(Error::MissingLabel(missing));
        }
        let mut seen = BTreeSet::new();
        for &id in ids {
            if !self.unlabeled.contains(&id) || !seen.insert(id) {
                return Err(Error::NotInPool { id, pool: "unlabeled" });
            }
        }
        for (&id, (label, surface)) in ids.iter().zip(labels) {
            self.unlabeled.remove(&id);
            self.labeled.insert(id);
            self.ever_selected.insert(id);
            let r = self.records.get_mut(&id).expect("pool ids index records");
            r.annotated_label = Some(*label);
            r.surface_answer = Some(surface.clone());
            r.state = InstanceState::Labeled;
        }
        Ok(())
    }

    /// Moves `ids` from D_L to the reannotation queue, kept in ascending order.
    pub fn flag(&mut self, ids: &[InstanceId]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &id in ids {
            if !self.labeled.contains(&id) || !seen.insert(id) {
                return Err(Error::NotInPool { id, pool: "labeled" });
            }
        }
        for &id in ids {
            self.labeled.remove(&id);
            self.records.get_mut(&id).expect("pool ids index records").state = InstanceState::Flagged;
        }
        self.queue.extend_from_slice(ids);
        self.queue.sort_unstable();
        Ok(())
    }

    /// Returns a queued instance to D_L with its (possibly unchanged) label.
    pub fn resolve(&mut self, id: InstanceId, label: TermId, surface: &str, outcome: ReannotationOutcome) -> Result<()> {
        let pos = self
            .queue
            .iter()
            .position(|&q| q == id)
            .ok_or(Error::NotInPool { id, pool: "reannotation" })?;
        self.queue.remove(pos);
        self.labeled.insert(id);
        let r = self.records.get_mut(&id).expect("pool ids index records");
        r.annotated_label = Some(label);
        r.surface_answer = Some(surface.to_string());
        r.state = InstanceState::Labeled;
        *self.outcomes.entry(outcome).or_insert(0) += 1;
        Ok(())
    }

    /// Records the category of an instance's current annotation after the
    /// oracle has changed it. No-op for records without ground truth.
    pub(crate) fn set_noise_kind(&mut self, id: InstanceId, kind: NoiseKind) {
        if let Some(t) = self.records.get_mut(&id).and_then(|r| r.truth.as_mut()) {
            t.noise_kind = kind;
        }
    }

    /// Checks disjointness, conservation and record-state consistency.
    pub fn audit(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::PoolAudit(msg));
        let queue: BTreeSet<InstanceId> = self.queue.iter().copied().collect();
        if queue.len() != self.queue.len() {
            return fail("duplicate ids in reannotation queue".into());
        }
        if let Some(id) = self.unlabeled.intersection(&self.labeled).next() {
            return fail(format!("{id} in both D_U and D_L"));
        }
        if let Some(id) = queue.iter().find(|id| self.unlabeled.contains(id) || self.labeled.contains(id)) {
            return fail(format!("{id} queued while pooled"));
        }
        let total = self.unlabeled.len() + self.labeled.len() + queue.len();
        if total != self.records.len() {
            return fail(format!("pool sizes sum to {total}, dataset has {}", self.records.len()));
        }
        if let Some(id) = self.unlabeled.iter().find(|id| self.ever_selected.contains(id)) {
            return fail(format!("{id} returned to D_U after selection"));
        }
        for r in self.records.values() {
            r.check()?;
            let expected = if self.unlabeled.contains(&r.id) {
                InstanceState::Unlabeled
            } else if self.labeled.contains(&r.id) {
                InstanceState::Labeled
            } else {
                InstanceState::Flagged
            };
            if r.state != expected {
                return fail(format!("{} has state {:?}, pool says {:?}", r.id, r.state, expected));
            }
        }
        Ok(())
    }

    /// (id, label, surface) for every labeled or queued instance, ascending.
    pub fn annotation_snapshot(&self) -> Vec<(InstanceId, Option<TermId>, Option<String>)> {
        self.records
            .values()
            .filter(|r| r.state != InstanceState::Unlabeled)
            .map(|r| (r.id, r.annotated_label, r.surface_answer.clone()))
            .collect()
    }
}
