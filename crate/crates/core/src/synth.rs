//! Desk-scale synthetic question-answer data: a small answer vocabulary with
//! merge-group variants and alternate answers, Gaussian semantic vectors,
//! per-answer feature prototypes and pre-drawn noisy annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusBundle, EmbeddingTable, QuestionType, RulesDocument, TermId};
use crate::error::{Error, Result};
use crate::oracle::{annotate_initial, NoiseModel};
use crate::pools::{write_dataset, GroundTruth, InstanceId, InstanceRecord};
use crate::rng;

pub const CORPUS_FILE: &str = "corpus.tsv";
pub const RULES_FILE: &str = "rules.json";
pub const DATASET_FILE: &str = "dataset.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub num_instances: usize,
    pub num_terms: usize,
    /// Semantic embedding dimension m.
    pub embedding_dim: usize,
    /// Instance feature dimension d.
    pub feature_dim: usize,
    /// Standard deviation of instance features around their answer prototype.
    pub spread: f64,
    /// Standard deviation of the answer prototypes themselves.
    pub prototype_scale: f64,
    /// Zipf exponent for answer frequencies within a question type; 0 is uniform.
    pub class_skew: f64,
    /// Relative frequency of quantity, color, shape and other questions.
    pub qtype_mix: [f64; 4],
    /// Share of the vocabulary made of non-canonical merge members.
    pub merge_fraction: f64,
    /// Share of the vocabulary made of alternate valid answers.
    pub alternate_fraction: f64,
    pub noise: NoiseModel,
    /// Derived from the run's master seed when absent.
    pub seed: Option<u64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_instances: 2000,
            num_terms: 20,
            embedding_dim: 8,
            feature_dim: 16,
            spread: 1.0,
            prototype_scale: 1.0,
            class_skew: 1.0,
            qtype_mix: [1.0; 4],
            merge_fraction: 0.25,
            alternate_fraction: 0.15,
            noise: NoiseModel::with_rates(0.05, 0.10, 0.05),
            seed: None,
        }
    }
}

pub struct SyntheticData {
    pub bundle: CorpusBundle,
    pub records: Vec<InstanceRecord>,
}

impl SyntheticData {
    /// Writes `corpus.tsv`, `rules.json` and `dataset.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.bundle.save(dir.join(CORPUS_FILE), dir.join(RULES_FILE))?;
        write_dataset(dir.join(DATASET_FILE), &self.records)
    }
}

struct Entry {
    primary: &'static str,
    merge: &'static str,
    alternate: Option<&'static str>,
}

const fn e(primary: &'static str, merge: &'static str, alternate: Option<&'static str>) -> Entry {
    Entry {
        primary,
        merge,
        alternate,
    }
}

const QUANTITY: &[Entry] = &[
    e("2", "2 chairs", None),
    e("3", "3 chairs", None),
    e("1", "1 chair", None),
    e("4", "4 chairs", None),
    e("5", "5 chairs", None),
    e("6", "6 chairs", None),
    e("7", "7 chairs", None),
    e("8", "8 chairs", None),
];

const COLOR: &[Entry] = &[
    e("red", "reddish", Some("maroon")),
    e("brown", "brownish", Some("tan")),
    e("white", "whitish", Some("cream")),
    e("black", "blackish", Some("charcoal")),
    e("blue", "bluish", Some("navy")),
    e("green", "greenish", Some("olive")),
    e("gray", "grayish", Some("grey")),
    e("yellow", "yellowish", Some("gold")),
];

const SHAPE: &[Entry] = &[
    e("rectangle", "rectangular", Some("oblong")),
    e("circle", "circular", Some("ring")),
    e("square", "squarish", Some("box")),
    e("triangle", "triangular", Some("wedge")),
    e("oval", "ovalish", Some("ellipse")),
    e("cylinder", "cylindrical", Some("tube")),
    e("hexagon", "hexagonal", None),
    e("cube", "cubic", None),
];

const OTHER: &[Entry] = &[
    e("yes", "yeah", None),
    e("no", "nope", None),
    e("table", "tables", Some("desk")),
    e("chair", "chairs", Some("seat")),
    e("bed", "beds", Some("mattress")),
    e("door", "doors", Some("doorway")),
    e("window", "windows", Some("pane")),
    e("sofa", "sofas", Some("couch")),
];

fn bank(q: QuestionType) -> &'static [Entry] {
    match q {
        QuestionType::Quantity => QUANTITY,
        QuestionType::Color => COLOR,
        QuestionType::Shape => SHAPE,
        QuestionType::Other => OTHER,
    }
}

struct Vocabulary {
    /// (surface, qtype) in id order.
    terms: Vec<(String, QuestionType)>,
    primaries: Vec<TermId>,
    merges: BTreeMap<String, String>,
    alternates: BTreeMap<String, String>,
    partner: BTreeMap<TermId, TermId>,
}

fn build_vocabulary(cfg: &GenConfig) -> Result<Vocabulary> {
    let t = cfg.num_terms;
    let n_merge = (t as f64 * cfg.merge_fraction).round() as usize;
    let n_alt = (t as f64 * cfg.alternate_fraction).round() as usize;
    if n_merge + n_alt + 4 > t {
        return Err(Error::Config(format!(
            "{t} terms leave fewer than 4 primary answers after {n_merge} merge members and {n_alt} alternates"
        )));
    }
    let n_primary = t - n_merge - n_alt;
    if n_merge > n_primary {
        return Err(Error::Config("more merge members than primary answers".into()));
    }

    let mut primaries: Vec<(String, QuestionType, usize)> = Vec::new();
    for i in 0..n_primary {
        let q = QuestionType::ALL[i % 4];
        let slot = i / 4;
        let surface = match bank(q).get(slot) {
            Some(entry) => entry.primary.to_string(),
            None => format!("{q} {slot}"),
        };
        primaries.push((surface, q, slot));
    }

    let mut terms: Vec<(String, QuestionType)> = primaries.iter().map(|(s, q, _)| (s.clone(), *q)).collect();
    let mut partner = BTreeMap::new();
    let mut merges = BTreeMap::new();
    for (i, (surface, q, slot)) in primaries.iter().enumerate().take(n_merge) {
        let member = match bank(*q).get(*slot) {
            Some(entry) => entry.merge.to_string(),
            None => format!("{surface} variant"),
        };
        partner.insert(TermId(terms.len()), TermId(i));
        merges.insert(member.clone(), surface.clone());
        terms.push((member, *q));
    }

    let mut alternates = BTreeMap::new();
    let with_alt = primaries
        .iter()
        .enumerate()
        .filter_map(|(i, (s, q, slot))| {
            let alt = bank(*q).get(*slot).and_then(|e| e.alternate).map(str::to_string);
            alt.map(|a| (i, s.clone(), *q, a))
        })
        .take(n_alt)
        .collect::<Vec<_>>();
    if with_alt.len() < n_alt {
        return Err(Error::Config(format!(
            "vocabulary has only {} alternate answers for {n_alt} requested",
            with_alt.len()
        )));
    }
    for (i, surface, q, alt) in with_alt {
        partner.insert(TermId(terms.len()), TermId(i));
        alternates.insert(alt.clone(), surface);
        terms.push((alt, q));
    }

    Ok(Vocabulary {
        terms,
        primaries: (0..n_primary).map(TermId).collect(),
        merges,
        alternates,
        partner,
    })
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_terms < 4 {
            return Err(Error::Config("num_terms must be >= 4".into()));
        }
        if self.embedding_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config("embedding_dim and feature_dim must be >= 1".into()));
        }
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !finite_nonneg(self.spread) || !finite_nonneg(self.prototype_scale) || !finite_nonneg(self.class_skew) {
            return Err(Error::Config("spread, prototype_scale and class_skew must be finite and >= 0".into()));
        }
        if self.qtype_mix.iter().any(|w| !finite_nonneg(*w)) || self.qtype_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("qtype_mix needs non-negative weights with a positive sum".into()));
        }
        if !(0.0..1.0).contains(&self.merge_fraction) || !(0.0..1.0).contains(&self.alternate_fraction) {
            return Err(Error::Config("merge_fraction and alternate_fraction must lie in [0, 1)".into()));
        }
        self.noise.validate()?;
        let n_merge = (self.num_terms as f64 * self.merge_fraction).round() as usize;
        let n_alt = (self.num_terms as f64 * self.alternate_fraction).round() as usize;
        if self.noise.rate_non_canonical > 0.0 && n_merge == 0 {
            return Err(Error::Config("non-canonical noise needs at least one merge group".into()));
        }
        if self.noise.rate_alt_valid > 0.0 && n_alt == 0 {
            return Err(Error::Config("alt-valid noise needs at least one alternate answer".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Generates the corpus bundle and an unlabeled dataset whose records carry
/// the simulated annotator's answer and the ground truth.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let vocab = build_vocabulary(cfg)?;
    let seed = cfg.seed();
    let mut rng = rng::stream(seed, &[rng::label::GENERATOR]);

    let m = cfg.embedding_dim;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(vocab.terms.len());
    for id in 0..vocab.terms.len() {
        let v = match vocab.partner.get(&TermId(id)) {
            None => gaussian(&mut rng, m, 1.0),
            Some(p) => {
                let base = vectors[p.0].clone();
                let dir = gaussian(&mut rng, m, 1.0);
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let radius = rng.random_range(0.0..=0.1);
                base.iter().zip(&dir).map(|(b, d)| b + radius * d / norm).collect()
            }
        };
        vectors.push(v);
    }

    let corpus = Corpus::new(
        vocab
            .terms
            .iter()
            .map(|(s, q)| (s.clone(), BTreeSet::from([*q]))),
    )?;
    let embeddings = EmbeddingTable::new(m, vectors)?;
    let doc = RulesDocument {
        canonical: vocab
            .terms
            .iter()
            .filter(|(s, _)| !vocab.merges.contains_key(s))
            .map(|(s, _)| s.clone())
            .collect(),
        merges: vocab.merges.clone(),
        synonyms: BTreeMap::new(),
        suffix_rules: RulesDocument::default_suffix_rules(),
        alternates: vocab.alternates.clone(),
    };
    let bundle = CorpusBundle::from_document(corpus, embeddings, &doc)?;

    let prototypes: Vec<Vec<f64>> = vocab
        .primaries
        .iter()
        .map(|_| gaussian(&mut rng, cfg.feature_dim, cfg.prototype_scale))
        .collect();
    let by_qtype: Vec<Vec<TermId>> = QuestionType::ALL
        .iter()
        .map(|q| vocab.primaries.iter().copied().filter(|&p| vocab.terms[p.0].1 == *q).collect())
        .collect();
    let mix: Vec<f64> = QuestionType::ALL
        .iter()
        .enumerate()
        .map(|(i, _)| if by_qtype[i].is_empty() { 0.0 } else { cfg.qtype_mix[i] })
        .collect();
    let qtype_dist = WeightedIndex::new(&mix).map_err(|e| Error::Config(format!("qtype_mix: {e}")))?;
    let answer_dists: Vec<Option<WeightedIndex<f64>>> = by_qtype
        .iter()
        .map(|ids| {
            let w: Vec<f64> = (0..ids.len()).map(|r| 1.0 / ((r + 1) as f64).powf(cfg.class_skew)).collect();
            WeightedIndex::new(w).ok()
        })
        .collect();

    let noise_seed = cfg.noise.seed.unwrap_or_else(|| rng::derive(seed, &[rng::label::NOISE]));
    let mut records = Vec::with_capacity(cfg.num_instances);
    for i in 0..cfg.num_instances {
        let qi = qtype_dist.sample(&mut rng);
        let qtype = QuestionType::ALL[qi];
        let dist = answer_dists[qi].as_ref().expect("non-empty question types have answers");
        let clean = by_qtype[qi][dist.sample(&mut rng)];
        let features: Vec<f64> = prototypes[clean.0]
            .iter()
            .zip(gaussian(&mut rng, cfg.feature_dim, cfg.spread))
            .map(|(p, n)| p + n)
            .collect();
        let id = InstanceId(i as u64);
        let ann = annotate_initial(&bundle, id, qtype, clean, &cfg.noise, noise_seed)?;
        let mut record = InstanceRecord::unlabeled(id, features, qtype);
        record.surface_answer = Some(ann.surface);
        record.truth = Some(GroundTruth {
            clean_label: clean,
            noise_kind: ann.noise_kind,
        });
        records.push(record);
    }
    Ok(SyntheticData { bundle, records })
}
