//! Answer-term inventory, semantic embeddings, the refined canonical corpus
//! and the canonicalization pipeline that maps raw answers onto it.
//!
//! A corpus file is UTF-8 text with one term per line:
//!
//! ```text
//! surface<TAB>qtype[|qtype...]<TAB>v1,v2,...,vm
//! ```
//!
//! The refined corpus and the matching rules live in one JSON document
//! ([`RulesDocument`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermId(pub usize);

impl TermId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Quantity,
    Color,
    Shape,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Quantity,
        QuestionType::Color,
        QuestionType::Shape,
        QuestionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Quantity => "quantity",
            QuestionType::Color => "color",
            QuestionType::Shape => "shape",
            QuestionType::Other => "other",
        }
    }

    /// Whether single-token extraction applies to answers of this category.
    pub fn allows_token_extraction(self) -> bool {
        !matches!(self, QuestionType::Other)
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quantity" => Ok(QuestionType::Quantity),
            "color" => Ok(QuestionType::Color),
            "shape" => Ok(QuestionType::Shape),
            "other" => Ok(QuestionType::Other),
            other => Err(format!("unknown question type {other:?}")),
        }
    }
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub id: TermId,
    pub surface: String,
    pub question_types: BTreeSet<QuestionType>,
}

impl Term {
    pub fn answers(&self, qtype: QuestionType) -> bool {
        self.question_types.contains(&qtype)
    }
}

/// The answer-term inventory. Ids are dense and surfaces unique after
/// normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    terms: Vec<Term>,
    by_surface: HashMap<String, TermId>,
}

impl Corpus {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, BTreeSet<QuestionType>)>,
        S: AsRef<str>,
    {
        let mut terms = Vec::new();
        let mut by_surface = HashMap::new();
        for (surface, question_types) in entries {
            let surface = normalize_surface(surface.as_ref());
            if surface.is_empty() {
                return Err(Error::InvalidParameter("empty surface form".into()));
            }
            let id = TermId(terms.len());
            if by_surface.insert(surface.clone(), id).is_some() {
                return Err(Error::DuplicateSurface(surface));
            }
            terms.push(Term {
                id,
                surface,
                question_types,
            });
        }
        Ok(Corpus { terms, by_surface })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn get(&self, id: TermId) -> Option<&Term> {
        self.terms.get(id.0)
    }

    /// Panics on an out-of-range id; use [`Corpus::get`] for untrusted ids.
    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.0]
    }

    pub fn surface(&self, id: TermId) -> &str {
        &self.terms[id.0].surface
    }

    pub fn id_of(&self, surface: &str) -> Option<TermId> {
        self.by_surface.get(&normalize_surface(surface)).copied()
    }

    pub fn check_id(&self, id: TermId) -> Result<()> {
        if id.0 < self.terms.len() {
            Ok(())
        } else {
            Err(Error::InvalidTermId(id))
        }
    }
}

/// One semantic vector per term, all of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
            data.extend(row);
        }
        Ok(EmbeddingTable { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, id: TermId) -> &[f64] {
        &self.data[id.0 * self.dim..(id.0 + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Applies `f` to every vector, producing a new table of dimension `dim`.
    pub fn map_rows(&self, dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        EmbeddingTable::new(dim, self.rows().map(|r| f(r)).collect())
    }
}

pub fn parse_corpus(text: &str, origin: &Path) -> Result<(Corpus, EmbeddingTable)> {
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut dim = None;
    let mut seen = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(origin, lineno, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let surface = normalize_surface(fields[0]);
        if let Some(first) = seen.insert(surface.clone(), lineno) {
            return Err(Error::parse(
                origin,
                lineno,
                format!("duplicate surface form {surface:?} (first on line {first})"),
            ));
        }
        let qtypes = fields[1]
            .split('|')
            .map(QuestionType::from_str)
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| Error::parse(origin, lineno, e))?;
        let vector = fields[2]
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(origin, lineno, format!("bad vector component: {e}")))?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(origin, lineno, "non-finite vector component"));
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("dimension mismatch: expected {d}, got {}", vector.len()),
                ))
            }
            _ => {}
        }
        entries.push((surface, qtypes));
        rows.push(vector);
    }
    let corpus = Corpus::new(entries)?;
    let table = EmbeddingTable::new(dim.unwrap_or(1), rows)?;
    Ok((corpus, table))
}

pub fn format_corpus(corpus: &Corpus, table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for term in corpus.terms() {
        let qtypes: Vec<&str> = term.question_types.iter().map(|q| q.as_str()).collect();
        let vector: Vec<String> = table.vector(term.id).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&term.surface);
        out.push('\t');
        out.push_str(&qtypes.join("|"));
        out.push('\t');
        out.push_str(&vector.join(","));
        out.push('\n');
    }
    out
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, EmbeddingTable)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_corpus(corpus, table)).map_err(|e| Error::io(path, e))
}

/// The canonical subset C′ and the merge map from non-canonical terms to
/// their canonical representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinedCorpus {
    canonical: BTreeSet<TermId>,
    merges: BTreeMap<TermId, TermId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeGroup {
    pub members: Vec<TermId>,
    pub canonical: TermId,
}

impl RefinedCorpus {
    pub fn new(corpus: &Corpus, canonical: BTreeSet<TermId>, merges: BTreeMap<TermId, TermId>) -> Result<Self> {
        for &id in canonical.iter().chain(merges.keys()).chain(merges.values()) {
            corpus.check_id(id)?;
        }
        if let Some(k) = merges.keys().find(|k| canonical.contains(k)) {
            return Err(Error::InvalidRefinedCorpus(format!(
                "{:?} is both canonical and a merge key",
                corpus.surface(*k)
            )));
        }
        if let Some((k, v)) = merges.iter().find(|(_, v)| !canonical.contains(v)) {
            return Err(Error::InvalidRefinedCorpus(format!(
                "merge target {:?} of {:?} is not canonical",
                corpus.surface(*v),
                corpus.surface(*k)
            )));
        }
        Ok(RefinedCorpus { canonical, merges })
    }

    pub fn is_canonical(&self, id: TermId) -> bool {
        self.canonical.contains(&id)
    }

    pub fn canonical_ids(&self) -> &BTreeSet<TermId> {
        &self.canonical
    }

    pub fn merges(&self) -> &BTreeMap<TermId, TermId> {
        &self.merges
    }

    pub fn merge_target(&self, id: TermId) -> Option<TermId> {
        self.merges.get(&id).copied()
    }

    /// Non-canonical terms that merge into `canonical`, ascending.
    pub fn members_of(&self, canonical: TermId) -> Vec<TermId> {
        self.merges
            .iter()
            .filter(|(_, &v)| v == canonical)
            .map(|(&k, _)| k)
            .collect()
    }
}

/// Builds C′ from merge groups; every term not merged away stays canonical.
pub fn build_refined_corpus(corpus: &Corpus, merge_spec: &[MergeGroup]) -> Result<RefinedCorpus> {
    let mut merges = BTreeMap::new();
    let mut group_of: BTreeMap<TermId, usize> = BTreeMap::new();
    let mut canonical_heads = BTreeSet::new();
    for (g, group) in merge_spec.iter().enumerate() {
        corpus.check_id(group.canonical)?;
        if !group.members.contains(&group.canonical) {
            return Err(Error::InvalidRefinedCorpus(format!(
                "canonical {:?} is not a member of its group",
                corpus.surface(group.canonical)
            )));
        }
        for &m in &group.members {
            corpus.check_id(m)?;
            if let Some(prev) = group_of.insert(m, g) {
                if prev != g {
                    return Err(Error::InvalidRefinedCorpus(format!(
                        "{:?} belongs to overlapping groups",
                        corpus.surface(m)
                    )));
                }
            }
            if m != group.canonical {
                merges.insert(m, group.canonical);
            }
        }
        canonical_heads.insert(group.canonical);
    }
    if let Some(h) = canonical_heads.iter().find(|h| merges.contains_key(h)) {
        return Err(Error::InvalidRefinedCorpus(format!(
            "{:?} is canonical in one group and non-canonical in another",
            corpus.surface(*h)
        )));
    }
    let canonical = corpus
        .terms()
        .iter()
        .map(|t| t.id)
        .filter(|id| !merges.contains_key(id))
        .collect();
    RefinedCorpus::new(corpus, canonical, merges)
}

/// JSON document carrying C′, its merge map and the matching rules.
///
/// `alternates` maps a canonical term to another canonical term that is an
/// equally valid answer (used by the annotation noise model).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesDocument {
    pub canonical: Vec<String>,
    #[serde(default)]
    pub merges: BTreeMap<String, String>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
    #[serde(default)]
    pub suffix_rules: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alternates: BTreeMap<String, String>,
}

impl RulesDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn default_suffix_rules() -> Vec<(String, String)> {
        vec![("ular".into(), "le".into()), ("ish".into(), String::new())]
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Exact,
    SynonymTable,
    Morphological,
    TokenExtraction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Answer is already a canonical term valid for the question type.
    Exact,
    /// Explicit lookup: merge members and synonyms to canonical ids.
    SynonymTable(BTreeMap<String, TermId>),
    /// Suffix rewrites tried in order, e.g. `ular -> le`.
    Morphological(Vec<(String, String)>),
    /// Exactly one whitespace token resolves through the earlier rules.
    TokenExtraction,
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match self {
            Rule::Exact => RuleKind::Exact,
            Rule::SynonymTable(_) => RuleKind::SynonymTable,
            Rule::Morphological(_) => RuleKind::Morphological,
            Rule::TokenExtraction => RuleKind::TokenExtraction,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "term")]
pub enum MatchOutcome {
    Hit(TermId),
    Resolved(TermId),
    Unresolved,
}

impl MatchOutcome {
    pub fn term(self) -> Option<TermId> {
        match self {
            MatchOutcome::Hit(id) | MatchOutcome::Resolved(id) => Some(id),
            MatchOutcome::Unresolved => None,
        }
    }
}

/// The mapping Ω₀ from raw answers to canonical terms: an ordered rule list
/// evaluated against a fixed canonical inventory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalMapping {
    rules: Vec<Rule>,
    canonical: HashMap<String, TermId>,
    qtypes: Vec<BTreeSet<QuestionType>>,
}

impl CanonicalMapping {
    /// Default pipeline: exact, table (merges then synonyms), suffix rules,
    /// token extraction.
    pub fn new(
        corpus: &Corpus,
        refined: &RefinedCorpus,
        synonyms: &BTreeMap<String, TermId>,
        suffix_rules: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (&member, &target) in refined.merges() {
            table.insert(corpus.surface(member).to_string(), target);
        }
        for (raw, &target) in synonyms {
            let key = normalize_surface(raw);
            if key.is_empty() {
                return Err(Error::InvalidParameter("empty synonym key".into()));
            }
            table.entry(key).or_insert(target);
        }
        let rules = vec![
            Rule::Exact,
            Rule::SynonymTable(table),
            Rule::Morphological(suffix_rules),
            Rule::TokenExtraction,
        ];
        Self::with_rules(corpus, refined, rules)
    }

    pub fn with_rules(corpus: &Corpus, refined: &RefinedCorpus, rules: Vec<Rule>) -> Result<Self> {
        for rule in &rules {
            match rule {
                Rule::SynonymTable(table) => {
                    if let Some((k, v)) = table.iter().find(|(_, v)| !refined.is_canonical(**v)) {
                        return Err(Error::InvalidRefinedCorpus(format!(
                            "rule maps {k:?} to non-canonical term {v}"
                        )));
                    }
                }
                Rule::Morphological(suffixes) => {
                    if suffixes.iter().any(|(from, _)| from.is_empty()) {
                        return Err(Error::InvalidParameter("empty suffix in morphological rule".into()));
                    }
                }
                _ => {}
            }
        }
        let canonical = refined
            .canonical_ids()
            .iter()
            .map(|&id| (corpus.surface(id).to_string(), id))
            .collect();
        let qtypes = corpus.terms().iter().map(|t| t.question_types.clone()).collect();
        Ok(CanonicalMapping {
            rules,
            canonical,
            qtypes,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    fn valid(&self, id: TermId, qtype: QuestionType) -> bool {
        self.qtypes.get(id.0).is_some_and(|q| q.contains(&qtype))
    }

    fn exact(&self, s: &str, qtype: QuestionType) -> Option<TermId> {
        self.canonical.get(s).copied().filter(|&id| self.valid(id, qtype))
    }

    fn apply(&self, rule: &Rule, s: &str, qtype: QuestionType) -> Option<TermId> {
        match rule {
            Rule::Exact => self.exact(s, qtype),
            Rule::SynonymTable(table) => table.get(s).copied().filter(|&id| self.valid(id, qtype)),
            Rule::Morphological(suffixes) => suffixes.iter().find_map(|(from, to)| {
                let stem = s.strip_suffix(from.as_str())?;
                self.exact(&format!("{stem}{to}"), qtype)
            }),
            Rule::TokenExtraction => {
                if !qtype.allows_token_extraction() {
                    return None;
                }
                let tokens: Vec<&str> = s.split(' ').collect();
                if tokens.len() < 2 {
                    return None;
                }
                let mut hits = tokens.iter().filter_map(|tok| self.resolve_single(tok, qtype));
                match (hits.next(), hits.next()) {
                    (Some(id), None) => Some(id),
                    _ => None,
                }
            }
        }
    }

    fn resolve_single(&self, token: &str, qtype: QuestionType) -> Option<TermId> {
        self.rules
            .iter()
            .filter(|r| !matches!(r, Rule::TokenExtraction))
            .find_map(|r| self.apply(r, token, qtype))
    }

    pub fn canonicalize(&self, answer: &str, qtype: QuestionType) -> MatchOutcome {
        let norm = normalize_surface(answer);
        if norm.is_empty() {
            return MatchOutcome::Unresolved;
        }
        for rule in &self.rules {
            if let Some(id) = self.apply(rule, &norm, qtype) {
                return match rule {
                    Rule::Exact => MatchOutcome::Hit(id),
                    _ => MatchOutcome::Resolved(id),
                };
            }
        }
        MatchOutcome::Unresolved
    }
}

/// Everything the engine needs to know about answers: the corpus, its
/// embeddings, C′, Ω₀ and the alternate-answer pairs.
#[derive(Clone, Debug)]
pub struct CorpusBundle {
    pub corpus: Corpus,
    pub embeddings: EmbeddingTable,
    pub refined: RefinedCorpus,
    pub mapping: CanonicalMapping,
    alternates: BTreeMap<TermId, Vec<TermId>>,
}

impl CorpusBundle {
    pub fn from_document(corpus: Corpus, embeddings: EmbeddingTable, doc: &RulesDocument) -> Result<Self> {
        if embeddings.len() != corpus.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                got: embeddings.len(),
            });
        }
        let lookup = |s: &str| corpus.id_of(s).ok_or_else(|| Error::UnknownTerm(s.to_string()));
        let canonical = doc.canonical.iter().map(|s| lookup(s)).collect::<Result<BTreeSet<_>>>()?;
        let merges = doc
            .merges
            .iter()
            .map(|(k, v)| Ok((lookup(k)?, lookup(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let refined = RefinedCorpus::new(&corpus, canonical, merges)?;
        let synonyms = doc
            .synonyms
            .iter()
            .map(|(k, v)| Ok((k.clone(), lookup(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mapping = CanonicalMapping::new(&corpus, &refined, &synonyms, doc.suffix_rules.clone())?;
        let mut alternates: BTreeMap<TermId, Vec<TermId>> = BTreeMap::new();
        for (k, v) in &doc.alternates {
            let (alt, primary) = (lookup(k)?, lookup(v)?);
            if alt == primary || !refined.is_canonical(alt) || !refined.is_canonical(primary) {
                return Err(Error::InvalidRefinedCorpus(format!(
                    "alternate pair {k:?} -> {v:?} must join two distinct canonical terms"
                )));
            }
            alternates.entry(primary).or_default().push(alt);
        }
        Ok(CorpusBundle {
            corpus,
            embeddings,
            refined,
            mapping,
            alternates,
        })
    }

    pub fn load(corpus_path: impl AsRef<Path>, rules_path: impl AsRef<Path>) -> Result<Self> {
        let (corpus, embeddings) = load_corpus(corpus_path)?;
        let doc = RulesDocument::load(rules_path)?;
        Self::from_document(corpus, embeddings, &doc)
    }

    pub fn save(&self, corpus_path: impl AsRef<Path>, rules_path: impl AsRef<Path>) -> Result<()> {
        save_corpus(corpus_path, &self.corpus, &self.embeddings)?;
        self.rules_document().save(rules_path)
    }

    pub fn rules_document(&self) -> RulesDocument {
        let s = |id: TermId| self.corpus.surface(id).to_string();
        let mut synonyms = BTreeMap::new();
        let mut suffix_rules = Vec::new();
        for rule in self.mapping.rules() {
            match rule {
                Rule::SynonymTable(table) => {
                    for (k, &v) in table {
                        let is_merge = self.corpus.id_of(k).is_some_and(|id| self.refined.merge_target(id) == Some(v));
                        if !is_merge {
                            synonyms.insert(k.clone(), s(v));
                        }
                    }
                }
                Rule::Morphological(rules) => suffix_rules.extend(rules.iter().cloned()),
                _ => {}
            }
        }
        RulesDocument {
            canonical: self.refined.canonical_ids().iter().map(|&id| s(id)).collect(),
            merges: self.refined.merges().iter().map(|(&k, &v)| (s(k), s(v))).collect(),
            synonyms,
            suffix_rules,
            alternates: self
                .alternates
                .iter()
                .flat_map(|(&p, alts)| alts.iter().map(move |&a| (a, p)))
                .map(|(a, p)| (s(a), s(p)))
                .collect(),
        }
    }

    pub fn alternates_of(&self, primary: TermId) -> &[TermId] {
        self.alternates.get(&primary).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn canonicalize(&self, answer: &str, qtype: QuestionType) -> MatchOutcome {
        self.mapping.canonicalize(answer, qtype)
    }

    /// Canonical terms that are not valid answers for `qtype`, ascending.
    pub fn irrelevant_for(&self, qtype: QuestionType) -> Vec<TermId> {
        self.refined
            .canonical_ids()
            .iter()
            .copied()
            .filter(|&id| !self.corpus.term(id).answers(qtype))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qt(list: &[QuestionType]) -> BTreeSet<QuestionType> {
        list.iter().copied().collect()
    }

    fn shapes_bundle() -> CorpusBundle {
        use QuestionType::*;
        let corpus = Corpus::new(vec![
            ("rectangle", qt(&[Shape])),
            ("rectangular", qt(&[Shape])),
            ("circle", qt(&[Shape])),
            ("circular", qt(&[Shape])),
            ("round", qt(&[Shape])),
            ("red", qt(&[Color])),
            ("reddish", qt(&[Color])),
            ("2", qt(&[Quantity])),
            ("3", qt(&[Quantity])),
            ("yes", qt(&[Other])),
            ("chair", qt(&[Other])),
        ])
        .unwrap();
        let emb = EmbeddingTable::new(1, (0..corpus.len()).map(|i| vec![i as f64]).collect()).unwrap();
        let doc = RulesDocument {
            canonical: ["rectangle", "circle", "red", "2", "3", "yes", "chair"].map(String::from).to_vec(),
            merges: [("circular", "circle"), ("round", "circle"), ("reddish", "red")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            synonyms: BTreeMap::from([("two".to_string(), "2".to_string())]),
            suffix_rules: RulesDocument::default_suffix_rules(),
            alternates: BTreeMap::new(),
        };
        CorpusBundle::from_document(corpus, emb, &doc).unwrap()
    }

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(normalize_surface("  Two\t Chairs \n"), "two chairs");
    }

    #[test]
    fn corpus_rejects_duplicate_after_normalization() {
        let err = Corpus::new(vec![("Red", BTreeSet::new()), (" red ", BTreeSet::new())]).unwrap_err();
        assert!(matches!(err, Error::DuplicateSurface(_)));
    }

    #[test]
    fn parse_small_corpus() {
        let text = "a\tcolor\t0.5,1\nb\tshape|other\t-1,2\nc\tquantity\t0,0\n";
        let (corpus, table) = parse_corpus(text, Path::new("mem")).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(table.dim(), 2);
        assert_eq!(table.vector(TermId(1)), &[-1.0, 2.0]);
        assert!(corpus.term(TermId(1)).answers(QuestionType::Other));
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        let err = parse_corpus("a\tcolor\t1,2\nb\tcolor\t1\n", Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn parse_rejects_non_finite_and_duplicates() {
        let err = parse_corpus("a\tcolor\tNaN\n", Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
        let err = parse_corpus("a\tcolor\t1\nA\tcolor\t2\n", Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn worked_examples_canonicalize() {
        let b = shapes_bundle();
        let id = |s| b.corpus.id_of(s).unwrap();
        use QuestionType::*;
        assert_eq!(b.canonicalize("rectangle", Shape), MatchOutcome::Hit(id("rectangle")));
        assert_eq!(b.canonicalize("Rectangular", Shape), MatchOutcome::Resolved(id("rectangle")));
        assert_eq!(b.canonicalize("2 chairs", Quantity), MatchOutcome::Resolved(id("2")));
        assert_eq!(b.canonicalize("yes", Quantity), MatchOutcome::Unresolved);
        assert_eq!(b.canonicalize("two", Quantity), MatchOutcome::Resolved(id("2")));
        assert_eq!(b.canonicalize("reddish", Color), MatchOutcome::Resolved(id("red")));
        assert_eq!(b.canonicalize("round", Shape), MatchOutcome::Resolved(id("circle")));
    }

    #[test]
    fn token_extraction_is_ambiguous_with_two_candidates() {
        let b = shapes_bundle();
        assert_eq!(b.canonicalize("2 or 3", QuestionType::Quantity), MatchOutcome::Unresolved);
        // token extraction is disabled for `other`
        assert_eq!(b.canonicalize("a chair", QuestionType::Other), MatchOutcome::Unresolved);
    }

    #[test]
    fn merge_keys_resolve_to_their_targets() {
        let b = shapes_bundle();
        for (&k, &v) in b.refined.merges() {
            let q = *b.corpus.term(k).question_types.iter().next().unwrap();
            assert_eq!(b.canonicalize(b.corpus.surface(k), q), MatchOutcome::Resolved(v));
        }
    }

    #[test]
    fn refined_corpus_from_groups() {
        let b = shapes_bundle();
        let c = &b.corpus;
        let id = |s| c.id_of(s).unwrap();
        let refined = build_refined_corpus(
            c,
            &[
                MergeGroup {
                    members: vec![id("red"), id("reddish")],
                    canonical: id("red"),
                },
                MergeGroup {
                    members: vec![id("circle"), id("circular"), id("round")],
                    canonical: id("circle"),
                },
            ],
        )
        .unwrap();
        let keys: Vec<_> = refined.merges().keys().map(|&k| c.surface(k)).collect();
        assert_eq!(keys, ["circular", "round", "reddish"]);
        assert!(refined.is_canonical(id("rectangular")));

        let all = build_refined_corpus(c, &[]).unwrap();
        assert_eq!(all.canonical_ids().len(), c.len());

        let err = build_refined_corpus(
            c,
            &[
                MergeGroup {
                    members: vec![id("circle"), id("round")],
                    canonical: id("circle"),
                },
                MergeGroup {
                    members: vec![id("rectangle"), id("round")],
                    canonical: id("rectangle"),
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidRefinedCorpus(_)));

        let err = build_refined_corpus(
            c,
            &[
                MergeGroup {
                    members: vec![id("circle"), id("round")],
                    canonical: id("circle"),
                },
                MergeGroup {
                    members: vec![id("round"), id("circular")],
                    canonical: id("round"),
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidRefinedCorpus(_)));
    }

    #[test]
    fn rules_document_round_trips_through_bundle() {
        let b = shapes_bundle();
        let doc = b.rules_document();
        let again = CorpusBundle::from_document(b.corpus.clone(), b.embeddings.clone(), &doc).unwrap();
        assert_eq!(again.rules_document(), doc);
        assert_eq!(doc.synonyms.len(), 1);
    }

    #[test]
    fn rules_document_rejects_unknown_fields() {
        let err = serde_json::from_str::<RulesDocument>(r#"{"canonical": [], "extra": 1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }
}
