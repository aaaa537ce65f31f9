//! Sentence records with gold tags and dependency parses.
//!
//! On disk a corpus is JSON lines, one sentence per line:
//!
//! ```text
//! {"tokens":["great","phone"],"ae_tags":["BP","BA"],"as_tags":["NONE","pos"],"heads":[2,0],"deprels":["amod","root"]}
//! ```
//!
//! `heads` are 1-based with 0 marking the root. `ae_tags` and `as_tags` may be omitted
//! for prediction input.

mod conllu;
mod embeddings;
mod vocab;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conllu::conllu_to_records;
pub use embeddings::{load_embeddings, random_embeddings, EmbeddingTable};
pub use vocab::{Vocabulary, PAD, UNK};

/// Term-extraction tags. Index order is fixed: BA, IA, BP, IP, O.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AeTag {
    BA,
    IA,
    BP,
    IP,
    O,
}

impl AeTag {
    pub const ALL: [AeTag; 5] = [AeTag::BA, AeTag::IA, AeTag::BP, AeTag::IP, AeTag::O];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<AeTag> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AeTag::BA => "BA",
            AeTag::IA => "IA",
            AeTag::BP => "BP",
            AeTag::IP => "IP",
            AeTag::O => "O",
        }
    }

    pub fn parse(s: &str) -> Result<AeTag> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown extraction tag `{s}`")))
    }

    pub fn is_aspect(self) -> bool {
        matches!(self, AeTag::BA | AeTag::IA)
    }

    pub fn is_opinion(self) -> bool {
        matches!(self, AeTag::BP | AeTag::IP)
    }
}

impl fmt::Display for AeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sentiment classes. Index order is fixed: pos, neg, neu.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pos,
    Neg,
    Neu,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neg, Polarity::Neu];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Polarity> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pos => "pos",
            Polarity::Neg => "neg",
            Polarity::Neu => "neu",
        }
    }

    pub fn parse(s: &str) -> Option<Polarity> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// Label written for tokens without a sentiment.
pub const NO_POLARITY: &str = "NONE";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceRecord {
    pub tokens: Vec<String>,
    pub ae_tags: Vec<AeTag>,
    pub as_tags: Vec<Option<Polarity>>,
    /// 1-based governor index, 0 for the root.
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ae_tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    as_tags: Option<Vec<String>>,
    heads: Vec<usize>,
    deprels: Vec<String>,
}

/// Whether tags must be present and well formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagPolicy {
    /// Gold data: tags required, BIO checked strictly.
    Gold,
    /// Prediction input: tags optional and ignored.
    Untagged,
}

/// Outcome of parsing one line.
enum Parsed {
    Record(SentenceRecord),
    /// A sentence whose gold sentiment falls outside pos/neg/neu.
    Dropped,
}

impl SentenceRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds and validates a gold record.
    pub fn new(
        tokens: Vec<String>,
        ae_tags: Vec<AeTag>,
        as_tags: Vec<Option<Polarity>>,
        heads: Vec<usize>,
        deprels: Vec<String>,
    ) -> Result<Self> {
        let r = SentenceRecord {
            tokens,
            ae_tags,
            as_tags,
            heads,
            deprels,
        };
        r.validate()?;
        Ok(r)
    }

    /// Checks every record invariant, including strict BIO on the gold tags.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let n = self.len();
        if self.ae_tags.len() != n || self.as_tags.len() != n {
            return Err(Error::Invalid(format!(
                "length mismatch: {n} tokens, {} ae_tags, {} as_tags",
                self.ae_tags.len(),
                self.as_tags.len()
            )));
        }
        check_bio_strict(&self.ae_tags)?;
        for (i, (ae, pol)) in self.ae_tags.iter().zip(&self.as_tags).enumerate() {
            match (ae.is_aspect(), pol) {
                (true, None) => {
                    return Err(Error::Invalid(format!(
                        "token {} is tagged {ae} but has no sentiment",
                        i + 1
                    )))
                }
                (false, Some(p)) => {
                    return Err(Error::Invalid(format!(
                        "token {} is tagged {ae} but carries sentiment `{}`",
                        i + 1,
                        p.as_str()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_structure(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Invalid("sentence has no tokens".into()));
        }
        if self.heads.len() != n || self.deprels.len() != n {
            return Err(Error::Invalid(format!(
                "length mismatch: {n} tokens, {} heads, {} deprels",
                self.heads.len(),
                self.deprels.len()
            )));
        }
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(Error::Invalid(format!(
                    "head {h} of token {} exceeds sentence length {n}",
                    i + 1
                )));
            }
            if h == i + 1 {
                return Err(Error::Invalid(format!("token {} governs itself", i + 1)));
            }
        }
        if let Some(i) = self.deprels.iter().position(|d| d.trim().is_empty()) {
            return Err(Error::Invalid(format!("token {} has an empty relation label", i + 1)));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        let raw = RawRecord {
            tokens: self.tokens.clone(),
            ae_tags: Some(self.ae_tags.iter().map(|t| t.as_str().to_string()).collect()),
            as_tags: Some(
                self.as_tags
                    .iter()
                    .map(|p| p.map_or(NO_POLARITY, Polarity::as_str).to_string())
                    .collect(),
            ),
            heads: self.heads.clone(),
            deprels: self.deprels.clone(),
        };
        serde_json::to_string(&raw).expect("record serializes")
    }

    /// Number of gold aspect tokens (BA or IA).
    pub fn aspect_token_count(&self) -> usize {
        self.ae_tags.iter().filter(|t| t.is_aspect()).count()
    }
}

fn parse_line(line: &str, policy: TagPolicy) -> Result<Parsed> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Invalid(e.to_string()))?;
    let n = raw.tokens.len();
    let (ae_tags, as_tags) = match (policy, raw.ae_tags, raw.as_tags) {
        (TagPolicy::Gold, Some(ae), Some(pol)) => {
            let ae = ae.iter().map(|s| AeTag::parse(s)).collect::<Result<Vec<_>>>()?;
            let mut polarities = Vec::with_capacity(pol.len());
            for (i, s) in pol.iter().enumerate() {
                match (s.as_str(), Polarity::parse(s)) {
                    (NO_POLARITY, _) => polarities.push(None),
                    (_, Some(p)) => polarities.push(Some(p)),
                    (other, None) => {
                        if ae.get(i).is_some_and(|t| t.is_aspect()) {
                            log::debug!("dropping sentence with sentiment `{other}`");
                            return Ok(Parsed::Dropped);
                        }
                        return Err(Error::Invalid(format!(
                            "unknown sentiment label `{other}` on token {}",
                            i + 1
                        )));
                    }
                }
            }
            (ae, polarities)
        }
        (TagPolicy::Gold, _, _) => {
            return Err(Error::Invalid("missing ae_tags or as_tags".into()));
        }
        (TagPolicy::Untagged, _, _) => (vec![AeTag::O; n], vec![None; n]),
    };
    let record = SentenceRecord {
        tokens: raw.tokens,
        ae_tags,
        as_tags,
        heads: raw.heads,
        deprels: raw.deprels,
    };
    match policy {
        TagPolicy::Gold => record.validate()?,
        TagPolicy::Untagged => record.validate_structure()?,
    }
    Ok(Parsed::Record(record))
}

/// Records read from one file.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub records: Vec<SentenceRecord>,
    /// Sentences skipped because a gold aspect had a sentiment outside pos/neg/neu.
    pub dropped: usize,
}

/// Parses JSON-lines text; `source_name` is used in error messages.
pub fn parse_dataset(text: &str, source_name: &str, policy: TagPolicy) -> Result<Dataset> {
    let mut out = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(line, policy).map_err(|e| Error::Record {
            source_name: source_name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed {
            Parsed::Record(r) => out.records.push(r),
            Parsed::Dropped => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::warn!(
            "{source_name}: dropped {} sentence(s) with sentiment outside pos/neg/neu",
            out.dropped
        );
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_with_policy(path, TagPolicy::Gold)
}

/// Loads prediction input, where tags are optional.
pub fn load_untagged(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>> {
    Ok(load_with_policy(path, TagPolicy::Untagged)?.records)
}

fn load_with_policy(path: impl AsRef<Path>, policy: TagPolicy) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string(), policy)
}

/// Result of [`validate_bio`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BioCheck {
    Valid,
    /// Tags after repair plus the positions that were rewritten.
    Repaired { tags: Vec<AeTag>, positions: Vec<usize> },
}

/// Repairs orphan inside-tags: an IA (IP) not preceded by BA/IA (BP/IP) becomes BA (BP).
pub fn validate_bio(tags: &[AeTag]) -> BioCheck {
    let mut fixed = tags.to_vec();
    let mut positions = Vec::new();
    for i in 0..fixed.len() {
        let prev = i.checked_sub(1).map(|p| fixed[p]);
        let replacement = match fixed[i] {
            AeTag::IA if !matches!(prev, Some(AeTag::BA | AeTag::IA)) => AeTag::BA,
            AeTag::IP if !matches!(prev, Some(AeTag::BP | AeTag::IP)) => AeTag::BP,
            t => t,
        };
        if replacement != fixed[i] {
            fixed[i] = replacement;
            positions.push(i);
        }
    }
    if positions.is_empty() {
        BioCheck::Valid
    } else {
        log::debug!("repaired BIO tags at positions {positions:?}");
        BioCheck::Repaired {
            tags: fixed,
            positions,
        }
    }
}

/// Tags with orphan inside-tags repaired.
pub fn repair_bio(tags: &[AeTag]) -> Vec<AeTag> {
    match validate_bio(tags) {
        BioCheck::Valid => tags.to_vec(),
        BioCheck::Repaired { tags, .. } => tags,
    }
}

/// Gold data is never repaired; an orphan inside-tag is an error.
pub fn check_bio_strict(tags: &[AeTag]) -> Result<()> {
    match validate_bio_quiet(tags) {
        None => Ok(()),
        Some(i) => Err(Error::Invalid(format!(
            "tag {} at token {} does not continue a term",
            tags[i],
            i + 1
        ))),
    }
}

fn validate_bio_quiet(tags: &[AeTag]) -> Option<usize> {
    (0..tags.len()).find(|&i| {
        let prev = i.checked_sub(1).map(|p| tags[p]);
        match tags[i] {
            AeTag::IA => !matches!(prev, Some(AeTag::BA | AeTag::IA)),
            AeTag::IP => !matches!(prev, Some(AeTag::BP | AeTag::IP)),
            _ => false,
        }
    })
}

/// Parses tag strings, rejecting anything outside the extraction tag set.
pub fn parse_ae_tags<S: AsRef<str>>(tags: &[S]) -> Result<Vec<AeTag>> {
    tags.iter().map(|s| AeTag::parse(s.as_ref())).collect()
}

/// Index form of a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub tokens: Vec<usize>,
    pub ae: Vec<usize>,
    /// Gold polarity index; only defined under the aspect mask.
    pub polarity: Vec<Option<usize>>,
    pub heads: Vec<usize>,
    /// Relation index of each token's arc to its head; `None` for the root.
    pub rels: Vec<Option<usize>>,
    /// Set exactly where the gold extraction tag is BA or IA.
    pub aspect_mask: Vec<bool>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn encode_sentence(record: &SentenceRecord, vocab: &Vocabulary) -> EncodedSentence {
    let aspect_mask: Vec<bool> = record.ae_tags.iter().map(|t| t.is_aspect()).collect();
    EncodedSentence {
        tokens: record.tokens.iter().map(|t| vocab.lookup(t)).collect(),
        ae: record.ae_tags.iter().map(|t| t.index()).collect(),
        polarity: record
            .as_tags
            .iter()
            .zip(&aspect_mask)
            .map(|(p, &m)| if m { p.map(Polarity::index) } else { None })
            .collect(),
        heads: record.heads.clone(),
        rels: record
            .heads
            .iter()
            .zip(&record.deprels)
            .map(|(&h, d)| (h != 0).then(|| vocab.relations().lookup(d)))
            .collect(),
        aspect_mask,
    }
}
