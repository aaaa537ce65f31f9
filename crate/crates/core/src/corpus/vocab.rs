use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SentenceRecord;
use crate::graph::{InverseRelations, RelationVocabulary};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Word and relation-label indices. Tag indices are fixed by [`super::AeTag`] and
/// [`super::Polarity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabData", into = "VocabData")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    relations: RelationVocabulary,
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    words: Vec<String>,
    relations: RelationVocabulary,
}

impl From<VocabData> for Vocabulary {
    fn from(d: VocabData) -> Self {
        let index = d.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            words: d.words,
            index,
            relations: d.relations,
        }
    }
}

impl From<Vocabulary> for VocabData {
    fn from(v: Vocabulary) -> Self {
        VocabData {
            words: v.words,
            relations: v.relations,
        }
    }
}

impl Vocabulary {
    /// Words in first-seen order after the two reserved entries; relation labels from
    /// the same records.
    pub fn build(records: &[SentenceRecord], inverse: InverseRelations) -> Self {
        let mut v = Vocabulary {
            words: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
            relations: RelationVocabulary::build(records, inverse),
        };
        v.index.insert(PAD_TOKEN.to_string(), PAD);
        v.index.insert(UNK_TOKEN.to_string(), UNK);
        v.extend_words(records);
        v
    }

    /// Adds unseen words (e.g. from evaluation files, so pretrained vectors cover them).
    pub fn extend_words(&mut self, records: &[SentenceRecord]) {
        for tok in records.iter().flat_map(|r| &r.tokens) {
            if !self.index.contains_key(tok) {
                self.index.insert(tok.clone(), self.words.len());
                self.words.push(tok.clone());
            }
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Exact lookup first, then lowercase, then the unknown index.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token)
            .or_else(|| self.get(&token.to_lowercase()))
            .unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn relations(&self) -> &RelationVocabulary {
        &self.relations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_sentence, AeTag, Polarity};

    fn record(tokens: &[&str], ae: &[AeTag], pol: &[Option<Polarity>]) -> SentenceRecord {
        let n = tokens.len();
        let heads = (0..n).map(|i| if i == 0 { 0 } else { 1 }).collect();
        let deprels = (0..n).map(|i| if i == 0 { "root" } else { "dep" }.to_string()).collect();
        SentenceRecord::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            ae.to_vec(),
            pol.to_vec(),
            heads,
            deprels,
        )
        .unwrap()
    }

    #[test]
    fn reserved_indices_and_case_fallback() {
        let r = record(&["the", "Pizza"], &[AeTag::O, AeTag::O], &[None, None]);
        let v = Vocabulary::build(&[r], InverseRelations::Distinct);
        assert_eq!(v.word(PAD), Some("<pad>"));
        assert_eq!(v.word(UNK), Some("<unk>"));
        assert_eq!(v.lookup("Pizza"), 3);
        assert_eq!(v.lookup("THE"), 2);
        assert_eq!(v.lookup("pasta"), UNK);
    }

    #[test]
    fn aspect_masks() {
        use AeTag::*;
        let r = record(&["a", "b", "c"], &[BA, IA, O], &[Some(Polarity::Pos), Some(Polarity::Pos), None]);
        let v = Vocabulary::build(std::slice::from_ref(&r), InverseRelations::Distinct);
        let e = encode_sentence(&r, &v);
        assert_eq!(e.aspect_mask, vec![true, true, false]);
        assert_eq!(e.polarity, vec![Some(0), Some(0), None]);

        let r = record(&["a", "b"], &[O, O], &[None, None]);
        assert_eq!(encode_sentence(&r, &v).aspect_mask, vec![false, false]);
        let r = record(&["a", "b"], &[BP, O], &[None, None]);
        assert_eq!(encode_sentence(&r, &v).aspect_mask, vec![false, false]);
    }

    #[test]
    fn encode_then_decode_round_trips() {
        use AeTag::*;
        let r = record(&["Great", "battery", "life"], &[BP, BA, IA], &[None, Some(Polarity::Pos), Some(Polarity::Pos)]);
        let v = Vocabulary::build(std::slice::from_ref(&r), InverseRelations::Distinct);
        let e = encode_sentence(&r, &v);
        let tokens: Vec<&str> = e.tokens.iter().map(|&i| v.word(i).unwrap()).collect();
        let tags: Vec<AeTag> = e.ae.iter().map(|&i| AeTag::from_index(i).unwrap()).collect();
        assert_eq!(tokens, ["Great", "battery", "life"]);
        assert_eq!(tags, r.ae_tags);
    }

    #[test]
    fn serde_rebuilds_index() {
        let r = record(&["x", "y"], &[AeTag::O, AeTag::O], &[None, None]);
        let v = Vocabulary::build(&[r], InverseRelations::Distinct);
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.lookup("y"), 3);
    }
}
