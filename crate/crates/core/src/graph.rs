//! Dependency parse → symmetric self-looped adjacency plus typed-edge indicator.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedSentence, SentenceRecord};
use crate::error::{Error, Result};

pub const SELF_LOOP: &str = "self";
pub const UNKNOWN_RELATION: &str = "unk_rel";
const INVERSE_PREFIX: &str = "inv:";

/// Type given to the head→dependent direction of an arc.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverseRelations {
    /// `inv:<label>`, a type of its own.
    #[default]
    Distinct,
    /// Same type as the forward arc.
    Shared,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyNorm {
    #[default]
    None,
    /// Divide each node's incoming sum by its degree in `A`.
    Row,
}

/// Relation-type indices: `self`, then observed labels in sorted order, then their
/// `inv:` counterparts (when distinct). One extra index past [`RelationVocabulary::len`]
/// is reserved for labels never seen while building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RelationData", into = "RelationData")]
pub struct RelationVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    inverse: InverseRelations,
    forward_count: usize,
}

#[derive(Serialize, Deserialize)]
struct RelationData {
    forward: Vec<String>,
    inverse: InverseRelations,
}

impl From<RelationData> for RelationVocabulary {
    fn from(d: RelationData) -> Self {
        Self::from_labels(d.forward, d.inverse)
    }
}

impl From<RelationVocabulary> for RelationData {
    fn from(v: RelationVocabulary) -> Self {
        RelationData {
            forward: v.labels[1..=v.forward_count].to_vec(),
            inverse: v.inverse,
        }
    }
}

impl RelationVocabulary {
    /// Collects labels of every non-root arc. Root tokens contribute no arc, so their
    /// label is not a relation type.
    pub fn build(records: &[SentenceRecord], inverse: InverseRelations) -> Self {
        let observed: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| r.heads.iter().zip(&r.deprels))
            .filter(|(&h, _)| h != 0)
            .map(|(_, d)| d.as_str())
            .collect();
        Self::from_labels(observed.into_iter().map(str::to_string).collect(), inverse)
    }

    fn from_labels(mut forward: Vec<String>, inverse: InverseRelations) -> Self {
        forward.sort();
        forward.dedup();
        let mut labels = vec![SELF_LOOP.to_string()];
        labels.extend(forward.iter().cloned());
        if inverse == InverseRelations::Distinct {
            labels.extend(forward.iter().map(|l| format!("{INVERSE_PREFIX}{l}")));
        }
        labels.push(UNKNOWN_RELATION.to_string());
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self {
            labels,
            index,
            inverse,
            forward_count: forward.len(),
        }
    }

    /// Number of relation types |N|, excluding the reserved unknown index.
    pub fn len(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows needed in a relation embedding table (|N| plus the unknown row).
    pub fn table_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn self_index(&self) -> usize {
        0
    }

    pub fn unknown_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn inverse_mode(&self) -> InverseRelations {
        self.inverse
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Index of a forward label; unseen labels map to the unknown index.
    pub fn lookup(&self, label: &str) -> usize {
        match self.get(label) {
            Some(i) if i >= 1 && i <= self.forward_count => i,
            _ => self.unknown_index(),
        }
    }

    /// Type of the reverse direction of an arc typed `forward`.
    pub fn inverse_of(&self, forward: usize) -> usize {
        if forward == self.unknown_index() || forward == 0 {
            return forward;
        }
        match self.inverse {
            InverseRelations::Distinct => forward + self.forward_count,
            InverseRelations::Shared => forward,
        }
    }
}

/// `A` (n×n, symmetric, unit diagonal) and `Q` as a map from ordered pair to the
/// relation types present on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    n: usize,
    adjacency: Vec<bool>,
    relations: BTreeMap<(usize, usize), Vec<usize>>,
}

impl DependencyGraph {
    /// `heads` are 1-based (0 = root); `rels[i]` is the type of token `i`'s arc to its
    /// head (ignored for the root).
    pub fn from_arcs(heads: &[usize], rels: &[Option<usize>], vocab: &RelationVocabulary) -> Result<Self> {
        let n = heads.len();
        if n == 0 || rels.len() != n {
            return Err(Error::Invalid(format!(
                "graph needs matching non-empty heads/rels, got {} and {}",
                n,
                rels.len()
            )));
        }
        let mut g = DependencyGraph {
            n,
            adjacency: vec![false; n * n],
            relations: BTreeMap::new(),
        };
        for i in 0..n {
            g.add(i, i, vocab.self_index());
        }
        for (i, (&h, rel)) in heads.iter().zip(rels).enumerate() {
            if h == 0 {
                continue;
            }
            if h > n || h == i + 1 {
                return Err(Error::Invalid(format!("invalid head {h} for token {}", i + 1)));
            }
            let k = rel.unwrap_or_else(|| vocab.unknown_index());
            if k >= vocab.table_rows() {
                return Err(Error::Invalid(format!("relation index {k} out of range")));
            }
            g.add(i, h - 1, k);
            g.add(h - 1, i, vocab.inverse_of(k));
        }
        Ok(g)
    }

    pub fn from_encoded(sentence: &EncodedSentence, vocab: &RelationVocabulary) -> Result<Self> {
        Self::from_arcs(&sentence.heads, &sentence.rels, vocab)
    }

    fn add(&mut self, i: usize, j: usize, k: usize) {
        self.adjacency[i * self.n + j] = true;
        self.adjacency[j * self.n + i] = true;
        let set = self.relations.entry((i, j)).or_default();
        if !set.contains(&k) {
            set.push(k);
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// `A` as a dense 0/1 matrix.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.adjacent(i, j) as u8).collect())
            .collect()
    }

    /// Relation types `k` with `Q_ijk = 1`, in the order they were added.
    pub fn relations(&self, i: usize, j: usize) -> &[usize] {
        self.relations.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// Every `(i, j, k)` with `Q_ijk = 1`, ordered by `i`, then `j`, then insertion.
    pub fn typed_edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.relations
            .iter()
            .flat_map(|(&(i, j), ks)| ks.iter().map(move |&k| (i, j, k)))
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.adjacent(i, j)).count()
    }

    /// Per-node scale applied to aggregated neighbour messages.
    pub fn node_scale(&self, norm: AdjacencyNorm) -> Vec<f64> {
        (0..self.n)
            .map(|i| match norm {
                AdjacencyNorm::None => 1.0,
                AdjacencyNorm::Row => 1.0 / self.degree(i) as f64,
            })
            .collect()
    }

    /// Copy with every relation index remapped through `perm` (`k → perm[k]`).
    pub fn with_relations_permuted(&self, perm: &[usize]) -> Self {
        let relations = self
            .relations
            .iter()
            .map(|(&pair, ks)| (pair, ks.iter().map(|&k| perm[k]).collect()))
            .collect();
        Self {
            n: self.n,
            adjacency: self.adjacency.clone(),
            relations,
        }
    }
}

/// Builds the graph for a record; labels unseen by `vocab` map to the unknown type.
pub fn build_graph(record: &SentenceRecord, vocab: &RelationVocabulary) -> Result<DependencyGraph> {
    let rels: Vec<Option<usize>> = record
        .heads
        .iter()
        .zip(&record.deprels)
        .map(|(&h, d)| {
            (h != 0).then(|| {
                let k = vocab.lookup(d);
                if k == vocab.unknown_index() {
                    log::warn!("unknown relation label `{d}` mapped to {UNKNOWN_RELATION}");
                }
                k
            })
        })
        .collect();
    DependencyGraph::from_arcs(&record.heads, &rels, vocab)
}

pub fn build_relation_vocab(records: &[SentenceRecord], inverse: InverseRelations) -> RelationVocabulary {
    RelationVocabulary::build(records, inverse)
}
