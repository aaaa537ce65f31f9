use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyNorm, InverseRelations};
use crate::numerics::Precision;

/// Which layers produce the shared representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    #[serde(rename = "cnn")]
    Cnn,
    /// Unlabelled graph convolution over `A`.
    #[serde(rename = "gcn")]
    Gcn,
    /// Graph convolution with relation-type embeddings.
    #[serde(rename = "dregcn")]
    DreGcn,
    /// CNN n-gram layers feeding the relation-typed graph convolution.
    #[serde(rename = "dregcn+cnn")]
    DreGcnCnn,
}

impl EncoderKind {
    pub fn has_cnn(self) -> bool {
        matches!(self, EncoderKind::Cnn | EncoderKind::DreGcnCnn)
    }

    pub fn has_graph(self) -> bool {
        !matches!(self, EncoderKind::Cnn)
    }

    pub fn typed_edges(self) -> bool {
        matches!(self, EncoderKind::DreGcn | EncoderKind::DreGcnCnn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::Gcn => "gcn",
            EncoderKind::DreGcn => "dregcn",
            EncoderKind::DreGcnCnn => "dregcn+cnn",
        }
    }
}

/// What the re-encoder consumes between rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessagePassing {
    None,
    /// `[h^s; ŷ^ae; ŷ^as]`
    Predictions,
    /// `[h^s; h^ae; h^as]`
    Representations,
}

impl MessagePassing {
    pub fn as_str(self) -> &'static str {
        match self {
            MessagePassing::None => "none",
            MessagePassing::Predictions => "predictions",
            MessagePassing::Representations => "representations",
        }
    }
}

macro_rules! parse_by_name {
    ($ty:ty, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::Invalid(format!(
                        "`{s}` is not one of {}",
                        [$($v.as_str()),+].join(", ")
                    )))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_by_name!(EncoderKind, [EncoderKind::Cnn, EncoderKind::Gcn, EncoderKind::DreGcn, EncoderKind::DreGcnCnn]);
parse_by_name!(
    MessagePassing,
    [MessagePassing::None, MessagePassing::Predictions, MessagePassing::Representations]
);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared hidden size `d`.
    pub hidden: usize,
    /// Relation embedding size `m`.
    pub relation_dim: usize,
    /// Message-passing rounds `T`.
    pub rounds: usize,
    /// One CNN layer per window, each mapping to `hidden` channels.
    pub cnn_windows: Vec<usize>,
    pub gcn_layers: usize,
    pub encoder: EncoderKind,
    pub message_passing: MessagePassing,
    pub opinion_passing: bool,
    pub general_dim: usize,
    pub domain_embeddings: bool,
    pub domain_dim: usize,
    pub embedding_dropout: f64,
    pub hidden_dropout: f64,
    pub inverse_relations: InverseRelations,
    pub adjacency_norm: AdjacencyNorm,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            relation_dim: 50,
            rounds: 2,
            cnn_windows: vec![3, 5],
            gcn_layers: 2,
            encoder: EncoderKind::DreGcnCnn,
            message_passing: MessagePassing::Representations,
            opinion_passing: true,
            general_dim: 300,
            domain_embeddings: true,
            domain_dim: 100,
            embedding_dropout: 0.5,
            hidden_dropout: 0.3,
            inverse_relations: InverseRelations::Distinct,
            adjacency_norm: AdjacencyNorm::None,
            precision: Precision::Standard,
        }
    }
}

/// Names of the ablation rows, in order.
pub const ABLATION_ROWS: [&str; 6] = [
    "CNN",
    "Vanilla GCN",
    "Relation-typed GCN",
    "+Opinion-passing",
    "+Message-passing predictions",
    "+Message-passing representations",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("relation_dim", self.relation_dim),
            ("rounds", self.rounds),
            ("general_dim", self.general_dim),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("`{k}` must be positive")));
        }
        if self.domain_embeddings && self.domain_dim == 0 {
            return Err(Error::Invalid("`domain_dim` must be positive".into()));
        }
        if self.encoder.has_cnn() && self.cnn_windows.is_empty() {
            return Err(Error::Invalid(format!(
                "encoder `{}` needs at least one CNN window",
                self.encoder
            )));
        }
        if let Some(w) = self.cnn_windows.iter().find(|&&w| w % 2 == 0 || w == 0) {
            return Err(Error::Invalid(format!("CNN windows must be odd, got {w}")));
        }
        if self.encoder.has_graph() && self.gcn_layers == 0 {
            return Err(Error::Invalid(format!(
                "encoder `{}` needs at least one graph layer",
                self.encoder
            )));
        }
        for (k, p) in [
            ("embedding_dropout", self.embedding_dropout),
            ("hidden_dropout", self.hidden_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Invalid(format!("`{k}` must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.general_dim + if self.domain_embeddings { self.domain_dim } else { 0 }
    }

    /// Configuration for one ablation row (0–5). Rows 0–2 swap the encoder with both
    /// interaction mechanisms off; rows 3–5 add opinion passing and then each kind of
    /// message passing on top of the full encoder.
    pub fn ablation(row: usize) -> Result<Self> {
        let base = Self::default();
        let (encoder, opinion_passing, message_passing) = match row {
            0 => (EncoderKind::Cnn, false, MessagePassing::None),
            1 => (EncoderKind::Gcn, false, MessagePassing::None),
            2 => (EncoderKind::DreGcnCnn, false, MessagePassing::None),
            3 => (EncoderKind::DreGcnCnn, true, MessagePassing::None),
            4 => (EncoderKind::DreGcnCnn, true, MessagePassing::Predictions),
            5 => (EncoderKind::DreGcnCnn, true, MessagePassing::Representations),
            _ => return Err(Error::Invalid(format!("ablation row must be 0..=5, got {row}"))),
        };
        Ok(Self {
            encoder,
            opinion_passing,
            message_passing,
            ..base
        })
    }

    /// Inverse of [`ModelConfig::ablation`] on the three switched fields.
    pub fn ablation_row(&self) -> Option<usize> {
        (0..6).find(|&r| {
            let a = Self::ablation(r).expect("row in range");
            a.encoder == self.encoder
                && a.opinion_passing == self.opinion_passing
                && a.message_passing == self.message_passing
        })
    }
}
