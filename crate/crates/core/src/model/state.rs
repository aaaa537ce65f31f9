use rand::Rng;

use super::config::{MessagePassing, ModelConfig};
use crate::corpus::{random_embeddings, EmbeddingTable, Polarity, AeTag, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Float, ParamId, ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Handles into [`ModelState::params`] for every component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamIds {
    pub embed_general: ParamId,
    pub embed_domain: Option<ParamId>,
    pub cnn: Vec<Layer>,
    pub encoder_in: Option<Layer>,
    /// Graph layers: `d×d` (untyped) or `d×(d+m)` (typed) weights.
    pub graph: Vec<Layer>,
    pub relations: Option<ParamId>,
    pub encoder_out: Layer,
    pub ae_hidden: Layer,
    pub ae_out: Layer,
    pub as_hidden: Layer,
    pub attention: ParamId,
    pub as_out: Layer,
    pub reencoder: Option<Layer>,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Embedding,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

fn affine(specs: &mut Vec<ParamSpec>, prefix: &str, out: usize, inp: usize) {
    specs.push(spec(
        format!("{prefix}.weight"),
        &[out, inp],
        Init::Glorot { fan_in: inp, fan_out: out },
    ));
    specs.push(spec(format!("{prefix}.bias"), &[out], Init::Zeros));
}

/// Every parameter's name, shape and initialiser, in registration order.
fn layout(config: &ModelConfig, vocab_len: usize, relation_rows: usize) -> Vec<ParamSpec> {
    let d = config.hidden;
    let mut specs = vec![spec("embed.general", &[vocab_len, config.general_dim], Init::Embedding)];
    if config.domain_embeddings {
        specs.push(spec("embed.domain", &[vocab_len, config.domain_dim], Init::Embedding));
    }
    let mut width = config.embedding_dim();
    if config.encoder.has_cnn() {
        for (l, &w) in config.cnn_windows.iter().enumerate() {
            specs.push(spec(
                format!("cnn.{l}.kernel"),
                &[w, width, d],
                Init::Glorot { fan_in: w * width, fan_out: w * d },
            ));
            specs.push(spec(format!("cnn.{l}.bias"), &[d], Init::Zeros));
            width = d;
        }
    }
    if config.encoder.has_graph() {
        if width != d {
            affine(&mut specs, "encoder.input", d, width);
            width = d;
        }
        let typed = config.encoder.typed_edges();
        for l in 0..config.gcn_layers {
            let inp = if typed { d + config.relation_dim } else { d };
            affine(&mut specs, &format!("graph.{l}"), d, inp);
        }
        if typed {
            specs.push(spec(
                "relations",
                &[relation_rows, config.relation_dim],
                Init::Glorot { fan_in: relation_rows, fan_out: config.relation_dim },
            ));
        }
    }
    affine(&mut specs, "encoder.output", d, width);
    affine(&mut specs, "ae.hidden", d, d);
    affine(&mut specs, "ae.output", AeTag::COUNT, d);
    affine(&mut specs, "as.hidden", d, d);
    specs.push(spec("as.attention", &[d, d], Init::Glorot { fan_in: d, fan_out: d }));
    affine(&mut specs, "as.output", Polarity::COUNT, 2 * d);
    match config.message_passing {
        MessagePassing::None => {}
        MessagePassing::Representations => affine(&mut specs, "reencoder", d, 3 * d),
        MessagePassing::Predictions => {
            affine(&mut specs, "reencoder", d, d + AeTag::COUNT + Polarity::COUNT)
        }
    }
    specs
}

/// All trainable parameters plus the configuration that fixes their shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    ids: ParamIds,
    relation_rows: usize,
}

impl<T: Float> ModelState<T> {
    /// Fresh parameters. Pretrained tables are copied in when given; otherwise the
    /// tables are randomly initialised.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        vocab: &Vocabulary,
        general: Option<EmbeddingTable<T>>,
        domain: Option<EmbeddingTable<T>>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let relation_rows = vocab.relations().table_rows();
        let mut params = ParamSet::new();
        for s in layout(&config, vocab.len(), relation_rows) {
            let pretrained = match s.name.as_str() {
                "embed.general" => general.as_ref(),
                "embed.domain" => domain.as_ref(),
                _ => None,
            };
            let value = match (s.init, pretrained) {
                (Init::Embedding, Some(table)) => {
                    if table.matrix.shape() != s.shape.as_slice() {
                        return Err(Error::shape("embedding table", table.matrix.shape(), &s.shape));
                    }
                    table.matrix.clone()
                }
                (Init::Embedding, None) => random_embeddings(s.shape[0], s.shape[1], rng).matrix,
                (Init::Glorot { fan_in, fan_out }, _) => glorot_uniform(&s.shape, fan_in, fan_out, rng),
                (Init::Zeros, _) => Tensor::zeros(&s.shape),
            };
            params.insert(&s.name, value)?;
        }
        Self::from_params(config, params, relation_rows)
    }

    /// Wraps existing parameters, checking names and shapes against the configuration.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>, relation_rows: usize) -> Result<Self> {
        config.validate()?;
        let vocab_len = params
            .by_name("embed.general")
            .ok_or_else(|| Error::Invalid("missing parameter `embed.general`".into()))?
            .rows();
        let expected = layout(&config, vocab_len, relation_rows);
        if expected.len() != params.len() {
            return Err(Error::Invalid(format!(
                "configuration needs {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for s in &expected {
            let t = params
                .by_name(&s.name)
                .ok_or_else(|| Error::Invalid(format!("missing parameter `{}`", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::shape("parameter layout", t.shape(), &s.shape));
            }
        }
        let id = |name: &str| params.id(name).expect("checked above");
        let layer = |prefix: &str| Layer {
            weight: id(&format!("{prefix}.weight")),
            bias: id(&format!("{prefix}.bias")),
        };
        let has = |name: &str| params.id(name).is_some();
        let ids = ParamIds {
            embed_general: id("embed.general"),
            embed_domain: params.id("embed.domain"),
            cnn: (0..config.cnn_windows.len())
                .take_while(|l| has(&format!("cnn.{l}.kernel")))
                .map(|l| Layer {
                    weight: id(&format!("cnn.{l}.kernel")),
                    bias: id(&format!("cnn.{l}.bias")),
                })
                .collect(),
            encoder_in: has("encoder.input.weight").then(|| layer("encoder.input")),
            graph: (0..config.gcn_layers)
                .take_while(|l| has(&format!("graph.{l}.weight")))
                .map(|l| layer(&format!("graph.{l}")))
                .collect(),
            relations: params.id("relations"),
            encoder_out: layer("encoder.output"),
            ae_hidden: layer("ae.hidden"),
            ae_out: layer("ae.output"),
            as_hidden: layer("as.hidden"),
            attention: id("as.attention"),
            as_out: layer("as.output"),
            reencoder: has("reencoder.weight").then(|| layer("reencoder")),
        };
        Ok(Self {
            config,
            params,
            ids,
            relation_rows,
        })
    }

    pub fn ids(&self) -> &ParamIds {
        &self.ids
    }

    /// Rows of the relation table (relation types plus the unknown row).
    pub fn relation_rows(&self) -> usize {
        self.relation_rows
    }

    pub fn vocab_len(&self) -> usize {
        self.params.get(self.ids.embed_general).rows()
    }

    /// Same parameters in another precision.
    pub fn cast<U: Float>(&self) -> ModelState<U> {
        let mut params = ParamSet::new();
        for (_, name, t) in self.params.iter() {
            let data = t.data().iter().map(|x| U::of(x.as_f64())).collect();
            params
                .insert(name, Tensor::new(t.shape().to_vec(), data).expect("same shape"))
                .expect("unique names");
        }
        let mut config = self.config.clone();
        config.precision = U::PRECISION;
        ModelState::from_params(config, params, self.relation_rows).expect("same layout")
    }
}
