//! Forward computation on a [`Tape`]: encoder, task heads, opinion-weighted sentiment
//! attention, and message passing between rounds.

use rand::Rng;

use super::config::{MessagePassing, ModelConfig};
use super::state::{Layer, ModelState};
use crate::corpus::{AeTag, EncodedSentence, Polarity};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyNorm, DependencyGraph};
use crate::numerics::{Float, ParamId, Tape, Tensor, Var};

fn affine<T: Float>(tape: &mut Tape<'_, T>, x: Var, layer: Layer) -> Result<Var> {
    let (w, b) = (tape.param(layer.weight), tape.param(layer.bias));
    tape.linear(x, w, Some(b))
}

fn affine_relu<T: Float>(tape: &mut Tape<'_, T>, x: Var, layer: Layer) -> Result<Var> {
    let y = affine(tape, x, layer)?;
    Ok(tape.relu(y))
}

fn dropout<T: Float, R: Rng + ?Sized>(tape: &mut Tape<'_, T>, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = (0..tape.value(x).len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    tape.mul_const(x, mask)
}

/// `h'_i = ReLU(Σ_j A_ij (W_g h_j + b_g))`.
pub fn vanilla_gcn_layer<T: Float>(
    tape: &mut Tape<'_, T>,
    h: Var,
    graph: &DependencyGraph,
    layer: Layer,
    norm: AdjacencyNorm,
) -> Result<Var> {
    let n = graph.len();
    if tape.value(h).rows() != n {
        return Err(Error::shape("vanilla_gcn_layer", tape.value(h).shape(), &[n]));
    }
    let scale = graph.node_scale(norm);
    let mut a = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if graph.adjacent(i, j) {
                a.data_mut()[i * n + j] = T::of(scale[i]);
            }
        }
    }
    let msg = affine(tape, h, layer)?;
    let a = tape.input(a);
    let agg = tape.matmul(a, msg)?;
    Ok(tape.relu(agg))
}

/// `h'_i = ReLU(Σ_j Σ_k Q_ijk (W_r [h_j; R[k]] + b_r))`.
///
/// Evaluated edge by edge in [`DependencyGraph::typed_edges`] order, so the result does
/// not depend on how relation types are numbered.
pub fn dregcn_layer<T: Float>(
    tape: &mut Tape<'_, T>,
    h: Var,
    graph: &DependencyGraph,
    relations: ParamId,
    layer: Layer,
    norm: AdjacencyNorm,
) -> Result<Var> {
    let n = graph.len();
    if tape.value(h).rows() != n {
        return Err(Error::shape("dregcn_layer", tape.value(h).shape(), &[n]));
    }
    let table_rows = tape.params().get(relations).rows();
    let scale = graph.node_scale(norm);
    let (mut targets, mut sources, mut types) = (Vec::new(), Vec::new(), Vec::new());
    for (i, j, k) in graph.typed_edges() {
        if k >= table_rows {
            return Err(Error::Invalid(format!(
                "relation index {k} out of range for {table_rows} relation types"
            )));
        }
        targets.push(i);
        sources.push(j);
        types.push(k);
    }
    let weights = match norm {
        AdjacencyNorm::None => None,
        AdjacencyNorm::Row => Some(targets.iter().map(|&i| T::of(scale[i])).collect()),
    };
    let neighbours = tape.gather(h, &sources)?;
    let rel = tape.gather_param(relations, &types)?;
    let x = tape.concat_cols(&[neighbours, rel])?;
    let msg = affine(tape, x, layer)?;
    let agg = tape.scatter_rows(msg, &targets, n, weights)?;
    Ok(tape.relu(agg))
}

/// Word vectors (general ⊕ domain) → CNN layers → graph layers → projection to `d`.
pub fn encode<T: Float, R: Rng + ?Sized>(
    tape: &mut Tape<'_, T>,
    state: &ModelState<T>,
    sentence: &EncodedSentence,
    graph: &DependencyGraph,
    mut rng: Option<&mut R>,
) -> Result<Var> {
    let config = &state.config;
    let ids = state.ids();
    if graph.len() != sentence.len() {
        return Err(Error::shape("encode", &[sentence.len()], &[graph.len()]));
    }
    let mut x = tape.gather_param(ids.embed_general, &sentence.tokens)?;
    if let Some(domain) = ids.embed_domain {
        let d = tape.gather_param(domain, &sentence.tokens)?;
        x = tape.concat_cols(&[x, d])?;
    }
    x = dropout(tape, x, config.embedding_dropout, rng.as_deref_mut())?;

    for layer in &ids.cnn {
        let kernel = tape.param(layer.weight);
        let bias = tape.param(layer.bias);
        let conv = tape.conv1d(x, kernel)?;
        let conv = tape.add_row(conv, bias)?;
        x = tape.relu(conv);
    }
    if config.encoder.has_graph() {
        if let Some(layer) = ids.encoder_in {
            x = affine(tape, x, layer)?;
        }
        for &layer in &ids.graph {
            x = match ids.relations {
                Some(rel) => dregcn_layer(tape, x, graph, rel, layer, config.adjacency_norm)?,
                None => vanilla_gcn_layer(tape, x, graph, layer, config.adjacency_norm)?,
            };
        }
    }
    let h = affine(tape, x, ids.encoder_out)?;
    dropout(tape, h, config.hidden_dropout, rng)
}

/// Task-specific representations and the extraction distribution.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    pub h_ae: Var,
    pub y_ae: Var,
    pub h_as: Var,
}

pub fn task_heads<T: Float>(tape: &mut Tape<'_, T>, state: &ModelState<T>, h_s: Var) -> Result<Heads> {
    let ids = state.ids();
    let h_ae = affine_relu(tape, h_s, ids.ae_hidden)?;
    let logits = affine(tape, h_ae, ids.ae_out)?;
    let y_ae = tape.softmax_rows(logits)?;
    let h_as = affine_relu(tape, h_s, ids.as_hidden)?;
    Ok(Heads { h_ae, y_ae, h_as })
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// `S` after masking the diagonal; absent when attention is off or `n = 1`.
    pub scores: Option<Var>,
    /// `M = softmax_rows(S)`.
    pub weights: Option<Var>,
    /// Opinion mass `P^op_j`, shaped `1×n`.
    pub opinion_mass: Option<Var>,
    /// `h'^as_i = Σ_j M_ij h^as_j`; zero when attention is off or `n = 1`.
    pub context: Var,
    pub y_as: Var,
}

/// Opinion mass from extraction distributions: `P^op_j = ŷ_j[BP] + ŷ_j[IP]`.
pub fn opinion_mass<T: Float>(tape: &mut Tape<'_, T>, y_ae: Var) -> Result<Var> {
    let n = tape.value(y_ae).rows();
    let mut select = Tensor::zeros(&[AeTag::COUNT, 1]);
    select.data_mut()[AeTag::BP.index()] = T::one();
    select.data_mut()[AeTag::IP.index()] = T::one();
    let select = tape.input(select);
    let col = tape.matmul(y_ae, select)?;
    tape.reshape(col, &[1, n])
}

/// `1/|i-j|` off the diagonal, 0 on it.
pub fn distance_factors<T: Float>(n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i * n + j] = T::one() / T::of(i.abs_diff(j) as f64);
            }
        }
    }
    out
}

/// `S_ij = (h_i W_s h_jᵀ) · 1/|i-j| · P^op_j` for `i ≠ j`, `S_ii = -inf`; then
/// `M = softmax_rows(S)`, context `M · h^as`, and the sentiment distribution from
/// `[h^as; context]`.
pub fn opinion_attention<T: Float>(
    tape: &mut Tape<'_, T>,
    state: &ModelState<T>,
    h_as: Var,
    y_ae: Var,
    enabled: bool,
) -> Result<Attention> {
    let ids = state.ids();
    let (n, d) = (tape.value(h_as).rows(), tape.value(h_as).cols());
    let (scores, weights, opinion, context) = if enabled && n >= 2 {
        let p_op = opinion_mass(tape, y_ae)?;
        let ws = tape.param(ids.attention);
        let proj = tape.matmul(h_as, ws)?;
        let bilinear = tape.matmul_nt(proj, h_as)?;
        let scaled = tape.mul_const(bilinear, distance_factors(n))?;
        let weighted = tape.mul_row(scaled, p_op)?;
        let diag = (0..n * n).map(|e| e / n == e % n).collect();
        let s = tape.mask_fill(weighted, diag)?;
        let m = tape.softmax_rows(s)?;
        let ctx = tape.matmul(m, h_as)?;
        (Some(s), Some(m), Some(p_op), ctx)
    } else {
        (None, None, None, tape.input(Tensor::zeros(&[n, d])))
    };
    let joined = tape.concat_cols(&[h_as, context])?;
    let logits = affine(tape, joined, ids.as_out)?;
    let y_as = tape.softmax_rows(logits)?;
    Ok(Attention {
        scores,
        weights,
        opinion_mass: opinion,
        context,
        y_as,
    })
}

/// Re-encodes the shared representation from the previous round.
pub fn message_pass<T: Float>(
    tape: &mut Tape<'_, T>,
    state: &ModelState<T>,
    h_s: Var,
    heads: &Heads,
    y_as: Var,
) -> Result<Var> {
    let mode = state.config.message_passing;
    let inputs = match mode {
        MessagePassing::None => return Ok(h_s),
        MessagePassing::Representations => [h_s, heads.h_ae, heads.h_as],
        MessagePassing::Predictions => [h_s, heads.y_ae, y_as],
    };
    let layer = state
        .ids()
        .reencoder
        .ok_or_else(|| Error::Invalid(format!("message passing `{mode}` has no re-encoder")))?;
    let joined = tape.concat_cols(&inputs)?;
    let expected = tape.params().get(layer.weight).cols();
    if tape.value(joined).cols() != expected {
        return Err(Error::shape("message_pass", tape.value(joined).shape(), &[expected]));
    }
    affine_relu(tape, joined, layer)
}

#[derive(Clone, Copy, Debug)]
pub struct RoundVars {
    pub h_s: Var,
    pub heads: Heads,
    pub attention: Attention,
}

/// Tape handles for every round `0..=T`.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub rounds: Vec<RoundVars>,
}

impl ForwardVars {
    pub fn last(&self) -> &RoundVars {
        self.rounds.last().expect("at least one round")
    }
}

/// Encodes once, then for `t = 0..=T` runs the heads and attention, passing messages
/// between rounds. Dropout is applied only when `rng` is given.
pub fn forward<T: Float, R: Rng + ?Sized>(
    tape: &mut Tape<'_, T>,
    state: &ModelState<T>,
    sentence: &EncodedSentence,
    graph: &DependencyGraph,
    rng: Option<&mut R>,
) -> Result<ForwardVars> {
    let config: &ModelConfig = &state.config;
    let mut h_s = encode(tape, state, sentence, graph, rng)?;
    let mut rounds = Vec::with_capacity(config.rounds + 1);
    for t in 0..=config.rounds {
        let heads = task_heads(tape, state, h_s)?;
        let attention = opinion_attention(tape, state, heads.h_as, heads.y_ae, config.opinion_passing)?;
        rounds.push(RoundVars { h_s, heads, attention });
        if t < config.rounds {
            h_s = message_pass(tape, state, h_s, &heads, attention.y_as)?;
        }
    }
    Ok(ForwardVars { rounds })
}

/// Materialised values of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace<T> {
    pub h_s: Tensor<T>,
    pub h_ae: Tensor<T>,
    pub h_as: Tensor<T>,
    pub y_ae: Tensor<T>,
    pub y_as: Tensor<T>,
    pub scores: Option<Tensor<T>>,
    pub attention: Option<Tensor<T>>,
    pub opinion_mass: Option<Tensor<T>>,
    pub context: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub rounds: Vec<RoundTrace<T>>,
}

impl<T: Float> ForwardTrace<T> {
    pub fn from_tape(tape: &Tape<'_, T>, vars: &ForwardVars) -> Self {
        let get = |v: Var| tape.value(v).clone();
        let rounds = vars
            .rounds
            .iter()
            .map(|r| RoundTrace {
                h_s: get(r.h_s),
                h_ae: get(r.heads.h_ae),
                h_as: get(r.heads.h_as),
                y_ae: get(r.heads.y_ae),
                y_as: get(r.attention.y_as),
                scores: r.attention.scores.map(get),
                attention: r.attention.weights.map(get),
                opinion_mass: r.attention.opinion_mass.map(get),
                context: get(r.attention.context),
            })
            .collect();
        Self { rounds }
    }

    pub fn last(&self) -> &RoundTrace<T> {
        self.rounds.last().expect("at least one round")
    }
}

/// Inference-mode forward pass returning the full trace.
pub fn run<T: Float>(state: &ModelState<T>, sentence: &EncodedSentence, graph: &DependencyGraph) -> Result<ForwardTrace<T>> {
    let mut tape = Tape::new(&state.params);
    let vars = forward::<T, rand_chacha::ChaCha8Rng>(&mut tape, state, sentence, graph, None)?;
    Ok(ForwardTrace::from_tape(&tape, &vars))
}

/// Argmax extraction tags and per-token polarities from the final round.
pub fn decode_outputs<T: Float>(trace: &ForwardTrace<T>) -> (Vec<AeTag>, Vec<Polarity>) {
    let last = trace.last();
    let argmax = |t: &Tensor<T>, i: usize| {
        t.row(i)
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0
    };
    let n = last.y_ae.rows();
    let tags = (0..n)
        .map(|i| AeTag::from_index(argmax(&last.y_ae, i)).expect("5 classes"))
        .collect();
    let pols = (0..n)
        .map(|i| Polarity::from_index(argmax(&last.y_as, i)).expect("3 classes"))
        .collect();
    (tags, pols)
}
