//! Masked joint loss, dev splitting, mini-batch Adam with early stopping, and the
//! whole-model gradient check.

use std::io::Write;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode_sentence, AeTag, EncodedSentence, Polarity, SentenceRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, MetricsReport};
use crate::exec::ExecMode;
use crate::graph::{build_graph, DependencyGraph};
use crate::model::{forward, ForwardTrace, ForwardVars, ModelConfig, ModelState};
use crate::numerics::{
    cross_entropy, grad_check, AdamConfig, AdamState, Evaluation, Float, GradCheckOptions, GradCheckReport,
    Gradients, Tape, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping; 0 stops at the first one.
    pub patience: usize,
    pub dev_fraction: f64,
    pub seed: u64,
    pub exec: ExecMode,
    /// Rescales the batch gradient to this L2 norm when exceeded.
    pub grad_clip: Option<f64>,
    /// Stops as soon as dev F1-I reaches this value.
    pub target_dev_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 50,
            max_epochs: 80,
            patience: 15,
            dev_fraction: 0.2,
            seed: 1,
            exec: ExecMode::default(),
            grad_clip: None,
            target_dev_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::Invalid(format!(
                "`dev_fraction` must be in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("`batch_size` must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid("`learning_rate` must be positive".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Invalid("`grad_clip` must be positive".into()));
        }
        Ok(())
    }
}

/// Loss split into its two terms. For a batch these are means over sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ae: f64,
    #[serde(rename = "as")]
    pub as_: f64,
    /// Tokens scored by the extraction term.
    pub ae_tokens: usize,
    /// Gold aspect tokens scored by the sentiment term.
    pub as_tokens: usize,
}

impl LossBreakdown {
    /// Mean of per-sentence losses; token counts are summed.
    pub fn mean(parts: &[LossBreakdown]) -> LossBreakdown {
        let k = parts.len().max(1) as f64;
        let mut out = LossBreakdown::default();
        for p in parts {
            out.ae += p.ae;
            out.as_ += p.as_;
            out.ae_tokens += p.ae_tokens;
            out.as_tokens += p.as_tokens;
        }
        out.ae /= k;
        out.as_ /= k;
        out.total = out.ae + out.as_;
        out
    }
}

/// A sentence ready for the network.
#[derive(Clone, Debug)]
pub struct Example {
    pub record: SentenceRecord,
    pub sentence: EncodedSentence,
    pub graph: DependencyGraph,
}

pub fn prepare(records: &[SentenceRecord], vocab: &Vocabulary) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            Ok(Example {
                record: r.clone(),
                sentence: encode_sentence(r, vocab),
                graph: build_graph(r, vocab.relations())?,
            })
        })
        .collect()
}

/// Per-sentence loss on already computed final-round distributions: token-mean
/// cross-entropy over every extraction tag plus, on gold aspect tokens only, the
/// sentiment cross-entropy (also divided by the sentence length).
pub fn joint_loss<T: Float>(trace: &ForwardTrace<T>, sentence: &EncodedSentence) -> Result<LossBreakdown> {
    let last = trace.last();
    let n = sentence.len();
    if last.y_ae.rows() != n || last.y_as.rows() != n {
        return Err(Error::shape("joint_loss", &[last.y_ae.rows()], &[n]));
    }
    let mut out = LossBreakdown {
        ae_tokens: n,
        ..Default::default()
    };
    for i in 0..n {
        out.ae += cross_entropy(last.y_ae.row(i), sentence.ae[i])?.as_f64();
        if let (true, Some(p)) = (sentence.aspect_mask[i], sentence.polarity[i]) {
            out.as_ += cross_entropy(last.y_as.row(i), p)?.as_f64();
            out.as_tokens += 1;
        }
    }
    out.ae /= n as f64;
    out.as_ /= n as f64;
    out.total = out.ae + out.as_;
    Ok(out)
}

/// Tape handles for the two loss terms and their sum.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub ae: Var,
    pub as_: Var,
}

pub fn joint_loss_vars<T: Float>(
    tape: &mut Tape<'_, T>,
    vars: &ForwardVars,
    sentence: &EncodedSentence,
) -> Result<LossVars> {
    let n = sentence.len();
    let last = vars.last();
    let w = vec![T::one() / T::of(n as f64); n];
    let ae_targets: Vec<Option<usize>> = sentence.ae.iter().map(|&t| Some(t)).collect();
    let as_targets: Vec<Option<usize>> = sentence
        .polarity
        .iter()
        .zip(&sentence.aspect_mask)
        .map(|(&p, &m)| if m { p } else { None })
        .collect();
    if ae_targets.iter().flatten().any(|&t| t >= AeTag::COUNT)
        || as_targets.iter().flatten().any(|&t| t >= Polarity::COUNT)
    {
        return Err(Error::Invalid("gold label index out of range".into()));
    }
    let ae = tape.cross_entropy_rows(last.heads.y_ae, &ae_targets, &w)?;
    let as_ = tape.cross_entropy_rows(last.attention.y_as, &as_targets, &w)?;
    let total = tape.add(ae, as_)?;
    Ok(LossVars { total, ae, as_ })
}

fn breakdown<T: Float>(tape: &Tape<'_, T>, loss: LossVars, sentence: &EncodedSentence) -> LossBreakdown {
    let get = |v: Var| tape.value(v).data()[0].as_f64();
    LossBreakdown {
        total: get(loss.total),
        ae: get(loss.ae),
        as_: get(loss.as_),
        ae_tokens: sentence.len(),
        as_tokens: sentence
            .aspect_mask
            .iter()
            .zip(&sentence.polarity)
            .filter(|(&m, p)| m && p.is_some())
            .count(),
    }
}

/// Loss and gradients for one sentence, with the backward seed set to `weight`
/// (`1/B` inside a batch). Dropout is active when `rng` is given.
pub fn sentence_gradients<T: Float>(
    state: &ModelState<T>,
    example: &Example,
    rng: Option<&mut ChaCha8Rng>,
    weight: T,
) -> Result<(LossBreakdown, Gradients<T>)> {
    let mut tape = Tape::new(&state.params);
    let vars = forward(&mut tape, state, &example.sentence, &example.graph, rng)?;
    let loss = joint_loss_vars(&mut tape, &vars, &example.sentence)?;
    let grads = tape.backward_scaled(loss.total, weight)?;
    Ok((breakdown(&tape, loss, &example.sentence), grads))
}

/// Loss without dropout or gradients.
pub fn sentence_loss<T: Float>(state: &ModelState<T>, example: &Example) -> Result<LossBreakdown> {
    let mut tape = Tape::new(&state.params);
    let vars = forward::<T, ChaCha8Rng>(&mut tape, state, &example.sentence, &example.graph, None)?;
    let loss = joint_loss_vars(&mut tape, &vars, &example.sentence)?;
    Ok(breakdown(&tape, loss, &example.sentence))
}

pub fn corpus_loss<T: Float>(state: &ModelState<T>, examples: &[Example], exec: ExecMode) -> Result<LossBreakdown> {
    let parts = exec.try_map(examples, |_, e| sentence_loss(state, e))?;
    Ok(LossBreakdown::mean(&parts))
}

/// Batch-mean loss and gradient. Sentences run independently (optionally in
/// parallel); gradients are summed in batch order so the result does not depend on
/// the execution mode. `dropout_seed` of `None` disables dropout.
pub fn batch_gradients<T: Float>(
    state: &ModelState<T>,
    batch: &[&Example],
    dropout_seed: Option<u64>,
    exec: ExecMode,
) -> Result<(LossBreakdown, Gradients<T>)> {
    let weight = T::one() / T::of(batch.len() as f64);
    let parts = exec.try_map(batch, |i, e| {
        let mut rng = dropout_seed.map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            r.set_stream(i as u64);
            r
        });
        sentence_gradients(state, e, rng.as_mut(), weight)
    })?;
    let mut grads = Gradients::new(state.params.len());
    let mut losses = Vec::with_capacity(parts.len());
    for (loss, g) in &parts {
        grads.merge(g);
        losses.push(*loss);
    }
    Ok((LossBreakdown::mean(&losses), grads))
}

/// Seeded shuffle split; the dev side gets `round(len * fraction)` records, at least
/// one, and the train side keeps at least one.
pub fn split_dev(
    records: &[SentenceRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<SentenceRecord>, Vec<SentenceRecord>)> {
    if records.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 records to split off a dev set, got {}",
            records.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Invalid(format!("dev fraction must be in (0, 1), got {fraction}")));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dev_len = ((records.len() as f64 * fraction).round() as usize).clamp(1, records.len() - 1);
    let dev = order[..dev_len].iter().map(|&i| records[i].clone()).collect();
    let train = order[dev_len..].iter().map(|&i| records[i].clone()).collect();
    Ok((train, dev))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub dev_loss: LossBreakdown,
    pub dev: MetricsReport,
    pub improved: bool,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    /// Parameters from the best dev epoch.
    pub state: ModelState<T>,
    pub best_epoch: usize,
    pub best_dev: MetricsReport,
    pub log: Vec<EpochLog>,
    pub reached_target: bool,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^ (x >> 33)
}

/// Mini-batch Adam over seeded epoch shuffles. After every epoch the model is scored
/// on `dev`; an epoch improves when dev F1-I rises, or ties with a lower dev loss.
/// Each log entry is also written as one JSON line to `log_sink`.
pub fn fit<T: Float>(
    mut state: ModelState<T>,
    vocab: &Vocabulary,
    train: &[SentenceRecord],
    dev: &[SentenceRecord],
    config: &TrainConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Invalid("training and dev sets must be non-empty".into()));
    }
    let train_ex = prepare(train, vocab)?;
    let dev_ex = prepare(dev, vocab)?;
    let mut adam = AdamState::new(
        &state.params,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..Default::default()
        },
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let start = Instant::now();
    let mut best: Option<(MetricsReport, f64, usize, ModelState<T>)> = None;
    let mut stale = 0;
    let mut log = Vec::new();
    let mut reached_target = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut losses = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let seed = mix(config.seed, epoch as u64, b as u64);
            let (loss, mut grads) = batch_gradients(&state, &batch, Some(seed), config.exec)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss: loss.total,
                });
            }
            if let Some(clip) = config.grad_clip {
                let norm = grads.squared_norm().as_f64().sqrt();
                if norm > clip {
                    grads.scale(T::of(clip / norm));
                }
            }
            adam.step(&mut state.params, &grads).map_err(|e| {
                log::error!("epoch {epoch}, batch {}: {e}", b + 1);
                e
            })?;
            losses.push(loss);
        }
        let dev_loss = corpus_loss(&state, &dev_ex, config.exec)?;
        let dev_metrics = evaluate_model(&state, vocab, dev, config.exec)?;
        let improved = match &best {
            None => true,
            Some((m, l, _, _)) => dev_metrics.f1_i > m.f1_i || (dev_metrics.f1_i == m.f1_i && dev_loss.total < *l),
        };
        if improved {
            best = Some((dev_metrics.clone(), dev_loss.total, epoch, state.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        let entry = EpochLog {
            epoch,
            train: LossBreakdown::mean(&losses),
            dev_loss,
            dev: dev_metrics.clone(),
            improved,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.4} dev {:.4} dev F1-I {:.4}",
            entry.train.total,
            entry.dev_loss.total,
            entry.dev.f1_i
        );
        if let Some(sink) = log_sink.as_deref_mut() {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            writeln!(sink, "{line}").map_err(|e| Error::io("training log", e))?;
        }
        log.push(entry);
        if config.target_dev_f1.is_some_and(|t| dev_metrics.f1_i >= t) {
            reached_target = true;
            break;
        }
        if stale > config.patience {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (best_dev, _, best_epoch, state) = best.expect("at least one epoch");
    Ok(FitOutcome {
        state,
        best_epoch,
        best_dev,
        log,
        reached_target,
    })
}

/// Finite-difference check of the whole-model loss (mean over `records`) in 64-bit
/// precision with dropout off. Parameters are freshly initialised from `opts.seed`
/// with a vocabulary built from `records`.
pub fn model_gradcheck(
    config: &ModelConfig,
    records: &[SentenceRecord],
    opts: &GradCheckOptions,
    corrupt_backward: bool,
) -> Result<GradCheckReport> {
    let vocab = Vocabulary::build(records, config.inverse_relations);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let state: ModelState<f64> = ModelState::new(config.clone(), &vocab, None, None, &mut rng)?;
    let examples = prepare(records, &vocab)?;
    let objective = |params: &crate::numerics::ParamSet<f64>, with_gradients: bool| -> Result<Evaluation<f64>> {
        let mut tape = Tape::new(params);
        tape.set_corrupt_backward(corrupt_backward);
        let mut total = None;
        for e in &examples {
            let vars = forward::<f64, ChaCha8Rng>(&mut tape, &state, &e.sentence, &e.graph, None)?;
            let loss = joint_loss_vars(&mut tape, &vars, &e.sentence)?.total;
            total = Some(match total {
                None => loss,
                Some(t) => tape.add(t, loss)?,
            });
        }
        let total = total.ok_or_else(|| Error::Invalid("gradient check needs at least one record".into()))?;
        let mean = tape.scale(total, 1.0 / examples.len() as f64);
        Ok(Evaluation {
            loss: tape.value(mean).data()[0],
            gradients: if with_gradients { Some(tape.backward(mean)?) } else { None },
            kink_fingerprint: tape.kink_fingerprint(),
        })
    };
    grad_check(&state.params, objective, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{run, EncoderKind};
    use crate::numerics::Tensor;
    use crate::synthetic;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            relation_dim: 3,
            general_dim: 6,
            domain_dim: 4,
            ..Default::default()
        }
    }

    fn setup(config: ModelConfig) -> (Vocabulary, ModelState<f64>, Vec<Example>) {
        let corpus = synthetic::memorization_corpus();
        let vocab = Vocabulary::build(&corpus, config.inverse_relations);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = ModelState::new(config, &vocab, None, None, &mut rng).unwrap();
        let ex = prepare(&corpus, &vocab).unwrap();
        (vocab, state, ex)
    }

    #[test]
    fn uniform_distributions_give_closed_form_loss() {
        let (_, state, ex) = setup(tiny_config());
        let mut trace = run(&state, &ex[0].sentence, &ex[0].graph).unwrap();
        // two tokens, the first an aspect
        let sentence = EncodedSentence {
            tokens: vec![2, 3],
            ae: vec![AeTag::BA.index(), AeTag::O.index()],
            polarity: vec![Some(0), None],
            heads: vec![2, 0],
            rels: vec![Some(1), None],
            aspect_mask: vec![true, false],
        };
        let last = trace.rounds.last_mut().unwrap();
        last.y_ae = Tensor::full(&[2, 5], 0.2);
        last.y_as = Tensor::full(&[2, 3], 1.0 / 3.0);
        let l = joint_loss(&trace, &sentence).unwrap();
        assert!((l.ae - 5f64.ln()).abs() < 1e-12);
        assert!((l.as_ - 3f64.ln() / 2.0).abs() < 1e-12);
        assert_eq!((l.ae_tokens, l.as_tokens), (2, 1));
    }

    #[test]
    fn tape_and_trace_losses_agree() {
        let (_, state, ex) = setup(tiny_config());
        for e in &ex {
            let trace = run(&state, &e.sentence, &e.graph).unwrap();
            let a = joint_loss(&trace, &e.sentence).unwrap();
            let b = sentence_loss(&state, e).unwrap();
            assert!((a.total - b.total).abs() < 1e-12);
            if e.record.aspect_token_count() == 0 {
                assert_eq!(b.as_, 0.0);
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let (_, state, ex) = setup(tiny_config());
        let trace = run(&state, &ex[0].sentence, &ex[0].graph).unwrap();
        assert!(joint_loss(&trace, &ex[1].sentence).is_err() || ex[0].sentence.len() == ex[1].sentence.len());
        let mut short = ex[0].sentence.clone();
        short.ae.pop();
        short.tokens.pop();
        short.polarity.pop();
        short.aspect_mask.pop();
        assert!(joint_loss(&trace, &short).is_err());
    }

    #[test]
    fn batch_loss_is_mean_of_sentence_losses() {
        let (_, state, ex) = setup(tiny_config());
        let batch: Vec<&Example> = ex.iter().take(7).collect();
        let (l, _) = batch_gradients(&state, &batch, None, ExecMode::Sequential).unwrap();
        let each: f64 = batch.iter().map(|e| sentence_loss(&state, e).unwrap().total).sum::<f64>() / 7.0;
        assert!((l.total - each).abs() < 1e-6);
    }

    #[test]
    fn execution_modes_agree_bit_for_bit() {
        let (_, state, ex) = setup(tiny_config());
        let batch: Vec<&Example> = ex.iter().collect();
        let (a, ga) = batch_gradients(&state, &batch, Some(3), ExecMode::Sequential).unwrap();
        let (b, gb) = batch_gradients(&state, &batch, Some(3), ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        for id in state.params.ids() {
            let len = state.params.get(id).len();
            assert_eq!(ga.dense(id, len), gb.dense(id, len));
        }
    }

    #[test]
    fn split_examples() {
        let recs: Vec<_> = synthetic::memorization_corpus().into_iter().take(10).collect();
        let (t, d) = split_dev(&recs, 0.2, 7).unwrap();
        assert_eq!((t.len(), d.len()), (8, 2));
        assert_eq!(split_dev(&recs, 0.2, 7).unwrap(), (t.clone(), d.clone()));
        let mut all: Vec<String> = t.iter().chain(&d).map(|r| r.to_json_line()).collect();
        let mut orig: Vec<String> = recs.iter().map(|r| r.to_json_line()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert!(split_dev(&recs[..1], 0.2, 7).is_err());
        assert!(split_dev(&recs, 1.0, 7).is_err());
    }

    #[test]
    fn different_seeds_give_different_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recs: Vec<_> = (0..100)
            .map(|i| {
                let mut r = synthetic::random_record(6, &mut rng);
                r.tokens[0] = format!("w{i}");
                r
            })
            .collect();
        let splits: Vec<_> = (0..20).map(|s| split_dev(&recs, 0.2, s).unwrap().1).collect();
        let distinct = splits.iter().filter(|d| **d != splits[0]).count();
        assert_eq!(distinct, 19);
    }

    #[test]
    fn patience_zero_stops_at_first_non_improving_epoch() {
        let (vocab, state, _) = setup(ModelConfig { encoder: EncoderKind::Cnn, ..tiny_config() });
        let corpus = synthetic::memorization_corpus();
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 30,
            // too small to move any f32 parameter, so no later epoch can improve
            learning_rate: 1e-30,
            batch_size: 5,
            ..Default::default()
        };
        let out = fit(state.cast::<f32>(), &vocab, &corpus, &corpus, &cfg, None).unwrap();
        assert_eq!(out.log.len(), 2);
        assert!(out.log[0].improved && !out.log[1].improved);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn loss_falls_over_first_epochs() {
        let (vocab, state, _) = setup(tiny_config());
        let corpus = synthetic::memorization_corpus();
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 10,
            learning_rate: 5e-3,
            batch_size: 5,
            ..Default::default()
        };
        let mut sink = Vec::new();
        let out = fit(state.cast::<f32>(), &vocab, &corpus, &corpus, &cfg, Some(&mut sink)).unwrap();
        let losses: Vec<f64> = out.log.iter().map(|e| e.dev_loss.total).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        let lines = String::from_utf8(sink).unwrap();
        assert_eq!(lines.lines().count(), 5);
        let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert!(first.get("timestamp").is_some() && first["dev"].get("f1_i").is_some());
    }

    #[test]
    fn aspect_free_sentence_gives_no_sentiment_gradient() {
        let (_, state, ex) = setup(tiny_config());
        let e = ex.iter().find(|e| e.record.aspect_token_count() == 0).unwrap();
        let (loss, grads) = sentence_gradients(&state, e, None, 1.0).unwrap();
        assert_eq!(loss.as_, 0.0);
        let as_out = state.ids().as_out;
        for id in [as_out.weight, as_out.bias, state.ids().attention] {
            let len = state.params.get(id).len();
            assert!(grads.dense(id, len).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn small_model_gradcheck() {
        let config = ModelConfig { hidden: 5, relation_dim: 2, general_dim: 4, domain_dim: 3, ..Default::default() };
        let opts = GradCheckOptions::default();
        let report = model_gradcheck(&config, &synthetic::gradcheck_fixture(), &opts, false).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
        let bad = model_gradcheck(&config, &synthetic::gradcheck_fixture(), &opts, true).unwrap();
        assert!(!bad.passes(1e-4));
    }
}
