//! Span decoding, first-token sentiment pairing, and the five reported metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_sentence, repair_bio, AeTag, Polarity, SentenceRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::graph::build_graph;
use crate::model::{decode_outputs, run, ModelState};
use crate::numerics::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Aspect,
    Opinion,
}

/// Inclusive token range. Only aspect spans carry a sentiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sentiment: Option<Polarity>,
}

/// Maximal `B(I)*` runs. A `B` tag always starts a new span.
pub fn decode_spans(tags: &[AeTag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &t) in tags.iter().enumerate() {
        let continues = match (open, t) {
            (Some(s), AeTag::IA) => s.kind == SpanKind::Aspect,
            (Some(s), AeTag::IP) => s.kind == SpanKind::Opinion,
            _ => false,
        };
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i;
            }
            continue;
        }
        spans.extend(open.take());
        let kind = match t {
            AeTag::BA | AeTag::IA => Some(SpanKind::Aspect),
            AeTag::BP | AeTag::IP => Some(SpanKind::Opinion),
            AeTag::O => None,
        };
        open = kind.map(|kind| Span {
            start: i,
            end: i,
            kind,
            sentiment: None,
        });
    }
    spans.extend(open);
    spans
}

/// Gives each aspect span the polarity predicted at its first token.
pub fn pair_sentiment(spans: &[Span], polarities: &[Polarity]) -> Result<Vec<Span>> {
    spans
        .iter()
        .map(|s| match s.kind {
            SpanKind::Opinion => Ok(Span { sentiment: None, ..*s }),
            SpanKind::Aspect => polarities
                .get(s.start)
                .map(|&p| Span { sentiment: Some(p), ..*s })
                .ok_or_else(|| Error::shape("pair_sentiment", &[s.start], &[polarities.len()])),
        })
        .collect()
}

/// Model output for one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub ae_tags: Vec<AeTag>,
    /// Argmax polarity at every token.
    pub polarities: Vec<Polarity>,
}

impl Prediction {
    /// Echoes the gold annotation. Tokens outside aspect terms get `neu`, which no
    /// metric reads.
    pub fn from_gold(record: &SentenceRecord) -> Self {
        Self {
            ae_tags: record.ae_tags.clone(),
            polarities: record.as_tags.iter().map(|p| p.unwrap_or(Polarity::Neu)).collect(),
        }
    }

    /// Aspect spans with sentiment plus opinion spans, after BIO repair.
    pub fn spans(&self) -> Result<Vec<Span>> {
        pair_sentiment(&decode_spans(&repair_bio(&self.ae_tags)), &self.polarities)
    }
}

/// Gold spans with the annotated sentiment of each aspect's first token.
pub fn gold_spans(record: &SentenceRecord) -> Vec<Span> {
    decode_spans(&record.ae_tags)
        .into_iter()
        .map(|s| Span {
            sentiment: match s.kind {
                SpanKind::Aspect => record.as_tags[s.start],
                SpanKind::Opinion => None,
            },
            ..s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.predicted += other.predicted;
        self.gold += other.gold;
        self.matched += other.matched;
    }

    /// `2PR / (P + R)`, with every `0/0` taken as 0.
    pub fn f1(&self) -> f64 {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (p, r) = (ratio(self.matched, self.predicted), ratio(self.matched, self.gold));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub aspect: Counts,
    pub opinion: Counts,
    /// Over correctly extracted aspect terms: `predicted` = `gold` = their number,
    /// `matched` = those with the right sentiment.
    pub sentiment: Counts,
    /// Per polarity (pos, neg, neu) over correctly extracted aspect terms.
    pub sentiment_classes: [Counts; 3],
    pub integrated: Counts,
}

/// Scores on one corpus. Key names are stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_a: f64,
    pub f1_o: f64,
    pub acc_s: f64,
    pub f1_s: f64,
    pub f1_i: f64,
    pub counts: MetricCounts,
}

impl MetricsReport {
    pub fn from_counts(counts: MetricCounts) -> Self {
        let s = counts.sentiment;
        let acc_s = if s.gold == 0 { 0.0 } else { s.matched as f64 / s.gold as f64 };
        let f1_s = counts.sentiment_classes.iter().map(Counts::f1).sum::<f64>() / Polarity::COUNT as f64;
        Self {
            f1_a: counts.aspect.f1(),
            f1_o: counts.opinion.f1(),
            acc_s,
            f1_s,
            f1_i: counts.integrated.f1(),
            counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Metric-wise mean over runs; counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let k = reports.len() as f64;
        let first = reports.first()?;
        let mut out = first.clone();
        let mut counts = MetricCounts::default();
        for r in reports {
            add_counts(&mut counts, &r.counts);
        }
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        out.f1_a = avg(|r| r.f1_a);
        out.f1_o = avg(|r| r.f1_o);
        out.acc_s = avg(|r| r.acc_s);
        out.f1_s = avg(|r| r.f1_s);
        out.f1_i = avg(|r| r.f1_i);
        out.counts = counts;
        Some(out)
    }
}

fn add_counts(acc: &mut MetricCounts, c: &MetricCounts) {
    acc.aspect.add(c.aspect);
    acc.opinion.add(c.opinion);
    acc.sentiment.add(c.sentiment);
    acc.integrated.add(c.integrated);
    for (a, b) in acc.sentiment_classes.iter_mut().zip(&c.sentiment_classes) {
        a.add(*b);
    }
}

fn sentence_counts(pred: &[Span], gold: &[Span]) -> MetricCounts {
    let mut c = MetricCounts::default();
    let gold_by_pos: HashMap<(usize, usize, SpanKind), Option<Polarity>> =
        gold.iter().map(|s| ((s.start, s.end, s.kind), s.sentiment)).collect();
    for s in gold {
        match s.kind {
            SpanKind::Aspect => {
                c.aspect.gold += 1;
                c.integrated.gold += 1;
            }
            SpanKind::Opinion => c.opinion.gold += 1,
        }
    }
    for s in pred {
        let hit = gold_by_pos.get(&(s.start, s.end, s.kind));
        match s.kind {
            SpanKind::Opinion => {
                c.opinion.predicted += 1;
                c.opinion.matched += hit.is_some() as usize;
            }
            SpanKind::Aspect => {
                c.aspect.predicted += 1;
                c.integrated.predicted += 1;
                let Some(&gold_pol) = hit else { continue };
                c.aspect.matched += 1;
                c.sentiment.predicted += 1;
                c.sentiment.gold += 1;
                let correct = gold_pol.is_some() && s.sentiment == gold_pol;
                c.sentiment.matched += correct as usize;
                c.integrated.matched += correct as usize;
                if let Some(p) = s.sentiment {
                    c.sentiment_classes[p.index()].predicted += 1;
                }
                if let Some(g) = gold_pol {
                    c.sentiment_classes[g.index()].gold += 1;
                    if correct {
                        c.sentiment_classes[g.index()].matched += 1;
                    }
                }
            }
        }
    }
    c
}

/// Scores predictions against aligned gold records (same sentences, same order).
pub fn score(predictions: &[Prediction], gold: &[SentenceRecord]) -> Result<MetricsReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} gold sentences",
            predictions.len(),
            gold.len()
        )));
    }
    let mut counts = MetricCounts::default();
    for (i, (p, g)) in predictions.iter().zip(gold).enumerate() {
        if p.ae_tags.len() != g.len() || p.polarities.len() != g.len() {
            return Err(Error::Invalid(format!(
                "sentence {}: prediction covers {} tokens, gold has {}",
                i + 1,
                p.ae_tags.len(),
                g.len()
            )));
        }
        add_counts(&mut counts, &sentence_counts(&p.spans()?, &gold_spans(g)));
    }
    Ok(MetricsReport::from_counts(counts))
}

/// Runs the model on one record. Relation labels unknown to the vocabulary map to the
/// reserved unknown type.
pub fn predict<T: Float>(state: &ModelState<T>, vocab: &Vocabulary, record: &SentenceRecord) -> Result<Prediction> {
    let sentence = encode_sentence(record, vocab);
    let graph = build_graph(record, vocab.relations())?;
    let trace = run(state, &sentence, &graph)?;
    let (tags, polarities) = decode_outputs(&trace);
    Ok(Prediction {
        ae_tags: repair_bio(&tags),
        polarities,
    })
}

pub fn predict_all<T: Float>(
    state: &ModelState<T>,
    vocab: &Vocabulary,
    records: &[SentenceRecord],
    exec: ExecMode,
) -> Result<Vec<Prediction>> {
    exec.try_map(records, |_, r| predict(state, vocab, r))
}

pub fn evaluate_model<T: Float>(
    state: &ModelState<T>,
    vocab: &Vocabulary,
    records: &[SentenceRecord],
    exec: ExecMode,
) -> Result<MetricsReport> {
    score(&predict_all(state, vocab, records, exec)?, records)
}
