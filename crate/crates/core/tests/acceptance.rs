//! Acceptance suite. Each test prints one `PASS`/`FAIL` line.
//!
//! The timed criteria share a lock so their wall-clock budgets are not eaten by
//! other tests running concurrently.

use std::sync::Mutex;
use std::time::Instant;

use absa_core::corpus::{encode_sentence, AeTag, Polarity, SentenceRecord, Vocabulary};
use absa_core::evaluation::{score, Prediction};
use absa_core::exec::ExecMode;
use absa_core::graph::build_graph;
use absa_core::model::{forward, run, ModelConfig, ModelState, ABLATION_ROWS};
use absa_core::numerics::{GradCheckOptions, Tape};
use absa_core::synthetic;
use absa_core::training::{fit, joint_loss_vars, model_gradcheck, split_dev, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static HEAVY: Mutex<()> = Mutex::new(());

/// Writes straight to stdout so the line survives the test harness's capture.
fn say(line: String) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn report(name: &str, pass: bool, detail: String) {
    say(format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
    assert!(pass, "{name}: {detail}");
}

fn default_state<T: absa_core::numerics::Float>(records: &[SentenceRecord], seed: u64) -> (Vocabulary, ModelState<T>) {
    let config = ModelConfig::default();
    let vocab = Vocabulary::build(records, config.inverse_relations);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = ModelState::new(config, &vocab, None, None, &mut rng).unwrap();
    (vocab, state)
}

#[test]
fn gradient_correctness() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let config = ModelConfig {
        precision: absa_core::numerics::Precision::Verification,
        ..Default::default()
    };
    let opts = GradCheckOptions {
        max_coords_per_tensor: Some(12),
        ..Default::default()
    };
    let start = Instant::now();
    let report_ = model_gradcheck(&config, &synthetic::gradcheck_fixture(), &opts, false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let every_tensor = report_.tensors.iter().all(|t| t.checked > 0);
    let worst = report_
        .tensors
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map_or("-", |t| t.name.as_str());
    let checked: usize = report_.tensors.iter().map(|t| t.checked).sum();
    let skipped: usize = report_.tensors.iter().map(|t| t.skipped_at_kinks).sum();
    report(
        "gradient correctness",
        report_.passes(1e-4) && every_tensor && secs < 60.0,
        format!(
            "max rel error {:.3e} (worst tensor {worst}) over {} tensors, {checked} coordinates ({skipped} skipped at kinks), {secs:.1}s",
            report_.max_rel_error,
            report_.tensors.len()
        ),
    );
}

#[test]
fn memorization() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let corpus = synthetic::memorization_corpus();
    let (vocab, state) = default_state::<f32>(&corpus, 1);
    let cfg = TrainConfig {
        max_epochs: 200,
        patience: 200,
        target_dev_f1: Some(1.0),
        ..Default::default()
    };
    let start = Instant::now();
    let out = fit(state, &vocab, &corpus, &corpus, &cfg, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let f1 = absa_core::evaluation::evaluate_model(&out.state, &vocab, &corpus, ExecMode::default())
        .unwrap()
        .f1_i;
    report(
        "memorization",
        out.reached_target && f1 == 1.0 && secs < 300.0,
        format!(
            "F1-I {f1:.4} after {} epochs (best epoch {}), {secs:.1}s",
            out.log.len(),
            out.best_epoch
        ),
    );
}

mod oracle {
    use super::*;

    /// `(start, end, is_aspect)` runs, written without the library's decoder.
    fn runs(tags: &[AeTag]) -> Vec<(usize, usize, bool)> {
        let mut out: Vec<(usize, usize, bool)> = Vec::new();
        for (i, t) in tags.iter().enumerate() {
            let (begin, aspect) = match t {
                AeTag::BA => (true, true),
                AeTag::IA => (false, true),
                AeTag::BP => (true, false),
                AeTag::IP => (false, false),
                AeTag::O => continue,
            };
            let extends = !begin && matches!(out.last(), Some(&(_, e, a)) if e + 1 == i && a == aspect);
            if extends {
                out.last_mut().unwrap().1 = i;
            } else {
                out.push((i, i, aspect));
            }
        }
        out
    }

    fn f1(matched: usize, predicted: usize, gold: usize) -> f64 {
        let p = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
        let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Five metrics by enumerating every predicted/gold span pair.
    pub fn metrics(pairs: &[(Vec<AeTag>, Vec<Polarity>, SentenceRecord)]) -> [f64; 5] {
        let (mut pa, mut ga, mut ma) = (0, 0, 0);
        let (mut po, mut go, mut mo) = (0, 0, 0);
        let mut sentiment_pairs = Vec::new();
        for (tags, pols, gold) in pairs {
            let pred = runs(tags);
            let gold_runs = runs(&gold.ae_tags);
            pa += pred.iter().filter(|r| r.2).count();
            po += pred.iter().filter(|r| !r.2).count();
            ga += gold_runs.iter().filter(|r| r.2).count();
            go += gold_runs.iter().filter(|r| !r.2).count();
            for p in &pred {
                for g in &gold_runs {
                    if p == g {
                        if p.2 {
                            ma += 1;
                            sentiment_pairs.push((pols[p.0], gold.as_tags[g.0].unwrap()));
                        } else {
                            mo += 1;
                        }
                    }
                }
            }
        }
        let correct = sentiment_pairs.iter().filter(|(p, g)| p == g).count();
        let acc = if sentiment_pairs.is_empty() { 0.0 } else { correct as f64 / sentiment_pairs.len() as f64 };
        let macro_f1 = Polarity::ALL
            .iter()
            .map(|c| {
                let tp = sentiment_pairs.iter().filter(|(p, g)| p == c && g == c).count();
                let pc = sentiment_pairs.iter().filter(|(p, _)| p == c).count();
                let gc = sentiment_pairs.iter().filter(|(_, g)| g == c).count();
                f1(tp, pc, gc)
            })
            .sum::<f64>()
            / 3.0;
        [f1(ma, pa, ga), f1(mo, po, go), acc, macro_f1, f1(correct, pa, ga)]
    }

    /// Orphan inside-tags become begin-tags, the same rule predictions go through.
    pub fn repair(tags: &[AeTag]) -> Vec<AeTag> {
        let mut out = tags.to_vec();
        for i in 0..out.len() {
            let prev = if i == 0 { AeTag::O } else { out[i - 1] };
            out[i] = match (out[i], prev) {
                (AeTag::IA, AeTag::BA | AeTag::IA) => AeTag::IA,
                (AeTag::IA, _) => AeTag::BA,
                (AeTag::IP, AeTag::BP | AeTag::IP) => AeTag::IP,
                (AeTag::IP, _) => AeTag::BP,
                (t, _) => t,
            };
        }
        out
    }
}

#[test]
fn metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut all = Vec::new();
    let mut mismatches = 0;
    for _ in 0..200 {
        let gold = synthetic::random_record(12, &mut rng);
        let n = gold.len();
        // perturb gold so that matches, near misses and misses all occur
        let tags: Vec<AeTag> = gold
            .ae_tags
            .iter()
            .map(|&t| if rng.gen_bool(0.3) { AeTag::ALL[rng.gen_range(0..5)] } else { t })
            .collect();
        let pols: Vec<Polarity> = (0..n)
            .map(|i| match gold.as_tags[i] {
                Some(p) if rng.gen_bool(0.6) => p,
                _ => Polarity::ALL[rng.gen_range(0..3)],
            })
            .collect();
        let pred = Prediction { ae_tags: tags.clone(), polarities: pols.clone() };
        let got = score(&[pred], &[gold.clone()]).unwrap();
        let want = oracle::metrics(&[(oracle::repair(&tags), pols.clone(), gold.clone())]);
        if [got.f1_a, got.f1_o, got.acc_s, got.f1_s, got.f1_i] != want {
            mismatches += 1;
        }
        all.push((tags, pols, gold));
    }
    let preds: Vec<Prediction> =
        all.iter().map(|(t, p, _)| Prediction { ae_tags: t.clone(), polarities: p.clone() }).collect();
    let golds: Vec<SentenceRecord> = all.iter().map(|(_, _, g)| g.clone()).collect();
    let got = score(&preds, &golds).unwrap();
    let repaired: Vec<_> = all.iter().map(|(t, p, g)| (oracle::repair(t), p.clone(), g.clone())).collect();
    let corpus_ok = [got.f1_a, got.f1_o, got.acc_s, got.f1_s, got.f1_i] == oracle::metrics(&repaired);
    report(
        "metric oracle",
        mismatches == 0 && corpus_ok,
        format!("{mismatches}/200 per-sentence mismatches, corpus-level agreement {corpus_ok}"),
    );
}

#[test]
fn probability_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let records: Vec<SentenceRecord> = (0..100).map(|_| synthetic::random_record(12, &mut rng)).collect();
    let (vocab, state) = default_state::<f32>(&records, 3);
    let mut worst = 0f64;
    let mut diagonal_ok = true;
    let mut attention_rows = 0;
    for r in &records {
        let trace = run(&state, &encode_sentence(r, &vocab), &build_graph(r, vocab.relations()).unwrap()).unwrap();
        for round in &trace.rounds {
            for y in [&round.y_ae, &round.y_as] {
                for i in 0..y.rows() {
                    let s: f64 = y.row(i).iter().map(|&p| p as f64).sum();
                    worst = worst.max((s - 1.0).abs());
                    diagonal_ok &= y.row(i).iter().all(|&p| p >= 0.0);
                }
            }
            if let Some(m) = &round.attention {
                for i in 0..m.rows() {
                    diagonal_ok &= m.at(i, i) == 0.0;
                    let s: f64 = m.row(i).iter().map(|&p| p as f64).sum();
                    worst = worst.max((s - 1.0).abs());
                    attention_rows += 1;
                }
            }
        }
    }
    report(
        "probability invariants",
        worst <= 1e-6 && diagonal_ok && attention_rows > 0,
        format!("max |row sum - 1| = {worst:.2e}, zero diagonal and non-negative: {diagonal_ok}, {attention_rows} attention rows"),
    );
}

#[test]
fn masking() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<SentenceRecord> = (0..10).map(|_| synthetic::random_aspectless_record(12, &mut rng)).collect();
    let (vocab, state) = default_state::<f64>(&records, 4);
    let mut nonzero = 0;
    for r in &records {
        let sentence = encode_sentence(r, &vocab);
        let graph = build_graph(r, vocab.relations()).unwrap();
        let mut tape = Tape::new(&state.params);
        let vars = forward::<f64, ChaCha8Rng>(&mut tape, &state, &sentence, &graph, None).unwrap();
        let loss = joint_loss_vars(&mut tape, &vars, &sentence).unwrap();
        let grads = tape.backward(loss.as_).unwrap();
        let loss_zero = tape.value(loss.as_).data()[0] == 0.0;
        let grads_zero = state.params.ids().all(|id| {
            let len = state.params.get(id).len();
            grads.dense(id, len).iter().all(|&g| g == 0.0)
        });
        nonzero += (!loss_zero || !grads_zero) as usize;
    }
    report(
        "masking",
        nonzero == 0,
        format!("{nonzero}/10 aspect-free sentences with a non-zero sentiment loss or gradient"),
    );
}

#[test]
fn relation_symmetry() {
    let corpus = synthetic::memorization_corpus();
    let (vocab, state) = default_state::<f32>(&corpus, 6);
    let rel = state.ids().relations.unwrap();
    let rows = state.relation_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut differing = 0;
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..rows).collect();
        perm.shuffle(&mut rng);
        let mut permuted = state.clone();
        for k in 0..rows {
            let row = state.params.get(rel).row(k).to_vec();
            permuted.params.get_mut(rel).row_mut(perm[k]).copy_from_slice(&row);
        }
        for r in &corpus {
            let s = encode_sentence(r, &vocab);
            let g = build_graph(r, vocab.relations()).unwrap();
            let a = run(&state, &s, &g).unwrap();
            let b = run(&permuted, &s, &g.with_relations_permuted(&perm)).unwrap();
            differing += (a != b) as usize;
        }
    }
    report(
        "relation symmetry",
        differing == 0,
        format!("{differing} of {} permuted forward passes differ in any bit", 5 * corpus.len()),
    );
}

#[test]
fn adjacency_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let records: Vec<SentenceRecord> = (0..100).map(|_| synthetic::random_record(15, &mut rng)).collect();
    let vocab = Vocabulary::build(&records, Default::default());
    let mut bad = 0;
    for r in &records {
        let g = build_graph(r, vocab.relations()).unwrap();
        let n = g.len();
        let mut ok = true;
        for i in 0..n {
            ok &= g.adjacent(i, i);
            for j in 0..n {
                ok &= g.adjacent(i, j) == g.adjacent(j, i);
                ok &= g.relations(i, j).is_empty() || g.adjacent(i, j);
            }
        }
        for (i, &h) in r.heads.iter().enumerate() {
            if h != 0 {
                ok &= g.adjacent(i, h - 1);
            }
        }
        bad += (!ok) as usize;
    }
    report("adjacency contract", bad == 0, format!("{bad}/100 graphs violate the contract"));
}

#[test]
fn ablation_machinery() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let corpus = synthetic::memorization_corpus();
    let cfg = TrainConfig {
        max_epochs: 50,
        patience: 50,
        ..Default::default()
    };
    let (train, dev) = split_dev(&corpus, cfg.dev_fraction, cfg.seed).unwrap();
    let mut final_dev_loss = Vec::new();
    let mut failures = Vec::new();
    for row in 0..6 {
        let config = ModelConfig::ablation(row).unwrap();
        let vocab = Vocabulary::build(&corpus, config.inverse_relations);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let result = ModelState::<f32>::new(config, &vocab, None, None, &mut rng)
            .and_then(|state| fit(state, &vocab, &train, &dev, &cfg, None));
        match result {
            Ok(out) => {
                let last = out.log.last().unwrap();
                say(format!(
                    "  row {row} ({}): {} epochs, dev loss {:.4}, dev F1-I {:.4}",
                    ABLATION_ROWS[row],
                    out.log.len(),
                    last.dev_loss.total,
                    last.dev.f1_i
                ));
                final_dev_loss.push(last.dev_loss.total);
            }
            Err(e) => {
                failures.push(format!("row {row}: {e}"));
                final_dev_loss.push(f64::NAN);
            }
        }
    }
    let (pred, repr) = (final_dev_loss[4], final_dev_loss[5]);
    let directional = repr <= pred;
    say(format!(
        "{} ablation machinery: all rows trained: {}; dev loss after 50 epochs: representations {repr:.4}, predictions {pred:.4} {failures:?}",
        if failures.is_empty() && directional { "PASS" } else { "FAIL" },
        failures.is_empty()
    ));
    // The loss ordering is reported but not asserted: on a four-sentence dev split it
    // follows the seed, not the model (see README, "Known results").
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn semeval_reproduction_informational() {
    match std::env::var("ABSA_SEMEVAL_DIR") {
        Ok(dir) => say(format!("INFO semeval reproduction: run `absa train` on {dir} with 5 seeds; not scored here")),
        Err(_) => say("SKIP semeval reproduction: needs user-supplied data (set ABSA_SEMEVAL_DIR)".into()),
    }
}
