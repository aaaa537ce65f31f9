//! Bundled fixtures and random generators for tests, benchmarks and self-checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{parse_dataset, AeTag, Polarity, SentenceRecord, TagPolicy};

const MEMORIZATION: &str = include_str!("../fixtures/memorization.jsonl");
const GRADCHECK: &str = include_str!("../fixtures/gradcheck.jsonl");

/// Labels drawn by [`random_record`].
pub const RANDOM_DEPRELS: [&str; 8] = ["nsubj", "obj", "amod", "det", "advmod", "conj", "case", "compound"];

fn bundled(text: &str, name: &str) -> Vec<SentenceRecord> {
    parse_dataset(text, name, TagPolicy::Gold)
        .expect("bundled fixture parses")
        .records
}

/// Twenty short templated restaurant/laptop sentences with consistent parses and tags.
/// Three of them contain no aspect term.
pub fn memorization_corpus() -> Vec<SentenceRecord> {
    bundled(MEMORIZATION, "memorization.jsonl")
}

/// Two sentences covering a multi-word aspect and a sentence with two aspects of
/// different polarity.
pub fn gradcheck_fixture() -> Vec<SentenceRecord> {
    bundled(GRADCHECK, "gradcheck.jsonl")
}

/// A random dependency tree over `n` tokens: one root, every other token
/// attached to an already placed token.
pub fn random_heads<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for (pos, &tok) in order.iter().enumerate().skip(1) {
        let gov = order[rng.gen_range(0..pos)];
        heads[tok] = gov + 1;
    }
    heads
}

/// Well-formed BIO tags; roughly a third of tokens start a term.
pub fn random_tags<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<AeTag> {
    let mut tags = Vec::with_capacity(n);
    for _ in 0..n {
        let prev = tags.last().copied();
        let tag = match rng.gen_range(0..6) {
            0 => AeTag::BA,
            1 => AeTag::BP,
            2 => match prev {
                Some(AeTag::BA | AeTag::IA) => AeTag::IA,
                Some(AeTag::BP | AeTag::IP) => AeTag::IP,
                _ => AeTag::O,
            },
            _ => AeTag::O,
        };
        tags.push(tag);
    }
    tags
}

/// Polarity per aspect term (shared by all its tokens), `None` elsewhere.
pub fn random_polarities<R: Rng + ?Sized>(tags: &[AeTag], rng: &mut R) -> Vec<Option<Polarity>> {
    let mut current = Polarity::Pos;
    tags.iter()
        .map(|t| match t {
            AeTag::BA => {
                current = Polarity::ALL[rng.gen_range(0..3)];
                Some(current)
            }
            AeTag::IA => Some(current),
            _ => None,
        })
        .collect()
}

/// A valid gold record of length `1..=max_len` over a small word list.
pub fn random_record<R: Rng + ?Sized>(max_len: usize, rng: &mut R) -> SentenceRecord {
    const WORDS: [&str; 12] = [
        "the", "food", "was", "great", "but", "service", "slow", "screen", "is", "bright", "i", "like",
    ];
    let n = rng.gen_range(1..=max_len.max(1));
    let heads = random_heads(n, rng);
    let deprels = heads
        .iter()
        .map(|&h| {
            if h == 0 {
                "root".to_string()
            } else {
                RANDOM_DEPRELS[rng.gen_range(0..RANDOM_DEPRELS.len())].to_string()
            }
        })
        .collect();
    let ae_tags = random_tags(n, rng);
    let as_tags = random_polarities(&ae_tags, rng);
    SentenceRecord {
        tokens: (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
        ae_tags,
        as_tags,
        heads,
        deprels,
    }
}

/// Same as [`random_record`] with aspect tags replaced by `O` (opinion terms are kept).
pub fn random_aspectless_record<R: Rng + ?Sized>(max_len: usize, rng: &mut R) -> SentenceRecord {
    let mut r = random_record(max_len, rng);
    r.ae_tags = r
        .ae_tags
        .iter()
        .map(|t| if t.is_opinion() { *t } else { AeTag::O })
        .collect();
    r.as_tags = vec![None; r.len()];
    r
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fixtures_parse() {
        let mem = memorization_corpus();
        assert_eq!(mem.len(), 20);
        assert_eq!(mem.iter().filter(|r| r.aspect_token_count() == 0).count(), 3);
        assert_eq!(gradcheck_fixture().len(), 2);
    }

    #[test]
    fn random_records_are_valid_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let r = random_record(12, &mut rng);
            r.validate().unwrap();
            assert_eq!(r.heads.iter().filter(|&&h| h == 0).count(), 1);
            // following heads from any token reaches the root
            for start in 0..r.len() {
                let (mut at, mut steps) = (start, 0);
                while r.heads[at] != 0 {
                    at = r.heads[at] - 1;
                    steps += 1;
                    assert!(steps <= r.len());
                }
            }
            random_aspectless_record(8, &mut rng).validate().unwrap();
        }
    }
}
