use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::numerics::{uniform, Float, Tensor};

/// `|V| × D` word vectors aligned with a [`Vocabulary`]; row 0 (padding) is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    pub matrix: Tensor<T>,
    pub trainable: bool,
}

impl<T: Float> EmbeddingTable<T> {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }
}

/// Reads `word v1 … vD` lines and copies vectors for vocabulary words (exact match
/// preferred over a lowercased match). Words missing from the file, and the unknown
/// row, get the mean of every vector in the file.
pub fn load_embeddings<T: Float>(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EmbeddingTable<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();

    // file word -> (vocab row, exact match?)
    let mut wanted: HashMap<String, Vec<(usize, bool)>> = HashMap::new();
    for (i, w) in vocab.words().iter().enumerate().skip(UNK + 1) {
        wanted.entry(w.clone()).or_default().push((i, true));
        let lower = w.to_lowercase();
        if lower != *w {
            wanted.entry(lower).or_default().push((i, false));
        }
    }

    let mut dim = None;
    let mut sum: Vec<f64> = Vec::new();
    let mut loaded = 0usize;
    // vocab row -> (vector, from exact match)
    let mut found: HashMap<usize, (Vec<f64>, bool)> = HashMap::new();

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Record {
                source_name: name.clone(),
                line: lineno + 1,
                message: format!("bad number: {e}"),
            })?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::Record {
                source_name: name,
                line: lineno + 1,
                message: format!("expected {d} values, found {}", values.len()),
            });
        }
        if sum.is_empty() {
            sum = vec![0.0; d];
        }
        sum.iter_mut().zip(&values).for_each(|(s, v)| *s += v);
        loaded += 1;
        if let Some(targets) = wanted.get(word) {
            for &(row, exact) in targets {
                let replace = match found.get(&row) {
                    None => true,
                    Some((_, prev_exact)) => exact && !prev_exact,
                };
                if replace {
                    found.insert(row, (values.clone(), exact));
                }
            }
        }
    }

    let d = dim.ok_or_else(|| Error::Invalid(format!("{name}: no vectors found")))?;
    let mean: Vec<f64> = sum.iter().map(|s| s / loaded as f64).collect();
    let mut matrix = Tensor::zeros(&[vocab.len(), d]);
    for row in UNK..vocab.len() {
        let src = found.get(&row).map_or(&mean, |(v, _)| v);
        for (dst, &v) in matrix.row_mut(row).iter_mut().zip(src) {
            *dst = T::of(v);
        }
    }
    log::info!(
        "{name}: {loaded} vectors of dim {d}; {} of {} vocabulary words covered",
        found.len(),
        vocab.len() - 2
    );
    Ok(EmbeddingTable {
        matrix,
        trainable: true,
    })
}

/// Randomly initialised table (no pretrained file), each entry uniform in
/// `±sqrt(3 / D)` so rows have roughly unit norm.
pub fn random_embeddings<T: Float, R: Rng + ?Sized>(vocab_len: usize, dim: usize, rng: &mut R) -> EmbeddingTable<T> {
    let mut matrix = uniform(&[vocab_len, dim], (3.0 / dim as f64).sqrt(), rng);
    matrix.row_mut(PAD).iter_mut().for_each(|x| *x = T::zero());
    EmbeddingTable {
        matrix,
        trainable: true,
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::corpus::{AeTag, SentenceRecord};
    use crate::graph::InverseRelations;

    fn vocab(words: &[&str]) -> Vocabulary {
        let n = words.len();
        let r = SentenceRecord::new(
            words.iter().map(|s| s.to_string()).collect(),
            vec![AeTag::O; n],
            vec![None; n],
            (0..n).map(|i| if i == 0 { 0 } else { 1 }).collect(),
            (0..n).map(|_| "dep".to_string()).collect(),
        )
        .unwrap();
        Vocabulary::build(&[r], InverseRelations::Distinct)
    }

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn copies_known_rows() {
        let f = file("cat 1.0 2.0\n");
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &vocab(&["cat"])).unwrap();
        assert_eq!(t.matrix.row(2), &[1.0, 2.0]);
        assert_eq!(t.matrix.row(PAD), &[0.0, 0.0]);
    }

    #[test]
    fn missing_words_get_file_mean() {
        let f = file("cat 1.0 2.0\ndog 3.0 -2.0\n");
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &vocab(&["cat", "emu"])).unwrap();
        assert_eq!(t.matrix.row(3), &[2.0, 0.0]);
        assert_eq!(t.matrix.row(UNK), &[2.0, 0.0]);
    }

    #[test]
    fn exact_match_beats_lowercase() {
        let f = file("apple 1 1\nApple 2 2\n");
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &vocab(&["Apple"])).unwrap();
        assert_eq!(t.matrix.row(2), &[2.0, 2.0]);
        let f = file("apple 1 1\n");
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &vocab(&["Apple"])).unwrap();
        assert_eq!(t.matrix.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let f = file("cat 1.0 2.0\ndog 1.0\n");
        let err = load_embeddings::<f64>(f.path(), &vocab(&["cat"])).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn random_table_keeps_padding_zero() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let t: EmbeddingTable<f32> = random_embeddings(5, 4, &mut rng);
        assert!(t.matrix.row(PAD).iter().all(|&x| x == 0.0));
    }
}
