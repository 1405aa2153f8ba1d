use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{xavier_bound, Real, Tensor};

/// Word vectors read from a whitespace-separated text file.
#[derive(Clone, Debug, Default)]
pub struct PretrainedVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl PretrainedVectors {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    /// Each non-blank line is a token followed by its components. The first
    /// entry fixes the dimension; later entries must agree. The first
    /// occurrence of a repeated token wins.
    pub fn read_from(reader: impl Read, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut out = PretrainedVectors::default();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|p| p.parse::<f32>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| Error::parse(path, n + 1, format!("malformed component in entry '{token}'")))?;
            if values.is_empty() {
                return Err(Error::parse(path, n + 1, format!("entry '{token}' has no components")));
            }
            if out.vectors.is_empty() {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("dimension mismatch: expected {} components, found {}", out.dim, values.len()),
                ));
            }
            out.vectors.entry(token.to_string()).or_insert(values);
        }
        Ok(out)
    }

    pub fn from_map(dim: usize, vectors: HashMap<String, Vec<f32>>) -> Result<Self> {
        if let Some((t, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Invalid(format!(
                "vector for '{t}' has {} components, expected {dim}",
                v.len()
            )));
        }
        Ok(PretrainedVectors { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Looks `word` up exactly, then lower-cased.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    /// Vocabulary entries, excluding the reserved padding and unknown ids.
    pub vocab_size: usize,
    pub covered: usize,
    pub oov: usize,
}

impl Coverage {
    pub fn from_counts(vocab_size: usize, oov: usize) -> Self {
        Coverage {
            vocab_size,
            covered: vocab_size - oov,
            oov,
        }
    }

    pub fn oov_ratio(&self) -> f64 {
        if self.vocab_size == 0 {
            0.0
        } else {
            self.oov as f64 / self.vocab_size as f64
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vocab_size": self.vocab_size,
            "covered": self.covered,
            "oov": self.oov,
            "oov_ratio": self.oov_ratio(),
        })
    }
}

/// `|V| × dim` embedding matrix: rows of covered words are copied from
/// `vectors`, other rows are drawn uniformly, and the padding row is zero.
pub fn embedding_matrix<R: Real>(
    vocab: &Vocabulary,
    vectors: Option<&PretrainedVectors>,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor<R>, Coverage)> {
    if let Some(v) = vectors {
        if !v.is_empty() && v.dim() != dim {
            return Err(Error::Length {
                what: "pretrained vector dimension",
                got: v.dim(),
                expected: dim,
            });
        }
    }
    let bound = xavier_bound(1, dim);
    let mut m = Tensor::zeros(&[vocab.len(), dim]);
    let mut oov = 0;
    for id in 0..vocab.len() {
        let drawn: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        if id == Vocabulary::PAD_ID {
            continue;
        }
        let row = &mut m.data_mut()[id * dim..(id + 1) * dim];
        match vectors.and_then(|v| v.get(vocab.token(id).unwrap_or_default())) {
            Some(src) if id != Vocabulary::UNK_ID => {
                for (o, s) in row.iter_mut().zip(src) {
                    *o = R::from_f64_lossy(*s as f64);
                }
            }
            found => {
                if id != Vocabulary::UNK_ID && found.is_none() {
                    oov += 1;
                }
                for (o, s) in row.iter_mut().zip(&drawn) {
                    *o = R::from_f64_lossy(*s);
                }
            }
        }
    }
    let real = vocab.len() - 2;
    Ok((m, Coverage::from_counts(real, oov)))
}

/// Reads the vector file at `path` and builds the embedding matrix for `vocab`.
pub fn load_pretrained_vectors<R: Real>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor<R>, Coverage)> {
    let vectors = PretrainedVectors::read(path)?;
    embedding_matrix(vocab, Some(&vectors), dim, rng)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::new(true);
        for w in words {
            v.insert(w);
        }
        v
    }

    #[test]
    fn rows_copied_from_file() {
        let text = "quiz 0.1 0.2 0.3\nvideo -1 0 1\n";
        let pv = PretrainedVectors::read_from(text.as_bytes(), "v.txt").unwrap();
        let v = vocab(&["quiz", "video"]);
        let (m, cov) = embedding_matrix::<f32>(&v, Some(&pv), 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.row_slice(v.id("quiz")), &[0.1, 0.2, 0.3]);
        assert_eq!(m.row_slice(v.id("video")), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.row_slice(Vocabulary::PAD_ID), &[0.0, 0.0, 0.0]);
        assert_eq!(cov, Coverage { vocab_size: 2, covered: 2, oov: 0 });
    }

    #[test]
    fn oov_rows_are_drawn() {
        let pv = PretrainedVectors::read_from("quiz 1 1\n".as_bytes(), "v.txt").unwrap();
        let v = vocab(&["quiz", "hw3"]);
        let (m, cov) = embedding_matrix::<f64>(&v, Some(&pv), 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cov.oov, 1);
        assert_eq!(cov.covered + cov.oov, cov.vocab_size);
        assert!(m.row_slice(v.id("hw3")).iter().all(|x| x.abs() <= xavier_bound(1, 2)));
    }

    #[test]
    fn paper_oov_ratio() {
        let c = Coverage::from_counts(9761, 3045);
        // 3045/9761 = 0.311956; the printed 31.19% is truncated.
        assert!((c.oov_ratio() - 0.3119).abs() < 1e-4);
        assert_eq!(c.covered + c.oov, 9761);
    }

    #[test]
    fn empty_vocab() {
        let v = Vocabulary::new(true);
        let (m, cov) = embedding_matrix::<f32>(&v, None, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cov, Coverage::default());
        assert_eq!(m.rows(), 2);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = PretrainedVectors::read_from("a 1 2\nb 1 x\n".as_bytes(), "v.txt").unwrap_err();
        assert!(err.to_string().starts_with("v.txt:2:"), "{err}");
        let err = PretrainedVectors::read_from("a 1 2\n\nb 1 2 3\n".as_bytes(), "v.txt").unwrap_err();
        assert!(err.to_string().contains("v.txt:3: dimension mismatch"), "{err}");
    }

    #[test]
    fn file_dimension_must_match_model() {
        let pv = PretrainedVectors::read_from("quiz 1 1\n".as_bytes(), "v.txt").unwrap();
        let v = vocab(&["quiz"]);
        assert!(embedding_matrix::<f32>(&v, Some(&pv), 3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
