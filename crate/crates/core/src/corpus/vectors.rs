use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

use super::vocab::{Vocabulary, PAD};

pub const DEFAULT_INIT_RANGE: f64 = 0.1;

/// Embedding matrix built from a whitespace-separated vector file.
#[derive(Clone, Debug)]
pub struct WordVectors<F> {
    pub matrix: Tensor<F>,
    /// Vocabulary rows copied from the file.
    pub found: usize,
}

/// Builds a `|vocab| x dim` matrix. Rows of tokens present in the file are
/// copied verbatim, every other row is drawn from `U[-init_range,
/// init_range]`, and the PAD row is zero. An optional word2vec-style
/// `count dim` header line is skipped.
pub fn load_word_vectors<F: Real>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    init_range: f64,
    rng: &mut impl Rng,
) -> Result<WordVectors<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_word_vectors(BufReader::new(file), path, vocab, dim, init_range, rng)
}

pub fn read_word_vectors<F: Real>(
    reader: impl BufRead,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    init_range: f64,
    rng: &mut impl Rng,
) -> Result<WordVectors<F>> {
    let mut matrix = random_matrix(vocab.len(), dim, init_range, rng);
    let mut seen = vec![false; vocab.len()];
    let mut found = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("vector width {} does not match dim {dim}", values.len()),
            });
        }
        let Some(row) = vocab.get(token) else { continue };
        let parsed = values
            .iter()
            .map(|v| v.parse::<f64>().map(F::lit))
            .collect::<std::result::Result<Vec<F>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
        matrix.row_slice_mut(row).copy_from_slice(&parsed);
        if !seen[row] {
            seen[row] = true;
            found += 1;
        }
    }
    matrix.row_slice_mut(PAD).fill(F::zero());
    Ok(WordVectors { matrix, found })
}

/// `rows x dim` uniform matrix with a zero PAD row.
pub fn random_matrix<F: Real>(rows: usize, dim: usize, init_range: f64, rng: &mut impl Rng) -> Tensor<F> {
    let data = (0..rows * dim)
        .map(|_| F::lit(rng.gen_range(-init_range..=init_range)))
        .collect();
    let mut m = Tensor::new(rows, dim, data).expect("sized");
    if rows > PAD {
        m.row_slice_mut(PAD).fill(F::zero());
    }
    m
}
