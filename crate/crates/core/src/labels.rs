//! Condition labels (`EOL_ECL`), the label vocabulary, the trainable embedding
//! table, and nearest-label matching for conditions absent from training.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::numcore::{Matrix, Rng};
use crate::{Error, Result};

/// A generation condition: end of life and the cycle already completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelKey {
    pub eol: u32,
    pub ecl: u32,
}

impl LabelKey {
    pub fn new(eol: u32, ecl: u32) -> Result<Self> {
        if eol == 0 || ecl == 0 {
            return Err(Error::Parse(format!(
                "label {eol}_{ecl}: EOL and ECL must be positive"
            )));
        }
        if ecl > eol {
            return Err(Error::Parse(format!("label {eol}_{ecl}: ECL exceeds EOL")));
        }
        Ok(Self { eol, ecl })
    }

    /// Remaining useful life, `EOL - ECL`.
    pub fn rul(&self) -> u32 {
        self.eol - self.ecl
    }

    /// `weight·|ΔEOL| + (1 - weight)·|ΔECL|`.
    pub fn distance(&self, other: &LabelKey, weight: f64) -> f64 {
        let d_eol = (f64::from(self.eol) - f64::from(other.eol)).abs();
        let d_ecl = (f64::from(self.ecl) - f64::from(other.ecl)).abs();
        weight * d_eol + (1.0 - weight) * d_ecl
    }
}

impl fmt::Display for LabelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.eol, self.ecl)
    }
}

fn parse_count(part: &str, whole: &str) -> Result<u32> {
    let canonical = !part.is_empty()
        && part.bytes().all(|b| b.is_ascii_digit())
        && !(part.len() > 1 && part.starts_with('0'));
    if !canonical {
        return Err(Error::Parse(format!("malformed label {whole:?}")));
    }
    part.parse()
        .map_err(|_| Error::Parse(format!("label {whole:?} out of range")))
}

impl FromStr for LabelKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (eol, ecl) = s
            .split_once('_')
            .ok_or_else(|| Error::Parse(format!("malformed label {s:?}")))?;
        LabelKey::new(parse_count(eol, s)?, parse_count(ecl, s)?)
    }
}

/// Ordered set of distinct training conditions; index = first-occurrence position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    keys: Vec<LabelKey>,
    index: HashMap<LabelKey, usize>,
}

impl LabelVocab {
    pub fn build<'a>(labels: impl IntoIterator<Item = &'a LabelKey>) -> Result<Self> {
        let mut keys = Vec::new();
        let mut index = HashMap::new();
        for key in labels {
            index.entry(*key).or_insert_with(|| {
                keys.push(*key);
                keys.len() - 1
            });
        }
        if keys.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from no labels".into()));
        }
        Ok(Self { keys, index })
    }

    pub fn from_strings<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let keys = labels
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<LabelKey>>>()?;
        Self::build(&keys)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[LabelKey] {
        &self.keys
    }

    pub fn key(&self, index: usize) -> Option<LabelKey> {
        self.keys.get(index).copied()
    }

    pub fn index_of(&self, key: &LabelKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn contains(&self, key: &LabelKey) -> bool {
        self.index.contains_key(key)
    }

    /// Index of `key`, or of its nearest vocabulary entry when absent.
    pub fn resolve(&self, key: &LabelKey, weight: f64) -> Result<usize> {
        match self.index_of(key) {
            Some(i) => Ok(i),
            None => {
                let matched = match_similar(self, key, weight)?;
                Ok(self.index[&matched])
            }
        }
    }
}

/// Nearest vocabulary label under `weight·|ΔEOL| + (1 - weight)·|ΔECL|`.
/// Ties go to the lowest vocabulary index.
pub fn match_similar(vocab: &LabelVocab, query: &LabelKey, weight: f64) -> Result<LabelKey> {
    let mut best: Option<(f64, LabelKey)> = None;
    for key in &vocab.keys {
        let d = key.distance(query, weight);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, *key));
        }
    }
    best.map(|(_, k)| k)
        .ok_or_else(|| Error::State("empty vocabulary".into()))
}

/// Trainable `N × D` embedding matrix; row `i` is the condition vector of label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Matrix,
}

impl EmbeddingTable {
    pub fn new(weights: Matrix) -> Self {
        Self { weights }
    }

    /// Standard-normal initialisation.
    pub fn random(n: usize, dim: usize, rng: &mut Rng) -> Self {
        let data = rng.normal_sample(n * dim);
        Self {
            weights: Matrix::from_vec(n, dim, data).expect("sized above"),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn row(&self, index: usize) -> Result<&[f64]> {
        if index >= self.len() {
            return Err(Error::Dimension(format!(
                "embedding index {index} out of {} rows",
                self.len()
            )));
        }
        Ok(self.weights.row(index))
    }

    /// Vectorised lookup: a `D × B` matrix whose column `j` is row `indices[j]`.
    pub fn lookup(&self, indices: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.dim(), indices.len());
        for (j, &i) in indices.iter().enumerate() {
            out.set_col(j, self.row(i)?);
        }
        Ok(out)
    }

    /// Adds the columns of `grad` (`D × B`) into the rows named by `indices`.
    pub fn accumulate_grad(grad_table: &mut Matrix, indices: &[usize], grad: &Matrix) {
        for (j, &i) in indices.iter().enumerate() {
            let row = grad_table.row_mut(i);
            for (d, r) in row.iter_mut().enumerate() {
                *r += grad.get(d, j);
            }
        }
    }
}

/// Embedding vector for `key`; unseen keys must be matched first.
pub fn embed(vocab: &LabelVocab, table: &EmbeddingTable, key: &LabelKey) -> Result<Vec<f64>> {
    let index = vocab
        .index_of(key)
        .ok_or_else(|| Error::UnknownLabel(key.to_string()))?;
    Ok(table.row(index)?.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(eol: u32, ecl: u32) -> LabelKey {
        LabelKey::new(eol, ecl).unwrap()
    }

    #[test]
    fn vocab_first_occurrence_order() {
        let v = LabelVocab::from_strings(&["700_10", "650_3", "700_10"]).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.index_of(&key(700, 10)), Some(0));
        assert_eq!(v.index_of(&key(650, 3)), Some(1));
    }

    #[test]
    fn identical_labels_collapse() {
        let v = LabelVocab::from_strings(&["5_1"; 4]).unwrap();
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn malformed_labels_rejected() {
        for s in ["", "700", "700_", "_10", "7a_1", "700-10", "0700_10", "10_20", "0_0"] {
            assert!(s.parse::<LabelKey>().is_err(), "{s} should fail");
        }
        assert_eq!("700_10".parse::<LabelKey>().unwrap().to_string(), "700_10");
        assert!(LabelVocab::from_strings::<&str>(&[]).is_err());
    }

    #[test]
    fn lookup_selects_rows() {
        let table = EmbeddingTable::new(
            Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap(),
        );
        let vocab = LabelVocab::build(&[key(10, 1), key(20, 2)]).unwrap();
        assert_eq!(embed(&vocab, &table, &key(20, 2)).unwrap(), vec![4.0, 5.0, 6.0]);
        assert!(matches!(
            embed(&vocab, &table, &key(30, 3)),
            Err(Error::UnknownLabel(_))
        ));
        let batch = table.lookup(&[0, 0, 1]).unwrap();
        assert_eq!(batch.col(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(batch.col(1), vec![1.0, 2.0, 3.0]);
        assert_eq!(batch.col(2), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn lookup_gradient_touches_only_used_rows() {
        let mut grad = Matrix::zeros(3, 2);
        let upstream = Matrix::from_columns(&[vec![1.0, -1.0]]).unwrap();
        EmbeddingTable::accumulate_grad(&mut grad, &[1], &upstream);
        assert_eq!(grad.row(0), &[0.0, 0.0]);
        assert_eq!(grad.row(1), &[1.0, -1.0]);
        assert_eq!(grad.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn matcher_examples() {
        let vocab = LabelVocab::build(&[key(700, 10)]).unwrap();
        let q = key(800, 20);
        assert_eq!(key(700, 10).distance(&q, 0.5), 55.0);
        assert_eq!(match_similar(&vocab, &q, 0.5).unwrap(), key(700, 10));

        let vocab = LabelVocab::build(&[key(600, 20), key(800, 20), key(700, 5)]).unwrap();
        assert_eq!(match_similar(&vocab, &key(800, 20), 0.5).unwrap(), key(800, 20));
    }

    #[test]
    fn matcher_ties_go_to_lowest_index() {
        let vocab = LabelVocab::build(&[key(110, 10), key(90, 10)]).unwrap();
        assert_eq!(match_similar(&vocab, &key(100, 10), 0.5).unwrap(), key(110, 10));
        let vocab = LabelVocab::build(&[key(90, 10), key(110, 10)]).unwrap();
        assert_eq!(match_similar(&vocab, &key(100, 10), 0.5).unwrap(), key(90, 10));
    }

    proptest! {
        #[test]
        fn uniform_rescaling_keeps_argmin(
            entries in prop::collection::vec((1u32..200, 1u32..40), 1..30),
            q in (1u32..200, 1u32..40),
            factor in 2u32..6,
            weight in 0.0f64..=1.0,
        ) {
            let keys: Vec<LabelKey> = entries.iter().map(|&(e, c)| key(e + c, c)).collect();
            let scale = |k: &LabelKey| key(k.eol * factor, k.ecl * factor);
            let scaled: Vec<LabelKey> = keys.iter().map(scale).collect();
            let query = key(q.0 + q.1, q.1);
            let a = match_similar(&LabelVocab::build(&keys).unwrap(), &query, weight).unwrap();
            let b = match_similar(&LabelVocab::build(&scaled).unwrap(), &scale(&query), weight)
                .unwrap();
            prop_assert_eq!(scale(&a), b);
        }

        #[test]
        fn vocab_is_a_bijection(entries in prop::collection::vec((1u32..50, 1u32..10), 1..60)) {
            let keys: Vec<LabelKey> = entries.iter().map(|&(e, c)| key(e + c, c)).collect();
            let vocab = LabelVocab::build(&keys).unwrap();
            for (i, k) in vocab.keys().iter().enumerate() {
                prop_assert_eq!(vocab.index_of(k), Some(i));
            }
            for k in &keys {
                prop_assert!(vocab.contains(k));
            }
        }
    }
}
