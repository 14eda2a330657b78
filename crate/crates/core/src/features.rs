//! The similarity feature: sum-of-word-embeddings sentence vectors compared
//! by cosine similarity and rescaled to `[0, 1]`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnswerRecord, Dataset, MAX_GRADE};
use crate::embedding::{content_digest, tokenize, EmbeddingCache, EmbeddingError, EmbeddingProvider, WordVector};

/// Norms below this count as a zero vector.
pub const ZERO_NORM: f64 = 1e-12;

pub const FEATURE_DUMP_HEADER: [&str; 5] = ["question_id", "student_id", "similarity_raw", "similarity_norm", "grade"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no word vectors to sum")]
    EmptyAnswer,
    #[error("zero-length vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no scores to normalize")]
    EmptyInput,
    #[error("embedding `{identity}`: {source}")]
    Provider {
        identity: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("feature dump line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sentence embedding of one answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    values: Vec<f64>,
    /// Number of word vectors summed; unknown for vectors read from a cache.
    terms: Option<usize>,
}

impl SentenceVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values, terms: None }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn terms(&self) -> Option<usize> {
        self.terms
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sum of word embeddings: the componentwise sum of `vectors`.
pub fn sowe(vectors: &[WordVector]) -> Result<SentenceVector, FeatureError> {
    let first = vectors.first().ok_or(FeatureError::EmptyAnswer)?;
    let mut sum = vec![0.0; first.dimension()];
    for v in vectors {
        if v.dimension() != sum.len() {
            return Err(FeatureError::DimensionMismatch(sum.len(), v.dimension()));
        }
        sum.iter_mut().zip(v.as_slice()).for_each(|(s, x)| *s += x);
    }
    Ok(SentenceVector {
        values: sum,
        terms: Some(vectors.len()),
    })
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(FeatureError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Min-max scaling fitted on one score population and applied to others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(scores: &[f64]) -> Result<Self, FeatureError> {
        if scores.is_empty() {
            return Err(FeatureError::EmptyInput);
        }
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    /// Maps `score` into `[0, 1]`. Scores outside the fitted range are
    /// clamped; a degenerate range maps everything to 0.5.
    pub fn apply(&self, score: f64) -> f64 {
        if self.max <= self.min {
            0.5
        } else {
            ((score - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }
}

pub fn min_max_normalize(scores: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let mm = MinMax::fit(scores)?;
    Ok(scores.iter().map(|&s| mm.apply(s)).collect())
}

/// Why a row's similarity was set to 0 instead of computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFlag {
    /// The student answer had no embeddable tokens.
    EmptyAnswer,
    /// The desired answer had no embeddable tokens.
    EmptyDesiredAnswer,
    /// One of the sentence vectors had (near) zero length.
    ZeroVector,
}

impl std::fmt::Display for FeatureFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EmptyAnswer => "empty_answer",
            Self::EmptyDesiredAnswer => "empty_desired_answer",
            Self::ZeroVector => "zero_vector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub question_id: String,
    pub student_id: String,
    pub similarity_raw: f64,
    pub similarity_norm: f64,
    pub target_grade: f64,
    pub flag: Option<FeatureFlag>,
}

/// Cache key for a piece of text: its identity plus a digest of the text.
pub fn cache_identity(identity: &str, text: &str) -> String {
    format!("{identity}#{:016x}", content_digest(text))
}

/// Embeds one text. `Ok(None)` means no token could be embedded.
pub fn encode_text(
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
    identity: &str,
    text: &str,
) -> Result<Option<SentenceVector>, FeatureError> {
    let key = cache_identity(identity, text);
    if let Some(values) = cache.and_then(|c| c.get(provider.name(), &key)) {
        log::debug!("cache hit for {key}");
        return Ok((!values.is_empty()).then(|| SentenceVector::from_values(values)));
    }
    let tokens = tokenize(text);
    let vector = if tokens.is_empty() {
        None
    } else {
        match provider.embed_tokens(&tokens) {
            Ok(vectors) => Some(sowe(&vectors)?),
            Err(EmbeddingError::AllTokensOov | EmbeddingError::EmptyTokens) => None,
            Err(source) => {
                return Err(FeatureError::Provider {
                    identity: identity.to_string(),
                    source,
                })
            }
        }
    };
    if let Some(c) = cache {
        c.insert(provider.name(), &key, vector.as_ref().map(|v| v.values.clone()).unwrap_or_default());
    }
    Ok(vector)
}

fn desired_identity(question_id: &str) -> String {
    format!("{question_id}/desired")
}

/// Embeds every desired answer and every student answer, filling `cache`.
/// Returns the failures in dataset order (desired answers first).
pub fn embed_dataset(
    dataset: &Dataset,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Vec<FeatureError> {
    let desired: Vec<(String, &str)> = dataset
        .questions()
        .iter()
        .map(|q| (desired_identity(&q.question_id), q.desired_answer_text.as_str()))
        .collect();
    let answers: Vec<(String, &str)> = dataset
        .answers()
        .iter()
        .map(|a| (a.identity(), a.answer_text.as_str()))
        .collect();
    desired
        .par_iter()
        .chain(answers.par_iter())
        .filter_map(|(id, text)| encode_text(provider, cache, id, text).err())
        .collect()
}

pub fn build_features(dataset: &Dataset, provider: &dyn EmbeddingProvider) -> Result<Vec<FeatureRow>, FeatureError> {
    build_features_cached(dataset, provider, None)
}

/// One [`FeatureRow`] per answer, in dataset order.
///
/// Answers (or desired answers) without any embeddable token, and zero
/// sentence vectors, get a raw similarity of 0 and a flag. `similarity_norm`
/// is min-max scaled over the whole run's raw scores.
pub fn build_features_cached(
    dataset: &Dataset,
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<FeatureRow>, FeatureError> {
    let desired = dataset
        .questions()
        .par_iter()
        .map(|q| {
            encode_text(provider, cache, &desired_identity(&q.question_id), &q.desired_answer_text)
                .map(|v| (q.question_id.clone(), v))
        })
        .collect::<Result<std::collections::HashMap<_, _>, _>>()?;

    let mut rows = dataset
        .answers()
        .par_iter()
        .map(|a| {
            let student = encode_text(provider, cache, &a.identity(), &a.answer_text)?;
            let reference = desired.get(&a.question_id).expect("validated dataset");
            Ok(feature_row(a, student.as_ref(), reference.as_ref()))
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;

    let raw: Vec<f64> = rows.iter().map(|r| r.similarity_raw).collect();
    if let Ok(norm) = min_max_normalize(&raw) {
        rows.iter_mut().zip(norm).for_each(|(r, n)| r.similarity_norm = n);
    }
    let flagged = rows.iter().filter(|r| r.flag.is_some()).count();
    if flagged > 0 {
        log::warn!("{flagged} of {} answers were given similarity 0 (see flags)", rows.len());
    }
    Ok(rows)
}

/// Similarity of a student vector to a reference vector, with the flagging
/// policy applied. `similarity_norm` is left at 0 for the caller to fill.
pub fn score_pair(student: Option<&SentenceVector>, reference: Option<&SentenceVector>) -> (f64, Option<FeatureFlag>) {
    match (student, reference) {
        (None, _) => (0.0, Some(FeatureFlag::EmptyAnswer)),
        (_, None) => (0.0, Some(FeatureFlag::EmptyDesiredAnswer)),
        (Some(s), Some(r)) => match cosine_similarity(s.values(), r.values()) {
            Ok(c) => (c, None),
            Err(_) => (0.0, Some(FeatureFlag::ZeroVector)),
        },
    }
}

fn feature_row(a: &AnswerRecord, student: Option<&SentenceVector>, reference: Option<&SentenceVector>) -> FeatureRow {
    let (similarity_raw, flag) = score_pair(student, reference);
    FeatureRow {
        question_id: a.question_id.clone(),
        student_id: a.student_id.clone(),
        similarity_raw,
        similarity_norm: 0.0,
        target_grade: a.grade_avg,
        flag,
    }
}

pub fn write_feature_dump<W: Write>(rows: &[FeatureRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", FEATURE_DUMP_HEADER.join("\t"))?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.question_id, r.student_id, r.similarity_raw, r.similarity_norm, r.target_grade
        )?;
    }
    out.flush()
}

/// Reads a feature dump. Flags are not part of the dump and come back empty.
pub fn read_feature_dump<R: BufRead>(input: R) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut lines = input.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).transpose()?;
    match header {
        Some(h) if h.split('\t').eq(FEATURE_DUMP_HEADER) => {}
        _ => {
            return Err(FeatureError::MalformedDump {
                line: 1,
                reason: format!("expected header `{}`", FEATURE_DUMP_HEADER.join("\\t")),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| FeatureError::MalformedDump { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != FEATURE_DUMP_HEADER.len() {
            return Err(malformed(format!("expected 5 columns, found {}", f.len())));
        }
        let num = |col: usize, lo: f64, hi: f64| -> Result<f64, FeatureError> {
            f[col]
                .parse::<f64>()
                .ok()
                .filter(|v| (lo..=hi).contains(v))
                .ok_or_else(|| malformed(format!("column `{}`: bad value `{}`", FEATURE_DUMP_HEADER[col], f[col])))
        };
        rows.push(FeatureRow {
            question_id: f[0].to_string(),
            student_id: f[1].to_string(),
            similarity_raw: num(2, -1.0, 1.0)?,
            similarity_norm: num(3, 0.0, 1.0)?,
            target_grade: num(4, 0.0, MAX_GRADE)?,
            flag: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_dataset, DatasetFormat};
    use crate::embedding::{load_static_embeddings, HashEmbeddings};
    use proptest::prelude::*;

    fn wv(v: &[f64]) -> WordVector {
        WordVector::new(v.to_vec()).unwrap()
    }

    /// Textbook cosine, written independently of the implementation.
    fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
        let na = (0..a.len()).map(|i| a[i].powi(2)).sum::<f64>().sqrt();
        let nb = (0..b.len()).map(|i| b[i].powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn sowe_examples() {
        assert_eq!(sowe(&[wv(&[1.0, 2.0]), wv(&[3.0, 4.0])]).unwrap().values(), [4.0, 6.0]);
        let single = sowe(&[wv(&[0.5, -1.5, 2.0])]).unwrap();
        assert_eq!(single.values(), [0.5, -1.5, 2.0]);
        assert_eq!(single.terms(), Some(1));
        assert!(matches!(sowe(&[]), Err(FeatureError::EmptyAnswer)));
        assert!(matches!(
            sowe(&[wv(&[1.0]), wv(&[1.0, 2.0])]),
            Err(FeatureError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((c - brute_cosine(&[1.0, 0.0], &[1.0, 1.0])).abs() < 1e-15);
        assert!((c - 0.7071067811865475).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), Err(FeatureError::ZeroVector)));
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 1.0]), Err(FeatureError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&[2.0, 4.0, 6.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[7.0, 7.0, 7.0]).unwrap(), [0.5, 0.5, 0.5]);
        assert_eq!(min_max_normalize(&[-0.2, 0.8]).unwrap(), [0.0, 1.0]);
        assert!(matches!(min_max_normalize(&[]), Err(FeatureError::EmptyInput)));
        let mm = MinMax::fit(&[0.2, 0.6]).unwrap();
        assert_eq!(mm.apply(0.1), 0.0);
        assert_eq!(mm.apply(0.9), 1.0);
    }

    const TOY_DATASET: &str = "id\tquestion\tdesired_answer\tstudent_answer\tgrade_1\tgrade_2\tgrade_avg\n\
        q1\tq\talpha beta\tbeta alpha\t5\t5\t5\n\
        q1\tq\talpha beta\talpha\t4\t4\t4\n\
        q1\tq\talpha beta\tgamma\t1\t2\t1.5\n\
        q1\tq\talpha beta\tunknown words only\t0\t0\t0\n";

    // alpha=[1,0], beta=[0,1], gamma=[-1,1]; desired = alpha+beta = [1,1].
    const TOY_VECTORS: &str = "alpha 1 0\nbeta 0 1\ngamma -1 1\n";

    #[test]
    fn toy_features_match_hand_computation() {
        let d = parse_dataset(TOY_DATASET.as_bytes(), DatasetFormat::Tsv).unwrap();
        let p = load_static_embeddings(TOY_VECTORS.as_bytes(), "toy").unwrap();
        let rows = build_features(&d, &p).unwrap();
        assert_eq!(rows.len(), 4);
        // [1,1]·[1,1] / (√2·√2) = 1
        assert!((rows[0].similarity_raw - 1.0).abs() < 1e-15);
        // [1,0]·[1,1] / (1·√2) = 1/√2
        assert!((rows[1].similarity_raw - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // [-1,1]·[1,1] = 0
        assert_eq!(rows[2].similarity_raw, 0.0);
        assert_eq!(rows[2].flag, None);
        // all OOV
        assert_eq!(rows[3].similarity_raw, 0.0);
        assert_eq!(rows[3].flag, Some(FeatureFlag::EmptyAnswer));
        assert_eq!(p.oov_count(), 3);
        // population min 0, max 1
        let norm: Vec<f64> = rows.iter().map(|r| r.similarity_norm).collect();
        assert!((norm[1] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!([norm[0], norm[2], norm[3]], [1.0, 0.0, 0.0]);
        assert_eq!(rows[0].target_grade, 5.0);
        assert_eq!(rows[2].target_grade, 1.5);
    }

    #[test]
    fn zero_sentence_vector_is_flagged() {
        let data = "id\tquestion\tdesired_answer\tstudent_answer\tgrade_1\tgrade_2\tgrade_avg\n\
            q1\tq\talpha\talpha minus\t5\t5\t5\n";
        let d = parse_dataset(data.as_bytes(), DatasetFormat::Tsv).unwrap();
        let p = load_static_embeddings("alpha 1 0\nminus -1 0\n".as_bytes(), "toy").unwrap();
        let rows = build_features(&d, &p).unwrap();
        assert_eq!(rows[0].similarity_raw, 0.0);
        assert_eq!(rows[0].flag, Some(FeatureFlag::ZeroVector));
    }

    #[test]
    fn cache_is_consulted_and_filled() {
        let d = parse_dataset(TOY_DATASET.as_bytes(), DatasetFormat::Tsv).unwrap();
        let p = HashEmbeddings::new(3, 8);
        let cache = EmbeddingCache::in_memory();
        let first = build_features_cached(&d, &p, Some(&cache)).unwrap();
        // 1 desired answer + 4 answers
        assert_eq!(cache.len(), 5);
        let second = build_features_cached(&d, &p, Some(&cache)).unwrap();
        assert_eq!(first, second);
        assert!(embed_dataset(&d, &p, Some(&cache)).is_empty());
    }

    #[test]
    fn dump_round_trip() {
        let d = parse_dataset(TOY_DATASET.as_bytes(), DatasetFormat::Tsv).unwrap();
        let p = load_static_embeddings(TOY_VECTORS.as_bytes(), "toy").unwrap();
        let mut rows = build_features(&d, &p).unwrap();
        let mut buf = Vec::new();
        write_feature_dump(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("question_id\tstudent_id\tsimilarity_raw\tsimilarity_norm\tgrade\n"));
        let back = read_feature_dump(&buf[..]).unwrap();
        rows.iter_mut().for_each(|r| r.flag = None);
        assert_eq!(back, rows);
        assert!(read_feature_dump("nope\n".as_bytes()).is_err());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_bounded_scale_invariant(
            (a, b) in (1usize..16).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            alpha in 1e-3f64..1e3,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.abs() <= 1.0);
            let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() <= 1e-12);
            prop_assert!((ab - brute_cosine(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn sowe_keeps_dimension_and_ignores_order(
            vs in (1usize..12).prop_flat_map(|d| proptest::collection::vec(vec_strategy(d), 1..10)),
            rot in 0usize..10,
        ) {
            let words: Vec<WordVector> = vs.iter().map(|v| wv(v)).collect();
            let s = sowe(&words).unwrap();
            prop_assert_eq!(s.dimension(), words[0].dimension());
            let mut shuffled = words.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let t = sowe(&shuffled).unwrap();
            for (x, y) in s.values().iter().zip(t.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn normalization_preserves_rank(scores in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
            let out = min_max_normalize(&scores).unwrap();
            for i in 0..scores.len() {
                prop_assert!((0.0..=1.0).contains(&out[i]));
                for j in 0..scores.len() {
                    if scores[i] <= scores[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                prop_assert!(out.contains(&0.0) && out.contains(&1.0));
            }
        }
    }
}
