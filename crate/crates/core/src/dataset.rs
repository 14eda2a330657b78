//! Question/answer/grade corpora in the Mohler layout.
//!
//! The canonical ingest format is a UTF-8, tab-separated file whose header
//! names the columns `id`, `question`, `desired_answer`, `student_answer`,
//! `grade_1`, `grade_2` and `grade_avg`, in that order,
//! and has one student answer per row. The question text and desired answer are
//! repeated on every row; the first row carrying a given `id` defines the
//! [`Question`]. Student ids are not part of the file: each answer is given the
//! 1-based ordinal of its row among the rows of its question.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

/// Upper end of the grade scale used everywhere after ingestion.
pub const MAX_GRADE: f64 = 5.0;
/// Upper end of the raw examination scale.
pub const MAX_EXAM_GRADE: f64 = 10.0;

pub const TSV_HEADER: [&str; 7] = [
    "id",
    "question",
    "desired_answer",
    "student_answer",
    "grade_1",
    "grade_2",
    "grade_avg",
];

const AVERAGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("answer references unknown question `{0}`")]
    DanglingReference(String),
    #[error("input is not valid UTF-8: {0}")]
    Encoding(#[from] std::string::FromUtf8Error),
    #[error("grade {value} outside [0, {max}]")]
    OutOfRange { value: f64, max: f64 },
    #[error("duplicate question id `{0}`")]
    DuplicateQuestion(String),
    #[error("dataset has no answers")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grade scale of the rows in a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Grades already on 0–5 (the cleaned corpus).
    #[default]
    Tsv,
    /// Grades on the 0–10 examination scale; halved on ingest.
    TsvExamScale,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Question {
    pub question_id: String,
    pub question_text: String,
    pub desired_answer_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub student_id: String,
    pub answer_text: String,
    pub grade_1: Option<f64>,
    pub grade_2: Option<f64>,
    pub grade_avg: f64,
}

impl AnswerRecord {
    /// Stable identity of this answer, used as a cache key.
    pub fn identity(&self) -> String {
        format!("{}/{}", self.question_id, self.student_id)
    }
}

/// Immutable, validated corpus. Answers keep file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    questions: Vec<Question>,
    answers: Vec<AnswerRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(questions: Vec<Question>, answers: Vec<AnswerRecord>) -> Result<Self, DatasetError> {
        let mut index = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if q.desired_answer_text.trim().is_empty() {
                return Err(DatasetError::MalformedRow {
                    line: 0,
                    reason: format!("question `{}` has an empty desired answer", q.question_id),
                });
            }
            if index.insert(q.question_id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateQuestion(q.question_id.clone()));
            }
        }
        for a in &answers {
            if !index.contains_key(&a.question_id) {
                return Err(DatasetError::DanglingReference(a.question_id.clone()));
            }
            for g in [a.grade_1, a.grade_2, Some(a.grade_avg)].into_iter().flatten() {
                check_range(g, MAX_GRADE)?;
            }
        }
        Ok(Self {
            questions,
            answers,
            index,
        })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn answers(&self) -> &[AnswerRecord] {
        &self.answers
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.index.get(question_id).map(|&i| &self.questions[i])
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

fn check_range(value: f64, max: f64) -> Result<f64, DatasetError> {
    if value.is_finite() && (0.0..=max).contains(&value) {
        Ok(value)
    } else {
        Err(DatasetError::OutOfRange { value, max })
    }
}

/// Maps a 0–10 examination grade onto the 0–5 scale.
pub fn normalize_exam_grade(raw: f64) -> Result<f64, DatasetError> {
    check_range(raw, MAX_EXAM_GRADE).map(|g| g / 2.0)
}

pub fn average_grade(g1: f64, g2: f64) -> Result<f64, DatasetError> {
    let g1 = check_range(g1, MAX_GRADE)?;
    let g2 = check_range(g2, MAX_GRADE)?;
    Ok((g1 + g2) / 2.0)
}

/// Parses a dataset file. See the module docs for the layout.
pub fn parse_dataset<R: Read>(mut source: R, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes)?;

    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    match lines.next() {
        Some((_, header)) if header.split('\t').eq(TSV_HEADER) => {}
        Some((line, header)) => {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("expected header `{}`, found `{header}`", TSV_HEADER.join("\\t")),
            })
        }
        None => unreachable!("split always yields one item"),
    }

    let mut questions: Vec<Question> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut answers = Vec::new();
    for (line, row) in lines {
        if row.is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::MalformedRow { line, reason };
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != TSV_HEADER.len() {
            return Err(malformed(format!(
                "expected {} columns, found {}",
                TSV_HEADER.len(),
                fields.len()
            )));
        }
        let scale = match format {
            DatasetFormat::Tsv => MAX_GRADE,
            DatasetFormat::TsvExamScale => MAX_EXAM_GRADE,
        };
        let grade = |col: usize, optional: bool| -> Result<Option<f64>, DatasetError> {
            let raw = fields[col].trim();
            if raw.is_empty() && optional {
                return Ok(None);
            }
            let value: f64 = raw
                .parse()
                .map_err(|_| malformed(format!("column `{}`: cannot parse grade `{raw}`", TSV_HEADER[col])))?;
            check_range(value, scale)
                .map_err(|e| malformed(format!("column `{}`: {e}", TSV_HEADER[col])))?;
            Ok(Some(match format {
                DatasetFormat::Tsv => value,
                DatasetFormat::TsvExamScale => value / 2.0,
            }))
        };
        let grade_1 = grade(4, true)?;
        let grade_2 = grade(5, true)?;
        let grade_avg = grade(6, false)?.expect("required column");
        if let (Some(g1), Some(g2)) = (grade_1, grade_2) {
            let mean = (g1 + g2) / 2.0;
            if (mean - grade_avg).abs() > AVERAGE_TOLERANCE {
                return Err(malformed(format!(
                    "grade_avg {grade_avg} is not the mean of {g1} and {g2}"
                )));
            }
        }

        let question_id = fields[0].to_string();
        if question_id.is_empty() {
            return Err(malformed("empty question id".into()));
        }
        let count = match seen.get_mut(&question_id) {
            Some(count) => count,
            None => {
                if fields[2].trim().is_empty() {
                    return Err(malformed(format!("question `{question_id}` has an empty desired answer")));
                }
                questions.push(Question {
                    question_id: question_id.clone(),
                    question_text: fields[1].to_string(),
                    desired_answer_text: fields[2].to_string(),
                });
                seen.entry(question_id.clone()).or_insert(0)
            }
        };
        *count += 1;
        answers.push(AnswerRecord {
            student_id: count.to_string(),
            question_id,
            answer_text: fields[3].to_string(),
            grade_1,
            grade_2,
            grade_avg,
        });
    }
    Dataset::new(questions, answers)
}

/// Writes a dataset back in the canonical layout.
///
/// Every answer row repeats its question's text and desired answer. Grades
/// are written with the shortest representation that parses back exactly.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", TSV_HEADER.join("\t"))?;
    let fmt = |g: Option<f64>| g.map(|g| g.to_string()).unwrap_or_default();
    for a in dataset.answers() {
        let q = dataset.question(&a.question_id).expect("validated reference");
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            q.question_id,
            q.question_text,
            q.desired_answer_text,
            a.answer_text,
            fmt(a.grade_1),
            fmt(a.grade_2),
            a.grade_avg
        )?;
    }
    Ok(())
}

/// Number of half-point histogram bins over the 0–5 scale.
pub const HISTOGRAM_BINS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_questions: usize,
    pub n_answers: usize,
    pub mean_grade: f64,
    pub median_grade: f64,
    /// Bin `k` counts averages in `[k/2 - 0.25, k/2 + 0.25)`, i.e. it is
    /// centred on the half-point grade `k/2`. The last bin also takes 5.0.
    pub grade_histogram: [usize; HISTOGRAM_BINS],
}

pub fn dataset_stats(dataset: &Dataset) -> Result<DatasetStats, DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut grades: Vec<f64> = dataset.answers().iter().map(|a| a.grade_avg).collect();
    grades.sort_by(f64::total_cmp);
    let n = grades.len();
    // Summing the sorted list keeps the mean independent of file order.
    let mean_grade = grades.iter().sum::<f64>() / n as f64;
    let median_grade = if n % 2 == 1 {
        grades[n / 2]
    } else {
        (grades[n / 2 - 1] + grades[n / 2]) / 2.0
    };
    let mut grade_histogram = [0usize; HISTOGRAM_BINS];
    for g in &grades {
        let bin = ((g * 2.0) + 0.5).floor() as usize;
        grade_histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(DatasetStats {
        n_questions: dataset.questions().len(),
        n_answers: n,
        mean_grade,
        median_grade,
        grade_histogram,
    })
}
