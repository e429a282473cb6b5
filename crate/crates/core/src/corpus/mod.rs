//! QA records, JSONL ingestion and the synthetic dataset generator.

mod synthetic;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use synthetic::{generate_synthetic, SplitFractions, SyntheticConfig, SyntheticCorpus, SpanAnnotation};

use crate::error::{Error, Result};
use crate::facts::TimeFact;
use crate::io::read_to_string;
use crate::tagger::QuestionTimeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    /// Explicit "in YEAR" point questions.
    #[serde(rename = "L2")]
    L2Point,
    /// The time is replaced by a named event.
    #[serde(rename = "L3")]
    L3Event,
    /// The question's year appears verbatim in the context.
    #[serde(rename = "EASY")]
    EasyExplicit,
    /// before / after / first / last phrasings with no verbatim year.
    #[serde(rename = "HARD")]
    HardImplicit,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::L2Point,
        QuestionType::L3Event,
        QuestionType::EasyExplicit,
        QuestionType::HardImplicit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QuestionType::L2Point => "L2",
            QuestionType::L3Event => "L3",
            QuestionType::EasyExplicit => "EASY",
            QuestionType::HardImplicit => "HARD",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuestionType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::validation("type", format!("unknown question type `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    pub question: String,
    pub context: String,
    /// `[""]` marks an unanswerable question.
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub facts: Vec<TimeFact>,
    /// Subject and relation the question asks about, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_spec: Option<QuestionTimeSpec>,
}

impl QARecord {
    pub fn is_unanswerable(&self) -> bool {
        self.gold_answers.iter().all(|a| a.is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must be non-empty"));
        }
        if self.question.trim().is_empty() {
            return Err(Error::validation("question", "must be non-empty"));
        }
        if self.context.trim().is_empty() {
            return Err(Error::validation("context", "must be non-empty"));
        }
        if self.gold_answers.is_empty() {
            return Err(Error::validation(
                "answers",
                "must hold at least one entry (use [\"\"] for unanswerable)",
            ));
        }
        for (i, fact) in self.facts.iter().enumerate() {
            fact.validate()
                .map_err(|e| Error::validation(format!("facts[{i}]"), e.to_string()))?;
        }
        if let Some(spec) = &self.time_spec {
            if !spec.is_valid() {
                return Err(Error::validation("time_spec", "inconsistent kind and interval"));
            }
        }
        Ok(())
    }
}

/// Wire form with every field optional so missing fields surface as
/// validation errors that name the field.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    #[serde(rename = "type")]
    question_type: Option<String>,
    question: Option<String>,
    context: Option<String>,
    answers: Option<Vec<String>>,
    #[serde(default)]
    facts: Vec<TimeFact>,
    subject: Option<String>,
    relation: Option<String>,
    time_spec: Option<QuestionTimeSpec>,
}

pub fn parse_record(line: &str) -> Result<QARecord> {
    parse_record_at(line, 1)
}

/// Parses one JSONL line; `line_no` is reported in syntax errors.
pub fn parse_record_at(line: &str, line_no: usize) -> Result<QARecord> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let required = |v: Option<String>, field: &str| v.ok_or_else(|| Error::validation(field, "missing"));
    let record = QARecord {
        id: required(raw.id, "id")?,
        question_type: required(raw.question_type, "type")?.parse()?,
        question: required(raw.question, "question")?,
        context: required(raw.context, "context")?,
        gold_answers: raw.answers.ok_or_else(|| Error::validation("answers", "missing"))?,
        facts: raw.facts,
        subject: raw.subject,
        relation: raw.relation,
        time_spec: raw.time_spec,
    };
    record.validate()?;
    Ok(record)
}

pub fn serialize_record(record: &QARecord) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

/// Parses JSONL text; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<QARecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_at(line, i + 1).map_err(|e| match e {
            Error::Validation { field, message } => Error::Parse {
                line: i + 1,
                message: format!("invalid field `{field}`: {message}"),
            },
            other => other,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QARecord>> {
    parse_dataset(&read_to_string(path)?)
}

/// Reads one fact per line.
pub fn load_facts(path: &Path) -> Result<Vec<TimeFact>> {
    let text = read_to_string(path)?;
    let mut facts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fact: TimeFact = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        facts.push(fact);
    }
    Ok(facts)
}
