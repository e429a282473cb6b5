//! Exact-match and token-F1 scoring, per-type aggregation and reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::QuestionType;
use crate::error::{Error, Result};
use crate::policy::{forward, EncodedRecord, PolicyParams};

/// SQuAD-style normalization: lowercase, drop punctuation, drop the articles
/// `a`/`an`/`the`, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, golds: &[String]) -> f64 {
    let pred = normalize_answer(pred);
    let hit = golds.iter().any(|g| normalize_answer(g) == pred);
    if hit {
        1.0
    } else {
        0.0
    }
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let pred = normalize_answer(pred);
    let gold = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return if pred_tokens.is_empty() && gold_tokens.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_tokens {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1, maximized over the gold answers.
pub fn f1(pred: &str, golds: &[String]) -> f64 {
    golds
        .iter()
        .map(|g| f1_single(pred, g))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
    pub by_type: BTreeMap<QuestionType, TypeScore>,
}

impl Metrics {
    pub fn empty() -> Self {
        Metrics {
            em: 0.0,
            f1: 0.0,
            n: 0,
            by_type: BTreeMap::new(),
        }
    }

    /// Aggregates `(type, prediction, golds)` triples.
    pub fn from_predictions<'a, I>(items: I) -> Metrics
    where
        I: IntoIterator<Item = (QuestionType, &'a str, &'a [String])>,
    {
        let mut sums: BTreeMap<QuestionType, (f64, f64, usize)> = BTreeMap::new();
        for (qtype, pred, golds) in items {
            let entry = sums.entry(qtype).or_default();
            entry.0 += exact_match(pred, golds);
            entry.1 += f1(pred, golds);
            entry.2 += 1;
        }
        Self::from_sums(sums)
    }

    fn from_sums(sums: BTreeMap<QuestionType, (f64, f64, usize)>) -> Metrics {
        let n: usize = sums.values().map(|s| s.2).sum();
        if n == 0 {
            return Metrics::empty();
        }
        let em = sums.values().map(|s| s.0).sum::<f64>() / n as f64;
        let f1 = sums.values().map(|s| s.1).sum::<f64>() / n as f64;
        let by_type = sums
            .into_iter()
            .map(|(t, (em, f1, n))| {
                (
                    t,
                    TypeScore {
                        em: em / n as f64,
                        f1: f1 / n as f64,
                        n,
                    },
                )
            })
            .collect();
        Metrics { em, f1, n, by_type }
    }
}

/// Greedy (argmax) prediction per record, scored against its golds.
pub fn evaluate(records: &[EncodedRecord], params: &PolicyParams) -> Result<Metrics> {
    let mut predictions = Vec::with_capacity(records.len());
    for record in records {
        let out = forward(params, record)?;
        predictions.push(record.candidates.text(out.argmax()).to_string());
    }
    Ok(Metrics::from_predictions(
        records
            .iter()
            .zip(&predictions)
            .map(|(r, p)| (r.question_type, p.as_str(), r.golds.as_slice())),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Md),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

const OVERALL: &str = "overall";

/// Renders metrics; `dataset` labels the markdown rows.
pub fn report(metrics: &Metrics, format: ReportFormat, dataset: &str) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(metrics)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["type", "em", "f1", "n"])?;
            if metrics.n > 0 {
                for (t, s) in &metrics.by_type {
                    w.write_record([t.label(), &s.em.to_string(), &s.f1.to_string(), &s.n.to_string()])?;
                }
                w.write_record([
                    OVERALL,
                    &metrics.em.to_string(),
                    &metrics.f1.to_string(),
                    &metrics.n.to_string(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Md => {
            let mut out = String::from("| Dataset | Type | EM | F1 | N |\n|---|---|---|---|---|\n");
            if metrics.n > 0 {
                for (t, s) in &metrics.by_type {
                    let _ = writeln!(
                        out,
                        "| {dataset} | {} | {:.1} | {:.1} | {} |",
                        t.label(),
                        100.0 * s.em,
                        100.0 * s.f1,
                        s.n
                    );
                }
                let _ = writeln!(
                    out,
                    "| {dataset} | {OVERALL} | {:.1} | {:.1} | {} |",
                    100.0 * metrics.em,
                    100.0 * metrics.f1,
                    metrics.n
                );
            }
            Ok(out)
        }
    }
}

/// Parses the CSV produced by [`report`].
pub fn parse_csv_report(text: &str) -> Result<Metrics> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut metrics = Metrics::empty();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::validation("csv", format!("bad number `{}`", field(i))))
        };
        let n: usize = field(3)
            .parse()
            .map_err(|_| Error::validation("csv", format!("bad count `{}`", field(3))))?;
        if field(0) == OVERALL {
            metrics.em = num(1)?;
            metrics.f1 = num(2)?;
            metrics.n = n;
        } else {
            let qtype: QuestionType = field(0).parse()?;
            metrics.by_type.insert(
                qtype,
                TypeScore {
                    em: num(1)?,
                    f1: num(2)?,
                    n,
                },
            );
        }
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golds(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalizes_articles_and_punctuation() {
        assert_eq!(normalize_answer("The Capital of France."), "capital of france");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(
            normalize_answer("Gainsborough  Trinity F.C."),
            "gainsborough trinity fc"
        );
    }

    #[test]
    fn exact_match_examples() {
        let gold = golds(&["Gainsborough Trinity F.C."]);
        assert_eq!(exact_match("Gainsborough Trinity F.C.", &gold), 1.0);
        assert_eq!(exact_match("Leeds United F.C.", &gold), 0.0);
        assert_eq!(exact_match("", &golds(&[""])), 1.0);
    }

    #[test]
    fn f1_examples() {
        assert!((f1("x y", &golds(&["x y z"])) - 0.8).abs() < 1e-12);
        assert_eq!(f1("x y", &golds(&["p q r"])), 0.0);
        assert_eq!(f1("Paris", &golds(&["Paris"])), 1.0);
        assert_eq!(f1("", &golds(&[""])), 1.0);
        assert_eq!(f1("", &golds(&["Paris"])), 0.0);
        assert_eq!(f1("Paris", &golds(&[""])), 0.0);
    }

    #[test]
    fn f1_takes_max_over_golds() {
        assert_eq!(f1("red fox", &golds(&["blue", "red fox"])), 1.0);
    }

    #[test]
    fn csv_round_trips() {
        let g1 = golds(&["a b c"]);
        let g2 = golds(&[""]);
        let m = Metrics::from_predictions([
            (QuestionType::L2Point, "a b", g1.as_slice()),
            (QuestionType::EasyExplicit, "", g2.as_slice()),
            (QuestionType::EasyExplicit, "zzz", g2.as_slice()),
        ]);
        let text = report(&m, ReportFormat::Csv, "synthetic").unwrap();
        assert_eq!(parse_csv_report(&text).unwrap(), m);
    }

    #[test]
    fn markdown_has_a_row_per_type() {
        let g = golds(&["x"]);
        let m = Metrics::from_predictions([
            (QuestionType::L2Point, "x", g.as_slice()),
            (QuestionType::HardImplicit, "y", g.as_slice()),
            (QuestionType::L3Event, "x", g.as_slice()),
        ]);
        let md = report(&m, ReportFormat::Md, "synthetic").unwrap();
        for t in ["L2", "HARD", "L3"] {
            assert_eq!(md.lines().filter(|l| l.contains(&format!("| {t} |"))).count(), 1);
        }
    }

    #[test]
    fn empty_metrics_render_header_only() {
        let m = Metrics::empty();
        assert_eq!(report(&m, ReportFormat::Csv, "d").unwrap().trim(), "type,em,f1,n");
        assert_eq!(report(&m, ReportFormat::Md, "d").unwrap().lines().count(), 2);
    }

    #[test]
    fn overall_is_weighted_mean_of_types() {
        let g = golds(&["a"]);
        let m = Metrics::from_predictions([
            (QuestionType::L2Point, "a", g.as_slice()),
            (QuestionType::L2Point, "b", g.as_slice()),
            (QuestionType::L3Event, "a", g.as_slice()),
        ]);
        let weighted: f64 = m.by_type.values().map(|s| s.em * s.n as f64).sum::<f64>() / m.n as f64;
        assert!((weighted - m.em).abs() < 1e-12);
        assert!((m.em - 2.0 / 3.0).abs() < 1e-12);
    }
}
