//! Answer vectors, the triplet score and the bounded reward built from it.
//!
//! ```text
//! T = max{ d(GT, P) - d(P, N) + margin, 0 }
//! R = alpha * 2 / (1 + e^T + delta) - beta
//! ```
//!
//! `d` is Euclidean distance between answer vectors, and `d(P, N)` is
//! aggregated over the negative set (minimum by default).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{exact_match, normalize_answer};
use crate::facts::NegativeSet;
use crate::registry::Registry;

pub const DEFAULT_ANSWER_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerVector {
    pub values: Vec<f64>,
}

impl AnswerVector {
    pub fn zeros(dim: usize) -> Self {
        AnswerVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        AnswerVector { values }
    }
}

pub trait AnswerEmbedder: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn embed(&self, answer: &str) -> AnswerVector;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    /// Registry name: `surface_ngram` or `lookup_table`.
    pub kind: String,
    pub dim: usize,
    pub table: Option<PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: "surface_ngram".into(),
            dim: DEFAULT_ANSWER_DIM,
            table: None,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of boundary-padded character trigrams.
#[derive(Debug, Clone)]
pub struct SurfaceNgramEmbedder {
    dim: usize,
}

impl SurfaceNgramEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("answer embedding dimension must be positive".into()));
        }
        Ok(SurfaceNgramEmbedder { dim })
    }
}

impl AnswerEmbedder for SurfaceNgramEmbedder {
    fn name(&self) -> &'static str {
        "surface_ngram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, answer: &str) -> AnswerVector {
        let mut values = vec![0.0; self.dim];
        let normalized = normalize_answer(answer);
        for word in normalized.split_whitespace() {
            let padded: Vec<char> = std::iter::once('<')
                .chain(word.chars())
                .chain(std::iter::once('>'))
                .collect();
            for gram in padded.windows(3) {
                let text: String = gram.iter().collect();
                let h = fnv1a(text.as_bytes());
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
                values[bucket] += sign;
            }
        }
        AnswerVector::normalized(values)
    }
}

/// Mean of per-word vectors read from a whitespace-separated table.
#[derive(Debug, Clone)]
pub struct LookupTableEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl LookupTableEmbedder {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.is_empty() || !values.iter().all(|v| v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected a word followed by finite reals".into(),
                });
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected {d} values, found {}", values.len()),
                    })
                }
                _ => {}
            }
            table.insert(word.to_lowercase(), values);
        }
        let dim = dim.ok_or_else(|| Error::Parse {
            line: 0,
            message: "lookup table is empty".into(),
        })?;
        Ok(LookupTableEmbedder { dim, table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl AnswerEmbedder for LookupTableEmbedder {
    fn name(&self) -> &'static str {
        "lookup_table"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, answer: &str) -> AnswerVector {
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        for word in normalize_answer(answer).split_whitespace() {
            if let Some(v) = self.table.get(word) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
        if found == 0 {
            return AnswerVector::zeros(self.dim);
        }
        AnswerVector::normalized(sum)
    }
}

pub fn embedder_registry() -> Registry<dyn AnswerEmbedder, EmbedderConfig> {
    let mut registry: Registry<dyn AnswerEmbedder, EmbedderConfig> = Registry::new("answer embedder");
    registry
        .register("surface_ngram", |c| Ok(Box::new(SurfaceNgramEmbedder::new(c.dim)?)))
        .register("lookup_table", |c| {
            let path = c
                .table
                .as_deref()
                .ok_or_else(|| Error::Config("lookup_table embedder needs a table path".into()))?;
            Ok(Box::new(LookupTableEmbedder::load(path)?))
        });
    registry
}

pub fn l2_distance(u: &AnswerVector, v: &AnswerVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    Ok(u.values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// How `d(P, N)` is reduced over a set of negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeAggregation {
    /// Hardest negative.
    #[default]
    Min,
    Mean,
}

pub fn triplet_score(gt: &AnswerVector, p: &AnswerVector, negatives: &[AnswerVector], margin: f64) -> f64 {
    triplet_score_with(gt, p, negatives, margin, NegativeAggregation::Min)
}

/// With no negatives the score falls back to `d(GT, P)`.
pub fn triplet_score_with(
    gt: &AnswerVector,
    p: &AnswerVector,
    negatives: &[AnswerVector],
    margin: f64,
    aggregation: NegativeAggregation,
) -> f64 {
    let d = |a: &AnswerVector, b: &AnswerVector| l2_distance(a, b).unwrap_or(f64::INFINITY);
    let d_gt = d(gt, p);
    if negatives.is_empty() {
        return d_gt;
    }
    let distances = negatives.iter().map(|n| d(p, n));
    let d_neg = match aggregation {
        NegativeAggregation::Min => distances.fold(f64::INFINITY, f64::min),
        NegativeAggregation::Mean => distances.sum::<f64>() / negatives.len() as f64,
    };
    (d_gt - d_neg + margin).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub margin: f64,
    pub aggregation: NegativeAggregation,
    pub embedder: EmbedderConfig,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            alpha: 4.0,
            beta: 2.0,
            delta: 1e-6,
            margin: 1.0,
            aggregation: NegativeAggregation::Min,
            embedder: EmbedderConfig::default(),
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config("delta must be positive".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be non-negative".into()));
        }
        Ok(())
    }

    /// Largest attainable reward, reached at `T = 0`.
    pub fn max_reward(&self) -> f64 {
        reward(0.0, self)
    }
}

pub fn reward(t: f64, params: &RewardParams) -> f64 {
    params.alpha * (2.0 / (1.0 + t.exp() + params.delta)) - params.beta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub triplet: f64,
    pub reward: f64,
}

pub fn score_prediction(
    gt_text: &str,
    pred_text: &str,
    negatives_text: &[&str],
    params: &RewardParams,
    embedder: &dyn AnswerEmbedder,
) -> Scored {
    let gt = embedder.embed(gt_text);
    let p = embedder.embed(pred_text);
    let negatives: Vec<AnswerVector> = negatives_text.iter().map(|n| embedder.embed(n)).collect();
    let t = triplet_score_with(&gt, &p, &negatives, params.margin, params.aggregation);
    Scored {
        triplet: t,
        reward: reward(t, params),
    }
}

/// Scalar reward for choosing `pred` when the reference is `gold`.
pub trait RewardStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn reward(&self, gold: &str, pred: &str, negatives: &NegativeSet) -> f64;
}

/// Triplet-score reward against mined negatives.
pub struct ContrastiveReward {
    params: RewardParams,
    embedder: Box<dyn AnswerEmbedder>,
}

impl ContrastiveReward {
    pub fn new(params: RewardParams) -> Result<Self> {
        params.validate()?;
        let embedder = embedder_registry().build(&params.embedder.kind, &params.embedder)?;
        Ok(ContrastiveReward { params, embedder })
    }

    pub fn with_embedder(params: RewardParams, embedder: Box<dyn AnswerEmbedder>) -> Self {
        ContrastiveReward { params, embedder }
    }

    pub fn score(&self, gold: &str, pred: &str, negatives: &[&str]) -> Scored {
        score_prediction(gold, pred, negatives, &self.params, self.embedder.as_ref())
    }
}

impl RewardStrategy for ContrastiveReward {
    fn name(&self) -> &'static str {
        "contrastive"
    }

    fn reward(&self, gold: &str, pred: &str, negatives: &NegativeSet) -> f64 {
        let negs: Vec<&str> = negatives.all().collect();
        self.score(gold, pred, &negs).reward
    }
}

/// +1 for an exact match after normalization, -1 otherwise.
pub struct ExactMatchReward;

impl RewardStrategy for ExactMatchReward {
    fn name(&self) -> &'static str {
        "exact_match"
    }

    fn reward(&self, gold: &str, pred: &str, _negatives: &NegativeSet) -> f64 {
        if exact_match(pred, &[gold.to_string()]) == 1.0 {
            1.0
        } else {
            -1.0
        }
    }
}

pub fn reward_registry() -> Registry<dyn RewardStrategy, RewardParams> {
    let mut registry: Registry<dyn RewardStrategy, RewardParams> = Registry::new("reward");
    registry
        .register("contrastive", |p| Ok(Box::new(ContrastiveReward::new(p.clone())?)))
        .register("exact_match", |_| Ok(Box::new(ExactMatchReward)));
    registry
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, k: usize) -> AnswerVector {
        let mut v = AnswerVector::zeros(dim);
        v.values[k] = 1.0;
        v
    }

    #[test]
    fn surface_embedding_is_deterministic_and_normalized() {
        let e = SurfaceNgramEmbedder::new(DEFAULT_ANSWER_DIM).unwrap();
        let a = e.embed("Girton College");
        assert_eq!(a, e.embed("Girton College"));
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(e.embed("Paris"), e.embed("paris."));
        assert!(e.embed("").is_zero());
        assert!(e.embed("The ...").is_zero());
    }

    #[test]
    fn distances() {
        let x = unit(4, 0);
        assert_eq!(l2_distance(&x, &x).unwrap(), 0.0);
        let y = unit(4, 1);
        assert!((l2_distance(&x, &y).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(l2_distance(&x, &AnswerVector::zeros(3)).is_err());
    }

    #[test]
    fn triplet_examples() {
        let gt = unit(4, 0);
        let far = unit(4, 1);
        // p = gt, d_N = sqrt(2) >= margin
        assert_eq!(triplet_score(&gt, &gt, &[far.clone()], 1.0), 0.0);
        // p on a negative: d(GT,P) = 1, d_N = 0
        let mut p = AnswerVector::zeros(4);
        p.values[0] = 1.0;
        p.values[1] = 1.0;
        let mut gt2 = p.clone();
        gt2.values[2] = 1.0;
        assert_eq!(triplet_score(&gt2, &p, &[p.clone()], 1.0), 2.0);
        // no negatives
        let mut q = gt.clone();
        q.values[0] = 0.3;
        assert!((triplet_score(&gt, &q, &[], 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn mean_aggregation_is_switchable() {
        let gt = unit(3, 0);
        let p = unit(3, 1);
        let negs = [p.clone(), unit(3, 2)];
        let min = triplet_score_with(&gt, &p, &negs, 1.0, NegativeAggregation::Min);
        let mean = triplet_score_with(&gt, &p, &negs, 1.0, NegativeAggregation::Mean);
        assert!(min > mean);
    }

    #[test]
    fn reward_at_zero_and_large_t() {
        let params = RewardParams::default();
        // 8 / 2.000001 - 2, evaluated exactly.
        assert!((reward(0.0, &params) - 1.999998000001).abs() < 1e-12);
        assert!((reward(20.0, &params) + 1.99999998).abs() < 1e-8);
        assert!(reward(1e6, &params) > -2.0 - 1e-12);
        assert_eq!(reward(f64::INFINITY, &params), -2.0);
    }

    #[test]
    fn identical_prediction_without_negatives_gets_max_reward() {
        let r = ContrastiveReward::new(RewardParams::default()).unwrap();
        let s = r.score("Paris", "paris", &[]);
        assert_eq!(s.triplet, 0.0);
        assert!((s.reward - 1.999998000001).abs() < 1e-12);
    }

    #[test]
    fn prediction_on_a_negative_is_penalized() {
        let r = ContrastiveReward::new(RewardParams::default()).unwrap();
        let s = r.score("Girton College", "Lady Margaret Hall", &["Lady Margaret Hall"]);
        assert!(s.reward < 0.0);
    }

    #[test]
    fn lookup_table_places_paraphrases_together() {
        let table = "capital 0.9 0.1 0.0\nfrance 0.8 0.2 0.0\nparis 1.0 0.0 0.0\nberlin 0.0 0.1 1.0\nof 0.0 0.0 0.0\n";
        let e = LookupTableEmbedder::from_text(table).unwrap();
        let params = RewardParams::default();
        let near = score_prediction("Paris", "the capital of France", &[], &params, &e);
        let far = score_prediction("Paris", "Berlin", &[], &params, &e);
        assert!(near.reward > far.reward);
        assert!(e.embed("zzz unknown").is_zero());
    }

    #[test]
    fn lookup_table_rejects_malformed_rows() {
        assert!(LookupTableEmbedder::from_text("a 1 2\nb 1\n").is_err());
        assert!(LookupTableEmbedder::from_text("a x y\n").is_err());
        assert!(LookupTableEmbedder::from_text("").is_err());
        assert!(LookupTableEmbedder::load(Path::new("/nonexistent/table.txt")).is_err());
    }

    #[test]
    fn registries_build_by_name() {
        let params = RewardParams::default();
        let registry = reward_registry();
        let em = registry.build("exact_match", &params).unwrap();
        assert_eq!(em.reward("Paris", "paris", &NegativeSet::default()), 1.0);
        assert_eq!(em.reward("Paris", "Rome", &NegativeSet::default()), -1.0);
        assert_eq!(registry.build("contrastive", &params).unwrap().name(), "contrastive");
        assert!(registry.build("bleu", &params).is_err());
        let bad = EmbedderConfig {
            kind: "lookup_table".into(),
            ..EmbedderConfig::default()
        };
        assert!(embedder_registry().build("lookup_table", &bad).is_err());
    }
}
