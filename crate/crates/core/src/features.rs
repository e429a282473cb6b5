//! Temporal masks, sliding-window dilation and embedding fusion.
//!
//! A mask marks the tokens of detected temporal expressions with 1. Dilation
//! spreads every 1 to the `L` neighbors on each side. The dilated question
//! and context masks are concatenated and looked up in a two-row time table;
//! each looked-up row is combined with the token's text embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagger::TemporalSpan;

/// Sliding-window half-width used when none is configured.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TemporalMask {
    pub bits: Vec<u8>,
}

impl TemporalMask {
    pub fn zeros(len: usize) -> Self {
        TemporalMask { bits: vec![0; len] }
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        TemporalMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Fraction of 1s in `range` (0 for an empty range).
    pub fn density(&self, range: std::ops::Range<usize>) -> f64 {
        let len = range.len();
        if len == 0 {
            return 0.0;
        }
        self.bits[range].iter().map(|&b| b as f64).sum::<f64>() / len as f64
    }
}

pub fn build_mask(length: usize, spans: &[TemporalSpan]) -> Result<TemporalMask> {
    let mut mask = TemporalMask::zeros(length);
    for s in spans {
        if s.tok_start >= s.tok_end || s.tok_end > length {
            return Err(Error::SpanOutOfRange {
                start: s.tok_start,
                end: s.tok_end,
                len: length,
            });
        }
        mask.bits[s.tok_start..s.tok_end].fill(1);
    }
    Ok(mask)
}

/// Bit `i` of the result is 1 iff some input 1 lies within distance `window`.
pub fn dilate(mask: &TemporalMask, window: usize) -> TemporalMask {
    let n = mask.len();
    // Distance to the nearest 1 on the left, then on the right.
    let mut dist = vec![usize::MAX; n];
    let mut last = None;
    for i in 0..n {
        if mask.bits[i] == 1 {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = i - j;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if mask.bits[i] == 1 {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = dist[i].min(j - i);
        }
    }
    TemporalMask {
        bits: dist.into_iter().map(|d| u8::from(d <= window)).collect(),
    }
}

pub fn concat_masks(question: &TemporalMask, context: &TemporalMask) -> TemporalMask {
    let mut bits = Vec::with_capacity(question.len() + context.len());
    bits.extend_from_slice(&question.bits);
    bits.extend_from_slice(&context.bits);
    TemporalMask { bits }
}

/// How a token's time embedding is combined with its text embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `text + time`, width `d`.
    #[default]
    Add,
    /// `[text; time]`, width `2d`.
    Concat,
}

impl FusionMode {
    pub fn width(self, dim: usize) -> usize {
        match self {
            FusionMode::Add => dim,
            FusionMode::Concat => 2 * dim,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            FusionMode::Add => 0,
            FusionMode::Concat => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FusionMode::Add),
            1 => Some(FusionMode::Concat),
            _ => None,
        }
    }
}

/// Row-major `2 x dim` time table and `vocab x dim` text table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub dim: usize,
    pub time_table: Vec<f64>,
    pub text_table: Vec<f64>,
}

impl EmbeddingTables {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        EmbeddingTables {
            dim,
            time_table: vec![0.0; 2 * dim],
            text_table: vec![0.0; vocab * dim],
        }
    }

    pub fn vocab(&self) -> usize {
        self.text_table.len() / self.dim.max(1)
    }

    pub fn time_row(&self, bit: u8) -> &[f64] {
        let b = bit as usize;
        &self.time_table[b * self.dim..(b + 1) * self.dim]
    }

    pub fn text_row(&self, id: usize) -> &[f64] {
        &self.text_table[id * self.dim..(id + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_table.len() != 2 * self.dim {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.dim,
                actual: self.time_table.len(),
            });
        }
        if self.dim == 0 || self.text_table.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: self.text_table.len(),
            });
        }
        if !self.time_table.iter().chain(&self.text_table).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(())
    }
}

/// Row-major `rows x width` matrix of fused vectors; the first
/// `question_len` rows belong to the question.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSequence {
    pub width: usize,
    pub vectors: Vec<f64>,
    pub question_len: usize,
}

impl FusedSequence {
    pub fn rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.vectors.len() / self.width
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.width..(i + 1) * self.width]
    }

    /// Column-wise mean over `range`, zeros for an empty range.
    pub fn mean(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        let len = range.len();
        if len == 0 {
            return out;
        }
        for i in range {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        let scale = 1.0 / len as f64;
        out.iter_mut().for_each(|o| *o *= scale);
        out
    }
}

/// `e_time`: row `i` is the time-table row selected by mask bit `i`.
pub fn embed_temporal(mask: &TemporalMask, tables: &EmbeddingTables) -> Vec<Vec<f64>> {
    mask.bits.iter().map(|&b| tables.time_row(b).to_vec()).collect()
}

pub fn fuse(token_ids: &[usize], mask: &TemporalMask, tables: &EmbeddingTables) -> Result<FusedSequence> {
    fuse_with(token_ids, mask, tables, FusionMode::Add, true, token_ids.len())
}

/// Fuses text and time embeddings. With `temporal` off the time rows are
/// treated as zero.
pub fn fuse_with(
    token_ids: &[usize],
    mask: &TemporalMask,
    tables: &EmbeddingTables,
    mode: FusionMode,
    temporal: bool,
    question_len: usize,
) -> Result<FusedSequence> {
    if mask.len() != token_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: token_ids.len(),
            actual: mask.len(),
        });
    }
    let vocab = tables.vocab();
    let d = tables.dim;
    let width = mode.width(d);
    let mut vectors = Vec::with_capacity(token_ids.len() * width);
    for (&id, &bit) in token_ids.iter().zip(&mask.bits) {
        if id >= vocab {
            return Err(Error::OutOfVocabulary { id, vocab });
        }
        let text = tables.text_row(id);
        let time = tables.time_row(bit);
        match (mode, temporal) {
            (FusionMode::Add, true) => vectors.extend(text.iter().zip(time).map(|(a, b)| a + b)),
            (FusionMode::Add, false) => vectors.extend_from_slice(text),
            (FusionMode::Concat, true) => {
                vectors.extend_from_slice(text);
                vectors.extend_from_slice(time);
            }
            (FusionMode::Concat, false) => {
                vectors.extend_from_slice(text);
                vectors.extend(std::iter::repeat(0.0).take(d));
            }
        }
    }
    Ok(FusedSequence {
        width,
        vectors,
        question_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::SpanKind;
    use proptest::prelude::*;

    fn mask(bits: &[u8]) -> TemporalMask {
        TemporalMask::from_bits(bits.to_vec())
    }

    fn point(i: usize) -> TemporalSpan {
        TemporalSpan {
            tok_start: i,
            tok_end: i + 1,
            kind: SpanKind::Signal,
            interval: None,
        }
    }

    #[test]
    fn build_mask_examples() {
        assert_eq!(build_mask(5, &[point(2)]).unwrap(), mask(&[0, 0, 1, 0, 0]));
        assert_eq!(build_mask(4, &[]).unwrap(), mask(&[0, 0, 0, 0]));
        assert_eq!(
            build_mask(6, &[point(1), point(4)]).unwrap(),
            mask(&[0, 1, 0, 0, 1, 0])
        );
    }

    #[test]
    fn build_mask_rejects_out_of_range() {
        assert!(matches!(
            build_mask(3, &[point(3)]),
            Err(Error::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn build_mask_ignores_duplicates() {
        assert_eq!(
            build_mask(5, &[point(2), point(2)]).unwrap(),
            build_mask(5, &[point(2)]).unwrap()
        );
    }

    #[test]
    fn dilate_examples() {
        assert_eq!(dilate(&mask(&[0, 0, 1, 0, 0]), 1), mask(&[0, 1, 1, 1, 0]));
        assert_eq!(dilate(&mask(&[0, 0, 0]), 4), mask(&[0, 0, 0]));
        assert_eq!(dilate(&mask(&[1, 0, 0, 0, 0]), 10), mask(&[1, 1, 1, 1, 1]));
        assert_eq!(dilate(&mask(&[]), 3), mask(&[]));
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat_masks(&mask(&[1, 0]), &mask(&[0, 1, 1])), mask(&[1, 0, 0, 1, 1]));
        assert_eq!(concat_masks(&mask(&[]), &mask(&[1])), mask(&[1]));
        assert_eq!(
            concat_masks(&TemporalMask::zeros(2), &TemporalMask::zeros(3)),
            TemporalMask::zeros(5)
        );
    }

    fn tables() -> EmbeddingTables {
        EmbeddingTables {
            dim: 2,
            time_table: vec![0.5, -0.5, 2.0, 3.0],
            text_table: vec![1.0, 1.0, 10.0, 20.0, -1.0, 4.0],
        }
    }

    #[test]
    fn embed_temporal_examples() {
        let t = tables();
        assert_eq!(embed_temporal(&mask(&[0, 1]), &t), vec![vec![0.5, -0.5], vec![2.0, 3.0]]);
        assert!(embed_temporal(&mask(&[0, 0, 0]), &t).iter().all(|r| r == &[0.5, -0.5]));
        assert!(embed_temporal(&mask(&[]), &t).is_empty());
    }

    #[test]
    fn fuse_adds_rows() {
        let t = tables();
        let fused = fuse(&[1], &mask(&[1]), &t).unwrap();
        assert_eq!(fused.row(0), &[12.0, 23.0]);
        let mut zero_time = t.clone();
        zero_time.time_table.fill(0.0);
        let fused = fuse(&[1, 2], &mask(&[1, 0]), &zero_time).unwrap();
        assert_eq!(fused.vectors, vec![10.0, 20.0, -1.0, 4.0]);
        let fused = fuse(&[2, 0, 2], &mask(&[1, 0, 1]), &t).unwrap();
        assert_eq!(fused.row(0), fused.row(2));
    }

    #[test]
    fn fuse_rejects_unknown_ids_and_bad_masks() {
        let t = tables();
        assert!(matches!(fuse(&[3], &mask(&[0]), &t), Err(Error::OutOfVocabulary { .. })));
        assert!(fuse(&[0, 1], &mask(&[0]), &t).is_err());
    }

    #[test]
    fn concat_mode_and_disabled_fusion() {
        let t = tables();
        let fused = fuse_with(&[1], &mask(&[1]), &t, FusionMode::Concat, true, 0).unwrap();
        assert_eq!(fused.vectors, vec![10.0, 20.0, 2.0, 3.0]);
        let fused = fuse_with(&[1], &mask(&[1]), &t, FusionMode::Add, false, 0).unwrap();
        assert_eq!(fused.vectors, vec![10.0, 20.0]);
    }

    fn brute_dilate(bits: &[u8], window: usize) -> Vec<u8> {
        (0..bits.len())
            .map(|i| {
                let lo = i.saturating_sub(window);
                let hi = (i + window).min(bits.len().saturating_sub(1));
                u8::from((lo..=hi).any(|j| bits[j] == 1))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn dilate_matches_definition(bits in prop::collection::vec(0u8..=1, 0..64), window in 0usize..16) {
            prop_assert_eq!(dilate(&mask(&bits), window).bits, brute_dilate(&bits, window));
        }

        #[test]
        fn dilate_zero_is_identity_and_commutes_with_reverse(
            bits in prop::collection::vec(0u8..=1, 0..64), window in 0usize..16
        ) {
            let m = mask(&bits);
            prop_assert_eq!(dilate(&m, 0), m.clone());
            let mut rev = bits.clone();
            rev.reverse();
            let mut expected = dilate(&m, window).bits;
            expected.reverse();
            prop_assert_eq!(dilate(&mask(&rev), window).bits, expected);
        }

        #[test]
        fn dilate_is_monotone(
            bits in prop::collection::vec(0u8..=1, 1..64), window in 0usize..16, flip in 0usize..64
        ) {
            let before = dilate(&mask(&bits), window);
            let mut more = bits.clone();
            let k = flip % more.len();
            more[k] = 1;
            let after = dilate(&mask(&more), window);
            prop_assert!(before.bits.iter().zip(&after.bits).all(|(a, b)| a <= b));
        }

        #[test]
        fn fuse_is_linear_in_time_table(scale in -3.0f64..3.0, bits in prop::collection::vec(0u8..=1, 1..8)) {
            let t = tables();
            let ids: Vec<usize> = (0..bits.len()).map(|i| i % 3).collect();
            let m = mask(&bits);
            let mut zero = t.clone();
            zero.time_table.fill(0.0);
            let mut scaled = t.clone();
            scaled.time_table.iter_mut().for_each(|v| *v *= scale);
            let base = fuse(&ids, &m, &zero).unwrap();
            let unit = fuse(&ids, &m, &t).unwrap();
            let out = fuse(&ids, &m, &scaled).unwrap();
            for k in 0..out.vectors.len() {
                let expected = scale * (unit.vectors[k] - base.vectors[k]);
                prop_assert!((out.vectors[k] - base.vectors[k] - expected).abs() < 1e-12);
            }
        }
    }
}
