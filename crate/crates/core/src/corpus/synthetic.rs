//! Seeded generator of time-sensitive QA records.
//!
//! Every subject holds a chronologically ordered, non-overlapping sequence of
//! facts per relation. A record asks about one (subject, relation) pair; its
//! context renders every fact of the subject plus distractor facts of other
//! subjects whose periods overlap the question's focus period. Temporal
//! phrases are rendered from a fixed template pool and their token spans are
//! returned as ground-truth annotations.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{QARecord, QuestionType};
use crate::error::{Error, Result};
use crate::facts::{bulk_load, resolve_question, FactIndex, TimeFact, EVENT_RELATION};
use crate::tagger::{self, QuestionTimeSpec, SpanKind, TemporalSpan, TimeSpecKind};
use crate::time::{Month, MonthInterval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            dev: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub facts_per_pair: usize,
    pub distractor_sentences_per_context: usize,
    pub year_range: [i32; 2],
    pub unanswerable_fraction: f64,
    /// Weights for L2, L3, EASY, HARD in that order.
    pub question_type_mix: [f64; 4],
    pub n_records: usize,
    pub splits: SplitFractions,
    /// Probability that the last fact of a pair is open-ended.
    pub open_end_probability: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_entities: 200,
            n_relations: 3,
            facts_per_pair: 4,
            distractor_sentences_per_context: 2,
            year_range: [1900, 2020],
            unanswerable_fraction: 0.1,
            question_type_mix: [1.0, 1.0, 1.0, 1.0],
            n_records: 1000,
            splits: SplitFractions::default(),
            open_end_probability: 0.1,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("facts_per_pair", self.facts_per_pair),
            ("n_records", self.n_records),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_relations > RELATIONS.len() {
            return Err(Error::Config(format!(
                "n_relations must be at most {}",
                RELATIONS.len()
            )));
        }
        if self.year_range[0] >= self.year_range[1] {
            return Err(Error::Config("year_range must satisfy y_min < y_max".into()));
        }
        if self.year_range[0] < 1000 || self.year_range[1] > 2999 {
            return Err(Error::Config("year_range must lie within [1000, 2999]".into()));
        }
        if !(0.0..=1.0).contains(&self.unanswerable_fraction) {
            return Err(Error::Config("unanswerable_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.open_end_probability) {
            return Err(Error::Config("open_end_probability must lie in [0, 1]".into()));
        }
        if self.question_type_mix.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("question_type_mix weights must be non-negative".into()));
        }
        if self.question_type_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("question_type_mix weights are all zero".into()));
        }
        let s = &self.splits;
        if [s.train, s.dev, s.test].iter().any(|f| *f < 0.0) || s.train + s.dev + s.test <= 0.0 {
            return Err(Error::Config("split fractions must be non-negative with a positive sum".into()));
        }
        Ok(())
    }
}

/// Ground-truth temporal spans of one generated context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub id: String,
    pub spans: Vec<TemporalSpan>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<QARecord>,
    pub dev: Vec<QARecord>,
    pub test: Vec<QARecord>,
    /// Every generated fact, including event facts.
    pub facts: Vec<TimeFact>,
    pub annotations: Vec<SpanAnnotation>,
}

impl SyntheticCorpus {
    pub fn records(&self) -> impl Iterator<Item = &QARecord> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

struct RelationTemplate {
    name: &'static str,
    /// Question stem; the time phrase follows it.
    question: &'static str,
    /// `{s}` subject, `{o}` object; the time phrase is appended.
    trailing: &'static str,
    /// Sentence that opens with the time phrase.
    leading: &'static str,
    object_patterns: &'static [&'static str],
}

const RELATIONS: [RelationTemplate; 5] = [
    RelationTemplate {
        name: "employer",
        question: "Which employer did {s} work for",
        trailing: "{s} worked for {o}",
        leading: "{s} was employed by {o}",
        object_patterns: &["{w} College", "{w} University", "{w} Institute"],
    },
    RelationTemplate {
        name: "team",
        question: "Which team did {s} play for",
        trailing: "{s} played for {o}",
        leading: "{s} was a player at {o}",
        object_patterns: &["{w} United F.C.", "{w} Rovers", "{w} City F.C."],
    },
    RelationTemplate {
        name: "position",
        question: "Which position did {s} hold",
        trailing: "{s} held the position of {o}",
        leading: "{s} served as {o}",
        object_patterns: &["Mayor of {w}", "Director of {w}", "Chair of {w}"],
    },
    RelationTemplate {
        name: "residence",
        question: "Which city did {s} live in",
        trailing: "{s} lived in {o}",
        leading: "{s} resided in {o}",
        object_patterns: &["{w}ton", "Port {w}", "{w}ford"],
    },
    RelationTemplate {
        name: "membership",
        question: "Which society did {s} belong to",
        trailing: "{s} was a member of {o}",
        leading: "{s} belonged to {o}",
        object_patterns: &["{w} Society", "{w} Guild", "{w} Circle"],
    },
];

const EVENT_PATTERNS: [&str; 5] = ["{w} Summit", "{w} Accord", "{w} Games", "{w} Expo", "{w} Festival"];

const SYLLABLES: [&str; 24] = [
    "ka", "lor", "ven", "dis", "tel", "bro", "hal", "rin", "sol", "var", "nen", "qua", "zel", "ot",
    "bri", "fen", "gal", "mor", "tas", "lum", "dra", "pel", "wik", "sar",
];

/// Words the tagger or the normalizer treats specially.
fn is_reserved(word: &str) -> bool {
    let lower = word.to_lowercase();
    tagger::month_of(&lower).is_some()
        || tagger::is_signal(&lower)
        || matches!(lower.as_str(), "a" | "an" | "the" | "and" | "to" | "from" | "between" | "in" | "of" | "till")
}

struct WordSource {
    used: HashSet<String>,
}

impl WordSource {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let n = rng.gen_range(2..=3);
            let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            if let Some(first) = w.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            if !is_reserved(&w) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

/// A sentence built from plain and temporal pieces.
#[derive(Default)]
struct Sentence {
    pieces: Vec<(String, Option<(SpanKind, MonthInterval)>)>,
}

impl Sentence {
    fn text(&mut self, s: impl Into<String>) -> &mut Self {
        self.pieces.push((s.into(), None));
        self
    }

    fn time(&mut self, s: impl Into<String>, kind: SpanKind, interval: MonthInterval) -> &mut Self {
        self.pieces.push((s.into(), Some((kind, interval))));
        self
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Temporal phrase for a fact span: `(plain prefix, temporal text, kind)`.
fn time_phrase(fact: &TimeFact, rng: &mut ChaCha8Rng) -> (&'static str, String, SpanKind) {
    let start = fact.start.expect("generated facts have a start").year();
    match fact.end {
        None => ("", format!("since {start}"), SpanKind::OpenSince),
        Some(end) if end.year() == start => ("in ", start.to_string(), SpanKind::YearPoint),
        Some(end) => match rng.gen_range(0..3) {
            0 => ("", format!("from {start} to {}", end.year()), SpanKind::YearRange),
            1 => ("", format!("between {start} and {}", end.year()), SpanKind::YearRange),
            _ => ("in ", format!("{start}\u{2013}{}", end.year()), SpanKind::YearRange),
        },
    }
}

fn render_fact(fact: &TimeFact, rng: &mut ChaCha8Rng) -> Sentence {
    let rel = RELATIONS
        .iter()
        .find(|r| r.name == fact.relation)
        .expect("generated relation");
    let (prefix, phrase, kind) = time_phrase(fact, rng);
    let span = fact.span();
    let mut s = Sentence::default();
    if rng.gen_bool(0.5) {
        let body = rel.trailing.replace("{s}", &fact.subject).replace("{o}", &fact.object);
        s.text(format!("{body} {prefix}"))
            .time(phrase, kind, span)
            .text(".");
    } else {
        let body = rel.leading.replace("{s}", &fact.subject).replace("{o}", &fact.object);
        s.text(capitalize(prefix))
            .time(if prefix.is_empty() { capitalize(&phrase) } else { phrase }, kind, span)
            .text(format!(", {body}."));
    }
    s
}

fn render_event(name: &str, span: MonthInterval) -> Sentence {
    let (a, b) = (span.start.year(), span.end.year());
    let mut s = Sentence::default();
    s.text(format!("The {name} took place "));
    if a == b {
        s.text("in ").time(a.to_string(), SpanKind::YearPoint, span);
    } else {
        s.time(format!("from {a} to {b}"), SpanKind::YearRange, span);
    }
    s.text(".");
    s
}

/// Joins sentences and maps temporal pieces to token spans.
fn assemble(sentences: &[Sentence]) -> (String, Vec<TemporalSpan>) {
    let mut text = String::new();
    let mut ranges = Vec::new();
    for (k, sentence) in sentences.iter().enumerate() {
        if k > 0 {
            text.push(' ');
        }
        for (piece, time) in &sentence.pieces {
            let start = text.len();
            text.push_str(piece);
            if let Some((kind, interval)) = time {
                ranges.push((start, text.len(), *kind, *interval));
            }
        }
    }
    let tokens = tagger::tokenize(&text);
    let spans = ranges
        .into_iter()
        .map(|(start, end, kind, interval)| {
            let inside: Vec<usize> = tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.start >= start && t.end <= end)
                .map(|(i, _)| i)
                .collect();
            TemporalSpan {
                tok_start: inside[0],
                tok_end: inside[inside.len() - 1] + 1,
                kind,
                interval: Some(interval),
            }
        })
        .collect();
    (text, spans)
}

fn year_literals(text: &str) -> BTreeSet<i32> {
    tagger::tokenize(text)
        .iter()
        .filter(|t| t.text.len() == 4 && t.text.bytes().all(|b| b.is_ascii_digit()))
        .filter_map(|t| t.text.parse().ok())
        .collect()
}

struct World {
    subjects: Vec<String>,
    relations: Vec<&'static RelationTemplate>,
    /// Facts keyed by subject index, in relation then time order.
    by_subject: Vec<Vec<TimeFact>>,
    index: FactIndex,
}

fn build_world(config: &SyntheticConfig, rng: &mut ChaCha8Rng, words: &mut WordSource) -> Result<World> {
    let [y_min, y_max] = config.year_range;
    let relations: Vec<&RelationTemplate> = RELATIONS.iter().take(config.n_relations).collect();

    let n_first = ((config.n_entities as f64).sqrt().ceil() as usize).max(2);
    let firsts: Vec<String> = (0..n_first).map(|_| words.word(rng)).collect();
    let lasts: Vec<String> = (0..n_first + 1).map(|_| words.word(rng)).collect();
    let mut subjects = Vec::with_capacity(config.n_entities);
    'outer: for last in &lasts {
        for first in &firsts {
            if subjects.len() == config.n_entities {
                break 'outer;
            }
            subjects.push(format!("{first} {last}"));
        }
    }
    subjects.shuffle(rng);

    let pool_size = config.n_entities.max(4 * config.facts_per_pair);
    let pools: Vec<Vec<String>> = relations
        .iter()
        .map(|rel| {
            (0..pool_size)
                .map(|_| {
                    let w = words.word(rng);
                    rel.object_patterns.choose(rng).unwrap().replace("{w}", &w)
                })
                .collect()
        })
        .collect();

    let mut by_subject = Vec::with_capacity(subjects.len());
    for subject in &subjects {
        let mut facts = Vec::new();
        for (rel, pool) in relations.iter().zip(&pools) {
            let objects: Vec<&String> = pool.choose_multiple(rng, config.facts_per_pair).collect();
            let mut year = y_min + rng.gen_range(0..=5);
            for (k, object) in objects.iter().enumerate() {
                let len = rng.gen_range(1..=6);
                let end = year + len - 1;
                if end > y_max {
                    break;
                }
                let last = k + 1 == config.facts_per_pair;
                let open = last && rng.gen_bool(config.open_end_probability);
                let fact = TimeFact::new(
                    subject.as_str(),
                    rel.name,
                    object.as_str(),
                    Some(Month::year_start(year)),
                    (!open).then(|| Month::year_end(end)),
                );
                facts.push(fact);
                year = end + 1 + rng.gen_range(0..=3);
            }
        }
        by_subject.push(facts);
    }
    let index = bulk_load(by_subject.iter().flatten().cloned())?;
    Ok(World {
        subjects,
        relations,
        by_subject,
        index,
    })
}

struct Draft {
    question_type: QuestionType,
    answerable: bool,
}

struct Built {
    record: QARecord,
    spans: Vec<TemporalSpan>,
    event: Option<TimeFact>,
}

fn pick_type(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> QuestionType {
    let total: f64 = config.question_type_mix.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (w, t) in config.question_type_mix.iter().zip(QuestionType::ALL) {
        if x < *w {
            return t;
        }
        x -= w;
    }
    QuestionType::ALL
        .into_iter()
        .zip(config.question_type_mix)
        .filter(|(_, w)| *w > 0.0)
        .last()
        .map(|(t, _)| t)
        .expect("positive weight")
}

fn years_of(span: MonthInterval, y_max: i32) -> std::ops::RangeInclusive<i32> {
    span.start.year()..=span.end.year().min(y_max)
}

fn build_record(
    config: &SyntheticConfig,
    world: &World,
    draft: &Draft,
    subject_idx: usize,
    relation: &RelationTemplate,
    words: &mut WordSource,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Built>> {
    let [y_min, y_max] = config.year_range;
    let subject = &world.subjects[subject_idx];
    let pair: Vec<&TimeFact> = world.by_subject[subject_idx]
        .iter()
        .filter(|f| f.relation == relation.name)
        .collect();
    if pair.is_empty() {
        return Ok(None);
    }
    let covered = |y: i32| pair.iter().any(|f| f.span().intersects(&MonthInterval::year(y)));
    let all_years: Vec<i32> = (y_min..=y_max).collect();

    // Question time: (spec, phrase tokens after the stem, event to add)
    let mut event: Option<TimeFact> = None;
    let (spec, phrase) = match draft.question_type {
        QuestionType::L2Point | QuestionType::EasyExplicit => {
            // Easy years are resolved against the context below.
            if draft.question_type == QuestionType::EasyExplicit {
                (None, String::new())
            } else {
                let year = if draft.answerable {
                    let fact = pair.choose(rng).unwrap();
                    rng.gen_range(years_of(fact.span(), y_max))
                } else {
                    let gaps: Vec<i32> = all_years.iter().copied().filter(|&y| !covered(y)).collect();
                    match gaps.choose(rng) {
                        Some(&y) => y,
                        None => return Ok(None),
                    }
                };
                if rng.gen_bool(0.25) {
                    let month = rng.gen_range(1..=12);
                    let abbr = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
                        [month as usize - 1];
                    (
                        Some(QuestionTimeSpec::point(MonthInterval::single(Month::new(year, month)))),
                        format!("in {abbr}, {year}"),
                    )
                } else {
                    (Some(QuestionTimeSpec::point(MonthInterval::year(year))), format!("in {year}"))
                }
            }
        }
        QuestionType::L3Event => {
            let name = format!("{}", EVENT_PATTERNS.choose(rng).unwrap().replace("{w}", &words.word(rng)));
            let kind = match rng.gen_range(0..5) {
                0 => TimeSpecKind::Before,
                1 => TimeSpecKind::After,
                _ => TimeSpecKind::DuringEvent,
            };
            let year_ok = |y: i32| {
                let q = MonthInterval::year(y);
                let gold = match kind {
                    TimeSpecKind::DuringEvent => pair.iter().any(|f| f.span().intersects(&q)),
                    TimeSpecKind::Before => pair.iter().any(|f| f.span().end <= q.start),
                    _ => pair.iter().any(|f| f.span().start >= q.end),
                };
                gold == draft.answerable
            };
            let years: Vec<i32> = all_years.iter().copied().filter(|&y| year_ok(y)).collect();
            let Some(&year) = years.choose(rng) else { return Ok(None) };
            let span = if rng.gen_bool(0.3) && year < y_max && year_ok(year + 1) {
                MonthInterval::years(year, year + 1)
            } else {
                MonthInterval::year(year)
            };
            event = Some(TimeFact::new(
                name.as_str(),
                EVENT_RELATION,
                name.as_str(),
                Some(span.start),
                Some(span.end),
            ));
            let word = match kind {
                TimeSpecKind::Before => "before",
                TimeSpecKind::After => "after",
                _ => "during",
            };
            (
                Some(QuestionTimeSpec {
                    kind,
                    interval: None,
                    event_name: Some(format!("the {name}")),
                }),
                format!("{word} the {name}"),
            )
        }
        QuestionType::HardImplicit => (None, String::new()),
    };

    // Focus period for distractors.
    let focus = match (&spec, &event) {
        (_, Some(e)) => e.span(),
        (Some(s), None) => s.interval.expect("point spec"),
        _ => {
            let fact = pair.choose(rng).unwrap();
            fact.span()
        }
    };

    let mut sentences = Vec::new();
    let mut facts: Vec<TimeFact> = Vec::new();
    let mut objects: HashSet<String> = HashSet::new();
    for fact in &world.by_subject[subject_idx] {
        objects.insert(fact.object.clone());
        facts.push(fact.clone());
    }
    let distractor_pool: Vec<usize> = world
        .index
        .overlapping(&focus)
        .into_iter()
        .filter(|&id| world.index.get(id).subject != *subject)
        .collect();
    let mut picked = 0;
    for &id in distractor_pool.choose_multiple(rng, distractor_pool.len()) {
        if picked == config.distractor_sentences_per_context {
            break;
        }
        let fact = world.index.get(id);
        if objects.insert(fact.object.clone()) {
            facts.push(fact.clone());
            picked += 1;
        }
    }
    for fact in &facts {
        sentences.push(render_fact(fact, rng));
    }
    if let Some(e) = &event {
        sentences.push(render_event(&e.subject, e.span()));
        facts.push(e.clone());
    }
    sentences.shuffle(rng);
    let (context, spans) = assemble(&sentences);
    let literals = year_literals(&context);

    let (spec, phrase) = match draft.question_type {
        QuestionType::EasyExplicit => {
            let years: Vec<i32> = literals
                .iter()
                .copied()
                .filter(|&y| covered(y) == draft.answerable && (y_min..=y_max).contains(&y))
                .collect();
            let Some(&year) = years.choose(rng) else { return Ok(None) };
            (QuestionTimeSpec::point(MonthInterval::year(year)), format!("in {year}"))
        }
        QuestionType::HardImplicit => {
            let choice = if draft.answerable { rng.gen_range(0..4) } else { rng.gen_range(0..2) };
            match choice {
                2 => (
                    QuestionTimeSpec {
                        kind: TimeSpecKind::First,
                        interval: None,
                        event_name: None,
                    },
                    "first".to_string(),
                ),
                3 => (
                    QuestionTimeSpec {
                        kind: TimeSpecKind::Last,
                        interval: None,
                        event_name: None,
                    },
                    "last".to_string(),
                ),
                k => {
                    let before = k == 0;
                    let years: Vec<i32> = all_years
                        .iter()
                        .copied()
                        .filter(|y| !literals.contains(y))
                        .filter(|&y| {
                            let q = MonthInterval::year(y);
                            let gold = if before {
                                pair.iter().any(|f| f.span().end <= q.start)
                            } else {
                                pair.iter().any(|f| f.span().start >= q.end)
                            };
                            gold == draft.answerable
                        })
                        .collect();
                    let Some(&year) = years.choose(rng) else { return Ok(None) };
                    let (kind, word) = if before {
                        (TimeSpecKind::Before, "before")
                    } else {
                        (TimeSpecKind::After, "after")
                    };
                    (
                        QuestionTimeSpec {
                            kind,
                            interval: Some(MonthInterval::year(year)),
                            event_name: None,
                        },
                        format!("{word} {year}"),
                    )
                }
            }
        }
        _ => (spec.expect("spec chosen before rendering"), phrase),
    };

    let question = format!("{} {phrase}?", relation.question.replace("{s}", subject));
    let local = bulk_load(pair.iter().map(|f| (*f).clone()).chain(event.clone()))?;
    let gold = resolve_question(&spec, subject, relation.name, &local)?;
    if gold.is_empty() == draft.answerable {
        return Ok(None);
    }
    let record = QARecord {
        id: String::new(),
        question_type: draft.question_type,
        question,
        context,
        gold_answers: vec![gold],
        facts,
        subject: Some(subject.clone()),
        relation: Some(relation.name.to_string()),
        time_spec: Some(spec),
    };
    Ok(Some(Built { record, spans, event }))
}

/// Generates train/dev/test splits and the fact store behind them.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut words = WordSource { used: HashSet::new() };
    let world = build_world(config, &mut rng, &mut words)?;

    let mut built: Vec<Built> = Vec::with_capacity(config.n_records);
    let mut attempts = 0usize;
    while built.len() < config.n_records {
        attempts += 1;
        if attempts > 50 * config.n_records + 1000 {
            return Err(Error::Config(
                "could not realize the requested question mix; widen year_range or add facts".into(),
            ));
        }
        let draft = Draft {
            question_type: pick_type(config, &mut rng),
            answerable: !rng.gen_bool(config.unanswerable_fraction),
        };
        let subject_idx = rng.gen_range(0..world.subjects.len());
        let relation = *world.relations.choose(&mut rng).unwrap();
        if let Some(b) = build_record(config, &world, &draft, subject_idx, relation, &mut words, &mut rng)? {
            built.push(b);
        }
    }

    let mut facts: Vec<TimeFact> = world.index.facts().to_vec();
    let mut annotations = Vec::with_capacity(built.len());
    let mut records = Vec::with_capacity(built.len());
    for (i, mut b) in built.into_iter().enumerate() {
        b.record.id = format!("syn-{}-{i:06}", config.seed);
        annotations.push(SpanAnnotation {
            id: b.record.id.clone(),
            spans: b.spans,
        });
        facts.extend(b.event);
        records.push(b.record);
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng);
    let s = &config.splits;
    let total = s.train + s.dev + s.test;
    let n = records.len();
    let n_train = ((s.train / total) * n as f64).round() as usize;
    let n_dev = (((s.dev / total) * n as f64).round() as usize).min(n - n_train);
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for (rank, &idx) in order.iter().enumerate() {
        let split = if rank < n_train {
            0
        } else if rank < n_train + n_dev {
            1
        } else {
            2
        };
        slots.insert(idx, split);
    }
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut recs: Vec<Option<QARecord>> = records.into_iter().map(Some).collect();
    for &idx in &order {
        let r = recs[idx].take().expect("each record placed once");
        match slots[&idx] {
            0 => train.push(r),
            1 => dev.push(r),
            _ => test.push(r),
        }
    }
    Ok(SyntheticCorpus {
        train,
        dev,
        test,
        facts,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_entities: 30,
            n_records: 120,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn zero_weights_are_rejected() {
        let config = SyntheticConfig {
            question_type_mix: [0.0; 4],
            ..small()
        };
        assert!(matches!(generate_synthetic(&config), Err(Error::Config(_))));
        let config = SyntheticConfig {
            year_range: [2000, 2000],
            ..small()
        };
        assert!(generate_synthetic(&config).is_err());
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        let dump = |c: &SyntheticCorpus| {
            crate::io::to_jsonl(&c.records().cloned().collect::<Vec<_>>()).unwrap()
                + &crate::io::to_jsonl(&c.facts).unwrap()
        };
        assert_eq!(dump(&a), dump(&b));
    }

    #[test]
    fn no_unanswerables_when_fraction_is_zero() {
        let config = SyntheticConfig {
            unanswerable_fraction: 0.0,
            ..small()
        };
        let corpus = generate_synthetic(&config).unwrap();
        assert!(corpus.records().all(|r| !r.is_unanswerable()));
    }

    #[test]
    fn pair_facts_are_ordered_and_disjoint() {
        let corpus = generate_synthetic(&small()).unwrap();
        let mut pairs: BTreeMap<(String, String), Vec<MonthInterval>> = BTreeMap::new();
        for f in corpus.facts.iter().filter(|f| !f.is_event()) {
            pairs
                .entry((f.subject.clone(), f.relation.clone()))
                .or_default()
                .push(f.span());
        }
        for spans in pairs.values() {
            for w in spans.windows(2) {
                assert!(w[0].end < w[1].start);
            }
        }
    }

    #[test]
    fn splits_are_disjoint_and_follow_fractions() {
        let corpus = generate_synthetic(&small()).unwrap();
        let mut ids = HashSet::new();
        for r in corpus.records() {
            assert!(ids.insert(r.id.clone()));
        }
        assert_eq!(corpus.train.len(), 84);
        assert_eq!(corpus.dev.len(), 18);
        assert_eq!(corpus.test.len(), 18);
    }

    #[test]
    fn generated_questions_parse_to_their_spec() {
        let corpus = generate_synthetic(&small()).unwrap();
        for r in corpus.records() {
            let parsed = tagger::question_time(&r.question);
            assert_eq!(Some(&parsed), r.time_spec.as_ref(), "{}", r.question);
        }
    }

    #[test]
    fn easy_years_are_verbatim_and_hard_years_are_not() {
        let corpus = generate_synthetic(&small()).unwrap();
        for r in corpus.records() {
            let spec = r.time_spec.as_ref().unwrap();
            match r.question_type {
                QuestionType::EasyExplicit => {
                    let y = spec.interval.unwrap().start.year();
                    assert!(year_literals(&r.context).contains(&y), "{}", r.question);
                }
                QuestionType::HardImplicit => {
                    if let Some(iv) = spec.interval {
                        assert!(!year_literals(&r.context).contains(&iv.start.year()));
                    }
                    assert!(matches!(
                        spec.kind,
                        TimeSpecKind::Before | TimeSpecKind::After | TimeSpecKind::First | TimeSpecKind::Last
                    ));
                }
                _ => {}
            }
        }
    }
}
