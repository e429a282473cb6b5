//! Time-evolving facts, question resolution and negative-answer mining.
//!
//! Remote negatives share the question's subject and relation but hold in a
//! period disjoint from the question interval. Proximal negatives hold in an
//! intersecting period but belong to another subject or relation.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::normalize_answer;
use crate::tagger::{QuestionTimeSpec, TimeSpecKind};
use crate::time::{Month, MonthInterval};

/// Relation name of the facts that date named events.
pub const EVENT_RELATION: &str = "event";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeFact {
    #[serde(rename = "s")]
    pub subject: String,
    #[serde(rename = "r")]
    pub relation: String,
    #[serde(rename = "o")]
    pub object: String,
    /// `None` is unbounded.
    #[serde(default)]
    pub start: Option<Month>,
    #[serde(default)]
    pub end: Option<Month>,
}

impl TimeFact {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
        start: Option<Month>,
        end: Option<Month>,
    ) -> Self {
        TimeFact {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
            start,
            end,
        }
    }

    /// Fact over whole calendar years.
    pub fn years(subject: &str, relation: &str, object: &str, first: i32, last: i32) -> Self {
        TimeFact::new(
            subject,
            relation,
            object,
            Some(Month::year_start(first)),
            Some(Month::year_end(last)),
        )
    }

    /// Closed interval with open ends mapped to the representable extremes.
    pub fn span(&self) -> MonthInterval {
        MonthInterval {
            start: self.start.unwrap_or(Month::MIN),
            end: self.end.unwrap_or(Month::MAX),
        }
    }

    pub fn is_event(&self) -> bool {
        self.relation == EVENT_RELATION
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(Error::InvalidFact {
                fact: format!("({}, {}, {})", self.subject, self.relation, self.object),
                message: message.to_string(),
            })
        };
        if self.subject.trim().is_empty() {
            return fail("empty subject");
        }
        if self.relation.trim().is_empty() {
            return fail("empty relation");
        }
        if self.object.trim().is_empty() {
            return fail("empty object");
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s > e {
                return fail("start is after end");
            }
        }
        Ok(())
    }
}

/// Static interval tree over fact spans: facts sorted by start, each implicit
/// subtree annotated with its maximal end.
#[derive(Debug, Clone, Default)]
struct IntervalTree {
    order: Vec<usize>,
    spans: Vec<MonthInterval>,
    max_end: Vec<Month>,
}

impl IntervalTree {
    fn build(facts: &[TimeFact]) -> Self {
        let mut order: Vec<usize> = (0..facts.len()).collect();
        order.sort_by_key(|&i| (facts[i].span().start, i));
        let spans: Vec<MonthInterval> = order.iter().map(|&i| facts[i].span()).collect();
        let mut tree = IntervalTree {
            max_end: vec![Month::MIN; spans.len()],
            order,
            spans,
        };
        if !tree.spans.is_empty() {
            tree.fill(0, tree.spans.len());
        }
        tree
    }

    fn fill(&mut self, lo: usize, hi: usize) -> Month {
        let mid = (lo + hi) / 2;
        let mut m = self.spans[mid].end;
        if lo < mid {
            m = m.max(self.fill(lo, mid));
        }
        if mid + 1 < hi {
            m = m.max(self.fill(mid + 1, hi));
        }
        self.max_end[mid] = m;
        m
    }

    fn query(&self, q: &MonthInterval, out: &mut Vec<usize>) {
        if !self.spans.is_empty() {
            self.visit(0, self.spans.len(), q, out);
        }
    }

    fn visit(&self, lo: usize, hi: usize, q: &MonthInterval, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if self.max_end[mid] < q.start {
            return;
        }
        self.visit(lo, mid, q, out);
        if self.spans[mid].start > q.end {
            return;
        }
        if self.spans[mid].intersects(q) {
            out.push(self.order[mid]);
        }
        self.visit(mid + 1, hi, q, out);
    }
}

#[derive(Debug, Clone, Default)]
pub struct FactIndex {
    facts: Vec<TimeFact>,
    by_pair: HashMap<(String, String), Vec<usize>>,
    events: HashMap<String, usize>,
    by_overlap: IntervalTree,
}

pub fn bulk_load<I: IntoIterator<Item = TimeFact>>(facts: I) -> Result<FactIndex> {
    let mut seen = HashSet::new();
    let mut stored = Vec::new();
    for fact in facts {
        fact.validate()?;
        if seen.insert(fact.clone()) {
            stored.push(fact);
        }
    }
    let mut by_pair: HashMap<(String, String), Vec<usize>> = HashMap::new();
    let mut events = HashMap::new();
    for (id, f) in stored.iter().enumerate() {
        by_pair
            .entry((f.subject.clone(), f.relation.clone()))
            .or_default()
            .push(id);
        if f.is_event() {
            events.entry(normalize_answer(&f.subject)).or_insert(id);
        }
    }
    for ids in by_pair.values_mut() {
        ids.sort_by_key(|&i| (stored[i].span().start, i));
    }
    let by_overlap = IntervalTree::build(&stored);
    Ok(FactIndex {
        facts: stored,
        by_pair,
        events,
        by_overlap,
    })
}

impl FactIndex {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[TimeFact] {
        &self.facts
    }

    pub fn get(&self, id: usize) -> &TimeFact {
        &self.facts[id]
    }

    /// Fact ids of a (subject, relation) pair, ordered by start.
    pub fn pair(&self, subject: &str, relation: &str) -> &[usize] {
        self.by_pair
            .get(&(subject.to_string(), relation.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Fact ids whose span intersects `q`, ordered by (start, id).
    pub fn overlapping(&self, q: &MonthInterval) -> Vec<usize> {
        let mut out = Vec::new();
        self.by_overlap.query(q, &mut out);
        out.sort_by_key(|&i| (self.facts[i].span().start, i));
        out
    }

    pub fn event_interval(&self, name: &str) -> Option<MonthInterval> {
        self.events.get(&normalize_answer(name)).map(|&id| self.facts[id].span())
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        let mut seen = HashSet::new();
        self.facts
            .iter()
            .map(|f| f.subject.as_str())
            .filter(move |s| seen.insert(*s))
    }
}

fn event_anchor(spec: &QuestionTimeSpec, index: &FactIndex) -> Result<Option<MonthInterval>> {
    match (&spec.event_name, spec.interval) {
        (Some(name), _) => index
            .event_interval(name)
            .map(Some)
            .ok_or_else(|| Error::UnknownEvent(name.clone())),
        (None, interval) => Ok(interval),
    }
}

/// Answer of a question about `(subject, relation)` under `spec`; the empty
/// string when no fact qualifies.
pub fn resolve_question(
    spec: &QuestionTimeSpec,
    subject: &str,
    relation: &str,
    index: &FactIndex,
) -> Result<String> {
    let ids = index.pair(subject, relation);
    let facts = ids.iter().map(|&i| (i, index.get(i).span()));
    let pick = match spec.kind {
        TimeSpecKind::Point | TimeSpecKind::Range | TimeSpecKind::DuringEvent => {
            let q = if spec.kind == TimeSpecKind::DuringEvent {
                event_anchor(spec, index)?
            } else {
                spec.interval
            };
            match q {
                Some(q) => facts
                    .filter(|(_, s)| s.intersects(&q))
                    // Max overlap, then earliest start.
                    .max_by_key(|(i, s)| (s.overlap_months(&q), std::cmp::Reverse((s.start, *i))))
                    .map(|(i, _)| i),
                None => None,
            }
        }
        TimeSpecKind::First => facts.min_by_key(|(i, s)| (s.start, s.end, *i)).map(|(i, _)| i),
        TimeSpecKind::Last => facts
            .max_by_key(|(i, s)| (s.start, s.end, std::cmp::Reverse(*i)))
            .map(|(i, _)| i),
        TimeSpecKind::Before => match event_anchor(spec, index)? {
            Some(anchor) => facts
                .filter(|(_, s)| s.end <= anchor.start)
                .max_by_key(|(i, s)| (s.end, s.start, std::cmp::Reverse(*i)))
                .map(|(i, _)| i),
            None => None,
        },
        TimeSpecKind::After => match event_anchor(spec, index)? {
            Some(anchor) => facts
                .filter(|(_, s)| s.start >= anchor.end)
                .min_by_key(|(i, s)| (s.start, s.end, *i))
                .map(|(i, _)| i),
            None => None,
        },
        TimeSpecKind::None => None,
    };
    Ok(pick.map(|i| index.get(i).object.clone()).unwrap_or_default())
}

fn push_unique(out: &mut Vec<String>, seen: &mut HashSet<String>, gold: &str, object: &str) {
    let key = normalize_answer(object);
    if key == gold || !seen.insert(key) {
        return;
    }
    out.push(object.to_string());
}

/// Same subject and relation, span disjoint from `q_interval`.
pub fn mine_remote(
    subject: &str,
    relation: &str,
    gold: &str,
    q_interval: &MonthInterval,
    index: &FactIndex,
) -> Vec<String> {
    let gold = normalize_answer(gold);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &id in index.pair(subject, relation) {
        let fact = index.get(id);
        if !fact.span().intersects(q_interval) {
            push_unique(&mut out, &mut seen, &gold, &fact.object);
        }
    }
    out
}

/// Different subject or relation, span intersecting `q_interval`.
pub fn mine_proximal(
    subject: &str,
    relation: &str,
    gold: &str,
    q_interval: &MonthInterval,
    index: &FactIndex,
) -> Vec<String> {
    let gold = normalize_answer(gold);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for id in index.overlapping(q_interval) {
        let fact = index.get(id);
        if fact.is_event() || (fact.subject == subject && fact.relation == relation) {
            continue;
        }
        push_unique(&mut out, &mut seen, &gold, &fact.object);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSet {
    pub remote: Vec<String>,
    pub proximal: Vec<String>,
}

impl NegativeSet {
    pub fn is_empty(&self) -> bool {
        self.remote.is_empty() && self.proximal.is_empty()
    }

    pub fn all(&self) -> impl Iterator<Item = &str> {
        self.remote.iter().chain(&self.proximal).map(String::as_str)
    }
}

/// Draws the same number from each side, at most `k_per_side`, so the
/// remote:proximal ratio stays 1:1.
pub fn sample_negatives<R: Rng + ?Sized>(
    remote: &[String],
    proximal: &[String],
    k_per_side: usize,
    rng: &mut R,
) -> NegativeSet {
    let n = k_per_side.min(remote.len()).min(proximal.len());
    let mut draw = |pool: &[String]| -> Vec<String> {
        let mut picked = sample(rng, pool.len(), n).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pool[i].clone()).collect()
    };
    let remote = draw(remote);
    let proximal = draw(proximal);
    NegativeSet { remote, proximal }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn warnock() -> Vec<TimeFact> {
        let s = "Mary Warnock";
        vec![
            TimeFact::years(s, "employer", "St Hugh's College", 1949, 1966),
            TimeFact::years(s, "employer", "Oxford High School", 1966, 1972),
            TimeFact::years(s, "employer", "Lady Margaret Hall", 1972, 1976),
            TimeFact::years(s, "employer", "Girton College", 1984, 1991),
            TimeFact::years(s, "chaired", "Home Office Committee", 1984, 1989),
            TimeFact::years(s, "honorary degree", "University of Bath", 1987, 1987),
            TimeFact::years(s, "lecture", "Richard Dimbleby Lecture", 1980, 1999),
        ]
    }

    pub fn miller() -> Vec<TimeFact> {
        let s = "George Abram Miller";
        vec![
            TimeFact::years(s, "employer", "Eureka College", 1890, 1892),
            TimeFact::years(s, "employer", "University of Michigan", 1892, 1897),
            TimeFact::years(s, "employer", "Cornell University", 1897, 1901),
            TimeFact::years(s, "employer", "Stanford University", 1901, 1906),
            TimeFact::years(s, "employer", "University of Illinois", 1906, 1931),
            // The prize year is not given in the source passage; dated here to cover 1923.
            TimeFact::years(s, "award", "the Academy of Science of Cracow", 1923, 1923),
            TimeFact::years(s, "president of", "the Mathematical Association of America", 1921, 1922),
            TimeFact::years(s, "plenary address", "the International Congress of Mathematicians", 1924, 1924),
        ]
    }

    pub fn obama() -> Vec<TimeFact> {
        let s = "Barack Obama";
        vec![
            TimeFact::years(s, "position", "Professor at the University of Chicago Law School", 1993, 2005),
            TimeFact::years(s, "position", "Illinois State Senator", 1998, 2004),
            TimeFact::years(s, "position", "Federal Senator", 2004, 2008),
            TimeFact::years(s, "position", "President of the United States", 2009, 2017),
            TimeFact::years("Hillary Clinton", "position", "Secretary of State", 2009, 2013),
            TimeFact::years("Sonia Sotomayor", "position", "Supreme Court", 2009, 2017),
            TimeFact::years(s, "award", "Nobel Peace Prize", 2009, 2009),
        ]
    }
}
