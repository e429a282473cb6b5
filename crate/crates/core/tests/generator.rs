use std::collections::HashSet;

use tsqa_core::corpus::{generate_synthetic, QARecord, SyntheticConfig};
use tsqa_core::facts::TimeFact;
use tsqa_core::tagger::TimeSpecKind;
use tsqa_core::time::MonthInterval;

fn corpus(seed: u64) -> Vec<QARecord> {
    let config = SyntheticConfig {
        n_records: 1000,
        question_type_mix: [1.0, 1.0, 1.0, 1.0],
        seed,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&config).unwrap().records().cloned().collect()
}

fn overlap(a: &MonthInterval, b: &MonthInterval) -> i64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    if lo > hi {
        0
    } else {
        (hi.index() - lo.index() + 1) as i64
    }
}

/// Linear-scan resolver over the record's own facts.
fn brute_force(record: &QARecord) -> String {
    let spec = record.time_spec.as_ref().unwrap();
    let (s, r) = (record.subject.as_deref().unwrap(), record.relation.as_deref().unwrap());
    let pair: Vec<&TimeFact> = record.facts.iter().filter(|f| f.subject == s && f.relation == r).collect();
    let anchor = match &spec.event_name {
        Some(name) => record
            .facts
            .iter()
            .find(|f| f.is_event() && f.subject.eq_ignore_ascii_case(name.trim_start_matches("the ")))
            .map(|f| f.span()),
        None => spec.interval,
    };
    let mut best: Option<&TimeFact> = None;
    for f in &pair {
        let span = f.span();
        let better = |b: &TimeFact| -> bool {
            let bs = b.span();
            match spec.kind {
                TimeSpecKind::Point | TimeSpecKind::Range | TimeSpecKind::DuringEvent => {
                    let q = anchor.unwrap();
                    let (o, bo) = (overlap(&span, &q), overlap(&bs, &q));
                    o > bo || (o == bo && span.start < bs.start)
                }
                TimeSpecKind::First => span.start < bs.start,
                TimeSpecKind::Last => span.start > bs.start,
                TimeSpecKind::Before => span.end > bs.end,
                TimeSpecKind::After => span.start < bs.start,
                TimeSpecKind::None => false,
            }
        };
        let eligible = match spec.kind {
            TimeSpecKind::Point | TimeSpecKind::Range | TimeSpecKind::DuringEvent => {
                anchor.is_some_and(|q| overlap(&span, &q) > 0)
            }
            TimeSpecKind::First | TimeSpecKind::Last => true,
            TimeSpecKind::Before => anchor.is_some_and(|q| span.end <= q.start),
            TimeSpecKind::After => anchor.is_some_and(|q| span.start >= q.end),
            TimeSpecKind::None => false,
        };
        if eligible && best.map_or(true, better) {
            best = Some(f);
        }
    }
    best.map(|f| f.object.clone()).unwrap_or_default()
}

#[test]
fn gold_matches_brute_force_resolver() {
    for seed in [11, 12] {
        let records = corpus(seed);
        assert_eq!(records.len(), 1000);
        for r in &records {
            assert_eq!(r.gold_answers, vec![brute_force(r)], "record {}", r.id);
        }
    }
}

#[test]
fn splits_are_disjoint_and_cover_all_records() {
    let config = SyntheticConfig {
        n_records: 500,
        seed: 13,
        ..SyntheticConfig::default()
    };
    let c = generate_synthetic(&config).unwrap();
    let ids = |v: &[QARecord]| v.iter().map(|r| r.id.clone()).collect::<HashSet<_>>();
    let (train, dev, test) = (ids(&c.train), ids(&c.dev), ids(&c.test));
    assert!(train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test));
    assert_eq!(train.len() + dev.len() + test.len(), 500);
}

#[test]
fn contexts_render_every_subject_fact() {
    for r in corpus(14) {
        let s = r.subject.as_deref().unwrap();
        for f in r.facts.iter().filter(|f| f.subject == s) {
            assert!(r.context.contains(&f.object), "{} missing {}", r.id, f.object);
        }
    }
}

