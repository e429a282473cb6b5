//! Rule-based recognizer for temporal expressions.
//!
//! The grammar is applied left to right, longest match first:
//!
//! ```text
//! DATE   := MONTH [","] YEAR | YEAR
//! RANGE  := "from" DATE ("to" | "until" | "till" | DASH) (DATE | TAIL)
//!         | "between" DATE "and" DATE
//!         | DATE DASH (DATE | TAIL)
//! SINCE  := "since" DATE
//! UNTIL  := ("until" | "till") DATE
//! DECADE := YEAR "s"
//! SIGNAL := before | after | during | first | last | until | since | simultaneous
//! ```
//!
//! `YEAR` is a four-digit number in `[1000, 2999]`, `TAIL` a two-digit year
//! completed with the century of the range head. A missing start month
//! defaults to January and a missing end month to December.

use serde::{Deserialize, Serialize};

use crate::time::{Month, MonthInterval};

/// Version of the rule set; bump when the grammar changes.
pub const GRAMMAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offset of the first byte in the source text.
    pub start: usize,
    /// Byte offset one past the last byte.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    YearPoint,
    MonthPoint,
    YearRange,
    Decade,
    OpenSince,
    OpenUntil,
    Signal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemporalSpan {
    /// First token of the span.
    pub tok_start: usize,
    /// One past the last token.
    pub tok_end: usize,
    pub kind: SpanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<MonthInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSpecKind {
    Point,
    Range,
    Before,
    After,
    DuringEvent,
    First,
    Last,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTimeSpec {
    pub kind: TimeSpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<MonthInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_name: Option<String>,
}

impl QuestionTimeSpec {
    pub fn none() -> Self {
        QuestionTimeSpec {
            kind: TimeSpecKind::None,
            interval: None,
            event_name: None,
        }
    }

    pub fn point(interval: MonthInterval) -> Self {
        QuestionTimeSpec {
            kind: TimeSpecKind::Point,
            interval: Some(interval),
            event_name: None,
        }
    }

    pub fn range(interval: MonthInterval) -> Self {
        QuestionTimeSpec {
            kind: TimeSpecKind::Range,
            interval: Some(interval),
            event_name: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.kind {
            TimeSpecKind::Point | TimeSpecKind::Range => {
                matches!(self.interval, Some(iv) if iv.start <= iv.end)
            }
            TimeSpecKind::DuringEvent => self.event_name.is_some(),
            TimeSpecKind::Before | TimeSpecKind::After => {
                self.event_name.is_some() || self.interval.is_some()
            }
            _ => true,
        }
    }
}

fn is_dash_char(c: char) -> bool {
    matches!(c, '-' | '\u{2013}' | '\u{2014}')
}

fn is_dash(text: &str) -> bool {
    let mut chars = text.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if is_dash_char(c))
}

/// `digits DASH digits`, split into three pieces.
fn split_digit_range(core: &str) -> Option<(usize, usize)> {
    let dash_at = core.find(is_dash_char)?;
    let dash_len = core[dash_at..].chars().next()?.len_utf8();
    let (head, tail) = (&core[..dash_at], &core[dash_at + dash_len..]);
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    (all_digits(head) && all_digits(tail)).then_some((dash_at, dash_at + dash_len))
}

/// Splits on whitespace, then peels leading and trailing punctuation into
/// single-character tokens. Digit ranges such as `1984–1991` become three
/// tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let push = |tokens: &mut Vec<Token>, start: usize, end: usize| {
        if start < end {
            tokens.push(Token {
                text: text[start..end].to_string(),
                start,
                end,
            });
        }
    };

    let mut chunk_start = None;
    let bytes_end = text.len();
    let mut boundaries = Vec::new();
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), chunk_start) {
            (true, Some(s)) => {
                boundaries.push((s, i));
                chunk_start = None;
            }
            (false, None) => chunk_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = chunk_start {
        boundaries.push((s, bytes_end));
    }

    for (mut start, mut end) in boundaries {
        let mut trailing = Vec::new();
        while let Some(c) = text[start..end].chars().next() {
            if c.is_alphanumeric() {
                break;
            }
            push(&mut tokens, start, start + c.len_utf8());
            start += c.len_utf8();
        }
        while start < end {
            let c = text[start..end].chars().next_back().unwrap();
            if c.is_alphanumeric() {
                break;
            }
            trailing.push((end - c.len_utf8(), end));
            end -= c.len_utf8();
        }
        if start < end {
            let core = &text[start..end];
            match split_digit_range(core) {
                Some((dash_start, dash_end)) => {
                    push(&mut tokens, start, start + dash_start);
                    push(&mut tokens, start + dash_start, start + dash_end);
                    push(&mut tokens, start + dash_end, end);
                }
                None => push(&mut tokens, start, end),
            }
        }
        for (s, e) in trailing.into_iter().rev() {
            push(&mut tokens, s, e);
        }
    }
    tokens
}

fn year_of(text: &str) -> Option<i32> {
    if text.len() != 4 || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let year: i32 = text.parse().ok()?;
    (1000..=2999).contains(&year).then_some(year)
}

fn decade_of(text: &str) -> Option<i32> {
    let digits = text.strip_suffix('s')?;
    let year = year_of(digits)?;
    (year % 10 == 0).then_some(year)
}

fn two_digit_tail(text: &str) -> Option<i32> {
    if text.len() != 2 || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

const MONTHS: [(&str, &str); 12] = [
    ("january", "jan"),
    ("february", "feb"),
    ("march", "mar"),
    ("april", "apr"),
    ("may", "may"),
    ("june", "jun"),
    ("july", "jul"),
    ("august", "aug"),
    ("september", "sep"),
    ("october", "oct"),
    ("november", "nov"),
    ("december", "dec"),
];

pub(crate) fn month_of(text: &str) -> Option<u32> {
    let lower = text.to_lowercase();
    if lower == "sept" {
        return Some(9);
    }
    MONTHS
        .iter()
        .position(|(full, abbr)| lower == *full || lower == *abbr)
        .map(|i| i as u32 + 1)
}

pub const SIGNAL_WORDS: [&str; 8] = [
    "before",
    "after",
    "during",
    "first",
    "last",
    "until",
    "since",
    "simultaneous",
];

pub(crate) fn is_signal(text: &str) -> bool {
    let lower = text.to_lowercase();
    SIGNAL_WORDS.contains(&lower.as_str())
}

#[derive(Debug, Clone, Copy)]
struct Date {
    year: i32,
    month: Option<u32>,
}

impl Date {
    fn first_month(self) -> Month {
        Month::new(self.year, self.month.unwrap_or(1))
    }

    fn last_month(self) -> Month {
        Month::new(self.year, self.month.unwrap_or(12))
    }

    fn interval(self) -> MonthInterval {
        MonthInterval {
            start: self.first_month(),
            end: self.last_month(),
        }
    }
}

struct Matcher<'a> {
    tokens: &'a [Token],
}

impl Matcher<'_> {
    fn text(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(|t| t.text.as_str())
    }

    fn word_is(&self, i: usize, words: &[&str]) -> bool {
        self.text(i)
            .map(|t| words.iter().any(|w| t.eq_ignore_ascii_case(w)))
            .unwrap_or(false)
    }

    /// `MONTH [","] YEAR | YEAR` starting at `i`; returns the date and the
    /// index one past its last token.
    fn date(&self, i: usize) -> Option<(Date, usize)> {
        let first = self.text(i)?;
        if let Some(year) = year_of(first) {
            return Some((Date { year, month: None }, i + 1));
        }
        let month = month_of(first)?;
        let mut j = i + 1;
        if self.text(j) == Some(",") {
            j += 1;
        }
        let year = year_of(self.text(j)?)?;
        Some((
            Date {
                year,
                month: Some(month),
            },
            j + 1,
        ))
    }

    /// A full date or, after a dash, a two-digit year completed from `head`.
    fn range_end(&self, i: usize, head: Date, allow_tail: bool) -> Option<(Date, usize)> {
        if let Some(found) = self.date(i) {
            return Some(found);
        }
        if !allow_tail {
            return None;
        }
        let tail = two_digit_tail(self.text(i)?)?;
        let mut year = head.year - head.year.rem_euclid(100) + tail;
        if year < head.year {
            year += 100;
        }
        Some((Date { year, month: None }, i + 1))
    }

    fn range_from(&self, start: Date, end: Date) -> Option<MonthInterval> {
        MonthInterval::new(start.first_month(), end.last_month()).ok()
    }

    fn keyword_range(&self, i: usize) -> Option<(TemporalSpan, usize)> {
        if self.word_is(i, &["from"]) {
            let (head, j) = self.date(i + 1)?;
            let sep = self.text(j)?;
            let dashed = is_dash(sep);
            if !dashed && !["to", "until", "till"].iter().any(|w| sep.eq_ignore_ascii_case(w)) {
                return None;
            }
            let (tail, k) = self.range_end(j + 1, head, dashed)?;
            let interval = self.range_from(head, tail)?;
            return Some((span(i, k, SpanKind::YearRange, interval), k));
        }
        if self.word_is(i, &["between"]) {
            let (head, j) = self.date(i + 1)?;
            if !self.word_is(j, &["and"]) {
                return None;
            }
            let (tail, k) = self.date(j + 1)?;
            let interval = self.range_from(head, tail)?;
            return Some((span(i, k, SpanKind::YearRange, interval), k));
        }
        if self.word_is(i, &["since"]) {
            let (date, j) = self.date(i + 1)?;
            let interval = MonthInterval {
                start: date.first_month(),
                end: Month::MAX,
            };
            return Some((span(i, j, SpanKind::OpenSince, interval), j));
        }
        if self.word_is(i, &["until", "till"]) {
            let (date, j) = self.date(i + 1)?;
            let interval = MonthInterval {
                start: Month::MIN,
                end: date.last_month(),
            };
            return Some((span(i, j, SpanKind::OpenUntil, interval), j));
        }
        None
    }

    fn bare(&self, i: usize) -> Option<(TemporalSpan, usize)> {
        if let Some(decade) = self.text(i).and_then(decade_of) {
            let interval = MonthInterval::years(decade, decade + 9);
            return Some((span(i, i + 1, SpanKind::Decade, interval), i + 1));
        }
        let (head, j) = self.date(i)?;
        if self.text(j).map(is_dash).unwrap_or(false) {
            if let Some((tail, k)) = self.range_end(j + 1, head, true) {
                if let Some(interval) = self.range_from(head, tail) {
                    return Some((span(i, k, SpanKind::YearRange, interval), k));
                }
            }
        }
        let kind = if head.month.is_some() {
            SpanKind::MonthPoint
        } else {
            SpanKind::YearPoint
        };
        Some((span(i, j, kind, head.interval()), j))
    }
}

fn span(tok_start: usize, tok_end: usize, kind: SpanKind, interval: MonthInterval) -> TemporalSpan {
    TemporalSpan {
        tok_start,
        tok_end,
        kind,
        interval: Some(interval),
    }
}

/// Finds temporal expressions; spans are sorted and never overlap.
pub fn tag(tokens: &[Token]) -> Vec<TemporalSpan> {
    let m = Matcher { tokens };
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Some((found, next)) = m.keyword_range(i).or_else(|| m.bare(i)) {
            spans.push(found);
            i = next;
            continue;
        }
        if is_signal(&tokens[i].text) {
            spans.push(TemporalSpan {
                tok_start: i,
                tok_end: i + 1,
                kind: SpanKind::Signal,
                interval: None,
            });
        }
        i += 1;
    }
    spans
}

fn is_punct_token(text: &str) -> bool {
    !text.chars().any(char::is_alphanumeric)
}

/// Words joined from `from` up to the first punctuation token.
fn phrase_after(tokens: &[Token], from: usize) -> Option<String> {
    let words: Vec<&str> = tokens[from.min(tokens.len())..]
        .iter()
        .map(|t| t.text.as_str())
        .take_while(|t| !is_punct_token(t))
        .collect();
    (!words.is_empty()).then(|| words.join(" "))
}

/// Derives the question's time specification.
///
/// Precedence: explicit range, explicit point, then a signal with its anchor.
/// A date directly preceded by `before`/`after` is that signal's anchor, not an
/// explicit time.
pub fn parse_question_time(tokens: &[Token], spans: &[TemporalSpan]) -> QuestionTimeSpec {
    let signal_at = |i: usize| -> Option<String> {
        spans
            .iter()
            .find(|s| s.kind == SpanKind::Signal && s.tok_start == i)
            .map(|s| tokens[s.tok_start].text.to_lowercase())
    };
    let anchored = |s: &TemporalSpan| -> Option<String> {
        let prev = s.tok_start.checked_sub(1)?;
        signal_at(prev).filter(|w| w == "before" || w == "after")
    };

    let explicit = |pred: fn(SpanKind) -> bool| {
        spans
            .iter()
            .find(|s| s.kind != SpanKind::Signal && pred(s.kind) && anchored(s).is_none())
    };
    if let Some(s) = explicit(|k| {
        matches!(
            k,
            SpanKind::YearRange | SpanKind::Decade | SpanKind::OpenSince | SpanKind::OpenUntil
        )
    }) {
        return QuestionTimeSpec::range(s.interval.expect("dated span"));
    }
    if let Some(s) = explicit(|k| matches!(k, SpanKind::YearPoint | SpanKind::MonthPoint)) {
        return QuestionTimeSpec::point(s.interval.expect("dated span"));
    }

    for s in spans.iter().filter(|s| s.kind == SpanKind::Signal) {
        let word = tokens[s.tok_start].text.to_lowercase();
        let kind = match word.as_str() {
            "before" => TimeSpecKind::Before,
            "after" => TimeSpecKind::After,
            _ => continue,
        };
        if let Some(anchor) = spans.iter().find(|a| a.tok_start == s.tok_end && a.interval.is_some()) {
            return QuestionTimeSpec {
                kind,
                interval: anchor.interval,
                event_name: None,
            };
        }
        if let Some(event) = phrase_after(tokens, s.tok_end) {
            return QuestionTimeSpec {
                kind,
                interval: None,
                event_name: Some(event),
            };
        }
    }

    for s in spans.iter().filter(|s| s.kind == SpanKind::Signal) {
        match tokens[s.tok_start].text.to_lowercase().as_str() {
            "first" => return kind_only(TimeSpecKind::First),
            "last" => return kind_only(TimeSpecKind::Last),
            _ => {}
        }
    }

    for s in spans.iter().filter(|s| s.kind == SpanKind::Signal) {
        let word = tokens[s.tok_start].text.to_lowercase();
        if word != "during" && word != "simultaneous" {
            continue;
        }
        let mut from = s.tok_end;
        // "during the time of X", "simultaneous with X"
        let skip: &[&str] = &["with", "to", "the time of", "the period of"];
        for phrase in skip {
            let parts: Vec<&str> = phrase.split(' ').collect();
            let matches = parts.iter().enumerate().all(|(k, p)| {
                tokens
                    .get(from + k)
                    .map(|t| t.text.eq_ignore_ascii_case(p))
                    .unwrap_or(false)
            });
            if matches {
                from += parts.len();
                break;
            }
        }
        if let Some(event) = phrase_after(tokens, from) {
            return QuestionTimeSpec {
                kind: TimeSpecKind::DuringEvent,
                interval: None,
                event_name: Some(event),
            };
        }
    }
    QuestionTimeSpec::none()
}

fn kind_only(kind: TimeSpecKind) -> QuestionTimeSpec {
    QuestionTimeSpec {
        kind,
        interval: None,
        event_name: None,
    }
}

/// Tokenize, tag and parse a question in one call.
pub fn question_time(text: &str) -> QuestionTimeSpec {
    let tokens = tokenize(text);
    let spans = tag(&tokens);
    parse_question_time(&tokens, &spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    fn tag_text(text: &str) -> (Vec<Token>, Vec<TemporalSpan>) {
        let tokens = tokenize(text);
        let spans = tag(&tokens);
        (tokens, spans)
    }

    #[test]
    fn tokenizes_trailing_question_mark() {
        assert_eq!(texts(&tokenize("in 1987?")), ["in", "1987", "?"]);
    }

    #[test]
    fn tokenizes_empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn tokenizes_year_range_glyphs() {
        assert_eq!(
            texts(&tokenize("from 1984–1991.")),
            ["from", "1984", "–", "1991", "."]
        );
    }

    #[test]
    fn tokenizes_leading_punctuation_and_abbreviations() {
        assert_eq!(
            texts(&tokenize("(1998-2004), Gainsborough Trinity F.C.")),
            ["(", "1998", "-", "2004", ")", ",", "Gainsborough", "Trinity", "F.C", "."]
        );
    }

    #[test]
    fn token_offsets_slice_the_source() {
        let text = "She served as mistress of Girton College, Cambridge from 1984–1991.";
        for t in tokenize(text) {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }

    #[test]
    fn tags_year_point_in_question() {
        let (tokens, spans) =
            tag_text("Which employer did Mary Warnock, Baroness Warnock work for in 1987?");
        assert_eq!(spans.len(), 1);
        let s = &spans[0];
        assert_eq!(s.kind, SpanKind::YearPoint);
        assert_eq!(tokens[s.tok_start].text, "1987");
        assert_eq!(s.tok_end - s.tok_start, 1);
        assert_eq!(s.interval, Some(MonthInterval::year(1987)));
    }

    #[test]
    fn tags_from_to_range() {
        let (_, spans) = tag_text("From 1966 to 1972, she was Headmistress");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SpanKind::YearRange);
        assert_eq!(spans[0].interval, Some(MonthInterval::years(1966, 1972)));
        assert_eq!((spans[0].tok_start, spans[0].tok_end), (0, 4));
    }

    #[test]
    fn tags_month_with_comma() {
        let (_, spans) = tag_text("in Jul, 1996");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SpanKind::MonthPoint);
        let jul = Month::new(1996, 7);
        assert_eq!(spans[0].interval, Some(MonthInterval::single(jul)));
    }

    #[test]
    fn tags_glyph_range_and_two_digit_tail() {
        let (_, spans) = tag_text("from 1984–1991.");
        assert_eq!(spans[0].interval, Some(MonthInterval::years(1984, 1991)));
        let (_, spans) = tag_text("From 1949–66, Warnock was a fellow");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].interval, Some(MonthInterval::years(1949, 1966)));
        let (_, spans) = tag_text("the 1998–02 seasons");
        assert_eq!(spans[0].interval, Some(MonthInterval::years(1998, 2002)));
    }

    #[test]
    fn tags_between_since_until_and_decades() {
        let (_, spans) = tag_text("between 1995 and 1997");
        assert_eq!(spans[0].interval, Some(MonthInterval::years(1995, 1997)));
        let (_, spans) = tag_text("Since 2017, he is director");
        assert_eq!(spans[0].kind, SpanKind::OpenSince);
        assert_eq!(spans[0].interval.unwrap().start, Month::new(2017, 1));
        let (_, spans) = tag_text("until 1976");
        assert_eq!(spans[0].kind, SpanKind::OpenUntil);
        assert_eq!(spans[0].interval.unwrap().end, Month::new(1976, 12));
        let (_, spans) = tag_text("In the 1980s and 1990s, she wrote");
        assert_eq!(spans.len(), 2);
        assert!(spans.iter().all(|s| s.kind == SpanKind::Decade));
        assert_eq!(spans[1].interval, Some(MonthInterval::years(1990, 1999)));
    }

    #[test]
    fn tags_month_ranges_with_defaults() {
        let (_, spans) = tag_text("from July 1993 to 1995");
        let iv = spans[0].interval.unwrap();
        assert_eq!(iv.start, Month::new(1993, 7));
        assert_eq!(iv.end, Month::new(1995, 12));
    }

    #[test]
    fn untagged_text_yields_nothing() {
        let (_, spans) = tag_text("The quick brown fox jumps over 12 lazy dogs in 999 ways.");
        assert!(spans.is_empty());
    }

    #[test]
    fn signals_carry_no_interval() {
        let (_, spans) = tag_text("who coached the club before the merger");
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].kind, SpanKind::Signal);
        assert!(spans[0].interval.is_none());
    }

    #[test]
    fn until_without_date_is_a_signal() {
        let (tokens, spans) = tag_text("where he taught until retirement in 1931.");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].kind, SpanKind::Signal);
        assert_eq!(tokens[spans[1].tok_start].text, "1931");
    }

    #[test]
    fn question_point() {
        let spec = question_time("What position did Obama hold in 2009?");
        assert_eq!(spec, QuestionTimeSpec::point(MonthInterval::year(2009)));
    }

    #[test]
    fn question_range_beats_point() {
        let spec = question_time("Which club did he coach from 1949 to 1966, and in 1950?");
        assert_eq!(spec.kind, TimeSpecKind::Range);
        assert_eq!(spec.interval, Some(MonthInterval::years(1949, 1966)));
    }

    #[test]
    fn question_without_time_is_none() {
        assert_eq!(question_time("Who wrote the column?"), QuestionTimeSpec::none());
    }

    #[test]
    fn question_before_year_is_anchor() {
        let spec = question_time("Which team did Ana Vell play for before 1990?");
        assert_eq!(spec.kind, TimeSpecKind::Before);
        assert_eq!(spec.interval, Some(MonthInterval::year(1990)));
    }

    #[test]
    fn question_after_event() {
        let spec = question_time("Which team did Ana Vell play for after the Kalder Summit?");
        assert_eq!(spec.kind, TimeSpecKind::After);
        assert_eq!(spec.event_name.as_deref(), Some("the Kalder Summit"));
        assert!(spec.is_valid());
    }

    #[test]
    fn question_during_event_and_simultaneous() {
        let spec = question_time("Which team did Ana Vell play for during the Kalder Summit?");
        assert_eq!(spec.kind, TimeSpecKind::DuringEvent);
        assert_eq!(spec.event_name.as_deref(), Some("the Kalder Summit"));
        let spec = question_time("Which team was simultaneous with the Kalder Summit?");
        assert_eq!(spec.kind, TimeSpecKind::DuringEvent);
        assert_eq!(spec.event_name.as_deref(), Some("the Kalder Summit"));
    }

    #[test]
    fn question_first_and_last() {
        assert_eq!(
            question_time("Which was the first team Ana Vell played for?").kind,
            TimeSpecKind::First
        );
        assert_eq!(
            question_time("Which was the last team Ana Vell played for?").kind,
            TimeSpecKind::Last
        );
    }

    #[test]
    fn question_month_point() {
        let spec = question_time("Which team did Glynn Snodin play for in Jul, 1996?");
        assert_eq!(spec, QuestionTimeSpec::point(MonthInterval::single(Month::new(1996, 7))));
    }
}
