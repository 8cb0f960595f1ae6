//! Rule-based extraction of perceived-agreement pairs and free choices
//! from generated answers.
//!
//! The rules are a reconstruction of a manual labeling procedure with no
//! documented tie-break; `fixtures/parser_corpus.toml` pins their behaviour.
//!
//! Extraction works on an ASCII-lowercased copy of the answer so byte
//! offsets in the evidence spans refer to the original text.
//!
//! 1. Option mentions are found from each option's label and aliases,
//!    longest phrase first, at word boundaries, without overlaps.
//! 2. Percentages (`60%`, `60 percent`) and `60/40` splits are collected;
//!    a `100%` preceded by "total"/"sum"/"add up" is treated as an echo of
//!    the question and ignored.
//! 3. Two numbers alternating with one mention of each option pair up in
//!    reading order. Otherwise each percentage binds to the nearest unbound
//!    option mention inside the same clause (clauses end at `,` `;` `.`
//!    and newlines).
//! 4. Fallbacks: two numbers with both options named bind in order of
//!    first mention; a single number `x` bound to one option yields
//!    `(x, 100 - x)`.
//! 5. The pair is normalized by [`normalize_pair`].

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::materials::{Corpus, OptionId, Story, StoryId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Refusal,
    Ambiguous,
    NonNumeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementPair {
    pub on_option1: f64,
    pub on_option2: f64,
    pub normalized: bool,
}

impl AgreementPair {
    pub fn value(&self, option: OptionId) -> f64 {
        match option {
            OptionId::Opt1 => self.on_option1,
            OptionId::Opt2 => self.on_option2,
        }
    }

    pub fn swapped(&self) -> Self {
        AgreementPair {
            on_option1: self.on_option2,
            on_option2: self.on_option1,
            normalized: self.normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Number,
    Mention,
    Refusal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub pair: Option<AgreementPair>,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
}

impl ParseOutcome {
    fn failed(status: ParseStatus, evidence: Vec<Evidence>) -> Self {
        ParseOutcome {
            status,
            pair: None,
            evidence,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ParseStatus::Ok
    }
}

/// Largest tolerated deviation of `raw1 + raw2` from 100.
pub const SUM_TOLERANCE: f64 = 2.0;

/// Rescales a raw pair so it sums to exactly 100.
///
/// Pairs already summing to 100 pass through unchanged. Sums within
/// [`SUM_TOLERANCE`] of 100 are rescaled proportionally and flagged as
/// normalized; anything else (including negative values) is ambiguous.
pub fn normalize_pair(raw1: f64, raw2: f64) -> Result<AgreementPair, ParseStatus> {
    if !(raw1.is_finite() && raw2.is_finite()) || raw1 < 0.0 || raw2 < 0.0 {
        return Err(ParseStatus::Ambiguous);
    }
    let sum = raw1 + raw2;
    if sum == 100.0 {
        return Ok(AgreementPair {
            on_option1: raw1,
            on_option2: raw2,
            normalized: false,
        });
    }
    if sum == 0.0 || (sum - 100.0).abs() > SUM_TOLERANCE {
        return Err(ParseStatus::Ambiguous);
    }
    let on1 = raw1 * 100.0 / sum;
    Ok(AgreementPair {
        on_option1: on1,
        on_option2: 100.0 - on1,
        normalized: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mention {
    option: OptionId,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Number {
    value: f64,
    start: usize,
    end: usize,
}

const POSITIONAL: [(&str, OptionId); 8] = [
    ("option 1", OptionId::Opt1),
    ("option one", OptionId::Opt1),
    ("first option", OptionId::Opt1),
    ("the first one", OptionId::Opt1),
    ("option 2", OptionId::Opt2),
    ("option two", OptionId::Opt2),
    ("second option", OptionId::Opt2),
    ("the second one", OptionId::Opt2),
];

const REFUSAL_LEXICON: [&str; 22] = [
    "cannot",
    "can't",
    "can\u{2019}t",
    "unable to",
    "not able to",
    "as an ai",
    "language model",
    "i don't have",
    "i don\u{2019}t have",
    "i do not have",
    "impossible to",
    "no way to know",
    "hard to say",
    "difficult to say",
    "difficult to predict",
    "it depends",
    "neutral",
    "decline",
    "i won't",
    "i will not",
    "both options",
    "either option",
];

const ECHO_CUES: [&str; 6] = [
    "total",
    "sum",
    "add up",
    "adds up",
    "altogether",
    "combined",
];

fn percent_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(\d{1,3}(?:\.\d+)?)\s*(?:%|percent\b|per cent\b)").expect("valid regex")
    })
}

fn split_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(\d{1,3}(?:\.\d+)?)\s*%?\s*/\s*(\d{1,3}(?:\.\d+)?)\s*%?")
            .expect("valid regex")
    })
}

fn range_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?:\b\d{1,3}(?:\.\d+)?\s*%?\s*(?:-|\x{2013}|to)|\bbetween\s+\d{1,3}(?:\.\d+)?\s*%?\s*and)\s*\d{1,3}(?:\.\d+)?\s*(?:%|percent\b)",
        )
        .expect("valid regex")
    })
}

fn colon_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r":\s*(\d{1,3}(?:\.\d+)?)\b").expect("valid regex"))
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn at_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let bytes = text.as_bytes();
    let before = start == 0 || !is_word_byte(bytes[start - 1]);
    let after = end >= bytes.len() || !is_word_byte(bytes[end]);
    before && after
}

fn phrases(story: &Story) -> Vec<(String, OptionId)> {
    let mut out = Vec::new();
    for opt in OptionId::BOTH {
        let o = story.option(opt);
        let mut add = |p: &str| {
            let p = p.to_ascii_lowercase();
            if p.contains('\'') {
                out.push((p.replace('\'', "\u{2019}"), opt));
            }
            out.push((p, opt));
        };
        add(&o.label);
        for a in &o.aliases {
            add(a);
        }
    }
    for (p, opt) in POSITIONAL {
        out.push((p.to_string(), opt));
    }
    out
}

/// Longest-first, non-overlapping option mentions sorted by position.
fn find_mentions(lower: &str, story: &Story) -> Vec<Mention> {
    let mut candidates = Vec::new();
    for (phrase, opt) in phrases(story) {
        if phrase.is_empty() {
            continue;
        }
        for (start, _) in lower.match_indices(phrase.as_str()) {
            let end = start + phrase.len();
            if at_word_boundary(lower, start, end) {
                candidates.push(Mention {
                    option: opt,
                    start,
                    end,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
    });
    let mut chosen: Vec<Mention> = Vec::new();
    for c in candidates {
        if chosen.iter().all(|m| c.end <= m.start || c.start >= m.end) {
            chosen.push(c);
        }
    }
    chosen.sort_by_key(|m| m.start);
    chosen
}

fn is_echo(lower: &str, start: usize, value: f64) -> bool {
    if value != 100.0 {
        return false;
    }
    let mut from = start.saturating_sub(25);
    while !lower.is_char_boundary(from) {
        from -= 1;
    }
    let window = &lower[from..start];
    ECHO_CUES.iter().any(|cue| window.contains(cue))
}

fn clause_index(lower: &str, pos: usize) -> usize {
    let bytes = lower.as_bytes();
    let mut clause = 0;
    for i in 0..pos.min(bytes.len()) {
        match bytes[i] {
            b',' | b';' | b'\n' => clause += 1,
            b'.' => {
                let next_digit = bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit());
                let prev_digit = i > 0 && bytes[i - 1].is_ascii_digit();
                if !(next_digit && prev_digit) {
                    clause += 1;
                }
            }
            _ => {}
        }
    }
    clause
}

fn span_gap(a: (usize, usize), b: (usize, usize)) -> usize {
    b.0.saturating_sub(a.1).max(a.0.saturating_sub(b.1))
}

fn evidence(answer: &str, kind: EvidenceKind, start: usize, end: usize) -> Evidence {
    Evidence {
        kind,
        start,
        end,
        text: answer[start..end].to_string(),
    }
}

fn refusal_evidence(answer: &str, lower: &str) -> Option<Evidence> {
    REFUSAL_LEXICON.iter().find_map(|cue| {
        lower
            .find(cue)
            .map(|start| evidence(answer, EvidenceKind::Refusal, start, start + cue.len()))
    })
}

/// Extracts the perceived-agreement pair for `story` from `answer`.
pub fn extract_agreement(answer: &str, story: &Story) -> ParseOutcome {
    let lower = answer.to_ascii_lowercase();
    let mentions = find_mentions(&lower, story);
    let mention_evidence = |m: &Mention| evidence(answer, EvidenceKind::Mention, m.start, m.end);

    if range_re().is_match(&lower) {
        let m = range_re().find(&lower).expect("matched");
        return ParseOutcome::failed(
            ParseStatus::Ambiguous,
            vec![evidence(answer, EvidenceKind::Number, m.start(), m.end())],
        );
    }

    // Splits like "60/40" take precedence over the percent signs they contain.
    let splits: Vec<(f64, f64, usize, usize)> = split_re()
        .captures_iter(&lower)
        .filter_map(|c| {
            let whole = c.get(0)?;
            let a: f64 = c[1].parse().ok()?;
            let b: f64 = c[2].parse().ok()?;
            ((a + b - 100.0).abs() <= SUM_TOLERANCE).then_some((a, b, whole.start(), whole.end()))
        })
        .collect();

    let mut numbers: Vec<Number> = percent_re()
        .captures_iter(&lower)
        .filter_map(|c| {
            let whole = c.get(0)?;
            let value: f64 = c[1].parse().ok()?;
            Some(Number {
                value,
                start: whole.start(),
                end: whole.end(),
            })
        })
        .filter(|n| !splits.iter().any(|s| n.start < s.3 && n.end > s.2))
        .filter(|n| !is_echo(&lower, n.start, n.value))
        .collect();

    if numbers.is_empty() && splits.is_empty() {
        // "Label: 60" without a percent sign.
        numbers = colon_number_re()
            .captures_iter(&lower)
            .filter_map(|c| {
                let g = c.get(1)?;
                let value: f64 = g.as_str().parse().ok()?;
                let preceded_by_mention = mentions.iter().any(|m| {
                    let colon = c.get(0).map_or(0, |w| w.start());
                    m.end <= colon && lower[m.end..colon].trim().is_empty()
                });
                preceded_by_mention.then_some(Number {
                    value,
                    start: g.start(),
                    end: g.end(),
                })
            })
            .collect();
    }

    if let Some(&(a, b, start, end)) = splits.first() {
        if splits.len() > 1 || !numbers.is_empty() {
            return ParseOutcome::failed(
                ParseStatus::Ambiguous,
                vec![evidence(answer, EvidenceKind::Number, start, end)],
            );
        }
        let mut ev = vec![evidence(answer, EvidenceKind::Number, start, end)];
        let first = mentions.first().map(|m| m.option);
        let second = mentions
            .iter()
            .map(|m| m.option)
            .find(|&o| Some(o) != first);
        let raw = match (first, second) {
            (Some(OptionId::Opt1), _) => (a, b),
            (Some(OptionId::Opt2), _) => (b, a),
            (None, _) => return ParseOutcome::failed(ParseStatus::Ambiguous, ev),
        };
        ev.extend(mentions.iter().map(mention_evidence));
        return finish(raw, ev);
    }

    if numbers.is_empty() {
        return match refusal_evidence(answer, &lower) {
            Some(e) => ParseOutcome::failed(ParseStatus::Refusal, vec![e]),
            None => ParseOutcome::failed(ParseStatus::NonNumeric, Vec::new()),
        };
    }
    if numbers.iter().any(|n| n.value > 100.0) {
        let ev = numbers
            .iter()
            .map(|n| evidence(answer, EvidenceKind::Number, n.start, n.end))
            .collect();
        return ParseOutcome::failed(ParseStatus::Ambiguous, ev);
    }

    // Two numbers alternating with one mention of each option are paired in
    // reading order: "A: 60%, B: 40%" and "60% pick A, 40% pick B".
    if let ([n0, n1], [m0, m1]) = (numbers.as_slice(), mentions.as_slice()) {
        let number_first = n0.end <= m0.start && m0.end <= n1.start && n1.end <= m1.start;
        let mention_first = m0.end <= n0.start && n0.end <= m1.start && m1.end <= n1.start;
        if m0.option != m1.option && (number_first || mention_first) {
            let raw = if m0.option == OptionId::Opt1 {
                (n0.value, n1.value)
            } else {
                (n1.value, n0.value)
            };
            let ev = vec![
                evidence(answer, EvidenceKind::Number, n0.start, n0.end),
                mention_evidence(m0),
                evidence(answer, EvidenceKind::Number, n1.start, n1.end),
                mention_evidence(m1),
            ];
            return finish(raw, ev);
        }
    }

    // Nearest-first binding within a clause; a mention before the number
    // wins ties ("Label: 60%").
    let mut candidates = Vec::new();
    for (ni, n) in numbers.iter().enumerate() {
        let clause = clause_index(&lower, n.start);
        for (mi, m) in mentions.iter().enumerate() {
            if clause_index(&lower, m.start) == clause {
                let gap = span_gap((n.start, n.end), (m.start, m.end));
                candidates.push((gap, m.start > n.start, ni, mi));
            }
        }
    }
    candidates.sort();
    let mut bound: [Option<(usize, usize)>; 2] = [None, None];
    let mut number_used = vec![false; numbers.len()];
    for (_, _, ni, mi) in candidates {
        let slot = mentions[mi].option as usize;
        if number_used[ni] || bound[slot].is_some() {
            continue;
        }
        number_used[ni] = true;
        bound[slot] = Some((ni, mi));
    }

    let mut ev: Vec<Evidence> = Vec::new();
    let push_bound = |ev: &mut Vec<Evidence>, b: Option<(usize, usize)>| {
        if let Some((ni, mi)) = b {
            ev.push(evidence(
                answer,
                EvidenceKind::Number,
                numbers[ni].start,
                numbers[ni].end,
            ));
            ev.push(mention_evidence(&mentions[mi]));
        }
    };

    let both_named = OptionId::BOTH
        .iter()
        .all(|&o| mentions.iter().any(|m| m.option == o));

    match (bound[0], bound[1]) {
        (Some((n1, _)), Some((n2, _))) => {
            push_bound(&mut ev, bound[0]);
            push_bound(&mut ev, bound[1]);
            finish((numbers[n1].value, numbers[n2].value), ev)
        }
        _ if numbers.len() == 2 => {
            let unused: Vec<usize> = (0..2).filter(|&i| !number_used[i]).collect();
            let raw = match (bound[0], bound[1]) {
                (Some((n, _)), None) => (numbers[n].value, numbers[unused[0]].value),
                (None, Some((n, _))) => (numbers[unused[0]].value, numbers[n].value),
                _ if both_named => {
                    let first = mentions[0].option;
                    if first == OptionId::Opt1 {
                        (numbers[0].value, numbers[1].value)
                    } else {
                        (numbers[1].value, numbers[0].value)
                    }
                }
                _ => {
                    let ev = numbers
                        .iter()
                        .map(|n| evidence(answer, EvidenceKind::Number, n.start, n.end))
                        .collect();
                    return ParseOutcome::failed(ParseStatus::Ambiguous, ev);
                }
            };
            push_bound(&mut ev, bound[0]);
            push_bound(&mut ev, bound[1]);
            ev.extend(unused.iter().map(|&i| {
                evidence(
                    answer,
                    EvidenceKind::Number,
                    numbers[i].start,
                    numbers[i].end,
                )
            }));
            if bound.iter().all(Option::is_none) {
                ev.extend(mentions.iter().map(mention_evidence));
            }
            finish(raw, ev)
        }
        _ if numbers.len() == 1 => {
            let n = numbers[0];
            let option = match (bound[0], bound[1]) {
                (Some(_), None) => Some(OptionId::Opt1),
                (None, Some(_)) => Some(OptionId::Opt2),
                _ => {
                    let mut named = mentions.iter().map(|m| m.option);
                    let first = named.next();
                    if first.is_some() && named.all(|o| Some(o) == first) {
                        first
                    } else {
                        None
                    }
                }
            };
            ev.push(evidence(answer, EvidenceKind::Number, n.start, n.end));
            ev.extend(mentions.iter().map(mention_evidence));
            match option {
                Some(OptionId::Opt1) => finish((n.value, 100.0 - n.value), ev),
                Some(OptionId::Opt2) => finish((100.0 - n.value, n.value), ev),
                None => ParseOutcome::failed(ParseStatus::Ambiguous, ev),
            }
        }
        _ => {
            let ev = numbers
                .iter()
                .map(|n| evidence(answer, EvidenceKind::Number, n.start, n.end))
                .collect();
            ParseOutcome::failed(ParseStatus::Ambiguous, ev)
        }
    }
}

fn finish(raw: (f64, f64), evidence: Vec<Evidence>) -> ParseOutcome {
    match normalize_pair(raw.0, raw.1) {
        Ok(pair) => ParseOutcome {
            status: ParseStatus::Ok,
            pair: Some(pair),
            evidence,
        },
        Err(status) => ParseOutcome::failed(status, evidence),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Opt1,
    Opt2,
    Neutral,
}

impl Choice {
    pub fn option(self) -> Option<OptionId> {
        match self {
            Choice::Opt1 => Some(OptionId::Opt1),
            Choice::Opt2 => Some(OptionId::Opt2),
            Choice::Neutral => None,
        }
    }
}

impl From<OptionId> for Choice {
    fn from(o: OptionId) -> Self {
        match o {
            OptionId::Opt1 => Choice::Opt1,
            OptionId::Opt2 => Choice::Opt2,
        }
    }
}

/// Which option a free-choice answer picked.
///
/// A single named option wins. When both are named, the answer counts only
/// if it opens with one of them ("Contest charge. Paying would be...");
/// otherwise, or when neither is named, the answer is neutral.
pub fn extract_choice(answer: &str, story: &Story) -> Choice {
    let lower = answer.to_ascii_lowercase();
    let mentions = find_mentions(&lower, story);
    let Some(first) = mentions.first() else {
        return Choice::Neutral;
    };
    if mentions.iter().all(|m| m.option == first.option) {
        return first.option.into();
    }
    let lead =
        lower[..first.start].trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let lead_is_filler =
        lead.is_empty() || ["i choose", "i would", "i'd", "my choice is", "answer"].contains(&lead);
    if lead_is_filler && refusal_evidence(answer, &lower).is_none() {
        first.option.into()
    } else {
        Choice::Neutral
    }
}

/// One hand-labeled answer used to check the parser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledCase {
    pub story: StoryId,
    pub text: String,
    pub status: ParseStatus,
    /// Expected `(on_option1, on_option2)` for ok cases.
    pub expect: Option<[f64; 2]>,
}

#[derive(Deserialize)]
struct LabeledFile {
    case: Vec<LabeledCase>,
}

/// Reads a TOML file of `[[case]]` tables.
pub fn load_labeled_cases(path: &Path) -> Result<Vec<LabeledCase>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: LabeledFile =
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(file.case)
}

impl LabeledCase {
    /// Parses the case and describes any disagreement with its label.
    pub fn check(&self, corpus: &Corpus) -> Result<(), String> {
        let story = corpus.story(&self.story).map_err(|e| e.to_string())?;
        let out = extract_agreement(&self.text, story);
        if out.status != self.status {
            return Err(format!(
                "{:?}: expected {:?}, got {:?}",
                self.text, self.status, out.status
            ));
        }
        match (self.expect, out.pair) {
            (Some([e1, e2]), Some(p))
                if (p.on_option1 - e1).abs() > 1e-9 || (p.on_option2 - e2).abs() > 1e-9 =>
            {
                Err(format!(
                    "{:?}: expected ({e1}, {e2}), got ({}, {})",
                    self.text, p.on_option1, p.on_option2
                ))
            }
            (Some(_), None) | (None, Some(_)) => {
                Err(format!("{:?}: label and pair disagree", self.text))
            }
            (_, Some(p)) if p.on_option1 + p.on_option2 != 100.0 => {
                Err(format!("{:?}: pair does not sum to 100", self.text))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn labeled_case_reports_disagreement() {
        let mut case = LabeledCase {
            story: "term_paper".into(),
            text: "Individual paper: 60%, Group paper: 40%".into(),
            status: ParseStatus::Ok,
            expect: Some([60.0, 40.0]),
        };
        assert_eq!(case.check(Corpus::builtin()), Ok(()));
        case.expect = Some([40.0, 60.0]);
        assert!(case.check(Corpus::builtin()).is_err());
        case.expect = None;
        assert!(case.check(Corpus::builtin()).is_err());
        case.status = ParseStatus::Refusal;
        assert!(case.check(Corpus::builtin()).is_err());
    }

    fn story(id: &str) -> &'static Story {
        Corpus::builtin().story(&StoryId::from(id)).unwrap()
    }

    fn pair(answer: &str, id: &str) -> (f64, f64) {
        let o = extract_agreement(answer, story(id));
        assert_eq!(o.status, ParseStatus::Ok, "{answer:?} -> {o:?}");
        let p = o.pair.unwrap();
        (p.on_option1, p.on_option2)
    }

    #[test]
    fn labelled_pair() {
        assert_eq!(
            pair("Sign release: 60%, Not sign release: 40%", "supermarket"),
            (60.0, 40.0)
        );
        assert_eq!(
            pair("Not sign release: 70%, Sign release: 30%", "supermarket"),
            (30.0, 70.0)
        );
    }

    #[test]
    fn single_number_is_bound_to_named_option() {
        assert_eq!(
            pair("I'd estimate 70% would pay the fine.", "traffic_ticket"),
            (70.0, 30.0)
        );
        assert_eq!(
            pair("About 35% would contest the charge.", "traffic_ticket"),
            (65.0, 35.0)
        );
    }

    #[test]
    fn refusal_and_non_numeric() {
        let o = extract_agreement("I cannot estimate what others think.", story("term_paper"));
        assert_eq!(o.status, ParseStatus::Refusal);
        assert!(o.pair.is_none());
        let o = extract_agreement(
            "Most would probably go for the group paper.",
            story("term_paper"),
        );
        assert_eq!(o.status, ParseStatus::NonNumeric);
    }

    #[test]
    fn total_echo_is_ignored() {
        assert_eq!(
            pair(
                "Individual paper: 55%, Group paper: 45% (Total 100%)",
                "term_paper"
            ),
            (55.0, 45.0)
        );
    }

    #[test]
    fn order_of_mention_fallback() {
        assert_eq!(
            pair(
                "Vote against cutback and vote for cutback, at 65% and 35%.",
                "space_rnd"
            ),
            (35.0, 65.0)
        );
    }

    #[test]
    fn split_notation() {
        assert_eq!(
            pair(
                "I'd say a 60/40 split between sign release and not sign release.",
                "supermarket"
            ),
            (60.0, 40.0)
        );
        assert_eq!(
            extract_agreement("60/40", story("supermarket")).status,
            ParseStatus::Ambiguous
        );
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(
            normalize_pair(60.0, 40.0),
            Ok(AgreementPair {
                on_option1: 60.0,
                on_option2: 40.0,
                normalized: false
            })
        );
        let p = normalize_pair(60.0, 41.0).unwrap();
        assert!(p.normalized);
        assert!((p.on_option1 - 6000.0 / 101.0).abs() < 1e-12);
        assert!((p.on_option2 - 4100.0 / 101.0).abs() < 1e-12);
        assert_eq!(p.on_option1 + p.on_option2, 100.0);
        assert_eq!(normalize_pair(30.0, 30.0), Err(ParseStatus::Ambiguous));
        assert_eq!(normalize_pair(0.0, 0.0), Err(ParseStatus::Ambiguous));
    }

    #[test]
    fn choices() {
        assert_eq!(
            extract_choice("Individual paper", story("term_paper")),
            Choice::Opt1
        );
        assert_eq!(
            extract_choice("Both options have merit.", story("term_paper")),
            Choice::Neutral
        );
        assert_eq!(
            extract_choice("I would contest the charge.", story("traffic_ticket")),
            Choice::Opt2
        );
        assert_eq!(
            extract_choice("Not sign release", story("supermarket")),
            Choice::Opt2
        );
        assert_eq!(
            extract_choice("Sign release", story("supermarket")),
            Choice::Opt1
        );
        assert_eq!(
            extract_choice(
                "Contest charge. Paying the fine is easier, but the citation is wrong.",
                story("traffic_ticket")
            ),
            Choice::Opt2
        );
        assert_eq!(
            extract_choice(
                "It is hard to say whether to pay the fine or contest the charge.",
                story("traffic_ticket")
            ),
            Choice::Neutral
        );
    }

    #[test]
    fn evidence_spans_point_into_answer() {
        let answer = "Individual paper: 62%, Group paper: 38%";
        let o = extract_agreement(answer, story("term_paper"));
        for e in &o.evidence {
            assert_eq!(&answer[e.start..e.end], e.text);
        }
        assert!(o.evidence.iter().any(|e| e.text == "62%"));
    }

    proptest! {
        #[test]
        fn ok_pairs_sum_to_100(a in 0u32..=100, noise in 0u32..=2, order in any::<bool>(), sid in 0usize..4) {
            let s = &Corpus::builtin().stories()[sid];
            let b = 100 - a + noise;
            prop_assume!(b <= 100);
            let answer = if order {
                format!("{}: {}%, {}: {}%", s.option1.label, a, s.option2.label, b)
            } else {
                format!("{}: {}%, {}: {}%", s.option2.label, b, s.option1.label, a)
            };
            let o = extract_agreement(&answer, s);
            prop_assert_eq!(o.status, ParseStatus::Ok);
            let p = o.pair.unwrap();
            prop_assert_eq!(p.on_option1 + p.on_option2, 100.0);
            prop_assert!((0.0..=100.0).contains(&p.on_option1));
            prop_assert!((0.0..=100.0).contains(&p.on_option2));
        }

        #[test]
        fn swapping_labels_swaps_pair(a in 0u32..=100, sid in 0usize..4, style in 0usize..3) {
            let s = &Corpus::builtin().stories()[sid];
            let b = 100 - a;
            let answer = match style {
                0 => format!("{}: {}%, {}: {}%", s.option1.label, a, s.option2.label, b),
                1 => format!("I think {}% would {} and {}% would {}.", a, s.option1.label.to_lowercase(), b, s.option2.label.to_lowercase()),
                _ => format!("Roughly {}% of peers: {}", a, s.option1.label),
            };
            let swapped = s.swapped();
            let o = extract_agreement(&answer, s);
            let w = extract_agreement(&answer, &swapped);
            prop_assert_eq!(o.status, w.status);
            if let (Some(p), Some(q)) = (o.pair, w.pair) {
                prop_assert_eq!(p.on_option1, q.on_option2);
                prop_assert_eq!(p.on_option2, q.on_option1);
            }
        }

        #[test]
        fn never_panics(answer in ".{0,200}", sid in 0usize..4) {
            let s = &Corpus::builtin().stories()[sid];
            let o = extract_agreement(&answer, s);
            prop_assert_eq!(o.status == ParseStatus::Ok, o.pair.is_some());
            let _ = extract_choice(&answer, s);
        }
    }
}
