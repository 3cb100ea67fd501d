//! Time-stamped transcripts and the associative-memory augmentation merge.
//!
//! Transcripts are UTF-8 TSV with columns `word onset offset sentence_id`
//! (header optional). Augmentation files are UTF-8 TSV with columns
//! `sentence_id level content`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const TRANSCRIPT_HEADER: &str = "word\tonset\toffset\tsentence_id";
pub const ANNOTATION_HEADER: &str = "sentence_id\tlevel\tcontent";

#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub text: String,
    pub onset: f64,
    pub offset: f64,
    pub sentence_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub story_id: String,
    tokens: Vec<WordToken>,
}

impl Transcript {
    /// Builds a transcript, checking every ordering invariant.
    pub fn new(story_id: impl Into<String>, tokens: Vec<WordToken>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Invalid("transcript has no tokens".into()));
        }
        for (i, tok) in tokens.iter().enumerate() {
            check_token(tok).map_err(|m| Error::Invalid(format!("token {i}: {m}")))?;
            if i > 0 {
                check_order(&tokens[i - 1], tok).map_err(|m| Error::Invalid(format!("token {i}: {m}")))?;
            }
        }
        Ok(Self {
            story_id: story_id.into(),
            tokens,
        })
    }

    pub fn tokens(&self) -> &[WordToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn onsets(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.onset).collect()
    }
}

fn check_token(tok: &WordToken) -> std::result::Result<(), String> {
    if tok.text.is_empty() {
        return Err("empty word".into());
    }
    if !tok.onset.is_finite() || !tok.offset.is_finite() {
        return Err("non-finite timing".into());
    }
    if tok.onset > tok.offset {
        return Err(format!("onset {} after offset {}", tok.onset, tok.offset));
    }
    Ok(())
}

fn check_order(prev: &WordToken, tok: &WordToken) -> std::result::Result<(), String> {
    if tok.onset < prev.onset {
        return Err(format!("onset {} decreases from {}", tok.onset, prev.onset));
    }
    if tok.sentence_id < prev.sentence_id {
        return Err(format!(
            "sentence_id {} decreases from {}",
            tok.sentence_id, prev.sentence_id
        ));
    }
    Ok(())
}

/// Iterates over non-blank lines with their 1-based line numbers, skipping
/// a leading header line that matches `header`.
fn data_lines<'a>(text: &'a str, header: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(move |(n, l)| !(*n == 1 && l.trim() == header.trim()) && !l.trim().is_empty())
}

fn parse_f64(field: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{name} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn parse_u32(field: &str, line: usize, name: &str) -> Result<u32> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{name} {field:?} is not a non-negative integer")))
}

pub fn parse_transcript(raw: &[u8], story_id: &str) -> Result<Transcript> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::parse(0, format!("invalid UTF-8: {e}")))?;
    let mut tokens: Vec<WordToken> = Vec::new();
    for (line, row) in data_lines(text, TRANSCRIPT_HEADER) {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(line, format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let tok = WordToken {
            text: fields[0].to_string(),
            onset: parse_f64(fields[1], line, "onset")?,
            offset: parse_f64(fields[2], line, "offset")?,
            sentence_id: parse_u32(fields[3], line, "sentence_id")?,
        };
        check_token(&tok).map_err(|m| Error::parse(line, m))?;
        if let Some(prev) = tokens.last() {
            check_order(prev, &tok).map_err(|m| Error::parse(line, m))?;
        }
        tokens.push(tok);
    }
    if tokens.is_empty() {
        return Err(Error::parse(1, "transcript has no rows"));
    }
    Ok(Transcript {
        story_id: story_id.to_string(),
        tokens,
    })
}

/// Shortest round-trip representation, padded to at least three decimals.
pub(crate) fn format_seconds(v: f64) -> String {
    let s = format!("{v}");
    let decimals = s.split_once('.').map_or(0, |(_, frac)| frac.len());
    if s.contains(['e', 'E']) || decimals < 3 {
        let padded = format!("{v:.3}");
        // Fall back to the shortest form when padding would change the value.
        if padded.parse::<f64>().ok() == Some(v) {
            return padded;
        }
    }
    s
}

pub fn write_transcript(t: &Transcript) -> String {
    let mut out = String::with_capacity(t.len() * 32);
    out.push_str(TRANSCRIPT_HEADER);
    out.push('\n');
    for tok in &t.tokens {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            tok.text,
            format_seconds(tok.onset),
            format_seconds(tok.offset),
            tok.sentence_id
        );
    }
    out
}

/// Maps each sentence id to the inclusive `(first, last)` token index range.
pub fn sentence_spans(t: &Transcript) -> BTreeMap<u32, (usize, usize)> {
    let mut spans = BTreeMap::new();
    for (i, tok) in t.tokens.iter().enumerate() {
        spans
            .entry(tok.sentence_id)
            .and_modify(|span: &mut (usize, usize)| span.1 = i)
            .or_insert((i, i));
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationLevel {
    Word,
    Sentence,
}

impl std::str::FromStr for AugmentationLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "word" => Ok(Self::Word),
            "sentence" => Ok(Self::Sentence),
            other => Err(format!("unknown augmentation level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRecord {
    pub sentence_id: u32,
    pub level: AugmentationLevel,
    pub content: String,
}

impl AugmentationRecord {
    /// Splits content into inserted words: commas and periods are dropped,
    /// then the remainder is split on whitespace.
    pub fn words(&self) -> Vec<String> {
        self.content
            .replace([',', '.'], " ")
            .split_whitespace()
            .map(str::to_string)
            .collect()
    }
}

pub fn parse_annotations(raw: &[u8]) -> Result<Vec<AugmentationRecord>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::parse(0, format!("invalid UTF-8: {e}")))?;
    let mut records = Vec::new();
    for (line, row) in data_lines(text, ANNOTATION_HEADER) {
        let mut fields = row.splitn(3, '\t');
        let (Some(sid), Some(level), Some(content)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(line, "expected 3 tab-separated fields"));
        };
        let level = level.parse().map_err(|m: String| Error::parse(line, m))?;
        let content = content.trim();
        if content.is_empty() {
            return Err(Error::parse(line, "empty content"));
        }
        records.push(AugmentationRecord {
            sentence_id: parse_u32(sid, line, "sentence_id")?,
            level,
            content: content.to_string(),
        });
    }
    Ok(records)
}

/// Inserts associative content at the end of its trigger sentence.
///
/// Each inserted word gets onset = offset = the offset of the sentence's
/// last original token and inherits its sentence id. Records for the same
/// sentence are appended in record order.
pub fn merge_augmentation(t: &Transcript, anns: &[AugmentationRecord]) -> Result<Transcript> {
    let spans = sentence_spans(t);
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, rec) in anns.iter().enumerate() {
        let &(_, last) = spans.get(&rec.sentence_id).ok_or_else(|| {
            Error::Invalid(format!("annotation {i}: sentence_id {} not in transcript", rec.sentence_id))
        })?;
        let words = rec.words();
        if words.is_empty() {
            return Err(Error::Invalid(format!("annotation {i}: content has no words")));
        }
        inserts.entry(last).or_default().extend(words);
    }

    let extra: usize = inserts.values().map(Vec::len).sum();
    let mut tokens = Vec::with_capacity(t.len() + extra);
    for (i, tok) in t.tokens.iter().enumerate() {
        tokens.push(tok.clone());
        if let Some(words) = inserts.get(&i) {
            tokens.extend(words.iter().map(|w| WordToken {
                text: w.clone(),
                onset: tok.offset,
                offset: tok.offset,
                sentence_id: tok.sentence_id,
            }));
        }
    }
    // Fails if a trigger offset runs past the next sentence's first onset.
    Transcript::new(t.story_id.clone(), tokens)
}
