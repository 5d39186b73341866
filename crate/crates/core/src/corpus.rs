//! Comment ingestion and cleaning.
//!
//! Raw comments arrive as line-delimited JSON. Cleaning removes mentions of
//! the addressed accounts, masks URLs and phone numbers with the literal
//! tokens `URL` and `PHONE`, and splits the remaining text into sentences.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const URL_TOKEN: &str = "URL";
pub const PHONE_TOKEN: &str = "PHONE";
pub const EMPTY_AFTER_CLEANING: &str = "empty after cleaning";

/// Scheme-prefixed links, bare `www.` hosts and common shortener hosts.
/// Trailing sentence punctuation is left outside the match.
pub const URL_PATTERN: &str = r"(?i)(?:\bhttps?://|\bwww\.|\b(?:t\.co|bit\.ly|goo\.gl|tinyurl\.com|ow\.ly|buff\.ly|is\.gd|dlvr\.it|fb\.me|lnkd\.in|youtu\.be|amzn\.to)/)[^\s]*[^\s.,!?;:)\]'\x22]";

/// Seven or more digits, optionally led by `+`, with space, dash, dot or
/// parenthesis separators between them.
pub const PHONE_PATTERN: &str = r"\+?\(?\d(?:[ .\-()]{0,3}\d){6,}";

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(URL_PATTERN).expect("url pattern"));
static PHONE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(PHONE_PATTERN).expect("phone pattern"));
static BOUNDARY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[.?!]+[)\x22']*\s+").expect("boundary pattern"));

/// Tokens ending in a period that do not close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.", "etc.", "e.g.", "i.e.",
    "approx.", "no.", "inc.", "ltd.", "co.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.",
    "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
];

/// A user comment as exported from the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

/// A comment after cleaning and sentence segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub id: String,
    pub sentences: Vec<String>,
    pub masked_urls: usize,
    pub masked_phones: usize,
    pub removed_mentions: usize,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_reason: Option<String>,
}

impl CleanDocument {
    /// Sentences joined by newlines; feeding this back through
    /// [`preprocess`] reproduces the same sentences.
    pub fn rejoined(&self) -> String {
        self.sentences.join("\n")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Accounts the comments are addressed to, without the `@` sigil.
    #[serde(default)]
    pub handles: Vec<String>,
    /// Keep only these ISO 639-1 codes. Records without a language pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines: usize,
    pub accepted: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub filtered_language: usize,
    /// One entry per skipped line, `line N: reason`.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub comments: Vec<RawComment>,
    pub report: IngestReport,
}

#[derive(Deserialize)]
struct InputRecord {
    id: Option<String>,
    text: Option<String>,
    created_at: Option<String>,
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    lang: Option<String>,
}

fn parse_record(line: &str) -> std::result::Result<RawComment, String> {
    let rec: InputRecord = serde_json::from_str(line).map_err(|e| format!("not a JSON object: {e}"))?;
    let id = rec.id.filter(|s| !s.is_empty()).ok_or("missing id")?;
    let text = rec
        .text
        .filter(|s| !s.trim().is_empty())
        .ok_or("missing text")?;
    let raw_ts = rec.created_at.ok_or("missing created_at")?;
    let created_at = DateTime::parse_from_rfc3339(&raw_ts)
        .map_err(|e| format!("created_at {raw_ts:?}: {e}"))?
        .with_timezone(&Utc);
    Ok(RawComment {
        id,
        text,
        created_at,
        author: rec.author,
        lang: rec.lang,
    })
}

/// Reads line-delimited JSON comments. Malformed lines are skipped and
/// counted; repeated ids keep their first occurrence.
pub fn ingest<R: BufRead>(source: R, config: &IngestConfig) -> Result<Corpus> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut comments = Vec::new();
    let languages: Option<HashSet<String>> = config
        .languages
        .as_ref()
        .map(|l| l.iter().map(|c| c.to_ascii_lowercase()).collect());

    for (idx, line) in source.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let comment = match parse_record(&line) {
            Ok(c) => c,
            Err(reason) => {
                report.skipped += 1;
                report.warnings.push(format!("line {}: {reason}", idx + 1));
                continue;
            }
        };
        if let (Some(allowed), Some(lang)) = (&languages, &comment.lang) {
            if !allowed.contains(&lang.to_ascii_lowercase()) {
                report.filtered_language += 1;
                continue;
            }
        }
        if !seen.insert(comment.id.clone()) {
            report.duplicates += 1;
            continue;
        }
        comments.push(comment);
    }
    report.accepted = comments.len();
    if report.skipped > 0 {
        log::warn!("skipped {} malformed corpus lines", report.skipped);
    }
    Ok(Corpus { comments, report })
}

pub fn ingest_path(path: &Path, config: &IngestConfig) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest(std::io::BufReader::new(file), config)
}

/// Compiled mention matcher for a fixed set of target handles.
#[derive(Debug, Clone)]
pub struct MentionFilter {
    re: Option<Regex>,
}

impl MentionFilter {
    pub fn new<S: AsRef<str>>(handles: &[S]) -> Self {
        let alts: BTreeSet<String> = handles
            .iter()
            .map(|h| h.as_ref().trim_start_matches('@').trim())
            .filter(|h| !h.is_empty())
            .map(regex::escape)
            .collect();
        if alts.is_empty() {
            return MentionFilter { re: None };
        }
        let alts: Vec<_> = alts.into_iter().collect();
        let pattern = format!(r"(?i)@(?:{})\b", alts.join("|"));
        MentionFilter {
            re: Some(Regex::new(&pattern).expect("escaped handles form a valid pattern")),
        }
    }

    fn strip(&self, text: &str) -> (String, usize) {
        let Some(re) = &self.re else {
            return (text.to_string(), 0);
        };
        let mut out = text.to_string();
        let mut removed = 0;
        // Removal can splice a new mention together, so run to a fixpoint.
        loop {
            let n = re.find_iter(&out).count();
            if n == 0 {
                break;
            }
            removed += n;
            out = re.replace_all(&out, " ").into_owned();
        }
        (out, removed)
    }
}

/// Cleans one comment. Never fails; a comment with nothing left is flagged
/// as excluded.
pub fn preprocess(comment: &RawComment, mentions: &MentionFilter) -> CleanDocument {
    clean_text(&comment.id, &comment.text, mentions)
}

pub fn clean_text(id: &str, text: &str, mentions: &MentionFilter) -> CleanDocument {
    let (text, removed_mentions) = mentions.strip(text);
    let masked_urls = URL_RE.find_iter(&text).count();
    let text = URL_RE.replace_all(&text, URL_TOKEN);
    let masked_phones = PHONE_RE.find_iter(&text).count();
    let text = PHONE_RE.replace_all(&text, PHONE_TOKEN);
    let sentences = split_sentences(&text);
    let excluded = sentences.is_empty();
    CleanDocument {
        id: id.to_string(),
        sentences,
        masked_urls,
        masked_phones,
        removed_mentions,
        excluded,
        exclusion_reason: excluded.then(|| EMPTY_AFTER_CLEANING.to_string()),
    }
}

/// True when `text` still contains something the URL or phone masks would
/// replace.
pub fn has_unmasked_span(text: &str) -> bool {
    URL_RE.is_match(text) || PHONE_RE.is_match(text)
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ends_with_abbreviation(chunk: &str) -> bool {
    let last = chunk.split_whitespace().last().unwrap_or("");
    let last = last.to_lowercase();
    ABBREVIATIONS.contains(&last.as_str())
}

/// Splits on hard newlines and on terminal punctuation followed by
/// whitespace, except after a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        for m in BOUNDARY_RE.find_iter(line) {
            let punct_end = m.as_str().trim_end().len() + m.start();
            let candidate = &line[start..punct_end];
            if ends_with_abbreviation(candidate) {
                continue;
            }
            let sentence = normalize_ws(candidate);
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = m.end();
        }
        let rest = normalize_ws(&line[start..]);
        if !rest.is_empty() {
            out.push(rest);
        }
    }
    out
}
