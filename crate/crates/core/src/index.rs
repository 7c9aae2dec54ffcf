//! Tokenizing, link extraction, and the word_id table with its postings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::url::{normalize_url, DocId, NormalizedUrl};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("document {0} is already indexed")]
    DuplicateDocument(DocId),
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("malformed index dump at line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordId(pub u32);

/// What the crawler keeps about one fetched page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageSnapshot {
    pub doc_id: DocId,
    pub url: NormalizedUrl,
    pub fetched_at: Timestamp,
    pub content_hash: u64,
    pub out_links: Vec<NormalizedUrl>,
    pub token_count: usize,
}

enum Piece<'a> {
    Text(&'a str),
    Tag(&'a str),
}

/// Returns the element name if `tag` opens a `<script>` or `<style>` element.
fn raw_text_element(tag: &str) -> Option<&'static str> {
    let name_end = tag
        .find(|c: char| c.is_whitespace() || c == '/')
        .unwrap_or(tag.len());
    let name = &tag[..name_end];
    if tag.trim_end().ends_with('/') {
        return None;
    }
    if name.eq_ignore_ascii_case("script") {
        Some("script")
    } else if name.eq_ignore_ascii_case("style") {
        Some("style")
    } else {
        None
    }
}

/// Split markup into text runs and tag bodies (without the angle brackets).
/// Script and style contents are dropped. An unmatched `<` is treated as a
/// separator and the rest of the input as text.
fn scan_markup(html: &str, mut visit: impl FnMut(Piece<'_>)) {
    let mut rest = html;
    while let Some(lt) = rest.find('<') {
        visit(Piece::Text(&rest[..lt]));
        let after = &rest[lt + 1..];
        let Some(gt) = after.find('>') else {
            rest = after;
            break;
        };
        let tag = &after[..gt];
        visit(Piece::Tag(tag));
        rest = &after[gt + 1..];
        if let Some(name) = raw_text_element(tag) {
            let closing = format!("</{name}");
            // ASCII lowercasing keeps byte offsets intact
            rest = match rest.to_ascii_lowercase().find(&closing) {
                Some(i) => match rest[i..].find('>') {
                    Some(j) => &rest[i + j + 1..],
                    None => "",
                },
                None => "",
            };
        }
    }
    visit(Piece::Text(rest));
}

fn push_tokens(text: &str, out: &mut Vec<String>) {
    let lower = text.to_lowercase();
    out.extend(
        lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= 2)
            .map(str::to_string),
    );
}

/// Lowercase alphanumeric tokens of at least two characters, markup removed.
pub fn tokenize(html: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(html);
    let mut tokens = Vec::new();
    scan_markup(&text, |piece| {
        if let Piece::Text(t) = piece {
            push_tokens(t, &mut tokens);
        }
    });
    tokens
}

fn href_attribute(tag: &str) -> Option<String> {
    let bytes = tag.as_bytes();
    // skip element name
    let mut i = tag
        .find(|c: char| c.is_whitespace() || c == '/')
        .unwrap_or(tag.len());
    while i < bytes.len() {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'/') {
            i += 1;
        }
        let name_start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'=' && bytes[i] != b'/' {
            i += 1;
        }
        let name = &tag[name_start..i];
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = None;
        if i < bytes.len() && bytes[i] == b'=' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') {
                let quote = bytes[i];
                let start = i + 1;
                let end = tag[start..]
                    .bytes()
                    .position(|b| b == quote)
                    .map_or(tag.len(), |p| start + p);
                value = Some(&tag[start..end]);
                i = (end + 1).min(tag.len());
            } else {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                value = Some(&tag[start..i]);
            }
        }
        if name.eq_ignore_ascii_case("href") {
            return value.map(|v| v.replace("&amp;", "&"));
        }
        if name.is_empty() {
            i += 1;
        }
    }
    None
}

fn is_anchor(tag: &str) -> bool {
    let mut chars = tag.chars();
    matches!(chars.next(), Some('a' | 'A')) && chars.next().is_none_or(|c| c.is_whitespace() || c == '/')
}

/// Resolved `href` targets of every `<a>` element, in document order.
/// Unresolvable hrefs are skipped; duplicates are kept.
pub fn extract_links(html: &[u8], base: &NormalizedUrl) -> Vec<NormalizedUrl> {
    let text = String::from_utf8_lossy(html);
    let mut links = Vec::new();
    scan_markup(&text, |piece| {
        if let Piece::Tag(tag) = piece {
            if is_anchor(tag) {
                if let Some(href) = href_attribute(tag) {
                    if let Ok(url) = normalize_url(Some(base), &href) {
                        links.push(url);
                    }
                }
            }
        }
    });
    links
}

/// The word_id table: dense word ids in first-seen order and per-word
/// postings of (document, term frequency).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordIndex {
    word_ids: HashMap<String, WordId>,
    words: Vec<String>,
    postings: Vec<BTreeMap<DocId, u32>>,
    documents: BTreeSet<DocId>,
}

#[derive(Serialize, Deserialize)]
struct DumpRecord {
    word: String,
    word_id: u32,
    postings: Vec<(u64, u32)>,
}

impl WordIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn index_document<S: AsRef<str>>(&mut self, doc_id: DocId, tokens: &[S]) -> Result<(), IndexError> {
        if !self.documents.insert(doc_id) {
            return Err(IndexError::DuplicateDocument(doc_id));
        }
        for token in tokens {
            let token = token.as_ref();
            let id = match self.word_ids.get(token) {
                Some(&id) => id,
                None => {
                    let id = WordId(self.words.len() as u32);
                    self.word_ids.insert(token.to_string(), id);
                    self.words.push(token.to_string());
                    self.postings.push(BTreeMap::new());
                    id
                }
            };
            *self.postings[id.0 as usize].entry(doc_id).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn word_id(&self, word: &str) -> Option<WordId> {
        self.word_ids.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id.0 as usize).map(String::as_str)
    }

    pub fn postings(&self, id: WordId) -> Option<&BTreeMap<DocId, u32>> {
        self.postings.get(id.0 as usize)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Documents with at least one posting (after a dump reload, documents
    /// without tokens are not recoverable).
    pub fn documents(&self) -> impl Iterator<Item = DocId> + '_ {
        self.documents.iter().copied()
    }

    pub fn contains_document(&self, doc_id: DocId) -> bool {
        self.documents.contains(&doc_id)
    }

    /// Conjunctive keyword search. Score is the sum of term frequencies;
    /// results are ordered by descending score, then ascending doc id.
    pub fn lookup<S: AsRef<str>>(&self, terms: &[S]) -> Result<Vec<(DocId, u64)>, IndexError> {
        let mut query: Vec<String> = Vec::new();
        for term in terms {
            for token in tokenize(term.as_ref().as_bytes()) {
                if !query.contains(&token) {
                    query.push(token);
                }
            }
        }
        if query.is_empty() {
            return Err(IndexError::EmptyQuery);
        }

        let mut lists = Vec::with_capacity(query.len());
        for token in &query {
            match self.word_ids.get(token) {
                Some(id) => lists.push(&self.postings[id.0 as usize]),
                None => return Ok(Vec::new()),
            }
        }
        lists.sort_by_key(|l| l.len());
        let (first, others) = lists.split_first().expect("query is non-empty");

        let mut hits: Vec<(DocId, u64)> = first
            .iter()
            .filter_map(|(&doc, &tf)| {
                let mut score = u64::from(tf);
                for list in others {
                    score += u64::from(*list.get(&doc)?);
                }
                Some((doc, score))
            })
            .collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(hits)
    }

    /// One JSON record per word, ordered by word id.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<(), IndexError> {
        for (i, word) in self.words.iter().enumerate() {
            let record = DumpRecord {
                word: word.clone(),
                word_id: i as u32,
                postings: self.postings[i].iter().map(|(d, &tf)| (d.0, tf)).collect(),
            };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, IndexError> {
        let mut index = WordIndex::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| IndexError::MalformedDump { line: n + 1, reason };
            let record: DumpRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if record.word_id as usize != index.words.len() {
                return Err(malformed(format!(
                    "expected word_id {}, found {}",
                    index.words.len(),
                    record.word_id
                )));
            }
            if index.word_ids.contains_key(&record.word) {
                return Err(malformed(format!("duplicate word {:?}", record.word)));
            }
            let mut postings = BTreeMap::new();
            for (doc, tf) in record.postings {
                if tf == 0 {
                    return Err(malformed("zero term frequency".into()));
                }
                postings.insert(DocId(doc), tf);
                index.documents.insert(DocId(doc));
            }
            index.word_ids.insert(record.word.clone(), WordId(record.word_id));
            index.words.push(record.word);
            index.postings.push(postings);
        }
        Ok(index)
    }
}
