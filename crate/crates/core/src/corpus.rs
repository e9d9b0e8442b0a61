//! Bag-of-words corpora of variable-length categorical observations.
//!
//! Documents are stored as sparse `(word, count)` lists over a shared
//! vocabulary. The on-disk interchange format is the UCI bag-of-words
//! layout: a `docword` file with three header lines `D`, `W`, `NNZ`
//! followed by `NNZ` triples `docID wordID count` (1-based), plus a
//! `vocab` file with one token per line.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into persisted corpora.
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index error at line {line}: {msg}")]
    Index { line: usize, msg: String },
    #[error("value error at line {line}: {msg}")]
    Value { line: usize, msg: String },
    #[error("pruning left an empty vocabulary")]
    EmptyVocabulary,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Ordered list of unique tokens; position is the word index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if !seen.insert(w.as_str()) {
                return Err(CorpusError::Invalid(format!(
                    "duplicate token {w:?} at vocabulary index {i}"
                )));
            }
        }
        Ok(Self { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// One document: word indices in strictly increasing order with counts ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    terms: Vec<(u32, u32)>,
}

impl Document {
    /// Builds a document from `(word, count)` pairs. Pairs may come in any
    /// order; repeated words are merged. Zero counts are rejected.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for (w, c) in pairs {
            if c == 0 {
                return Err(CorpusError::Invalid(format!("zero count for word {w}")));
            }
            let slot = map.entry(w).or_insert(0);
            *slot = slot
                .checked_add(c)
                .ok_or_else(|| CorpusError::Invalid(format!("count overflow for word {w}")))?;
        }
        Ok(Self {
            terms: map.into_iter().collect(),
        })
    }

    pub fn terms(&self) -> &[(u32, u32)] {
        &self.terms
    }

    /// Number of tokens `n_l`.
    pub fn length(&self) -> u64 {
        self.terms.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Expands the counts into the literal token sequence, words in index order.
    pub fn tokens(&self) -> impl Iterator<Item = u32> + '_ {
        self.terms.iter().flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize))
    }
}

/// A set of `L` documents over a `B`-word vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    docs: Vec<Document>,
    doc_lengths: Vec<u64>,
    total_tokens: u64,
    vocab: Vocabulary,
    doc_ids: Vec<u64>,
    dropped_doc_ids: Vec<u64>,
    years: Option<BTreeMap<u64, i32>>,
}

impl Corpus {
    /// Assembles a corpus, dropping empty documents (their ids go to
    /// `dropped_doc_ids`).
    pub fn new(docs: Vec<Document>, doc_ids: Vec<u64>, vocab: Vocabulary) -> Result<Self> {
        if docs.len() != doc_ids.len() {
            return Err(CorpusError::Invalid(format!(
                "{} documents but {} ids",
                docs.len(),
                doc_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(doc_ids.len());
        if let Some(dup) = doc_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(CorpusError::Invalid(format!("duplicate document id {dup}")));
        }
        let b = vocab.len() as u32;
        let mut kept_docs = Vec::with_capacity(docs.len());
        let mut kept_ids = Vec::with_capacity(docs.len());
        let mut dropped = Vec::new();
        for (doc, id) in docs.into_iter().zip(doc_ids) {
            if let Some(&(w, _)) = doc.terms.iter().find(|&&(w, _)| w >= b) {
                return Err(CorpusError::Invalid(format!(
                    "document {id} references word {w} but vocabulary has {b} words"
                )));
            }
            if doc.is_empty() {
                dropped.push(id);
            } else {
                kept_docs.push(doc);
                kept_ids.push(id);
            }
        }
        let doc_lengths: Vec<u64> = kept_docs.iter().map(Document::length).collect();
        let total_tokens = doc_lengths.iter().sum();
        Ok(Self {
            docs: kept_docs,
            doc_lengths,
            total_tokens,
            vocab,
            doc_ids: kept_ids,
            dropped_doc_ids: dropped,
            years: None,
        })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, l: usize) -> &Document {
        &self.docs[l]
    }

    pub fn doc_lengths(&self) -> &[u64] {
        &self.doc_lengths
    }

    /// Total token count `n`.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Number of documents `L`.
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    /// Vocabulary size `B`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    /// External ids of documents removed because they were empty.
    pub fn dropped_doc_ids(&self) -> &[u64] {
        &self.dropped_doc_ids
    }

    pub fn years(&self) -> Option<&BTreeMap<u64, i32>> {
        self.years.as_ref()
    }

    pub fn with_years(mut self, years: BTreeMap<u64, i32>) -> Self {
        self.years = Some(years);
        self
    }

    /// Year of the document at position `l`, if metadata covers it.
    pub fn year_of(&self, l: usize) -> Option<i32> {
        self.years.as_ref()?.get(&self.doc_ids[l]).copied()
    }

    /// Summed counts per word over the whole corpus.
    pub fn word_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.vocab_size()];
        for doc in &self.docs {
            for &(w, c) in doc.terms() {
                totals[w as usize] += u64::from(c);
            }
        }
        totals
    }

    /// Number of documents containing each word.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.vocab_size()];
        for doc in &self.docs {
            for &(w, _) in doc.terms() {
                df[w as usize] += 1;
            }
        }
        df
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let b = self.vocab_size() as u32;
        if self.docs.len() != self.doc_ids.len() || self.docs.len() != self.doc_lengths.len() {
            return Err(CorpusError::Invalid(
                "length mismatch between docs, ids and lengths".into(),
            ));
        }
        let mut total = 0u64;
        for (l, doc) in self.docs.iter().enumerate() {
            if doc.is_empty() {
                return Err(CorpusError::Invalid(format!("document {l} is empty")));
            }
            let mut prev: Option<u32> = None;
            for &(w, c) in doc.terms() {
                if w >= b {
                    return Err(CorpusError::Invalid(format!("word index {w} >= {b}")));
                }
                if c == 0 {
                    return Err(CorpusError::Invalid(format!("zero count in document {l}")));
                }
                if prev.is_some_and(|p| p >= w) {
                    return Err(CorpusError::Invalid(format!("unsorted terms in document {l}")));
                }
                prev = Some(w);
            }
            if doc.length() != self.doc_lengths[l] {
                return Err(CorpusError::Invalid(format!("stale length for document {l}")));
            }
            total += self.doc_lengths[l];
        }
        if total != self.total_tokens {
            return Err(CorpusError::Invalid(format!(
                "total tokens {} but counts sum to {total}",
                self.total_tokens
            )));
        }
        Ok(())
    }
}

fn parse_header(lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>, name: &str) -> Result<u64> {
    loop {
        let Some((idx, line)) = lines.next() else {
            return Err(CorpusError::Parse {
                line: 0,
                msg: format!("missing header line {name}"),
            });
        };
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        return t.parse::<u64>().map_err(|_| CorpusError::Parse {
            line: idx + 1,
            msg: format!("header {name} must be a non-negative integer, got {t:?}"),
        });
    }
}

/// Reads a vocabulary file, one token per line. Trailing blank lines are ignored.
pub fn read_vocabulary(reader: impl BufRead) -> Result<Vocabulary> {
    let mut words = Vec::new();
    for line in reader.lines() {
        let line = line?;
        words.push(line.trim_end_matches('\r').trim().to_string());
    }
    while words.last().is_some_and(String::is_empty) {
        words.pop();
    }
    Vocabulary::new(words)
}

/// Parses a UCI `docword` stream and its `vocab` stream.
pub fn parse_bag_of_words(docword: impl BufRead, vocab: impl BufRead) -> Result<Corpus> {
    let vocab = read_vocabulary(vocab)?;
    let mut lines = docword.lines().enumerate();
    let d = parse_header(&mut lines, "D")?;
    let w = parse_header(&mut lines, "W")?;
    let nnz = parse_header(&mut lines, "NNZ")?;
    if w as usize != vocab.len() {
        return Err(CorpusError::Parse {
            line: 2,
            msg: format!("header W = {w} but vocabulary has {} tokens", vocab.len()),
        });
    }

    let mut per_doc: BTreeMap<u64, Vec<(u32, u32)>> = BTreeMap::new();
    let mut seen = 0u64;
    for (idx, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CorpusError::Parse {
                line: lineno,
                msg: format!("expected `docID wordID count`, got {t:?}"),
            });
        }
        let num = |s: &str, what: &str| -> Result<i64> {
            s.parse::<i64>().map_err(|_| CorpusError::Parse {
                line: lineno,
                msg: format!("{what} is not an integer: {s:?}"),
            })
        };
        let doc_id = num(fields[0], "docID")?;
        let word_id = num(fields[1], "wordID")?;
        let count = num(fields[2], "count")?;
        if doc_id < 1 || doc_id as u64 > d {
            return Err(CorpusError::Index {
                line: lineno,
                msg: format!("docID {doc_id} outside 1..={d}"),
            });
        }
        if word_id < 1 || word_id as u64 > w {
            return Err(CorpusError::Index {
                line: lineno,
                msg: format!("wordID {word_id} outside 1..={w}"),
            });
        }
        if count <= 0 || count > i64::from(u32::MAX) {
            return Err(CorpusError::Value {
                line: lineno,
                msg: format!("count must be positive, got {count}"),
            });
        }
        per_doc
            .entry(doc_id as u64)
            .or_default()
            .push((word_id as u32 - 1, count as u32));
        seen += 1;
    }
    if seen != nnz {
        return Err(CorpusError::Parse {
            line: 3,
            msg: format!("header NNZ = {nnz} but found {seen} triples"),
        });
    }

    let mut docs = Vec::with_capacity(per_doc.len());
    let mut ids = Vec::with_capacity(per_doc.len());
    for (id, pairs) in per_doc {
        docs.push(Document::from_pairs(pairs)?);
        ids.push(id);
    }
    Corpus::new(docs, ids, vocab)
}

/// Parses a dense word-by-document count matrix in CSV form: a header row
/// whose first cell is ignored and remaining cells name documents, then one
/// row per word (`token,count,count,...`). Documents are given ids 1..=D in
/// column order. Column names of the form `YYYY_...` populate year metadata.
pub fn parse_word_doc_matrix_csv(reader: impl Read) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 {
        return Err(CorpusError::Parse {
            line: 1,
            msg: "expected a word column followed by at least one document column".into(),
        });
    }
    let num_docs = headers.len() - 1;
    let mut years = BTreeMap::new();
    for (j, name) in headers.iter().skip(1).enumerate() {
        if let Some(year) = name.split('_').next().and_then(|y| y.trim().parse::<i32>().ok()) {
            years.insert(j as u64 + 1, year);
        }
    }

    let mut words = Vec::new();
    let mut pairs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_docs];
    for (row, record) in rdr.records().enumerate() {
        let lineno = row + 2;
        let record = record.map_err(|e| CorpusError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let widx = words.len() as u32;
        words.push(record[0].trim().to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let count: i64 = cell.trim().parse().map_err(|_| CorpusError::Parse {
                line: lineno,
                msg: format!("count is not an integer: {cell:?}"),
            })?;
            if count < 0 || count > i64::from(u32::MAX) {
                return Err(CorpusError::Value {
                    line: lineno,
                    msg: format!("count must be non-negative, got {count}"),
                });
            }
            if count > 0 {
                pairs[j].push((widx, count as u32));
            }
        }
    }
    let vocab = Vocabulary::new(words)?;
    let docs = pairs
        .into_iter()
        .map(Document::from_pairs)
        .collect::<Result<Vec<_>>>()?;
    let ids = (1..=num_docs as u64).collect();
    let corpus = Corpus::new(docs, ids, vocab)?;
    Ok(if years.is_empty() {
        corpus
    } else {
        corpus.with_years(years)
    })
}

/// Writes the corpus back out as UCI `docword` triples. `D` is the largest
/// document id (including dropped ones) so ids survive a re-parse.
pub fn write_docword(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    let d = corpus
        .doc_ids
        .iter()
        .chain(&corpus.dropped_doc_ids)
        .copied()
        .max()
        .unwrap_or(0);
    let nnz: usize = corpus.docs.iter().map(|doc| doc.terms.len()).sum();
    writeln!(out, "{d}")?;
    writeln!(out, "{}", corpus.vocab_size())?;
    writeln!(out, "{nnz}")?;
    for (doc, id) in corpus.docs.iter().zip(&corpus.doc_ids) {
        for &(w, c) in doc.terms() {
            writeln!(out, "{id} {} {c}", w + 1)?;
        }
    }
    Ok(())
}

pub fn write_vocabulary(vocab: &Vocabulary, mut out: impl Write) -> Result<()> {
    for w in vocab.words() {
        writeln!(out, "{w}")?;
    }
    Ok(())
}

/// Removes words present in more than `max_doc_fraction` of the documents,
/// keeps the `top_b` most frequent of the rest (ties to the lower index),
/// and drops documents left empty.
///
/// The steps repeat until nothing changes: dropping empty documents shrinks
/// `L`, which can push a surviving word over the fraction limit. The fixed
/// point makes the operation idempotent.
pub fn prune_vocabulary(corpus: &Corpus, max_doc_fraction: f64, top_b: usize) -> Result<Corpus> {
    if !(max_doc_fraction > 0.0 && max_doc_fraction <= 1.0) {
        return Err(CorpusError::InvalidArgument(format!(
            "max_doc_fraction must lie in (0, 1], got {max_doc_fraction}"
        )));
    }
    if top_b == 0 {
        return Err(CorpusError::InvalidArgument("top_b must be at least 1".into()));
    }
    let mut current = corpus.clone();
    loop {
        let next = prune_once(&current, max_doc_fraction, top_b)?;
        let unchanged = next.vocab_size() == current.vocab_size() && next.num_docs() == current.num_docs();
        current = next;
        if unchanged {
            return Ok(current);
        }
    }
}

fn prune_once(corpus: &Corpus, max_doc_fraction: f64, top_b: usize) -> Result<Corpus> {
    let l = corpus.num_docs() as f64;
    let df = corpus.document_frequencies();
    let totals = corpus.word_totals();

    let mut candidates: Vec<usize> = (0..corpus.vocab_size())
        .filter(|&w| (df[w] as f64) <= max_doc_fraction * l)
        .collect();
    // Highest total first; stable sort keeps lower original index on ties.
    candidates.sort_by(|&a, &b| totals[b].cmp(&totals[a]));
    candidates.truncate(top_b);
    candidates.sort_unstable();
    if candidates.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }

    let mut remap = vec![u32::MAX; corpus.vocab_size()];
    for (new, &old) in candidates.iter().enumerate() {
        remap[old] = new as u32;
    }
    let vocab = Vocabulary {
        words: candidates.iter().map(|&w| corpus.vocab.words[w].clone()).collect(),
    };
    let docs: Vec<Document> = corpus
        .docs
        .iter()
        .map(|doc| Document {
            terms: doc
                .terms
                .iter()
                .filter(|&&(w, _)| remap[w as usize] != u32::MAX)
                .map(|&(w, c)| (remap[w as usize], c))
                .collect(),
        })
        .collect();
    let mut pruned = Corpus::new(docs, corpus.doc_ids.clone(), vocab)?;
    let mut dropped = corpus.dropped_doc_ids.clone();
    dropped.extend_from_slice(&pruned.dropped_doc_ids);
    pruned.dropped_doc_ids = dropped;
    pruned.years = corpus.years.clone();
    Ok(pruned)
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    format_version: u32,
    corpus: Corpus,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Serializes the corpus as versioned JSON.
pub fn save_corpus(corpus: &Corpus, out: impl Write) -> Result<()> {
    let file = CorpusFile {
        format_version: CORPUS_FORMAT_VERSION,
        corpus: corpus.clone(),
    };
    serde_json::to_writer(out, &file).map_err(|e| CorpusError::Format(e.to_string()))
}

pub fn load_corpus(mut input: impl Read) -> Result<Corpus> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let probe: VersionProbe = serde_json::from_slice(&buf).map_err(|e| CorpusError::Format(e.to_string()))?;
    if probe.format_version != CORPUS_FORMAT_VERSION {
        return Err(CorpusError::Format(format!(
            "unsupported corpus format version {} (expected {CORPUS_FORMAT_VERSION})",
            probe.format_version
        )));
    }
    let file: CorpusFile = serde_json::from_slice(&buf).map_err(|e| CorpusError::Format(e.to_string()))?;
    file.corpus.validate()?;
    Ok(file.corpus)
}

/// Reads a `doc_id,year` CSV sidecar.
pub fn read_year_metadata(reader: impl Read) -> Result<BTreeMap<u64, i32>> {
    #[derive(Deserialize)]
    struct Row {
        doc_id: u64,
        year: i32,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut years = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CorpusError::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        years.insert(row.doc_id, row.year);
    }
    Ok(years)
}
