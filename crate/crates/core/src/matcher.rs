//! Dictionary matching of variant keys in free text.
//!
//! A document is projected once into a normalized character stream (Greek
//! letters spelled out, separator runs collapsed to one space) in two case
//! forms. Case-sensitive keys, the short acronyms, are searched in the
//! case-preserving projection and all other keys in the lowercased one.
//! Every hit is mapped back to the original text, must start and end on a
//! token boundary, and must normalize to exactly the key it was found under.
//! Overlaps are resolved leftmost-longest.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::normalize::{is_separator, is_word_char, normalize_lossy, push_expanded};
use crate::ontology::ConceptId;
use crate::tsv;
use crate::variants::{Provenance, TermVariant, VariantCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            source: None,
        }
    }
}

/// How a concept holds a key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct KeyHolder {
    pub concept: ConceptId,
    pub provenance: Provenance,
    /// The key is the normalized primary name of the concept.
    pub primary: bool,
}

/// Immutable key → concepts index with its search automata.
#[derive(Debug)]
pub struct TermIndex {
    entries: HashMap<String, Vec<KeyHolder>>,
    lower: Option<Searcher>,
    cased: Option<Searcher>,
    max_key_chars: usize,
}

#[derive(Debug)]
struct Searcher {
    automaton: AhoCorasick,
    keys: Vec<String>,
}

impl Searcher {
    fn build(mut keys: Vec<String>) -> Result<Option<Searcher>> {
        if keys.is_empty() {
            return Ok(None);
        }
        keys.sort();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&keys)
            .map_err(|e| Error::Config(format!("cannot build matcher automaton: {e}")))?;
        Ok(Some(Searcher { automaton, keys }))
    }
}

/// Builds the index over a set of variants.
pub fn build_index<'a>(variants: impl IntoIterator<Item = &'a TermVariant>) -> Result<TermIndex> {
    let mut entries: HashMap<String, Vec<KeyHolder>> = HashMap::new();
    let mut seen_concepts: HashSet<&ConceptId> = HashSet::new();
    for v in variants {
        if v.normalized_key.is_empty() {
            return Err(Error::Config(format!("{} has a variant with an empty key", v.concept)));
        }
        // a concept's first variant is its primary name
        let primary = seen_concepts.insert(&v.concept) && v.provenance == Provenance::Original;
        let holders = entries.entry(v.normalized_key.clone()).or_default();
        match holders.iter_mut().find(|h| h.concept == v.concept) {
            Some(existing) => {
                existing.primary |= primary;
                existing.provenance = existing.provenance.min(v.provenance);
            }
            None => holders.push(KeyHolder {
                concept: v.concept.clone(),
                provenance: v.provenance,
                primary,
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::Config("cannot build an index from zero variants".into()));
    }
    for holders in entries.values_mut() {
        holders.sort();
    }
    let (cased, lower): (Vec<String>, Vec<String>) =
        entries.keys().cloned().partition(|k| k.chars().any(char::is_uppercase));
    let max_key_chars = entries.keys().map(|k| k.chars().count()).max().unwrap_or(0);
    Ok(TermIndex {
        lower: Searcher::build(lower)?,
        cased: Searcher::build(cased)?,
        entries,
        max_key_chars,
    })
}

impl TermIndex {
    /// An index that matches nothing, for read-only use of the annotation store.
    pub fn empty() -> TermIndex {
        TermIndex {
            lower: None,
            cased: None,
            entries: HashMap::new(),
            max_key_chars: 0,
        }
    }

    pub fn from_catalog(catalog: &VariantCatalog) -> Result<TermIndex> {
        build_index(catalog.iter())
    }

    pub fn holders(&self, key: &str) -> Option<&[KeyHolder]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Candidate concepts for a key, sorted.
    pub fn candidates(&self, key: &str) -> Vec<ConceptId> {
        self.holders(key)
            .map(|h| h.iter().map(|h| h.concept.clone()).collect())
            .unwrap_or_default()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_case_sensitive(&self, key: &str) -> bool {
        self.cased.as_ref().is_some_and(|s| s.keys.binary_search_by(|k| k.as_str().cmp(key)).is_ok())
    }

    /// Length in characters of the longest key.
    pub fn max_key_chars(&self) -> usize {
        self.max_key_chars
    }

    /// Every concept that holds at least one key.
    pub fn concepts(&self) -> BTreeSet<&ConceptId> {
        self.entries.values().flatten().map(|h| &h.concept).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    /// Character offsets into the document text, end exclusive.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub normalized_key: String,
    pub candidates: Vec<ConceptId>,
    /// Byte range of `surface` in the document text.
    #[serde(skip)]
    pub byte_range: std::ops::Range<usize>,
}

/// One grapheme-like unit: a base character and its combining marks.
struct Cluster {
    char_start: usize,
    byte_start: usize,
    byte_end: usize,
    separator: bool,
}

struct Projection {
    text: String,
    /// Cluster starting at each projection byte, `NONE` elsewhere.
    starts: Vec<u32>,
    /// Cluster ending at each projection byte, `NONE` elsewhere.
    ends: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Projection {
    fn new(capacity: usize) -> Self {
        Projection {
            text: String::with_capacity(capacity),
            starts: Vec::with_capacity(capacity + 1),
            ends: Vec::with_capacity(capacity + 1),
        }
    }

    fn push(&mut self, cluster: u32, piece: &str) {
        self.starts.push(cluster);
        self.starts.extend(std::iter::repeat_n(NONE, piece.len().saturating_sub(1)));
        self.ends.extend(std::iter::repeat_n(NONE, piece.len().saturating_sub(1)));
        self.ends.push(cluster);
        self.text.push_str(piece);
    }

    fn cluster_span(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        // `ends[i]` refers to the byte just before offset i + 1
        let first = *self.starts.get(start)?;
        let last = *self.ends.get(end.checked_sub(1)?)?;
        (first != NONE && last != NONE).then_some((first as usize, last as usize))
    }
}

fn clusters(text: &str) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::with_capacity(text.len());
    for (char_index, (byte, c)) in text.char_indices().enumerate() {
        let attaches = is_combining_mark(c) && out.last().is_some_and(|last| !last.separator);
        match out.last_mut() {
            Some(last) if attaches => last.byte_end = byte + c.len_utf8(),
            _ => out.push(Cluster {
                char_start: char_index,
                byte_start: byte,
                byte_end: byte + c.len_utf8(),
                separator: is_separator(c),
            }),
        }
    }
    out
}

fn project(text: &str, clusters: &[Cluster]) -> (Projection, Projection) {
    let mut cased = Projection::new(text.len());
    let mut lower = Projection::new(text.len());
    let mut previous_separator = false;
    let mut piece = String::new();
    for (i, cluster) in clusters.iter().enumerate() {
        let raw = &text[cluster.byte_start..cluster.byte_end];
        if cluster.separator {
            if !previous_separator {
                cased.push(i as u32, " ");
                lower.push(i as u32, " ");
            }
            previous_separator = true;
            continue;
        }
        previous_separator = false;
        piece.clear();
        if raw.is_ascii() {
            piece.push_str(raw);
        } else {
            for c in raw.nfkc() {
                push_expanded(c, &mut piece);
            }
        }
        cased.push(i as u32, &piece);
        let lowered = piece.to_lowercase();
        if lowered.is_ascii() {
            lower.push(i as u32, &lowered);
        } else {
            lower.push(i as u32, &lowered.nfkc().collect::<String>());
        }
    }
    (cased, lower)
}

/// True when a token boundary sits at byte offset `at` of `text`.
pub fn is_boundary(text: &str, at: usize) -> bool {
    let before = text[..at].chars().next_back();
    let after = text[at..].chars().next();
    match (before, after) {
        (Some(b), Some(a)) => !(is_word_char(b) && is_word_char(a)),
        _ => true,
    }
}

/// Keeps the leftmost, then longest, of overlapping matches.
fn resolve(mut found: Vec<Occurrence>) -> Vec<Occurrence> {
    found.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut out: Vec<Occurrence> = Vec::with_capacity(found.len());
    for occ in found {
        if out.last().is_none_or(|last| occ.start >= last.end) {
            out.push(occ);
        }
    }
    out
}

/// Finds all non-overlapping key occurrences in a document, sorted by start.
pub fn scan_document(index: &TermIndex, doc: &Document) -> Vec<Occurrence> {
    let text = doc.text.as_str();
    if text.is_empty() {
        return Vec::new();
    }
    let clusters = clusters(text);
    let (cased, lower) = project(text, &clusters);
    let mut windows: HashSet<(usize, usize)> = HashSet::new();
    let mut found = Vec::new();
    for (searcher, projection) in [(&index.lower, &lower), (&index.cased, &cased)] {
        let Some(searcher) = searcher else { continue };
        for hit in searcher.automaton.find_overlapping_iter(projection.text.as_str()) {
            let Some((first, last)) = projection.cluster_span(hit.start(), hit.end()) else {
                continue;
            };
            let (a, b) = (&clusters[first], &clusters[last]);
            if a.separator || b.separator || !windows.insert((first, last)) {
                continue;
            }
            if !is_boundary(text, a.byte_start) || !is_boundary(text, b.byte_end) {
                continue;
            }
            let surface = &text[a.byte_start..b.byte_end];
            let key = normalize_lossy(surface);
            let Some(holders) = index.entries.get(&key) else { continue };
            let end = clusters.get(last + 1).map_or_else(|| text.chars().count(), |c| c.char_start);
            found.push(Occurrence {
                doc_id: doc.doc_id.clone(),
                start: a.char_start,
                end,
                surface: surface.to_owned(),
                normalized_key: key,
                candidates: holders.iter().map(|h| h.concept.clone()).collect(),
                byte_range: a.byte_start..b.byte_end,
            });
        }
    }
    resolve(found)
}

/// Corpus-level found statistics; partial results merge associatively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FoundStats {
    pub documents: u64,
    pub skipped_duplicates: u64,
    pub keys: BTreeMap<String, KeyStats>,
    pub concepts: BTreeMap<ConceptId, ConceptStats>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeyStats {
    pub documents: u64,
    pub occurrences: u64,
}

/// Documents retrieved for a concept under each search mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConceptStats {
    /// Documents containing the primary name.
    pub docs_primary: u64,
    /// Documents containing any original name.
    pub docs_original: u64,
    /// Documents containing any variant.
    pub docs_any: u64,
}

const STATS_MAGIC: &str = "#semlabel-found-stats v1";

impl FoundStats {
    /// Zeroed statistics listing every key and concept of the index.
    pub fn new(index: &TermIndex) -> Self {
        FoundStats {
            keys: index.keys().map(|k| (k.to_owned(), KeyStats::default())).collect(),
            concepts: index
                .concepts()
                .into_iter()
                .map(|c| (c.clone(), ConceptStats::default()))
                .collect(),
            ..FoundStats::default()
        }
    }

    /// Statistics for a single scanned document.
    pub fn for_document(index: &TermIndex, occurrences: &[Occurrence]) -> Self {
        let mut stats = FoundStats {
            documents: 1,
            ..FoundStats::default()
        };
        let mut per_concept: BTreeMap<ConceptId, ConceptStats> = BTreeMap::new();
        for occ in occurrences {
            let entry = stats.keys.entry(occ.normalized_key.clone()).or_default();
            entry.occurrences += 1;
            if entry.documents == 1 {
                continue;
            }
            entry.documents = 1;
            for holder in index.holders(&occ.normalized_key).unwrap_or_default() {
                let c = per_concept.entry(holder.concept.clone()).or_default();
                c.docs_any = 1;
                if holder.provenance == Provenance::Original {
                    c.docs_original = 1;
                }
                if holder.primary {
                    c.docs_primary = 1;
                }
            }
        }
        stats.concepts = per_concept;
        stats
    }

    pub fn merge(&mut self, other: &FoundStats) {
        self.documents += other.documents;
        self.skipped_duplicates += other.skipped_duplicates;
        for (k, s) in &other.keys {
            let e = self.keys.entry(k.clone()).or_default();
            e.documents += s.documents;
            e.occurrences += s.occurrences;
        }
        for (c, s) in &other.concepts {
            let e = self.concepts.entry(c.clone()).or_default();
            e.docs_primary += s.docs_primary;
            e.docs_original += s.docs_original;
            e.docs_any += s.docs_any;
        }
    }

    pub fn is_found(&self, key: &str) -> bool {
        self.keys.get(key).is_some_and(|s| s.documents > 0)
    }

    /// Number of a concept's variant keys seen in at least one document.
    pub fn variants_found(&self, catalog: &VariantCatalog, concept: &ConceptId) -> usize {
        catalog
            .variants_of(concept)
            .iter()
            .filter(|v| self.is_found(&v.normalized_key))
            .count()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{STATS_MAGIC}")?;
        writeln!(out, "#documents\t{}\t{}", self.documents, self.skipped_duplicates)?;
        for (k, s) in &self.keys {
            writeln!(out, "K\t{}\t{}\t{}", tsv::escape_field(k), s.documents, s.occurrences)?;
        }
        for (c, s) in &self.concepts {
            writeln!(
                out,
                "C\t{}\t{}\t{}\t{}\t{}",
                tsv::escape_field(c.ontology()),
                tsv::escape_field(c.local_id()),
                s.docs_primary,
                s.docs_original,
                s.docs_any
            )?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(source: R) -> Result<Self> {
        let mut stats = FoundStats::default();
        let mut saw_magic = false;
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
            if line_no == 1 {
                if line != STATS_MAGIC {
                    return Err(Error::parse(1, "not a found-stats file"));
                }
                saw_magic = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let number = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| Error::parse(line_no, format!("bad count {s:?}")))
            };
            match fields.as_slice() {
                ["#documents", docs, skipped] => {
                    stats.documents = number(docs)?;
                    stats.skipped_duplicates = number(skipped)?;
                }
                ["K", key, docs, occ] => {
                    let ks = KeyStats {
                        documents: number(docs)?,
                        occurrences: number(occ)?,
                    };
                    if stats.keys.insert(tsv::unescape_field(key), ks).is_some() {
                        return Err(Error::parse(line_no, format!("key {key:?} listed twice")));
                    }
                }
                ["C", ontology, local, p, o, a] => {
                    let id = ConceptId::new(tsv::unescape_field(ontology), tsv::unescape_field(local))
                        .map_err(|e| Error::parse(line_no, e.to_string()))?;
                    let cs = ConceptStats {
                        docs_primary: number(p)?,
                        docs_original: number(o)?,
                        docs_any: number(a)?,
                    };
                    stats.concepts.insert(id, cs);
                }
                _ => return Err(Error::parse(line_no, "unrecognized found-stats record")),
            }
        }
        if !saw_magic {
            return Err(Error::parse(1, "empty found-stats file"));
        }
        Ok(stats)
    }
}

/// Parses one corpus line: `<doc_id>\t<source>\t<escaped text>`.
pub fn parse_corpus_line(line: &str, line_no: usize) -> Result<Document> {
    let mut parts = line.splitn(3, '\t');
    let (Some(id), Some(source), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::parse(line_no, "expected <doc_id>\\t<source>\\t<text>"));
    };
    let doc_id = tsv::unescape_field(id);
    if doc_id.is_empty() {
        return Err(Error::parse(line_no, "empty doc_id"));
    }
    let source = tsv::unescape_field(source);
    Ok(Document {
        doc_id,
        text: tsv::unescape_field(text),
        source: (!source.is_empty()).then_some(source),
    })
}

pub fn format_corpus_line(doc: &Document) -> String {
    format!(
        "{}\t{}\t{}",
        tsv::escape_field(&doc.doc_id),
        tsv::escape_field(doc.source.as_deref().unwrap_or("")),
        tsv::escape_field(&doc.text)
    )
}

/// Streams documents from a corpus file, skipping blank lines.
pub fn read_corpus<R: BufRead>(source: R) -> impl Iterator<Item = Result<Document>> {
    source.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::parse(i + 1, e.to_string()))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(parse_corpus_line(&l, i + 1)),
    })
}

/// `<doc_id>\t<start>\t<end>\t<surface>\t<key>\t<candidates>` with comma-joined CURIEs.
pub fn format_occurrence(occ: &Occurrence) -> String {
    let candidates: Vec<String> = occ.candidates.iter().map(|c| tsv::escape_list_item(&c.to_string(), ',')).collect();
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        tsv::escape_field(&occ.doc_id),
        occ.start,
        occ.end,
        tsv::escape_field(&occ.surface),
        tsv::escape_field(&occ.normalized_key),
        candidates.join(",")
    )
}

/// Documents scanned per parallel batch in [`scan_corpus`].
pub const SCAN_BATCH: usize = 256;

/// Scans a document stream in parallel batches.
///
/// `sink` sees every document with its occurrences in input order. Documents
/// whose id was already seen are skipped and counted. Runs on the current
/// rayon pool.
pub fn scan_corpus<I, F>(index: &TermIndex, corpus: I, mut sink: F) -> Result<FoundStats>
where
    I: IntoIterator<Item = Result<Document>>,
    F: FnMut(&Document, &[Occurrence]) -> Result<()>,
{
    let mut stats = FoundStats::new(index);
    let mut seen: HashSet<String> = HashSet::new();
    let mut batch: Vec<Document> = Vec::with_capacity(SCAN_BATCH);
    let mut corpus = corpus.into_iter();
    loop {
        batch.clear();
        for doc in corpus.by_ref() {
            let doc = doc?;
            if seen.contains(&doc.doc_id) {
                stats.skipped_duplicates += 1;
                log::warn!("skipping duplicate document {}", doc.doc_id);
                continue;
            }
            seen.insert(doc.doc_id.clone());
            batch.push(doc);
            if batch.len() == SCAN_BATCH {
                break;
            }
        }
        if batch.is_empty() {
            return Ok(stats);
        }
        let scanned: Vec<(Vec<Occurrence>, FoundStats)> = batch
            .par_iter()
            .map(|doc| {
                let occ = scan_document(index, doc);
                let partial = FoundStats::for_document(index, &occ);
                (occ, partial)
            })
            .collect();
        for (doc, (occ, partial)) in batch.iter().zip(&scanned) {
            sink(doc, occ)?;
            stats.merge(partial);
        }
    }
}
