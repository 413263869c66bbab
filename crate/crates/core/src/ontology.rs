//! Concept model, normalized-format ingestion and the immutable ontology snapshot.
//!
//! Records are one per line:
//!
//! ```text
//! <ontology>\t<local_id>\t<primary_name>\t<syn1>|<syn2>|...
//! ```
//!
//! Lines starting with `#` are comments. Tabs and pipes inside names are
//! escaped as `\t` and `\|`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tsv;

/// Compact `Ontology:LocalId` identifier of one ontology object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId {
    ontology: String,
    local_id: String,
}

impl ConceptId {
    pub fn new(ontology: impl Into<String>, local_id: impl Into<String>) -> Result<Self> {
        let ontology = ontology.into();
        let local_id = local_id.into();
        if ontology.is_empty() || ontology.contains([':', '\t', ' ']) {
            return Err(Error::Validation(format!(
                "ontology name {ontology:?} must be non-empty without ':' or whitespace"
            )));
        }
        if local_id.trim().is_empty() {
            return Err(Error::Validation(format!(
                "empty local id in ontology {ontology}"
            )));
        }
        Ok(ConceptId { ontology, local_id })
    }

    pub fn ontology(&self) -> &str {
        &self.ontology
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ontology, self.local_id)
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(curie: &str) -> Result<Self> {
        let (ontology, local_id) = curie
            .split_once(':')
            .ok_or_else(|| Error::Validation(format!("{curie:?} is not an Ontology:LocalId pair")))?;
        ConceptId::new(ontology, local_id)
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// One ontology object with its original names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub id: ConceptId,
    pub primary_name: String,
    /// Deduplicated, never containing `primary_name` itself.
    pub synonyms: Vec<String>,
}

impl Concept {
    /// Builds a concept, trimming names and enforcing the synonym invariants.
    pub fn new(id: ConceptId, primary_name: &str, synonyms: impl IntoIterator<Item = String>) -> Result<Self> {
        let primary_name = primary_name.trim().to_owned();
        if primary_name.is_empty() {
            return Err(Error::Validation(format!("{id} has an empty primary name")));
        }
        let mut seen = BTreeSet::new();
        seen.insert(primary_name.clone());
        let synonyms = synonyms
            .into_iter()
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty() && seen.insert(s.clone()))
            .collect();
        Ok(Concept {
            id,
            primary_name,
            synonyms,
        })
    }

    /// Primary name followed by synonyms, in stored order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary_name.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }

    /// `1 + |synonyms|`; the per-concept contribution to the synonym statistics.
    pub fn name_count(&self) -> usize {
        1 + self.synonyms.len()
    }
}

/// Input format tag for [`ingest_ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Normalized,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(tag: &str) -> Result<Self> {
        match tag {
            "normalized" => Ok(Format::Normalized),
            other => Err(Error::Config(format!("unsupported ontology format {other:?}"))),
        }
    }
}

/// Reads every record of a normalized ontology dump.
pub fn ingest_ontology<R: BufRead>(mut source: R, format: Format) -> Result<Vec<Concept>> {
    let Format::Normalized = format;
    let mut concepts = Vec::new();
    let mut seen = BTreeSet::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let read = source
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::parse(line_no + 1, e.to_string()))?;
        if read == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|_| Error::parse(line_no, "invalid UTF-8"))?
            .trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let concept = parse_record(line, line_no)?;
        if !seen.insert(concept.id.clone()) {
            return Err(Error::Duplicate(concept.id.to_string()));
        }
        concepts.push(concept);
    }
    Ok(concepts)
}

fn parse_record(line: &str, line_no: usize) -> Result<Concept> {
    let fields: Vec<&str> = line.split('\t').collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(Error::parse(
            line_no,
            format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
        ));
    }
    let ontology = fields[0].trim();
    let raw_id = tsv::unescape_field(fields[1]);
    let local_id = strip_ontology_prefix(ontology, raw_id.trim());
    let id = ConceptId::new(ontology, local_id).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let primary = tsv::unescape_field(fields[2]);
    let synonyms = match fields.get(3) {
        Some(raw) if !raw.trim().is_empty() => tsv::split_list(raw, '|'),
        _ => Vec::new(),
    };
    Concept::new(id, &primary, synonyms)
}

/// `CHEBI:17245` under ontology `ChEBI` is stored as local id `17245`.
fn strip_ontology_prefix<'a>(ontology: &str, local_id: &'a str) -> &'a str {
    match local_id.split_once(':') {
        Some((prefix, rest)) if prefix.eq_ignore_ascii_case(ontology) && !rest.is_empty() => rest,
        _ => local_id,
    }
}

/// Writes one concept in the normalized format (no trailing newline).
pub fn format_record(concept: &Concept) -> String {
    let mut line = format!(
        "{}\t{}\t{}",
        concept.id.ontology(),
        tsv::escape_field(concept.id.local_id()),
        tsv::escape_list_item(&concept.primary_name, '|'),
    );
    if !concept.synonyms.is_empty() {
        line.push('\t');
        let synonyms: Vec<String> = concept
            .synonyms
            .iter()
            .map(|s| tsv::escape_list_item(s, '|'))
            .collect();
        line.push_str(&synonyms.join("|"));
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyDescriptor {
    pub name: String,
    /// Source files the ontology was read from, comma-joined.
    pub source: String,
    pub record_count: usize,
}

/// Immutable set of concepts from one or more ontologies.
#[derive(Debug, Clone)]
pub struct OntologySnapshot {
    ontologies: Vec<OntologyDescriptor>,
    concepts: BTreeMap<ConceptId, Concept>,
    created_at: DateTime<Utc>,
}

impl PartialEq for OntologySnapshot {
    // creation time is bookkeeping, not content
    fn eq(&self, other: &Self) -> bool {
        self.ontologies == other.ontologies && self.concepts == other.concepts
    }
}

impl OntologySnapshot {
    pub fn ontologies(&self) -> &[OntologyDescriptor] {
        &self.ontologies
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn get(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    /// Concepts ordered by identifier.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concepts_of<'a>(&'a self, ontology: &'a str) -> impl Iterator<Item = &'a Concept> + 'a {
        self.concepts.values().filter(move |c| c.id.ontology() == ontology)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Serializes the snapshot: header lines, then records ordered by id.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#!semlabel-snapshot\t1")?;
        writeln!(
            out,
            "#!created_at\t{}",
            self.created_at.to_rfc3339_opts(SecondsFormat::Micros, true)
        )?;
        for d in &self.ontologies {
            writeln!(
                out,
                "#!ontology\t{}\t{}\t{}",
                d.name,
                tsv::escape_field(&d.source),
                d.record_count
            )?;
        }
        for concept in self.concepts.values() {
            writeln!(out, "{}", format_record(concept))?;
        }
        Ok(())
    }

    /// Reads a file written by [`OntologySnapshot::write_to`], checking the declared counts.
    pub fn read_from<R: BufRead>(source: R) -> Result<Self> {
        let mut text = String::new();
        let mut source = source;
        source
            .read_to_string(&mut text)
            .map_err(|e| Error::parse(0, format!("snapshot is not UTF-8: {e}")))?;
        let mut declared = Vec::new();
        let mut created_at = None;
        for (i, line) in text.lines().enumerate() {
            let Some(header) = line.strip_prefix("#!") else { continue };
            let fields: Vec<&str> = header.split('\t').collect();
            match fields.as_slice() {
                ["semlabel-snapshot", "1"] => {}
                ["created_at", ts] => {
                    let parsed = DateTime::parse_from_rfc3339(ts)
                        .map_err(|e| Error::parse(i + 1, e.to_string()))?;
                    created_at = Some(parsed.with_timezone(&Utc));
                }
                ["ontology", name, src, count] => {
                    let record_count = count
                        .parse()
                        .map_err(|_| Error::parse(i + 1, format!("bad record count {count:?}")))?;
                    declared.push(OntologyDescriptor {
                        name: name.to_string(),
                        source: tsv::unescape_field(src),
                        record_count,
                    });
                }
                _ => return Err(Error::parse(i + 1, format!("unknown header {header:?}"))),
            }
        }
        let concepts = ingest_ontology(text.as_bytes(), Format::Normalized)?;
        let snapshot = OntologySnapshot {
            ontologies: declared,
            concepts: concepts.into_iter().map(|c| (c.id.clone(), c)).collect(),
            created_at: created_at.unwrap_or_else(Utc::now),
        };
        snapshot.check_counts()?;
        Ok(snapshot)
    }

    fn check_counts(&self) -> Result<()> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in self.concepts.keys() {
            *counts.entry(id.ontology()).or_default() += 1;
        }
        for d in &self.ontologies {
            let stored = counts.remove(d.name.as_str()).unwrap_or(0);
            if stored != d.record_count {
                return Err(Error::Consistency(format!(
                    "ontology {} declares {} records but holds {stored}",
                    d.name, d.record_count
                )));
            }
        }
        if let Some((name, _)) = counts.into_iter().next() {
            return Err(Error::Consistency(format!("ontology {name} is not declared")));
        }
        Ok(())
    }
}

/// Single-writer builder; `build` freezes the result.
#[derive(Debug, Default)]
pub struct SnapshotBuilder {
    concepts: BTreeMap<ConceptId, Concept>,
    sources: BTreeMap<String, Vec<String>>,
}

impl SnapshotBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the concepts read from one source file.
    pub fn add_source(&mut self, source: &str, concepts: Vec<Concept>) -> Result<&mut Self> {
        for concept in concepts {
            let ontology = concept.id.ontology().to_owned();
            let paths = self.sources.entry(ontology).or_default();
            if !paths.iter().any(|p| p == source) {
                paths.push(source.to_owned());
            }
            if self.concepts.contains_key(&concept.id) {
                return Err(Error::Duplicate(concept.id.to_string()));
            }
            self.concepts.insert(concept.id.clone(), concept);
        }
        Ok(self)
    }

    pub fn build(self, created_at: DateTime<Utc>) -> OntologySnapshot {
        let ontologies = self
            .sources
            .into_iter()
            .map(|(name, paths)| {
                let record_count = self.concepts.keys().filter(|id| id.ontology() == name).count();
                OntologyDescriptor {
                    name,
                    source: paths.join(","),
                    record_count,
                }
            })
            .collect();
        OntologySnapshot {
            ontologies,
            concepts: self.concepts,
            created_at,
        }
    }
}
