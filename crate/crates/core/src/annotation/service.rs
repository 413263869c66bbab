use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::xml::{is_xml_illegal, ExportedDocument};
use super::{apply_decision, Action, AnnotationRecord, DecisionEvent};
use crate::error::{Error, Result};
use crate::matcher::{scan_document, Document, TermIndex};
use crate::ontology::ConceptId;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: TimeDelta) {
        *self.0.lock() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

const DOCUMENTS_FILE: &str = "documents.jsonl";
const EVENTS_FILE: &str = "events.jsonl";

/// A submitted document as persisted, with its automatic annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredDocument {
    doc_id: String,
    text: String,
    created_at: DateTime<Utc>,
    annotations: Vec<AnnotationRecord>,
}

#[derive(Debug)]
struct DocState {
    stored: StoredDocument,
    current: Vec<AnnotationRecord>,
    updated_at: DateTime<Utc>,
}

/// Summary of one stored document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub annotations: usize,
    pub updated_at: DateTime<Utc>,
}

struct EventLog {
    events: Vec<DecisionEvent>,
    writer: Option<BufWriter<File>>,
    last_timestamp: Option<DateTime<Utc>>,
}

struct Counters {
    next_annotation: u64,
    next_document: u64,
    documents_writer: Option<BufWriter<File>>,
}

/// Stores documents and their annotations, records decisions, exports XML.
///
/// Reads run concurrently. Decisions on one document are serialized, and
/// every event is appended to the log before the new state becomes visible.
pub struct AnnotationService {
    index: RwLock<Arc<TermIndex>>,
    clock: Box<dyn Clock>,
    documents: RwLock<BTreeMap<String, Arc<Mutex<DocState>>>>,
    annotation_docs: RwLock<HashMap<String, String>>,
    log: Mutex<EventLog>,
    counters: Mutex<Counters>,
    data_dir: Option<PathBuf>,
}

impl std::fmt::Debug for AnnotationService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationService").field("data_dir", &self.data_dir).finish_non_exhaustive()
    }
}

fn parse_counter(id: &str, prefix: char) -> Option<u64> {
    id.strip_prefix(prefix)?.parse().ok()
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, format!("{}: {e}", path.display())))?;
        out.push(value);
    }
    Ok(out)
}

fn append_writer(path: &Path) -> Result<BufWriter<File>> {
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn write_line<T: Serialize>(writer: &mut BufWriter<File>, value: &T, path: &Path) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Validation(e.to_string()))?;
    writeln!(writer, "{line}").and_then(|_| writer.flush()).map_err(|e| Error::io(path, e))
}

/// Restores byte offsets, which are not persisted.
fn restore_byte_ranges(text: &str, records: &mut [AnnotationRecord]) -> Result<()> {
    let offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    for r in records {
        let occ = &mut r.occurrence;
        let (Some(&start), Some(&end)) = (offsets.get(occ.start), offsets.get(occ.end)) else {
            return Err(Error::Consistency(format!("{} lies outside its document", r.annotation_id)));
        };
        if text[start..end] != occ.surface {
            return Err(Error::Consistency(format!("{} does not match its document text", r.annotation_id)));
        }
        occ.byte_range = start..end;
    }
    Ok(())
}

impl AnnotationService {
    /// A service that keeps everything in memory.
    pub fn in_memory(index: Arc<TermIndex>, clock: Box<dyn Clock>) -> Self {
        AnnotationService {
            index: RwLock::new(index),
            clock,
            documents: RwLock::default(),
            annotation_docs: RwLock::default(),
            log: Mutex::new(EventLog {
                events: Vec::new(),
                writer: None,
                last_timestamp: None,
            }),
            counters: Mutex::new(Counters {
                next_annotation: 1,
                next_document: 1,
                documents_writer: None,
            }),
            data_dir: None,
        }
    }

    /// Opens (or creates) a persistent store, rebuilding state by replaying its event log.
    pub fn open(dir: &Path, index: Arc<TermIndex>, clock: Box<dyn Clock>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let docs_path = dir.join(DOCUMENTS_FILE);
        let events_path = dir.join(EVENTS_FILE);
        let stored: Vec<StoredDocument> = read_jsonl(&docs_path)?;
        let events: Vec<DecisionEvent> = read_jsonl(&events_path)?;

        let mut service = AnnotationService::in_memory(index, clock);
        {
            let mut documents = service.documents.write();
            let mut annotation_docs = service.annotation_docs.write();
            let counters = service.counters.get_mut();
            for mut doc in stored {
                restore_byte_ranges(&doc.text, &mut doc.annotations)?;
                for r in &doc.annotations {
                    annotation_docs.insert(r.annotation_id.clone(), doc.doc_id.clone());
                    if let Some(n) = parse_counter(&r.annotation_id, 'a') {
                        counters.next_annotation = counters.next_annotation.max(n + 1);
                    }
                }
                if let Some(n) = parse_counter(&doc.doc_id, 'd') {
                    counters.next_document = counters.next_document.max(n + 1);
                }
                let state = DocState {
                    current: doc.annotations.clone(),
                    updated_at: doc.created_at,
                    stored: doc,
                };
                if documents.insert(state.stored.doc_id.clone(), Arc::new(Mutex::new(state))).is_some() {
                    return Err(Error::Consistency("document stored twice".into()));
                }
            }
            for e in &events {
                let doc_id = annotation_docs
                    .get(&e.annotation_id)
                    .ok_or_else(|| Error::Consistency(format!("event {} names unknown annotation", e.event_id)))?;
                let mut state = documents[doc_id].lock();
                let position = state
                    .current
                    .iter()
                    .position(|r| r.annotation_id == e.annotation_id)
                    .expect("annotation belongs to its document");
                apply_decision(&mut state.current, position, e.action, e.target.as_ref(), e.timestamp)?;
                state.updated_at = state.updated_at.max(e.timestamp);
            }
            counters.documents_writer = Some(append_writer(&docs_path)?);
        }
        let log = service.log.get_mut();
        log.last_timestamp = events.iter().map(|e| e.timestamp).max();
        log.events = events;
        log.writer = Some(append_writer(&events_path)?);
        service.data_dir = Some(dir.to_owned());
        Ok(service)
    }

    /// Replaces the term index; scans already running finish on the old one.
    pub fn swap_index(&self, index: Arc<TermIndex>) {
        *self.index.write() = index;
    }

    pub fn index(&self) -> Arc<TermIndex> {
        self.index.read().clone()
    }

    /// Stores and auto-annotates a document.
    pub fn submit_document(&self, text: &str, doc_id: Option<&str>) -> Result<(String, Vec<AnnotationRecord>)> {
        if text.is_empty() {
            return Err(Error::Validation("document text is empty".into()));
        }
        if let Some(c) = text.chars().find(|c| is_xml_illegal(*c)) {
            return Err(Error::Validation(format!("document text contains the control character U+{:04X}", c as u32)));
        }
        if doc_id.is_some_and(|id| id.trim().is_empty()) {
            return Err(Error::Validation("doc_id is empty".into()));
        }
        let index = self.index();
        let mut counters = self.counters.lock();
        let mut documents = self.documents.write();
        let handle = match doc_id {
            Some(id) if documents.contains_key(id) => {
                return Err(Error::Conflict(format!("document {id} already exists")))
            }
            Some(id) => id.to_owned(),
            None => loop {
                let candidate = format!("d{}", counters.next_document);
                counters.next_document += 1;
                if !documents.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        let created_at = self.clock.now();
        let occurrences = scan_document(&index, &Document::new(handle.clone(), text));
        let annotations: Vec<AnnotationRecord> = occurrences
            .into_iter()
            .map(|occ| {
                let id = format!("a{}", counters.next_annotation);
                counters.next_annotation += 1;
                AnnotationRecord::auto(id, occ, created_at)
            })
            .collect();
        let stored = StoredDocument {
            doc_id: handle.clone(),
            text: text.to_owned(),
            created_at,
            annotations: annotations.clone(),
        };
        if let (Some(writer), Some(dir)) = (counters.documents_writer.as_mut(), &self.data_dir) {
            write_line(writer, &stored, &dir.join(DOCUMENTS_FILE))?;
        }
        let mut annotation_docs = self.annotation_docs.write();
        for r in &annotations {
            annotation_docs.insert(r.annotation_id.clone(), handle.clone());
        }
        documents.insert(
            handle.clone(),
            Arc::new(Mutex::new(DocState {
                current: annotations.clone(),
                updated_at: created_at,
                stored,
            })),
        );
        Ok((handle, annotations))
    }

    fn document(&self, doc_id: &str) -> Result<Arc<Mutex<DocState>>> {
        self.documents
            .read()
            .get(doc_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no document {doc_id}")))
    }

    pub fn annotations(&self, doc_id: &str) -> Result<Vec<AnnotationRecord>> {
        Ok(self.document(doc_id)?.lock().current.clone())
    }

    /// The automatic annotations a document started with.
    pub fn initial_annotations(&self, doc_id: &str) -> Result<Vec<AnnotationRecord>> {
        Ok(self.document(doc_id)?.lock().stored.annotations.clone())
    }

    pub fn document_text(&self, doc_id: &str) -> Result<String> {
        Ok(self.document(doc_id)?.lock().stored.text.clone())
    }

    pub fn documents(&self) -> Vec<DocumentSummary> {
        self.documents
            .read()
            .values()
            .map(|d| {
                let d = d.lock();
                DocumentSummary {
                    doc_id: d.stored.doc_id.clone(),
                    annotations: d.current.len(),
                    updated_at: d.updated_at,
                }
            })
            .collect()
    }

    /// Applies a decision and logs it. Returns the decided annotation first,
    /// followed by any siblings a `DeleteAllSame` changed.
    pub fn record_decision(
        &self,
        annotation_id: &str,
        action: Action,
        target: Option<&ConceptId>,
        actor: &str,
    ) -> Result<Vec<AnnotationRecord>> {
        let doc_id = self
            .annotation_docs
            .read()
            .get(annotation_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no annotation {annotation_id}")))?;
        let doc = self.document(&doc_id)?;
        let mut state = doc.lock();
        let position = state
            .current
            .iter()
            .position(|r| r.annotation_id == annotation_id)
            .expect("annotation belongs to its document");

        let mut log = self.log.lock();
        let now = self.clock.now();
        // strictly increasing, so an inclusive `since` can address one event
        let timestamp = match log.last_timestamp {
            Some(last) if now <= last => last + TimeDelta::microseconds(1),
            _ => now,
        };
        let mut next = state.current.clone();
        let changed = apply_decision(&mut next, position, action, target, timestamp)?;
        let event = DecisionEvent {
            event_id: log.events.len() as u64 + 1,
            annotation_id: annotation_id.to_owned(),
            action,
            target: target.cloned(),
            actor: actor.to_owned(),
            timestamp,
        };
        if let (Some(writer), Some(dir)) = (log.writer.as_mut(), &self.data_dir) {
            write_line(writer, &event, &dir.join(EVENTS_FILE))?;
        }
        log.events.push(event);
        log.last_timestamp = Some(timestamp);
        drop(log);

        state.current = next;
        state.updated_at = timestamp;
        Ok(changed.into_iter().map(|i| state.current[i].clone()).collect())
    }

    /// Decision events in log order, from `since` inclusive.
    pub fn decision_log(&self, since: Option<DateTime<Utc>>) -> Vec<DecisionEvent> {
        self.log
            .lock()
            .events
            .iter()
            .filter(|e| since.is_none_or(|s| e.timestamp >= s))
            .cloned()
            .collect()
    }

    /// Events concerning one document, in log order.
    pub fn document_events(&self, doc_id: &str) -> Result<Vec<DecisionEvent>> {
        let doc = self.document(doc_id)?;
        let ids: std::collections::HashSet<String> =
            doc.lock().stored.annotations.iter().map(|r| r.annotation_id.clone()).collect();
        Ok(self.decision_log(None).into_iter().filter(|e| ids.contains(&e.annotation_id)).collect())
    }

    pub fn export_model(&self, doc_id: &str) -> Result<ExportedDocument> {
        let doc = self.document(doc_id)?;
        let state = doc.lock();
        Ok(ExportedDocument::from_records(
            doc_id,
            state.updated_at.to_rfc3339_opts(SecondsFormat::Micros, true),
            &state.stored.text,
            &state.current,
        ))
    }

    /// Inline XML for a document. Identical state exports identical bytes.
    pub fn export_xml(&self, doc_id: &str) -> Result<String> {
        Ok(self.export_model(doc_id)?.to_xml())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{replay_document, CandidateState, SpanState};
    use crate::matcher::build_index;
    use crate::normalize::normalize_lossy;
    use crate::variants::{Provenance, TermVariant};

    fn index() -> Arc<TermIndex> {
        let spec = [
            ("ICD10", "X47", "carbon monoxide"),
            ("ICD10", "X67", "carbon monoxide"),
            ("ICD10", "Y17", "carbon monoxide"),
            ("MeSH", "D002248", "carbon monoxide"),
            ("ChEBI", "17245", "carbon monoxide"),
            ("ChEBI", "17245", "CO"),
            ("DrugBank", "DB11588", "carbon monoxide"),
            ("MeSH", "D012701", "serotonin"),
            ("ChEBI", "28790", "serotonin"),
            ("GO", "0016210", "CH"),
            ("ChEBI", "29432", "CH"),
        ];
        let variants: Vec<TermVariant> = spec
            .iter()
            .map(|(o, i, s)| TermVariant {
                surface: s.to_string(),
                normalized_key: normalize_lossy(s),
                concept: ConceptId::new(*o, *i).unwrap(),
                provenance: Provenance::Original,
                rule_trace: vec![],
            })
            .collect();
        Arc::new(build_index(&variants).unwrap())
    }

    fn service() -> AnnotationService {
        AnnotationService::in_memory(index(), Box::new(ManualClock::new(DateTime::UNIX_EPOCH)))
    }

    fn cid(s: &str) -> ConceptId {
        s.parse().unwrap()
    }

    #[test]
    fn submit_creates_auto_records() {
        let s = service();
        let (handle, recs) = s.submit_document("exposure to carbon monoxide", None).unwrap();
        assert_eq!(handle, "d1");
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].candidate_states.len(), 6);
        assert!(recs[0].candidate_states.values().all(|c| *c == CandidateState::Auto));
        let (_, recs) = s.submit_document("serotonin levels", Some("10.1/x")).unwrap();
        assert_eq!(recs[0].candidate_states.len(), 2);
        let (_, recs) = s.submit_document("nothing here", None).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn submit_errors() {
        let s = service();
        assert!(matches!(s.submit_document("", None), Err(Error::Validation(_))));
        assert!(matches!(s.submit_document("bell\u{7}", None), Err(Error::Validation(_))));
        s.submit_document("x", Some("doc")).unwrap();
        assert!(matches!(s.submit_document("y", Some("doc")), Err(Error::Conflict(_))));
        // generated handles skip ids taken by callers
        s.submit_document("x", Some("d1")).unwrap();
        assert_eq!(s.submit_document("x", None).unwrap().0, "d2");
    }

    #[test]
    fn export_after_confirm_and_reject() {
        let s = service();
        let (doc, recs) = s.submit_document("CO poisoning", None).unwrap();
        s.record_decision(&recs[0].annotation_id, Action::ConfirmCandidate, Some(&cid("ChEBI:17245")), "ann").unwrap();
        let xml = s.export_xml(&doc).unwrap();
        assert!(xml.contains("<term id=\"a1\" refs=\"ChEBI:17245\" status=\"confirmed\">CO</term> poisoning"), "{xml}");

        let (doc, recs) = s.submit_document("carbon monoxide", None).unwrap();
        let id = &recs[0].annotation_id;
        s.record_decision(id, Action::ConfirmCandidate, Some(&cid("ChEBI:17245")), "ann").unwrap();
        for other in ["ICD10:X47", "ICD10:X67", "ICD10:Y17", "MeSH:D002248", "DrugBank:DB11588"] {
            s.record_decision(id, Action::RejectCandidate, Some(&cid(other)), "ann").unwrap();
        }
        let model = s.export_model(&doc).unwrap();
        assert_eq!(model.terms[0].refs, vec!["ChEBI:17245"]);
        assert_eq!(model.terms[0].rejected.len(), 5);
    }

    #[test]
    fn delete_all_same_and_log() {
        let s = service();
        let (doc, recs) = s.submit_document("CH, CH and CH with CO", None).unwrap();
        assert_eq!(recs.len(), 4);
        let changed = s.record_decision(&recs[1].annotation_id, Action::DeleteAllSame, None, "ann").unwrap();
        assert_eq!(changed.len(), 3);
        assert_eq!(changed[0].annotation_id, recs[1].annotation_id);
        let xml = s.export_xml(&doc).unwrap();
        assert_eq!(xml.matches("<term").count(), 1);
        assert!(xml.contains("CH, CH and CH with <term"));
        assert_eq!(s.decision_log(None).len(), 1);
        assert!(matches!(
            s.record_decision(&recs[0].annotation_id, Action::MarkNotBio, None, "ann"),
            Err(Error::Conflict(_))
        ));
        assert!(matches!(s.record_decision("a99", Action::MarkNotBio, None, "ann"), Err(Error::NotFound(_))));
        assert!(matches!(s.export_xml("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn since_is_inclusive_and_timestamps_increase() {
        let s = service();
        let (_, recs) = s.submit_document("CO CO CO", None).unwrap();
        for r in &recs {
            s.record_decision(&r.annotation_id, Action::ConfirmCandidate, Some(&cid("ChEBI:17245")), "x").unwrap();
        }
        let log = s.decision_log(None);
        assert_eq!(log.len(), 3);
        assert!(log.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert_eq!(s.decision_log(Some(log[2].timestamp)).len(), 1);
    }

    #[test]
    fn persistence_replays_to_the_same_state() {
        let dir = tempfile::tempdir().unwrap();
        let clock = || Box::new(ManualClock::new(DateTime::UNIX_EPOCH));
        let (doc, xml, states) = {
            let s = AnnotationService::open(dir.path(), index(), clock()).unwrap();
            let (doc, recs) = s.submit_document("CO and carbon monoxide, CH", None).unwrap();
            s.record_decision(&recs[0].annotation_id, Action::ConfirmCandidate, Some(&cid("ChEBI:17245")), "a").unwrap();
            s.record_decision(&recs[1].annotation_id, Action::RejectCandidate, Some(&cid("ICD10:X47")), "a").unwrap();
            s.record_decision(&recs[2].annotation_id, Action::MarkNotBio, None, "a").unwrap();
            let (xml, states) = (s.export_xml(&doc).unwrap(), s.annotations(&doc).unwrap());
            (doc, xml, states)
        };
        let s = AnnotationService::open(dir.path(), index(), clock()).unwrap();
        assert_eq!(s.annotations(&doc).unwrap(), states);
        assert_eq!(s.export_xml(&doc).unwrap(), xml);
        assert_eq!(states[2].span_state, SpanState::NotBio);
        let replayed = replay_document(&s.initial_annotations(&doc).unwrap(), &s.document_events(&doc).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&replayed).unwrap(), serde_json::to_string(&states).unwrap());
        // counters continue after reopening
        assert_eq!(s.submit_document("CO", None).unwrap().1[0].annotation_id, "a4");
    }
}
