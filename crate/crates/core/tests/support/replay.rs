//! Random decision sessions over a few fixture documents.
//!
//! After each session the current state must equal a fresh fold of the
//! event log, a reopened persistent store must agree byte for byte, and every
//! XML export must survive a parse and re-export unchanged.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, TimeDelta};
use proptest::prelude::*;

use semlabel_core::annotation::{
    parse_export, replay_document, Action, AnnotationRecord, AnnotationService, ManualClock,
};
use semlabel_core::matcher::TermIndex;
use semlabel_core::ontology::{Concept, SnapshotBuilder};
use semlabel_core::variants::{RuleSet, VariantCatalog};
use semlabel_core::{ConceptId, Error};

pub const DOCUMENTS: [&str; 4] = [
    "Carbon monoxide (CO) poisoning & CH radicals. CH binds CH < IMP > helium.",
    "TNF α and TNF-alpha induce CAT; the cat sat.\r\nCO2 is not CO. Carbon monoxide again.",
    "IMP, IMP and inosine monophosphate: \"quoted\" <tag> &amp; tumour necrosis factor alpha.",
    "Nothing to see here, only prose with a stray é and a tab\tinside.",
];

fn concept(o: &str, id: &str, primary: &str, synonyms: &[&str]) -> Concept {
    Concept::new(ConceptId::new(o, id).unwrap(), primary, synonyms.iter().map(|s| s.to_string())).unwrap()
}

pub fn fixture_index() -> Arc<TermIndex> {
    let mut b = SnapshotBuilder::new();
    b.add_source(
        "fixture",
        vec![
            concept("ICD-10", "X47", "Accidental poisoning by other gases", &["carbon monoxide", "helium"]),
            concept("MeSH", "D002248", "Carbon Monoxide", &[]),
            concept("ChEBI", "17245", "carbon monoxide", &["CO"]),
            concept("DrugBank", "DB11588", "Carbon monoxide", &["CO", "helium"]),
            concept("GO", "0016210", "naringenin-chalcone synthase activity", &["CH"]),
            concept("ChEBI", "29432", "methanylylidene group", &["CH"]),
            concept("ChEBI", "17202", "IMP", &[]),
            concept("MeSH", "D007291", "Inosine Monophosphate", &["IMP"]),
            concept("Uniprot", "P01375", "Tumor necrosis factor", &["TNF alpha"]),
            concept("Uniprot", "P04040", "Catalase", &["CAT"]),
        ],
    )
    .unwrap();
    let snapshot = b.build(DateTime::UNIX_EPOCH);
    let catalog = VariantCatalog::generate(&snapshot, &RuleSet::standard(), 200).unwrap();
    Arc::new(TermIndex::from_catalog(&catalog).unwrap())
}

#[derive(Debug, Clone)]
pub struct Step {
    pub doc: usize,
    pub annotation: usize,
    pub action: Action,
    pub target: usize,
    /// Send a target where none belongs, or omit one where it is required.
    pub malformed: bool,
    pub advance_micros: i64,
}

pub fn session(max_steps: usize) -> impl Strategy<Value = Vec<Step>> {
    let action = prop_oneof![
        3 => Just(Action::ConfirmCandidate),
        3 => Just(Action::RejectCandidate),
        1 => Just(Action::MarkNotBio),
        1 => Just(Action::DeleteAllSame),
    ];
    let step = (0..DOCUMENTS.len(), any::<usize>(), action, any::<usize>(), prop::bool::weighted(0.1), 0i64..3)
        .prop_map(|(doc, annotation, action, target, malformed, advance_micros)| Step {
            doc,
            annotation,
            action,
            target,
            malformed,
            advance_micros,
        });
    prop::collection::vec(step, 0..=max_steps)
}

fn json(records: &[AnnotationRecord]) -> String {
    serde_json::to_string(records).unwrap()
}

/// Strips markup and resolves the five predefined entities and character references.
pub fn strip_tags(xml: &str) -> String {
    let body = xml.split_once("<text>").map_or("", |(_, b)| b);
    let body = body.rsplit_once("</text>").map_or("", |(b, _)| b);
    let mut text = String::new();
    let mut in_tag = false;
    for c in body.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            c if !in_tag => text.push(c),
            _ => {}
        }
    }
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#13;", "\r")
        .replace("&#9;", "\t")
        .replace("&#10;", "\n")
        .replace("&amp;", "&")
}

fn check_exports(service: &AnnotationService, ids: &[String]) -> Result<(), String> {
    for (id, text) in ids.iter().zip(DOCUMENTS) {
        let xml = service.export_xml(id).map_err(|e| e.to_string())?;
        let parsed = parse_export(&xml).map_err(|e| format!("{e} in {xml}"))?;
        if parsed.to_xml() != xml {
            return Err(format!("re-export differs for {id}"));
        }
        if parsed != service.export_model(id).map_err(|e| e.to_string())? {
            return Err(format!("parsed export of {id} differs from its model"));
        }
        if parsed.text != text || strip_tags(&xml) != text {
            return Err(format!("stripping tags from {id} does not give back its text"));
        }
    }
    Ok(())
}

/// Plays `steps` against a fresh service and checks every invariant. With
/// `dir`, the store is persistent and is reopened at the end.
pub fn check_session(index: &Arc<TermIndex>, steps: &[Step], dir: Option<&Path>) -> Result<usize, String> {
    let clock = Arc::new(ManualClock::new(DateTime::UNIX_EPOCH));
    let service = match dir {
        Some(d) => AnnotationService::open(d, index.clone(), Box::new(SharedClock(clock.clone()))),
        None => Ok(AnnotationService::in_memory(index.clone(), Box::new(SharedClock(clock.clone())))),
    }
    .map_err(|e| e.to_string())?;
    let mut ids = Vec::new();
    for (i, text) in DOCUMENTS.iter().enumerate() {
        let (id, _) = service.submit_document(text, Some(&format!("doc{i}"))).map_err(|e| e.to_string())?;
        ids.push(id);
    }

    let mut accepted = 0;
    for step in steps {
        clock.advance(TimeDelta::microseconds(step.advance_micros));
        let doc = &ids[step.doc];
        let before = service.annotations(doc).map_err(|e| e.to_string())?;
        if before.is_empty() {
            continue;
        }
        let record = &before[step.annotation % before.len()];
        let candidates: Vec<&ConceptId> = record.candidate_states.keys().collect();
        let needs_target = matches!(step.action, Action::ConfirmCandidate | Action::RejectCandidate);
        let target = match (needs_target, step.malformed) {
            (true, false) | (false, true) => Some(candidates[step.target % candidates.len()]),
            _ => None,
        };
        match service.record_decision(&record.annotation_id, step.action, target, "tester") {
            Ok(changed) => {
                accepted += 1;
                if step.malformed {
                    return Err(format!("malformed {:?} was accepted", step.action));
                }
                if changed.first().map(|r| &r.annotation_id) != Some(&record.annotation_id) {
                    return Err("decided annotation is not reported first".into());
                }
            }
            Err(Error::Validation(_) | Error::Conflict(_))
                if service.annotations(doc).map_err(|e| e.to_string())? != before =>
            {
                return Err("a refused decision changed the document".into())
            }
            Err(Error::Validation(_)) if step.malformed => {}
            Err(Error::Conflict(_)) => {}
            Err(e) => return Err(format!("{:?} failed: {e}", step.action)),
        }
    }

    let mut states = Vec::new();
    for id in &ids {
        let current = service.annotations(id).map_err(|e| e.to_string())?;
        let initial = service.initial_annotations(id).map_err(|e| e.to_string())?;
        let events = service.document_events(id).map_err(|e| e.to_string())?;
        let replayed = replay_document(&initial, &events).map_err(|e| e.to_string())?;
        if json(&replayed) != json(&current) {
            return Err(format!("replaying {} events of {id} does not reproduce its state", events.len()));
        }
        states.push(json(&current));
    }
    check_exports(&service, &ids)?;
    let exports: Vec<String> = ids.iter().map(|id| service.export_xml(id).unwrap()).collect();

    if let Some(d) = dir {
        drop(service);
        let reopened = AnnotationService::open(d, index.clone(), Box::new(SharedClock(clock.clone())))
            .map_err(|e| e.to_string())?;
        for ((id, state), xml) in ids.iter().zip(&states).zip(&exports) {
            let again = reopened.annotations(id).map_err(|e| e.to_string())?;
            if &json(&again) != state {
                return Err(format!("reopened store disagrees on {id}"));
            }
            if &reopened.export_xml(id).map_err(|e| e.to_string())? != xml {
                return Err(format!("reopened store exports {id} differently"));
            }
        }
    }
    Ok(accepted)
}

/// Lets the test keep advancing a clock owned by the service.
struct SharedClock(Arc<ManualClock>);

impl semlabel_core::annotation::Clock for SharedClock {
    fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.0.now()
    }
}
