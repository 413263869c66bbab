//! Human validation of automatic annotations.
//!
//! Each occurrence found by the matcher becomes an annotation whose
//! candidates all start out `Auto`. Decisions move candidates to `Confirmed`
//! or `Rejected`, or mark the whole span as not a biomedical term. Current
//! state is always the fold of the decision log over the automatic state.

mod service;
mod xml;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use service::{AnnotationService, Clock, DocumentSummary, ManualClock, SystemClock};
pub use xml::{parse_export, ExportedDocument, ExportedTerm, TermStatus};

use crate::error::{Error, Result};
use crate::matcher::Occurrence;
use crate::ontology::ConceptId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateState {
    Auto,
    Confirmed,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanState {
    Active,
    NotBio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotation_id: String,
    pub occurrence: Occurrence,
    pub candidate_states: BTreeMap<ConceptId, CandidateState>,
    pub span_state: SpanState,
    pub updated_at: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn auto(annotation_id: String, occurrence: Occurrence, at: DateTime<Utc>) -> Self {
        let candidate_states = occurrence
            .candidates
            .iter()
            .map(|c| (c.clone(), CandidateState::Auto))
            .collect();
        AnnotationRecord {
            annotation_id,
            occurrence,
            candidate_states,
            span_state: SpanState::Active,
            updated_at: at,
        }
    }

    fn reject_all(&mut self) {
        self.span_state = SpanState::NotBio;
        for s in self.candidate_states.values_mut() {
            *s = CandidateState::Rejected;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ConfirmCandidate,
    RejectCandidate,
    MarkNotBio,
    DeleteAllSame,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::ConfirmCandidate => "confirm_candidate",
            Action::RejectCandidate => "reject_candidate",
            Action::MarkNotBio => "mark_not_bio",
            Action::DeleteAllSame => "delete_all_same",
        }
    }

    fn needs_target(self) -> bool {
        matches!(self, Action::ConfirmCandidate | Action::RejectCandidate)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Action::ConfirmCandidate, Action::RejectCandidate, Action::MarkNotBio, Action::DeleteAllSame]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown action {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub event_id: u64,
    pub annotation_id: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ConceptId>,
    pub actor: String,
    pub timestamp: DateTime<Utc>,
}

/// Applies one decision to the annotations of a single document.
///
/// Returns the positions of the records that changed. On error nothing is
/// modified.
pub fn apply_decision(
    records: &mut [AnnotationRecord],
    position: usize,
    action: Action,
    target: Option<&ConceptId>,
    at: DateTime<Utc>,
) -> Result<Vec<usize>> {
    let record = records
        .get(position)
        .ok_or_else(|| Error::NotFound(format!("no annotation at position {position}")))?;
    let id = &record.annotation_id;
    match (action.needs_target(), target) {
        (true, None) => return Err(Error::Validation(format!("{action} on {id} needs a target"))),
        (false, Some(_)) => return Err(Error::Validation(format!("{action} on {id} takes no target"))),
        (true, Some(t)) if !record.candidate_states.contains_key(t) => {
            return Err(Error::Validation(format!("{t} is not a candidate of {id}")))
        }
        _ => {}
    }
    if record.span_state == SpanState::NotBio && action != Action::ConfirmCandidate {
        return Err(Error::Conflict(format!(
            "{id} is marked as not a biomedical term; only confirming a candidate reactivates it"
        )));
    }

    let touch = |r: &mut AnnotationRecord| r.updated_at = at;
    match action {
        Action::ConfirmCandidate | Action::RejectCandidate => {
            let r = &mut records[position];
            let state = if action == Action::ConfirmCandidate {
                CandidateState::Confirmed
            } else {
                CandidateState::Rejected
            };
            r.span_state = SpanState::Active;
            r.candidate_states.insert(target.expect("checked above").clone(), state);
            touch(r);
            Ok(vec![position])
        }
        Action::MarkNotBio => {
            let r = &mut records[position];
            r.reject_all();
            touch(r);
            Ok(vec![position])
        }
        Action::DeleteAllSame => {
            let key = records[position].occurrence.normalized_key.clone();
            let mut changed = vec![position];
            changed.extend(
                (0..records.len())
                    .filter(|&i| i != position)
                    .filter(|&i| records[i].span_state == SpanState::Active)
                    .filter(|&i| records[i].occurrence.normalized_key == key),
            );
            for &i in &changed {
                records[i].reject_all();
                touch(&mut records[i]);
            }
            Ok(changed)
        }
    }
}

/// Folds a document's decision events over its automatic annotations.
pub fn replay_document(initial: &[AnnotationRecord], events: &[DecisionEvent]) -> Result<Vec<AnnotationRecord>> {
    let mut records = initial.to_vec();
    for e in events {
        let position = records
            .iter()
            .position(|r| r.annotation_id == e.annotation_id)
            .ok_or_else(|| Error::Consistency(format!("event {} names unknown annotation {}", e.event_id, e.annotation_id)))?;
        apply_decision(&mut records, position, e.action, e.target.as_ref(), e.timestamp)?;
    }
    Ok(records)
}
