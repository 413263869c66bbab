//! A brute-force matcher to compare [`scan_document`] against.
//!
//! Every window that starts and ends on a token boundary is normalized and
//! looked up; overlapping hits are then resolved leftmost-longest. Nothing
//! here shares code with the automaton-based matcher beyond the key function.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::select;

use semlabel_core::matcher::{build_index, scan_document, Document, Occurrence};
use semlabel_core::normalize::normalize_lossy;
use semlabel_core::variants::{Provenance, TermVariant};
use semlabel_core::ConceptId;

const WORDS: &[&str] = &[
    "cat", "CAT", "Cat", "cats", "tnf", "TNF", "α", "alpha", "Α", "carbon", "monoxide", "CO", "co", "Co", "il", "IL", "1",
    "2", "ii", "β", "beta", "receptor", "type", "e\u{301}tude", "étude", "ﬁbre", "fibre", "x", "\u{301}",
];

const SEPARATORS: &[&str] = &[" ", " ", " ", "  ", "-", "–", " - ", "\n", ", ", ". ", "(", ")", "/", ""];

#[derive(Debug, Clone)]
pub struct Trial {
    pub variants: Vec<TermVariant>,
    pub docs: Vec<Document>,
}

fn phrase(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec((select(WORDS), select(SEPARATORS)), 1..=max_words).prop_map(|parts| {
        let mut s = String::new();
        for (i, (w, sep)) in parts.iter().enumerate() {
            if i > 0 {
                s.push_str(sep);
            }
            s.push_str(w);
        }
        s
    })
}

fn text(max_bytes: usize) -> impl Strategy<Value = String> {
    prop::collection::vec((select(WORDS), select(SEPARATORS)), 0..=max_bytes / 6).prop_map(move |parts| {
        let mut s = String::new();
        for (w, sep) in parts {
            if s.len() + w.len() + sep.len() > max_bytes {
                break;
            }
            s.push_str(w);
            s.push_str(sep);
        }
        s
    })
}

/// Up to `max_keys` keys over ten concepts and up to `max_docs` documents of at most `max_bytes`.
pub fn trial(max_keys: usize, max_docs: usize, max_bytes: usize) -> impl Strategy<Value = Trial> {
    let variants = prop::collection::vec((phrase(3), 0u8..10), 1..=max_keys).prop_map(|names| {
        names
            .into_iter()
            .filter_map(|(surface, concept)| {
                let key = normalize_lossy(&surface);
                (!key.is_empty()).then(|| TermVariant {
                    surface,
                    normalized_key: key,
                    concept: ConceptId::new("T", concept.to_string()).unwrap(),
                    provenance: Provenance::Original,
                    rule_trace: Vec::new(),
                })
            })
            .collect::<Vec<_>>()
    });
    let docs = prop::collection::vec(text(max_bytes), 1..=max_docs).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("doc{i}"), t))
            .collect()
    });
    (variants, docs)
        .prop_filter("needs a key", |(v, _)| !v.is_empty())
        .prop_map(|(variants, docs)| Trial { variants, docs })
}

fn is_mark(c: char) -> bool {
    unicode_normalization::char::is_combining_mark(c)
}

fn is_sep(c: char) -> bool {
    c.is_whitespace() || matches!(c, '-' | '‐' | '‑' | '‒' | '–' | '—' | '―' | '−')
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || is_mark(c)
}

pub fn oracle_scan(keys: &BTreeMap<String, BTreeSet<ConceptId>>, doc: &Document) -> Vec<Occurrence> {
    let chars: Vec<(usize, char)> = doc.text.char_indices().collect();
    let n = chars.len();
    let byte_at = |i: usize| if i == n { doc.text.len() } else { chars[i].0 };
    // a combining mark belongs to the preceding non-separator character
    let unit_start = |i: usize| i == 0 || i == n || !(is_mark(chars[i].1) && !is_sep(chars[i - 1].1));
    let boundary = |i: usize| i == 0 || i == n || !(is_word(chars[i - 1].1) && is_word(chars[i].1));
    let max_gaps = keys.keys().map(|k| k.matches(' ').count()).max().unwrap_or(0);

    let mut found = Vec::new();
    for start in 0..n {
        if !unit_start(start) || !boundary(start) || is_sep(chars[start].1) {
            continue;
        }
        let mut gaps = 0;
        for end in start + 1..=n {
            if is_sep(chars[end - 1].1) && (end - 1 == start || !is_sep(chars[end - 2].1)) {
                gaps += 1;
                if gaps > max_gaps {
                    break;
                }
            }
            if !unit_start(end) || !boundary(end) || is_sep(chars[end - 1].1) {
                continue;
            }
            let window = &doc.text[byte_at(start)..byte_at(end)];
            let key = normalize_lossy(window);
            if let Some(concepts) = keys.get(&key) {
                found.push(Occurrence {
                    doc_id: doc.doc_id.clone(),
                    start,
                    end,
                    surface: window.to_owned(),
                    normalized_key: key,
                    candidates: concepts.iter().cloned().collect(),
                    byte_range: byte_at(start)..byte_at(end),
                });
            }
        }
    }
    found.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut out: Vec<Occurrence> = Vec::new();
    for occ in found {
        if out.last().is_none_or(|last| occ.start >= last.end) {
            out.push(occ);
        }
    }
    out
}

/// Runs both matchers on every document; the first disagreement is returned as an error.
pub fn check_trial(trial: &Trial) -> Result<usize, String> {
    let index = build_index(&trial.variants).map_err(|e| e.to_string())?;
    let mut keys: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
    for v in &trial.variants {
        keys.entry(v.normalized_key.clone()).or_default().insert(v.concept.clone());
    }
    let mut total = 0;
    for doc in &trial.docs {
        let expected = oracle_scan(&keys, doc);
        let actual = scan_document(&index, doc);
        if actual != expected {
            return Err(format!(
                "document {:?} with keys {:?}\n  scanner: {:?}\n  oracle:  {:?}",
                doc.text,
                keys.keys().collect::<Vec<_>>(),
                actual.iter().map(|o| (&o.surface, o.start, o.end)).collect::<Vec<_>>(),
                expected.iter().map(|o| (&o.surface, o.start, o.end)).collect::<Vec<_>>(),
            ));
        }
        total += actual.len();
    }
    Ok(total)
}
