//! Inline XML export of a validated document.
//!
//! ```xml
//! <document id="d1" exported_at="2024-01-01T00:00:00.000000Z"><text>
//! <term id="a1" refs="ChEBI:17245" rejected="MeSH:D002248" status="confirmed">CO</term> poisoning</text></document>
//! ```
//!
//! `refs` lists confirmed and still-automatic candidates, `rejected` the
//! rejected ones. Spans marked as not biomedical are plain text.

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{AnnotationRecord, CandidateState, SpanState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermStatus {
    /// Every candidate is still automatic.
    Auto,
    /// At least one candidate confirmed and none left automatic.
    Confirmed,
    Partial,
}

impl TermStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TermStatus::Auto => "auto",
            TermStatus::Confirmed => "confirmed",
            TermStatus::Partial => "partial",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(TermStatus::Auto),
            "confirmed" => Ok(TermStatus::Confirmed),
            "partial" => Ok(TermStatus::Partial),
            other => Err(Error::Xml(format!("unknown term status {other:?}"))),
        }
    }

    pub fn of(record: &AnnotationRecord) -> Self {
        let count = |s| record.candidate_states.values().filter(|x| **x == s).count();
        let (auto, confirmed) = (count(CandidateState::Auto), count(CandidateState::Confirmed));
        if auto == record.candidate_states.len() {
            TermStatus::Auto
        } else if auto == 0 && confirmed > 0 {
            TermStatus::Confirmed
        } else {
            TermStatus::Partial
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedTerm {
    pub id: String,
    pub refs: Vec<String>,
    pub rejected: Vec<String>,
    pub status: TermStatus,
    /// Character offsets into the document text.
    pub start: usize,
    pub end: usize,
}

/// Attribute-level model of an export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedDocument {
    pub id: String,
    pub exported_at: String,
    pub text: String,
    pub terms: Vec<ExportedTerm>,
}

impl ExportedDocument {
    /// Builds the export model from a document's current annotations.
    pub fn from_records(id: &str, exported_at: String, text: &str, records: &[AnnotationRecord]) -> Self {
        let mut terms: Vec<ExportedTerm> = records
            .iter()
            .filter(|r| r.span_state == SpanState::Active)
            .map(|r| {
                let pick = |keep: &dyn Fn(CandidateState) -> bool| {
                    r.candidate_states
                        .iter()
                        .filter(|(_, s)| keep(**s))
                        .map(|(c, _)| c.to_string())
                        .collect::<Vec<_>>()
                };
                ExportedTerm {
                    id: r.annotation_id.clone(),
                    refs: pick(&|s| s != CandidateState::Rejected),
                    rejected: pick(&|s| s == CandidateState::Rejected),
                    status: TermStatus::of(r),
                    start: r.occurrence.start,
                    end: r.occurrence.end,
                }
            })
            .collect();
        terms.sort_by_key(|t| t.start);
        ExportedDocument {
            id: id.to_owned(),
            exported_at,
            text: text.to_owned(),
            terms,
        }
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::with_capacity(self.text.len() + 64 * self.terms.len() + 96);
        let _ = write!(
            out,
            "<document id=\"{}\" exported_at=\"{}\"><text>",
            escape_attr(&self.id),
            escape_attr(&self.exported_at)
        );
        let mut chars = self.text.char_indices().map(|(b, _)| b).chain(std::iter::once(self.text.len()));
        let mut byte_at = Vec::with_capacity(self.text.len() + 1);
        byte_at.extend(chars.by_ref());
        let mut cursor = 0;
        for t in &self.terms {
            let (start, end) = (byte_at[t.start], byte_at[t.end]);
            escape_text(&self.text[cursor..start], &mut out);
            let _ = write!(out, "<term id=\"{}\" refs=\"{}\"", escape_attr(&t.id), escape_attr(&t.refs.join(" ")));
            if !t.rejected.is_empty() {
                let _ = write!(out, " rejected=\"{}\"", escape_attr(&t.rejected.join(" ")));
            }
            let _ = write!(out, " status=\"{}\">", t.status.as_str());
            escape_text(&self.text[start..end], &mut out);
            out.push_str("</term>");
            cursor = end;
        }
        escape_text(&self.text[cursor..], &mut out);
        out.push_str("</text></document>");
        out
    }

    /// The text with all markup removed.
    pub fn plain_text(&self) -> &str {
        &self.text
    }
}

fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            c => escape_text(c.encode_utf8(&mut [0; 4]), &mut out),
        }
    }
    out
}

/// True for characters XML 1.0 cannot carry.
pub(crate) fn is_xml_illegal(c: char) -> bool {
    matches!(c, '\u{0}'..='\u{8}' | '\u{B}' | '\u{C}' | '\u{E}'..='\u{1F}' | '\u{FFFE}' | '\u{FFFF}')
}

fn xml_err(e: impl std::fmt::Display) -> Error {
    Error::Xml(e.to_string())
}

fn attributes(e: &BytesStart<'_>) -> Result<Vec<(String, String)>> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(xml_err)?;
            let key = String::from_utf8(a.key.as_ref().to_vec()).map_err(xml_err)?;
            let value = a.unescape_value().map_err(xml_err)?.into_owned();
            Ok((key, value))
        })
        .collect()
}

fn take(attrs: &mut Vec<(String, String)>, name: &str) -> Option<String> {
    let i = attrs.iter().position(|(k, _)| k == name)?;
    Some(attrs.remove(i).1)
}

fn split_refs(s: &str) -> Vec<String> {
    s.split(' ').filter(|x| !x.is_empty()).map(str::to_owned).collect()
}

/// Parses an export back into its attribute-level model.
pub fn parse_export(xml: &str) -> Result<ExportedDocument> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(false);
    let mut doc: Option<ExportedDocument> = None;
    let mut depth = Vec::<&'static str>::new();
    let mut open_term: Option<ExportedTerm> = None;
    let mut chars = 0usize;
    loop {
        match reader.read_event().map_err(xml_err)? {
            Event::Start(e) => {
                let name = e.name();
                let mut attrs = attributes(&e)?;
                match (name.as_ref(), depth.as_slice()) {
                    (b"document", []) => {
                        let id = take(&mut attrs, "id").ok_or_else(|| xml_err("document lacks id"))?;
                        let exported_at =
                            take(&mut attrs, "exported_at").ok_or_else(|| xml_err("document lacks exported_at"))?;
                        doc = Some(ExportedDocument {
                            id,
                            exported_at,
                            text: String::new(),
                            terms: Vec::new(),
                        });
                        depth.push("document");
                    }
                    (b"text", ["document"]) => depth.push("text"),
                    (b"term", ["document", "text"]) => {
                        let id = take(&mut attrs, "id").ok_or_else(|| xml_err("term lacks id"))?;
                        let refs = take(&mut attrs, "refs").ok_or_else(|| xml_err("term lacks refs"))?;
                        let rejected = take(&mut attrs, "rejected").unwrap_or_default();
                        let status = take(&mut attrs, "status").ok_or_else(|| xml_err("term lacks status"))?;
                        open_term = Some(ExportedTerm {
                            id,
                            refs: split_refs(&refs),
                            rejected: split_refs(&rejected),
                            status: TermStatus::parse(&status)?,
                            start: chars,
                            end: chars,
                        });
                        depth.push("term");
                    }
                    (other, _) => {
                        return Err(xml_err(format!("unexpected element <{}>", String::from_utf8_lossy(other))))
                    }
                }
                if let Some((k, _)) = attrs.first() {
                    return Err(xml_err(format!("unexpected attribute {k:?}")));
                }
            }
            Event::End(_) => match depth.pop() {
                Some("term") => {
                    let mut term = open_term.take().expect("term is open");
                    term.end = chars;
                    doc.as_mut().expect("inside document").terms.push(term);
                }
                Some(_) => {}
                None => return Err(xml_err("unbalanced end tag")),
            },
            Event::Text(t) => {
                let text = t.unescape().map_err(xml_err)?;
                if depth.last().is_some_and(|d| *d == "text" || *d == "term") {
                    chars += text.chars().count();
                    doc.as_mut().expect("inside document").text.push_str(&text);
                } else if !text.is_empty() {
                    return Err(xml_err("character data outside <text>"));
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) => {}
            other => return Err(xml_err(format!("unexpected markup {other:?}"))),
        }
    }
    if !depth.is_empty() {
        return Err(xml_err("unterminated element"));
    }
    doc.ok_or_else(|| xml_err("no document element"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(id: &str, refs: &[&str], rejected: &[&str], status: TermStatus, start: usize, end: usize) -> ExportedTerm {
        ExportedTerm {
            id: id.into(),
            refs: refs.iter().map(|s| s.to_string()).collect(),
            rejected: rejected.iter().map(|s| s.to_string()).collect(),
            status,
            start,
            end,
        }
    }

    #[test]
    fn confirmed_span_by_hand() {
        let doc = ExportedDocument {
            id: "d1".into(),
            exported_at: "2024-01-01T00:00:00.000000Z".into(),
            text: "CO poisoning".into(),
            terms: vec![term("a1", &["ChEBI:17245"], &[], TermStatus::Confirmed, 0, 2)],
        };
        let xml = doc.to_xml();
        assert_eq!(
            xml,
            "<document id=\"d1\" exported_at=\"2024-01-01T00:00:00.000000Z\"><text>\
             <term id=\"a1\" refs=\"ChEBI:17245\" status=\"confirmed\">CO</term> poisoning</text></document>"
        );
        assert_eq!(parse_export(&xml).unwrap(), doc);
    }

    #[test]
    fn escapes_round_trip() {
        let doc = ExportedDocument {
            id: "a&b \"q\"".into(),
            exported_at: "t".into(),
            text: "x < y & z >\r\n\tα".into(),
            terms: vec![term("a1", &["A:1", "B:2"], &["C:3"], TermStatus::Partial, 4, 5)],
        };
        let xml = doc.to_xml();
        assert!(xml.contains("&#13;"));
        let back = parse_export(&xml).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_xml(), xml);
    }

    #[test]
    fn empty_document() {
        let doc = ExportedDocument {
            id: "d".into(),
            exported_at: "t".into(),
            text: "plain".into(),
            terms: vec![],
        };
        assert_eq!(doc.to_xml(), "<document id=\"d\" exported_at=\"t\"><text>plain</text></document>");
    }

    #[test]
    fn rejects_foreign_markup() {
        assert!(parse_export("<document id=\"d\" exported_at=\"t\"><text><b>x</b></text></document>").is_err());
        assert!(parse_export("<document id=\"d\"><text/></document>").is_err());
        assert!(parse_export("<document id=\"d\" exported_at=\"t\"><text>x").is_err());
    }
}
