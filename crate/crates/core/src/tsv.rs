//! Field escaping shared by the tab-separated file formats.
//!
//! Tabs, newlines, carriage returns and backslashes are written as `\t`, `\n`,
//! `\r` and `\\`. List-valued fields additionally escape their separator
//! (`\|` for synonym lists).

pub fn escape_field(raw: &str) -> String {
    escape_with(raw, None)
}

pub fn escape_list_item(raw: &str, separator: char) -> String {
    escape_with(raw, Some(separator))
}

fn escape_with(raw: &str, separator: Option<char>) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if Some(c) == separator => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

/// Reverses [`escape_field`]. Unknown escapes keep the escaped character.
pub fn unescape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Splits an escaped list field on unescaped `separator` and unescapes each item.
pub fn split_list(field: &str, separator: char) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            current.push(c);
            if let Some(next) = chars.next() {
                current.push(next);
            }
        } else if c == separator {
            items.push(unescape_field(&current));
            current.clear();
        } else {
            current.push(c);
        }
    }
    items.push(unescape_field(&current));
    items
}
