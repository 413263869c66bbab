//! Term normalization shared by the variant generator, the index and the matcher.
//!
//! A surface is normalized by, in order: Unicode compatibility composition
//! (NFKC), spelling out Greek letters, collapsing hyphens, dashes and
//! whitespace runs into one space, and lowercasing. Lowercasing is skipped
//! for a single token of at most four characters that contains an uppercase
//! letter, so the gene symbol `CAT` and the animal `cat` stay distinct keys.

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Lowercase Greek letters and their spelled-out names. Final sigma shares `sigma`.
const GREEK: [(char, char, &str); 24] = [
    ('α', 'Α', "alpha"),
    ('β', 'Β', "beta"),
    ('γ', 'Γ', "gamma"),
    ('δ', 'Δ', "delta"),
    ('ε', 'Ε', "epsilon"),
    ('ζ', 'Ζ', "zeta"),
    ('η', 'Η', "eta"),
    ('θ', 'Θ', "theta"),
    ('ι', 'Ι', "iota"),
    ('κ', 'Κ', "kappa"),
    ('λ', 'Λ', "lambda"),
    ('μ', 'Μ', "mu"),
    ('ν', 'Ν', "nu"),
    ('ξ', 'Ξ', "xi"),
    ('ο', 'Ο', "omicron"),
    ('π', 'Π', "pi"),
    ('ρ', 'Ρ', "rho"),
    ('σ', 'Σ', "sigma"),
    ('τ', 'Τ', "tau"),
    ('υ', 'Υ', "upsilon"),
    ('φ', 'Φ', "phi"),
    ('χ', 'Χ', "chi"),
    ('ψ', 'Ψ', "psi"),
    ('ω', 'Ω', "omega"),
];

/// Longest number of characters a token may have and still keep its case.
pub const SHORT_TOKEN_MAX_CHARS: usize = 4;

/// Spelled-out name for a Greek letter. Uppercase letters get a capitalized name.
pub fn greek_name(c: char) -> Option<&'static str> {
    greek_entry(c).map(|(_, _, name)| name)
}

fn greek_entry(c: char) -> Option<(char, char, &'static str)> {
    if c == 'ς' {
        return Some(GREEK[17]);
    }
    GREEK
        .iter()
        .copied()
        .find(|(lower, upper, _)| *lower == c || *upper == c)
}

/// Lowercase Greek symbol for a spelled-out name (`"gamma"` → `γ`), case-insensitive.
pub fn greek_symbol(name: &str) -> Option<char> {
    GREEK
        .iter()
        .find(|(_, _, n)| n.eq_ignore_ascii_case(name))
        .map(|(lower, _, _)| *lower)
}

pub fn is_greek_letter(c: char) -> bool {
    greek_entry(c).is_some()
}

/// Hyphens and dashes that normalize to a token separator.
pub fn is_dash(c: char) -> bool {
    matches!(
        c,
        '-' | '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{FE58}' | '\u{FE63}' | '\u{FF0D}'
    )
}

pub fn is_separator(c: char) -> bool {
    c.is_whitespace() || is_dash(c)
}

/// Word characters for token boundaries: letters, digits (Greek included) and
/// combining marks, which belong to the preceding letter.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || unicode_normalization::char::is_combining_mark(c)
}

/// Appends the Greek-expanded form of one already-composed character.
pub(crate) fn push_expanded(c: char, out: &mut String) {
    match greek_entry(c) {
        Some((_, upper, name)) if c == upper => {
            let mut chars = name.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            }
        }
        Some((_, _, name)) => out.push_str(name),
        None => out.push(c),
    }
}

fn compose(surface: &str) -> String {
    if surface.is_ascii() {
        surface.to_owned()
    } else {
        surface.nfkc().collect()
    }
}

/// NFKC, Greek expansion and separator collapse, without any case change.
///
/// Two surfaces with the same skeleton differ only in separator choice or
/// Greek symbol versus spelled name.
pub fn skeleton(surface: &str) -> String {
    let composed = compose(surface);
    let mut out = String::with_capacity(composed.len() + 8);
    let mut pending_space = false;
    for c in composed.chars() {
        if is_separator(c) {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        push_expanded(c, &mut out);
    }
    out
}

/// True when a skeleton keeps its case under normalization.
pub fn is_case_preserved(skeleton: &str) -> bool {
    !skeleton.contains(' ')
        && skeleton.chars().count() <= SHORT_TOKEN_MAX_CHARS
        && skeleton.chars().any(char::is_uppercase)
}

/// Normalized lookup key of a surface form.
pub fn normalize_term(surface: &str) -> Result<String> {
    let key = normalize_lossy(surface);
    if key.is_empty() {
        return Err(Error::Validation(format!(
            "term {surface:?} is empty after normalization"
        )));
    }
    Ok(key)
}

/// Like [`normalize_term`] but returns an empty string instead of an error.
pub fn normalize_lossy(surface: &str) -> String {
    let skel = skeleton(surface);
    if is_case_preserved(&skel) {
        skel
    } else {
        let lowered = skel.to_lowercase();
        // lowercasing can leave a non-NFKC sequence behind for a handful of
        // code points; one more composition pass settles it
        if lowered.is_ascii() {
            lowered
        } else {
            lowered.nfkc().collect()
        }
    }
}

/// Case-folded form of a single token, used by rule predicates.
pub fn fold_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in compose(token).chars() {
        push_expanded(c, &mut out);
    }
    out.to_lowercase()
}
