//! Rewrite rules for spelling-variant generation.
//!
//! Procedural rules (Greek letters, numerals, separators, inflection,
//! numbering) are built in. Lexicon rules (acronyms, British/American
//! spellings) are data, one per line:
//!
//! ```text
//! <group>\t<rule-id>\t<pattern>\t<replacement>\t<both|forward>
//! ```
//!
//! A pattern is a token phrase matched case-insensitively, or a single-token
//! affix written `*suffix` / `prefix*`. A `both` line registers the rule and
//! its inverse, the latter under `<rule-id>.rev`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::surface::Surface;
use crate::error::{Error, Result};
use crate::normalize::{self, fold_token, greek_name, greek_symbol, is_greek_letter};

const DEFAULT_LEXICON: &str = include_str!("../../data/default_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleGroupId {
    Orthographic,
    Acronym,
    Inflectional,
    Morphological,
    Structural,
}

impl RuleGroupId {
    pub const ALL: [RuleGroupId; 5] = [
        RuleGroupId::Orthographic,
        RuleGroupId::Acronym,
        RuleGroupId::Inflectional,
        RuleGroupId::Morphological,
        RuleGroupId::Structural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleGroupId::Orthographic => "orthographic",
            RuleGroupId::Acronym => "acronym",
            RuleGroupId::Inflectional => "inflectional",
            RuleGroupId::Morphological => "morphological",
            RuleGroupId::Structural => "structural",
        }
    }
}

impl fmt::Display for RuleGroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleGroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleGroupId::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown rule group {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The inverse rewrite is registered in the same group.
    Both,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Builtin {
    GreekSymbolToName,
    GreekNameToSymbol,
    GreekToLetter,
    ArabicToRoman,
    RomanToArabic,
    Join,
    SplitGreek,
    HyphenToSpace,
    SpaceToHyphen,
    Lowercase,
    Plural,
    Singular,
    HyphenShift,
    AttachNumber,
    DetachNumber,
}

#[derive(Debug, Clone)]
enum RuleKind {
    Builtin(Builtin),
    Phrase {
        pattern: Vec<String>,
        replacement: Surface,
    },
    Suffix {
        from: String,
        to: String,
    },
    Prefix {
        from: String,
        to: String,
    },
}

#[derive(Debug, Clone)]
pub struct Rule {
    id: String,
    group: RuleGroupId,
    direction: Direction,
    kind: RuleKind,
}

impl Rule {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn group(&self) -> RuleGroupId {
        self.group
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// All single rewrites of `surface`, in positional order. May repeat.
    pub fn apply(&self, surface: &str) -> Vec<String> {
        let parsed = Surface::parse(surface);
        if parsed.tokens.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        match &self.kind {
            RuleKind::Builtin(b) => apply_builtin(*b, surface, &parsed, &mut out),
            RuleKind::Phrase {
                pattern,
                replacement,
            } => apply_phrase(&parsed, pattern, replacement, &mut out),
            RuleKind::Suffix { from, to } => apply_affix(&parsed, from, to, true, &mut out),
            RuleKind::Prefix { from, to } => apply_affix(&parsed, from, to, false, &mut out),
        }
        out.retain(|o| o != surface && !o.trim().is_empty());
        out
    }
}

/// A configured rule inventory plus the set of enabled groups.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
    enabled: BTreeSet<RuleGroupId>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::standard()
    }
}

impl RuleSet {
    /// Built-in rules plus the shipped acronym and spelling lexicons.
    pub fn standard() -> Self {
        RuleSet::with_lexicon(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }

    /// Built-in rules plus lexicon rules parsed from `text`, replacing the shipped lexicon.
    pub fn with_lexicon(text: &str) -> Result<Self> {
        let mut rules = builtin_rules();
        rules.extend(parse_lexicon(text)?);
        let mut seen = BTreeSet::new();
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(Error::Config(format!("rule id {} registered twice", rule.id)));
            }
        }
        // expansion order is group order, then registration order
        rules.sort_by_key(|r| r.group);
        Ok(RuleSet {
            rules,
            enabled: RuleGroupId::ALL.into_iter().collect(),
        })
    }

    pub fn only(mut self, groups: &[RuleGroupId]) -> Self {
        self.enabled = groups.iter().copied().collect();
        self
    }

    pub fn without(mut self, group: RuleGroupId) -> Self {
        self.enabled.remove(&group);
        self
    }

    pub fn is_enabled(&self, group: RuleGroupId) -> bool {
        self.enabled.contains(&group)
    }

    /// Enabled rules in expansion order.
    pub fn active_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| self.enabled.contains(&r.group))
    }

    pub fn rules_in(&self, group: RuleGroupId) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.group == group)
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Every single-rule rewrite of `surface` under `group`, excluding `surface`.
    pub fn apply_rule_group(&self, surface: &str, group: RuleGroupId) -> BTreeSet<String> {
        self.rules_in(group)
            .flat_map(|r| r.apply(surface))
            .map(|o| o.trim().to_owned())
            .filter(|o| !o.is_empty() && o != surface)
            .collect()
    }
}

fn rule(id: &str, group: RuleGroupId, direction: Direction, b: Builtin) -> Rule {
    Rule {
        id: id.to_owned(),
        group,
        direction,
        kind: RuleKind::Builtin(b),
    }
}

fn builtin_rules() -> Vec<Rule> {
    use Builtin::*;
    use Direction::{Both, Forward};
    use RuleGroupId::*;
    vec![
        rule("ortho.greek-symbol-to-name", Orthographic, Both, GreekSymbolToName),
        rule("ortho.greek-name-to-symbol", Orthographic, Both, GreekNameToSymbol),
        rule("ortho.greek-to-letter", Orthographic, Forward, GreekToLetter),
        rule("ortho.arabic-to-roman", Orthographic, Both, ArabicToRoman),
        rule("ortho.roman-to-arabic", Orthographic, Both, RomanToArabic),
        rule("ortho.join", Orthographic, Forward, Join),
        rule("ortho.split-greek", Orthographic, Forward, SplitGreek),
        rule("ortho.hyphen-to-space", Orthographic, Both, HyphenToSpace),
        rule("ortho.space-to-hyphen", Orthographic, Both, SpaceToHyphen),
        rule("ortho.lowercase", Orthographic, Forward, Lowercase),
        rule("infl.plural", Inflectional, Both, Plural),
        rule("infl.singular", Inflectional, Both, Singular),
        rule("struct.hyphen-shift", Structural, Both, HyphenShift),
        rule("struct.attach-number", Structural, Both, AttachNumber),
        rule("struct.detach-number", Structural, Both, DetachNumber),
    ]
}

fn parse_lexicon(text: &str) -> Result<Vec<Rule>> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [group, id, pattern, replacement, direction] = fields.as_slice() else {
            return Err(Error::parse(line_no, format!("expected 5 fields, found {}", fields.len())));
        };
        let group: RuleGroupId = group.parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        let direction = match direction.trim() {
            "both" => Direction::Both,
            "forward" => Direction::Forward,
            other => return Err(Error::parse(line_no, format!("unknown direction {other:?}"))),
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::parse(line_no, "empty rule id"));
        }
        let forward = lexicon_kind(pattern.trim(), replacement.trim()).map_err(|m| Error::parse(line_no, m))?;
        rules.push(Rule {
            id: id.to_owned(),
            group,
            direction,
            kind: forward,
        });
        if direction == Direction::Both {
            let inverse =
                lexicon_kind(replacement.trim(), pattern.trim()).map_err(|m| Error::parse(line_no, m))?;
            rules.push(Rule {
                id: format!("{id}.rev"),
                group,
                direction,
                kind: inverse,
            });
        }
    }
    Ok(rules)
}

fn lexicon_kind(pattern: &str, replacement: &str) -> std::result::Result<RuleKind, String> {
    let affix = |s: &str| s.starts_with('*') || s.ends_with('*');
    if let (Some(from), Some(to)) = (pattern.strip_prefix('*'), replacement.strip_prefix('*')) {
        return Ok(RuleKind::Suffix {
            from: from.to_lowercase(),
            to: to.to_owned(),
        });
    }
    if let (Some(from), Some(to)) = (pattern.strip_suffix('*'), replacement.strip_suffix('*')) {
        return Ok(RuleKind::Prefix {
            from: from.to_lowercase(),
            to: to.to_owned(),
        });
    }
    if affix(pattern) || affix(replacement) {
        return Err(format!("mismatched affix wildcards in {pattern:?} -> {replacement:?}"));
    }
    let pattern_surface = Surface::parse(pattern);
    let replacement = Surface::parse(replacement);
    if pattern_surface.tokens.is_empty() || replacement.tokens.is_empty() {
        return Err("empty pattern or replacement".to_owned());
    }
    Ok(RuleKind::Phrase {
        pattern: pattern_surface.tokens.iter().map(|t| fold_token(t)).collect(),
        replacement,
    })
}

fn push(out: &mut Vec<String>, surface: Surface) {
    out.push(surface.render());
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit())
}

fn is_greek_name(folded: &str) -> bool {
    greek_symbol(folded).is_some()
}

const ROMAN: [&str; 20] = [
    "i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi", "xii", "xiii", "xiv", "xv",
    "xvi", "xvii", "xviii", "xix", "xx",
];

fn roman_value(folded: &str) -> Option<usize> {
    ROMAN.iter().position(|r| *r == folded).map(|p| p + 1)
}

/// Tokens around which separators may be dropped: numbers, Greek letters, single letters.
/// A gap touching a digit is always joinable as well (`IL1 type` to `IL1type`).
fn is_joinable(folded: &str) -> bool {
    is_digits(folded) || is_greek_name(folded) || folded.chars().count() == 1
}

fn apply_builtin(b: Builtin, raw: &str, s: &Surface, out: &mut Vec<String>) {
    let n = s.len();
    match b {
        Builtin::GreekSymbolToName => {
            for (i, token) in s.tokens.iter().enumerate() {
                for (at, c) in token.char_indices().filter(|(_, c)| is_greek_letter(*c)) {
                    let mut replaced = String::with_capacity(token.len() + 6);
                    replaced.push_str(&token[..at]);
                    replaced.push_str(greek_name(c).unwrap_or_default());
                    replaced.push_str(&token[at + c.len_utf8()..]);
                    push(out, s.with_token(i, replaced));
                }
            }
        }
        Builtin::GreekNameToSymbol => {
            for (i, token) in s.tokens.iter().enumerate() {
                let Some(symbol) = greek_symbol(token) else { continue };
                // only spellings the symbol expands back to, so the skeleton is kept
                let lower = greek_name(symbol).unwrap_or_default();
                if token == lower {
                    push(out, s.with_token(i, symbol.to_string()));
                } else if token.strip_prefix(&lower[..1].to_ascii_uppercase()) == Some(&lower[1..]) {
                    push(out, s.with_token(i, symbol.to_uppercase().collect()));
                }
            }
        }
        Builtin::GreekToLetter => {
            if n >= 2 {
                let folded = fold_token(&s.tokens[n - 1]);
                if is_greek_name(&folded) {
                    push(out, s.with_token(n - 1, folded[..1].to_owned()));
                }
            }
        }
        Builtin::ArabicToRoman => {
            for (i, token) in s.tokens.iter().enumerate().skip(1) {
                if let Some(value) = is_digits(token).then(|| token.parse::<usize>().ok()).flatten() {
                    if (1..=ROMAN.len()).contains(&value) {
                        push(out, s.with_token(i, ROMAN[value - 1].to_owned()));
                    }
                }
            }
        }
        Builtin::RomanToArabic => {
            for (i, token) in s.tokens.iter().enumerate().skip(1) {
                if token.is_ascii() {
                    if let Some(value) = roman_value(&token.to_ascii_lowercase()) {
                        push(out, s.with_token(i, value.to_string()));
                    }
                }
            }
        }
        Builtin::Join => {
            let folded: Vec<String> = s.tokens.iter().map(|t| fold_token(t)).collect();
            for i in 0..n.saturating_sub(1) {
                let digit_edge = folded[i].ends_with(|c: char| c.is_ascii_digit())
                    || folded[i + 1].starts_with(|c: char| c.is_ascii_digit());
                if digit_edge || is_joinable(&folded[i]) || is_joinable(&folded[i + 1]) {
                    push(out, s.joined(i));
                }
            }
        }
        Builtin::SplitGreek => {
            for (i, token) in s.tokens.iter().enumerate() {
                // work on the spelled-out token and take the longest Greek tail
                let expanded = normalize::skeleton(token);
                let split = expanded.char_indices().skip(1).find(|&(at, _)| {
                    let (head, tail) = expanded.split_at(at);
                    is_greek_name(&tail.to_lowercase()) && splittable_head(head)
                });
                if let Some((at, _)) = split {
                    push(out, s.with_token(i, expanded.clone()).split_token(i, at));
                }
            }
        }
        Builtin::HyphenToSpace => {
            for (i, sep) in s.seps.iter().enumerate() {
                if sep.chars().any(normalize::is_dash) {
                    push(out, s.with_sep(i, " "));
                }
            }
        }
        Builtin::SpaceToHyphen => {
            for (i, sep) in s.seps.iter().enumerate() {
                if sep.chars().all(char::is_whitespace) {
                    push(out, s.with_sep(i, "-"));
                }
            }
        }
        Builtin::Lowercase => {
            let key = normalize::normalize_lossy(raw);
            if raw.chars().any(char::is_uppercase) && !key.chars().any(char::is_uppercase) {
                out.push(raw.to_lowercase());
            }
        }
        Builtin::Plural | Builtin::Singular => {
            let last = &s.tokens[n - 1];
            if let Some(inflected) = inflect(last, b == Builtin::Plural) {
                push(out, s.with_token(n - 1, inflected));
            }
        }
        Builtin::HyphenShift => {
            for i in 1..n.saturating_sub(1) {
                let middle = fold_token(&s.tokens[i]);
                if !(is_digits(&middle) || roman_value(&middle).is_some()) {
                    continue;
                }
                let (left, right) = (&s.seps[i - 1], &s.seps[i]);
                let dashed = |sep: &str| sep.chars().any(normalize::is_dash);
                let spaced = |sep: &str| sep.chars().all(char::is_whitespace);
                if (dashed(left) && spaced(right)) || (spaced(left) && dashed(right)) {
                    let mut next = s.clone();
                    next.seps.swap(i - 1, i);
                    push(out, next);
                }
            }
        }
        Builtin::AttachNumber => {
            for i in 1..n {
                let ends_in_letter = s.tokens[i - 1].chars().last().is_some_and(char::is_alphabetic);
                if is_digits(&s.tokens[i]) && ends_in_letter {
                    push(out, s.joined(i - 1));
                }
            }
        }
        Builtin::DetachNumber => {
            for (i, token) in s.tokens.iter().enumerate() {
                let digits = token.chars().rev().take_while(char::is_ascii_digit).count();
                if digits == 0 || digits == token.len() {
                    continue;
                }
                let at = token.len() - digits;
                if token[..at].chars().last().is_some_and(char::is_alphabetic) {
                    push(out, s.split_token(i, at));
                }
            }
        }
    }
}

/// A Greek name may be split off after a digit or after an all-caps symbol.
fn splittable_head(head: &str) -> bool {
    let Some(last) = head.chars().last() else { return false };
    if last.is_ascii_digit() {
        return true;
    }
    head.chars().count() >= 2 && head.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

fn inflect(token: &str, plural: bool) -> Option<String> {
    let folded = fold_token(token);
    let eligible = folded.len() >= 3
        && folded.chars().all(|c| c.is_ascii_lowercase())
        && token.chars().any(char::is_lowercase)
        && !is_greek_name(&folded)
        && roman_value(&folded).is_none();
    if !eligible {
        return None;
    }
    let lower = token.to_lowercase();
    let drop = |count: usize, add: &str| -> Option<String> {
        let keep = token.chars().count().checked_sub(count)?;
        let mut s: String = token.chars().take(keep).collect();
        s.push_str(add);
        Some(s)
    };
    if plural {
        if folded.ends_with('s') {
            return None;
        }
        let bytes = folded.as_bytes();
        let before_y = bytes.len().checked_sub(2).map(|i| bytes[i]);
        if folded.ends_with('y') && before_y.is_some_and(|c| !b"aeiou".contains(&c)) && lower.ends_with('y') {
            return drop(1, "ies");
        }
        if ["x", "z", "ch", "sh"].iter().any(|e| folded.ends_with(e)) {
            return drop(0, "es");
        }
        drop(0, "s")
    } else {
        if !folded.ends_with('s') || ["ss", "us", "is"].iter().any(|e| folded.ends_with(e)) {
            return None;
        }
        if folded.ends_with("ies") && lower.ends_with("ies") {
            return drop(3, "y");
        }
        if ["xes", "zes", "ches", "shes", "sses"].iter().any(|e| folded.ends_with(e) && lower.ends_with(e)) {
            return drop(2, "");
        }
        if lower.ends_with('s') {
            return drop(1, "");
        }
        None
    }
}

fn apply_phrase(s: &Surface, pattern: &[String], replacement: &Surface, out: &mut Vec<String>) {
    let k = pattern.len();
    if k > s.len() {
        return;
    }
    let folded: Vec<String> = s.tokens.iter().map(|t| fold_token(t)).collect();
    for start in 0..=s.len() - k {
        if folded[start..start + k] == *pattern {
            push(out, s.splice(start, start + k, replacement));
        }
    }
}

/// Affix rewrites require at least two characters of stem beyond the affix.
///
/// A rewrite whose target extends its source (`*emia` to `*aemia`) is skipped
/// on tokens already carrying the target, or it would pump forever.
fn apply_affix(s: &Surface, from: &str, to: &str, suffix: bool, out: &mut Vec<String>) {
    let from_chars = from.chars().count();
    let extends = if suffix { to.ends_with(from) } else { to.starts_with(from) };
    for (i, token) in s.tokens.iter().enumerate() {
        let lower = token.to_lowercase();
        let count = token.chars().count();
        if count < from_chars + 2 || lower.chars().count() != count {
            continue;
        }
        let matched = if suffix { lower.ends_with(from) } else { lower.starts_with(from) };
        let has_target = if suffix { lower.ends_with(to) } else { lower.starts_with(to) };
        if !matched || (extends && has_target) {
            continue;
        }
        let rewritten = if suffix {
            let stem: String = token.chars().take(count - from_chars).collect();
            stem + to
        } else {
            let rest: String = token.chars().skip(from_chars).collect();
            to.to_owned() + &rest
        };
        push(out, s.with_token(i, rewritten));
    }
}
