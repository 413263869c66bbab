use crate::normalize::is_separator;

/// A surface split into tokens and the raw separators between them.
///
/// `seps[i]` sits between `tokens[i]` and `tokens[i + 1]`; leading and
/// trailing separators are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Surface {
    pub tokens: Vec<String>,
    pub seps: Vec<String>,
}

impl Surface {
    pub fn parse(raw: &str) -> Self {
        let mut tokens = Vec::new();
        let mut seps = Vec::new();
        let mut token = String::new();
        let mut sep = String::new();
        for c in raw.chars() {
            if is_separator(c) {
                if !token.is_empty() {
                    tokens.push(std::mem::take(&mut token));
                }
                if !tokens.is_empty() {
                    sep.push(c);
                }
            } else {
                if token.is_empty() && !tokens.is_empty() {
                    seps.push(std::mem::take(&mut sep));
                }
                token.push(c);
            }
        }
        if !token.is_empty() {
            tokens.push(token);
        }
        Surface { tokens, seps }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push_str(&self.seps[i - 1]);
            }
            out.push_str(token);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn with_token(&self, index: usize, token: String) -> Surface {
        let mut next = self.clone();
        next.tokens[index] = token;
        next
    }

    pub fn with_sep(&self, index: usize, sep: &str) -> Surface {
        let mut next = self.clone();
        next.seps[index] = sep.to_owned();
        next
    }

    /// Removes separator `index`, gluing its two neighbouring tokens together.
    pub fn joined(&self, index: usize) -> Surface {
        let mut next = self.clone();
        let right = next.tokens.remove(index + 1);
        next.tokens[index].push_str(&right);
        next.seps.remove(index);
        next
    }

    /// Splits token `index` at byte offset `at` with a single space.
    pub fn split_token(&self, index: usize, at: usize) -> Surface {
        let mut next = self.clone();
        let right = next.tokens[index].split_off(at);
        next.tokens.insert(index + 1, right);
        next.seps.insert(index, " ".to_owned());
        next
    }

    /// Replaces tokens `start..end` with the tokens of `replacement`.
    pub fn splice(&self, start: usize, end: usize, replacement: &Surface) -> Surface {
        let mut tokens = self.tokens[..start].to_vec();
        tokens.extend(replacement.tokens.iter().cloned());
        tokens.extend(self.tokens[end..].iter().cloned());
        let mut seps = self.seps[..start].to_vec();
        seps.extend(replacement.seps.iter().cloned());
        seps.extend(self.seps[end - 1..].iter().cloned());
        Surface { tokens, seps }
    }
}
