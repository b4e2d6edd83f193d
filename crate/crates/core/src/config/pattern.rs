//! Wildcard patterns over node names and parameter paths.
//!
//! Supported forms:
//!
//! | form  | matches                                   |
//! |-------|-------------------------------------------|
//! | `**`  | any character sequence, dots included     |
//! | `*`   | any character sequence without a dot      |
//! | `[*]` | one bracketed decimal index, e.g. `[12]`  |
//! | other | itself, literally                         |

use std::collections::BTreeSet;

use super::ConfigError;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Literal(char),
    AnySegment,
    AnyPath,
    AnyIndex,
}

/// A compiled wildcard pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    source: String,
    tokens: Vec<Token>,
}

fn is_literal_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

impl Pattern {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let malformed = |reason: &str| ConfigError::MalformedPattern {
            line: None,
            pattern: source.to_string(),
            reason: reason.to_string(),
        };
        if source.is_empty() {
            return Err(malformed("empty pattern"));
        }
        let chars: Vec<char> = source.chars().collect();
        let mut tokens = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '*' => {
                    let run = chars[i..].iter().take_while(|&&c| c == '*').count();
                    match run {
                        1 => tokens.push(Token::AnySegment),
                        2 => tokens.push(Token::AnyPath),
                        _ => return Err(malformed("more than two consecutive '*'")),
                    }
                    i += run;
                }
                '[' => {
                    let close = chars[i..]
                        .iter()
                        .position(|&c| c == ']')
                        .map(|p| p + i)
                        .ok_or_else(|| malformed("unclosed '['"))?;
                    let inner: String = chars[i + 1..close].iter().collect();
                    if inner == "*" {
                        tokens.push(Token::AnyIndex);
                    } else if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_digit()) {
                        tokens.push(Token::Literal('['));
                        tokens.extend(inner.chars().map(Token::Literal));
                        tokens.push(Token::Literal(']'));
                    } else {
                        return Err(malformed("index must be digits or '*'"));
                    }
                    i = close + 1;
                }
                ']' => return Err(malformed("unmatched ']'")),
                c if is_literal_char(c) => {
                    tokens.push(Token::Literal(c));
                    i += 1;
                }
                c => return Err(malformed(&format!("unsupported character {c:?}"))),
            }
        }
        Ok(Self {
            source: source.to_string(),
            tokens,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_literal(&self) -> bool {
        self.tokens.iter().all(|t| matches!(t, Token::Literal(_)))
    }

    pub fn matches(&self, text: &str) -> bool {
        let text: Vec<char> = text.chars().collect();
        // memo[t][c]: tokens[t..] match text[c..]
        let mut memo = vec![vec![None; text.len() + 1]; self.tokens.len() + 1];
        self.match_from(0, 0, &text, &mut memo)
    }

    fn match_from(&self, t: usize, c: usize, text: &[char], memo: &mut Vec<Vec<Option<bool>>>) -> bool {
        if let Some(known) = memo[t][c] {
            return known;
        }
        let result = match self.tokens.get(t) {
            None => c == text.len(),
            Some(Token::Literal(ch)) => text.get(c) == Some(ch) && self.match_from(t + 1, c + 1, text, memo),
            Some(Token::AnySegment) => {
                let mut end = c;
                loop {
                    if self.match_from(t + 1, end, text, memo) {
                        break true;
                    }
                    if end == text.len() || text[end] == '.' {
                        break false;
                    }
                    end += 1;
                }
            }
            Some(Token::AnyPath) => (c..=text.len()).any(|end| self.match_from(t + 1, end, text, memo)),
            Some(Token::AnyIndex) => {
                if text.get(c) != Some(&'[') {
                    false
                } else {
                    let digits = text[c + 1..].iter().take_while(|ch| ch.is_ascii_digit()).count();
                    digits > 0
                        && text.get(c + 1 + digits) == Some(&']')
                        && self.match_from(t + 1, c + digits + 2, text, memo)
                }
            }
        };
        memo[t][c] = Some(result);
        result
    }
}

/// Resolves `pattern` against a list of node names.
///
/// The result does not depend on the order of `names`.
pub fn resolve_pattern<S: AsRef<str>>(pattern: &str, names: &[S]) -> Result<BTreeSet<String>, ConfigError> {
    let compiled = Pattern::parse(pattern)?;
    Ok(names
        .iter()
        .map(AsRef::as_ref)
        .filter(|name| compiled.matches(name))
        .map(str::to_string)
        .collect())
}
