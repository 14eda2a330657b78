use std::fmt;

use serde::{Deserialize, Serialize};

/// A single lowercase token: either a run of alphanumeric characters or a
/// run of punctuation. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Self(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Word,
    Punct,
}

fn class(c: char) -> Option<Class> {
    if c.is_whitespace() {
        None
    } else if c.is_alphanumeric() {
        Some(Class::Word)
    } else {
        Some(Class::Punct)
    }
}

/// Lowercases `text`, splits on whitespace, and splits every maximal run of
/// punctuation into its own token.
///
/// ```
/// # use asag_core::embedding::tokenize;
/// let t: Vec<String> = tokenize("don't stop").iter().map(|t| t.to_string()).collect();
/// assert_eq!(t, ["don", "'", "t", "stop"]);
/// ```
pub fn tokenize(text: &str) -> Vec<Token> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut current_class = None;
    for c in lower.chars() {
        let cls = class(c);
        if cls != current_class && !current.is_empty() {
            tokens.push(Token(std::mem::take(&mut current)));
        }
        if cls.is_some() {
            current.push(c);
        }
        current_class = cls;
    }
    if !current.is_empty() {
        tokens.push(Token(current));
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strs(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(
            strs(&tokenize("A variable stores data.")),
            ["a", "variable", "stores", "data", "."]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n ").is_empty());
        assert_eq!(strs(&tokenize("don't stop")), ["don", "'", "t", "stop"]);
    }

    #[test]
    fn punctuation_runs_stay_together() {
        assert_eq!(strs(&tokenize("wait...what?!")), ["wait", "...", "what", "?!"]);
        assert_eq!(strs(&tokenize("O(n log n)")), ["o", "(", "n", "log", "n", ")"]);
        assert_eq!(strs(&tokenize("x+=1")), ["x", "+=", "1"]);
    }

    #[test]
    fn token_constructor_rejects_whitespace() {
        assert!(Token::new("").is_none());
        assert!(Token::new("a b").is_none());
        assert_eq!(Token::new("ab").unwrap().as_str(), "ab");
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_tokens(text in "[a-zA-Z0-9 .,;:'!?()\\-\t\né]{0,60}") {
            let once = tokenize(&text);
            let joined = once.iter().map(Token::as_str).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(tokenize(&joined), once);
        }

        #[test]
        fn tokens_are_nonempty_and_whitespace_free(text in "\\PC{0,60}") {
            for t in tokenize(&text) {
                prop_assert!(!t.as_str().is_empty());
                prop_assert!(!t.as_str().chars().any(char::is_whitespace));
            }
        }
    }
}
