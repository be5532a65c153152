//! Deterministic rule-based tokenization.
//!
//! A token is either a maximal run of word characters (Unicode letters,
//! digits, `_`) or a single non-whitespace character of any other kind.
//! Whitespace never produces tokens, so the text between two consecutive
//! tokens is always pure whitespace.
//!
//! All token budgets in the crate (chunk size, context length, utilized
//! tokens) are expressed in units of the [`Tokenizer`] in use. The default is
//! [`RuleTokenizer`]; a model-exact tokenizer can be plugged in by
//! implementing the trait.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    /// Byte offset of `text` in the source string.
    pub start: usize,
    pub kind: TokenKind,
}

impl Token<'_> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub name: String,
    pub version: String,
}

pub trait Tokenizer: Send + Sync {
    fn spec(&self) -> TokenizerSpec;

    fn tokenize<'a>(&self, text: &'a str) -> Vec<Token<'a>>;

    fn count_tokens(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

pub const RULE_TOKENIZER_NAME: &str = "rule-word-punct";
pub const RULE_TOKENIZER_VERSION: &str = "1";

#[inline]
pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl Tokenizer for RuleTokenizer {
    fn spec(&self) -> TokenizerSpec {
        TokenizerSpec {
            name: RULE_TOKENIZER_NAME.to_string(),
            version: RULE_TOKENIZER_VERSION.to_string(),
        }
    }

    fn tokenize<'a>(&self, text: &'a str) -> Vec<Token<'a>> {
        let mut tokens = Vec::new();
        let mut word_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if is_word_char(c) {
                word_start.get_or_insert(i);
                continue;
            }
            if let Some(start) = word_start.take() {
                tokens.push(Token {
                    text: &text[start..i],
                    start,
                    kind: TokenKind::Word,
                });
            }
            if !c.is_whitespace() {
                tokens.push(Token {
                    text: &text[i..i + c.len_utf8()],
                    start: i,
                    kind: TokenKind::Punct,
                });
            }
        }
        if let Some(start) = word_start {
            tokens.push(Token {
                text: &text[start..],
                start,
                kind: TokenKind::Word,
            });
        }
        tokens
    }

    fn count_tokens(&self, text: &str) -> usize {
        let mut count = 0;
        let mut in_word = false;
        for c in text.chars() {
            if is_word_char(c) {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Tokenize with the default [`RuleTokenizer`].
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    RuleTokenizer.tokenize(text)
}

/// Count tokens with the default [`RuleTokenizer`].
pub fn count_tokens(text: &str) -> usize {
    RuleTokenizer.count_tokens(text)
}

/// Lowercased word tokens, the bag used by the hashing embedder and the mock
/// generator's overlap measure.
pub fn lowercase_words(text: &str) -> impl Iterator<Item = String> + '_ {
    tokenize(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Word)
        .map(|t| t.text.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts<'a>(tokens: &[Token<'a>]) -> Vec<&'a str> {
        tokens.iter().map(|t| t.text).collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(" \n\t "), 0);
    }

    #[test]
    fn hello_world() {
        let toks = tokenize("Hello, world!");
        assert_eq!(texts(&toks), ["Hello", ",", "world", "!"]);
        assert_eq!(toks[1].kind, TokenKind::Punct);
        assert_eq!(toks[2].start, 7);
    }

    #[test]
    fn simple_counts() {
        assert_eq!(count_tokens("a b c"), 3);
        assert_eq!(count_tokens("snake_case x2"), 2);
        assert_eq!(count_tokens("---"), 3);
    }

    #[test]
    fn unicode_words() {
        let toks = tokenize("naïve café—ok");
        assert_eq!(texts(&toks), ["naïve", "café", "—", "ok"]);
        assert_eq!(toks[2].kind, TokenKind::Punct);
    }

    #[test]
    fn spec_is_stable() {
        let spec = RuleTokenizer.spec();
        assert_eq!(spec.name, RULE_TOKENIZER_NAME);
        assert_eq!(spec.version, RULE_TOKENIZER_VERSION);
    }

    proptest! {
        #[test]
        fn gaps_are_whitespace_and_reconstruct(s in "\\PC{0,80}") {
            let toks = tokenize(&s);
            let mut cursor = 0;
            let mut rebuilt = String::new();
            for t in &toks {
                prop_assert!(t.start >= cursor);
                let gap = &s[cursor..t.start];
                prop_assert!(gap.chars().all(char::is_whitespace));
                rebuilt.push_str(gap);
                rebuilt.push_str(t.text);
                cursor = t.end();
            }
            prop_assert!(s[cursor..].chars().all(char::is_whitespace));
            rebuilt.push_str(&s[cursor..]);
            prop_assert_eq!(rebuilt, s.clone());
        }

        #[test]
        fn count_matches_tokenize(s in "\\PC{0,120}") {
            prop_assert_eq!(count_tokens(&s), tokenize(&s).len());
        }

        #[test]
        fn paragraph_join_is_additive(a in "\\PC{0,40}", b in "\\PC{0,40}") {
            let joined = format!("{a}\n\n{b}");
            prop_assert_eq!(count_tokens(&joined), count_tokens(&a) + count_tokens(&b));
        }
    }
}
