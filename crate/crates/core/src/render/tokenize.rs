use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    /// Run of Latin alphanumerics and symbols, never split across lines.
    Word,
    /// Any other single code point (CJK and so on).
    Char,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// Whitespace between the previous token (or start of text) and this one.
    pub space_before: String,
}

/// Tokens plus the whitespace trailing the last one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenized {
    pub tokens: Vec<Token>,
    pub trailing: String,
}

impl Tokenized {
    /// Non-empty whitespace runs between tokens.
    pub fn separators(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().skip(1).map(|t| t.space_before.as_str()).filter(|s| !s.is_empty())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Reassembles the source text exactly.
    pub fn join(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(&t.space_before);
            s.push_str(&t.text);
        }
        s.push_str(&self.trailing);
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Latin letters (ASCII and the Latin-1/Extended-A/B blocks), digits and
/// ASCII symbols.
pub fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && (c.is_ascii_graphic() || matches!(c as u32, 0xC0..=0x24F))
}

pub fn tokenize(text: &str) -> Tokenized {
    let mut out = Tokenized::default();
    let mut space = String::new();
    let mut word = String::new();
    let flush = |word: &mut String, space: &mut String, out: &mut Tokenized| {
        if !word.is_empty() {
            out.tokens.push(Token {
                text: std::mem::take(word),
                kind: TokenKind::Word,
                space_before: std::mem::take(space),
            });
        }
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut space, &mut out);
            space.push(c);
        } else if is_word_char(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut space, &mut out);
            out.tokens.push(Token { text: c.to_string(), kind: TokenKind::Char, space_before: std::mem::take(&mut space) });
        }
    }
    flush(&mut word, &mut space, &mut out);
    out.trailing = space;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn words_and_separators() {
        let t = tokenize("add a cat");
        assert_eq!(t.texts(), ["add", "a", "cat"]);
        assert_eq!(t.separators().count(), 2);
        assert!(t.tokens.iter().all(|t| t.kind == TokenKind::Word));
    }

    #[test]
    fn alphanumeric_run_is_one_token() {
        assert_eq!(tokenize("abc123").texts(), ["abc123"]);
        assert_eq!(tokenize("x=1+2!").texts(), ["x=1+2!"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn cjk_chars_are_isolated() {
        let t = tokenize("draw ねこ here");
        assert_eq!(t.texts(), ["draw", "ね", "こ", "here"]);
        assert_eq!(t.tokens[1].kind, TokenKind::Char);
        assert_eq!(t.tokens[2].space_before, "");
    }

    proptest! {
        #[test]
        fn join_reproduces_input(s in "[a-z0-9 \\n!ねこ漢é]{0,40}") {
            let t = tokenize(&s);
            prop_assert_eq!(t.join(), s);
            for tok in &t.tokens {
                prop_assert!(!tok.text.chars().any(char::is_whitespace));
                prop_assert!(tok.space_before.chars().all(char::is_whitespace));
            }
        }
    }
}
