use serde::{Deserialize, Serialize};

use super::MinicodeError;

pub const KEYWORDS: [&str; 6] = ["fn", "let", "return", "if", "else", "while"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Ident,
    Keyword,
    Number,
    String,
    Punct,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeToken {
    pub kind: TokenKind,
    pub text: String,
    pub index: usize,
}

impl CodeToken {
    pub fn is_punct(&self, c: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == c
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == kw
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Maximal-munch tokenizer; whitespace is dropped.
pub fn lex(source: &str) -> Result<Vec<CodeToken>, MinicodeError> {
    let mut out = Vec::new();
    let mut chars = source.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind;
        let mut end = start + c.len_utf8();
        chars.next();
        if is_ident_start(c) {
            while let Some(&(i, n)) = chars.peek() {
                if !is_ident_continue(n) {
                    break;
                }
                end = i + n.len_utf8();
                chars.next();
            }
            kind = if KEYWORDS.contains(&&source[start..end]) { TokenKind::Keyword } else { TokenKind::Ident };
        } else if c.is_ascii_digit() {
            let mut seen_dot = false;
            while let Some(&(i, n)) = chars.peek() {
                if n.is_ascii_digit() {
                    end = i + 1;
                    chars.next();
                } else if n == '.' && !seen_dot && source[i + 1..].starts_with(|d: char| d.is_ascii_digit()) {
                    seen_dot = true;
                    end = i + 1;
                    chars.next();
                } else {
                    break;
                }
            }
            kind = TokenKind::Number;
        } else if c == '"' {
            let mut closed = false;
            while let Some((i, n)) = chars.next() {
                end = i + n.len_utf8();
                match n {
                    '\\' => {
                        if let Some((j, e)) = chars.next() {
                            end = j + e.len_utf8();
                        }
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    _ => {}
                }
            }
            if !closed {
                return Err(MinicodeError::UnterminatedString { offset: start });
            }
            kind = TokenKind::String;
        } else {
            kind = TokenKind::Punct;
        }
        let index = out.len();
        out.push(CodeToken { kind, text: source[start..end].to_string(), index });
    }
    Ok(out)
}

/// Joins token texts with single spaces.
pub fn render(tokens: &[CodeToken]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&t.text);
    }
    s
}
