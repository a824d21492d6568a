use super::CorpusError;
use crate::minicode;

/// English function words whose positions a comment shuffle never touches.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "of", "to", "in", "on", "for", "with", "by", "from", "at", "as", "and", "or", "but", "if",
    "then", "else", "is", "are", "was", "were", "be", "been", "it", "its", "this", "that", "these", "those",
    "which", "who", "what", "when", "where", "how", "not", "no", "into", "than", "so", "such", "can", "will",
    "do", "does", "all", "any", "each",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Single-character tokens that are neither word characters nor whitespace.
pub fn is_punct_token(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !is_word_char(c) && !c.is_whitespace())
}

fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lowercases, splits on whitespace and emits punctuation as single-char tokens.
pub fn tokenize_comment(text: &str) -> Result<Vec<String>, CorpusError> {
    let tokens = split_words(&text.to_lowercase());
    if tokens.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    Ok(tokens)
}

/// Minicode lexer tokens when the text lexes, otherwise a word/symbol split. Case is kept.
pub fn tokenize_code(text: &str) -> Result<Vec<String>, CorpusError> {
    let tokens = match minicode::lex(text) {
        Ok(toks) => toks.into_iter().map(|t| t.text).collect(),
        Err(_) => split_words(text),
    };
    if tokens.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    Ok(tokens)
}
