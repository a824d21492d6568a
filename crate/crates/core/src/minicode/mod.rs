//! A small C-like function language used as the code side of synthetic
//! corpora and as the target of variable-misuse mutation.
//!
//! Grammar (informal):
//!
//! ```text
//! unit    := "fn" IDENT "(" [IDENT ("," IDENT)*] ")" "{" stmt* "}"
//! stmt    := "let" IDENT "=" expr ";" | IDENT "=" expr ";" | "return" expr ";"
//!          | "if" "(" expr ")" "{" stmt* "}" ["else" "{" stmt* "}"]
//!          | "while" "(" expr ")" "{" stmt* "}"
//! ```
//!
//! Scope analysis is flat: a name is in scope at every token after its
//! definition, there is no shadowing and no nesting of functions.

mod lexer;
mod scope;

pub use lexer::{lex, render, CodeToken, TokenKind, KEYWORDS};
pub use scope::{analyze_scope, splice_identifier, ScopeReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MinicodeError {
    #[error("unterminated string starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("unbalanced delimiter at token {index}")]
    UnbalancedDelimiters { index: usize },
    #[error("`{name}` defined twice (token {index})")]
    DuplicateDefinition { name: String, index: usize },
    #[error("input is not a single `fn` unit")]
    NoFunction,
    #[error("malformed function at token {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("token {index} is not an identifier use")]
    NotAUse { index: usize },
    #[error("`{name}` is not in scope at token {index}")]
    NotInScope { name: String, index: usize },
}
