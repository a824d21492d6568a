use serde::{Deserialize, Serialize};

use super::lexer::{render, CodeToken, TokenKind};
use super::MinicodeError;

/// Definitions and uses of one `fn` unit under flat scoping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeReport {
    pub function_name: String,
    pub params: Vec<(String, usize)>,
    pub lets: Vec<(String, usize)>,
    pub uses: Vec<(String, usize)>,
    /// Identifiers that are neither definitions, call targets, nor in scope where they occur.
    pub free: Vec<(String, usize)>,
    /// Token index range `[start, end]` of the function, inclusive.
    pub span: (usize, usize),
}

impl ScopeReport {
    /// Parameters then `let` bindings, in token order.
    pub fn defs(&self) -> impl Iterator<Item = &(String, usize)> {
        self.params.iter().chain(self.lets.iter())
    }

    pub fn def_index(&self, name: &str) -> Option<usize> {
        self.defs().find(|(n, _)| n == name).map(|&(_, i)| i)
    }

    /// Names whose definition precedes token `index`.
    pub fn in_scope_at(&self, index: usize) -> Vec<&str> {
        self.defs().filter(|&&(_, d)| d < index).map(|(n, _)| n.as_str()).collect()
    }

    pub fn use_at(&self, index: usize) -> Option<&str> {
        self.uses.iter().find(|&&(_, i)| i == index).map(|(n, _)| n.as_str())
    }
}

fn check_balanced(tokens: &[CodeToken]) -> Result<(), MinicodeError> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Punct) {
        let c = t.text.chars().next().unwrap_or(' ');
        match c {
            '(' | '{' | '[' => stack.push((c, t.index)),
            ')' | '}' | ']' => {
                let want = match c {
                    ')' => '(',
                    '}' => '{',
                    _ => '[',
                };
                match stack.pop() {
                    Some((open, _)) if open == want => {}
                    _ => return Err(MinicodeError::UnbalancedDelimiters { index: t.index }),
                }
            }
            _ => {}
        }
    }
    match stack.pop() {
        Some((_, index)) => Err(MinicodeError::UnbalancedDelimiters { index }),
        None => Ok(()),
    }
}

fn matching_close(tokens: &[CodeToken], open: usize) -> usize {
    let (o, c) = match tokens[open].text.as_str() {
        "(" => ("(", ")"),
        "{" => ("{", "}"),
        _ => ("[", "]"),
    };
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.is_punct(o) {
            depth += 1;
        } else if t.is_punct(c) {
            depth -= 1;
            if depth == 0 {
                return i;
            }
        }
    }
    unreachable!("delimiters were checked for balance")
}

fn malformed(index: usize, reason: &str) -> MinicodeError {
    MinicodeError::Malformed { index, reason: reason.to_string() }
}

/// Classifies every identifier of a single `fn name(params) { body }` unit.
pub fn analyze_scope(tokens: &[CodeToken]) -> Result<ScopeReport, MinicodeError> {
    check_balanced(tokens)?;
    if !tokens.first().is_some_and(|t| t.is_keyword("fn")) {
        return Err(MinicodeError::NoFunction);
    }
    let name = match tokens.get(1) {
        Some(t) if t.kind == TokenKind::Ident => t.text.clone(),
        _ => return Err(MinicodeError::NoFunction),
    };
    if !tokens.get(2).is_some_and(|t| t.is_punct("(")) {
        return Err(malformed(2, "expected `(` after function name"));
    }
    let params_end = matching_close(tokens, 2);
    let mut params: Vec<(String, usize)> = Vec::new();
    let mut i = 3;
    while i < params_end {
        let t = &tokens[i];
        if t.kind != TokenKind::Ident {
            return Err(malformed(i, "expected parameter name"));
        }
        if params.iter().any(|(n, _)| *n == t.text) {
            return Err(MinicodeError::DuplicateDefinition { name: t.text.clone(), index: i });
        }
        params.push((t.text.clone(), i));
        i += 1;
        if i < params_end {
            if !tokens[i].is_punct(",") || i + 1 == params_end {
                return Err(malformed(i, "expected `,` between parameters"));
            }
            i += 1;
        }
    }
    let body_start = params_end + 1;
    if !tokens.get(body_start).is_some_and(|t| t.is_punct("{")) {
        return Err(malformed(body_start, "expected `{` to open the body"));
    }
    let body_end = matching_close(tokens, body_start);
    if body_end + 1 != tokens.len() {
        return Err(malformed(body_end + 1, "tokens after the function body"));
    }

    let mut lets: Vec<(String, usize)> = Vec::new();
    let mut uses = Vec::new();
    let mut free = Vec::new();
    let mut i = body_start + 1;
    while i < body_end {
        let t = &tokens[i];
        if t.is_keyword("fn") {
            return Err(malformed(i, "nested functions are not supported"));
        }
        if t.is_keyword("let") {
            let def = tokens.get(i + 1).filter(|d| d.kind == TokenKind::Ident && i + 1 < body_end);
            let Some(def) = def else {
                return Err(malformed(i + 1, "expected a name after `let`"));
            };
            if params.iter().chain(lets.iter()).any(|(n, _)| *n == def.text) {
                return Err(MinicodeError::DuplicateDefinition { name: def.text.clone(), index: i + 1 });
            }
            lets.push((def.text.clone(), i + 1));
            i += 2;
            continue;
        }
        if t.kind == TokenKind::Ident {
            let is_call = tokens.get(i + 1).is_some_and(|n| n.is_punct("("));
            if !is_call {
                let defined = params.iter().chain(lets.iter()).any(|(n, d)| *n == t.text && *d < i);
                if defined {
                    uses.push((t.text.clone(), i));
                } else {
                    free.push((t.text.clone(), i));
                }
            }
        }
        i += 1;
    }
    Ok(ScopeReport { function_name: name, params, lets, uses, free, span: (0, body_end) })
}

/// Replaces the identifier used at `use_index` with `new_name` and re-renders.
pub fn splice_identifier(tokens: &[CodeToken], use_index: usize, new_name: &str) -> Result<String, MinicodeError> {
    let report = analyze_scope(tokens)?;
    if report.use_at(use_index).is_none() {
        return Err(MinicodeError::NotAUse { index: use_index });
    }
    if !report.in_scope_at(use_index).contains(&new_name) {
        return Err(MinicodeError::NotInScope { name: new_name.to_string(), index: use_index });
    }
    let mut out = tokens.to_vec();
    out[use_index].text = new_name.to_string();
    Ok(render(&out))
}
