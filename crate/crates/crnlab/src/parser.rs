//! Text format for reaction networks.
//!
//! ```text
//! # M/M/infinity queue
//! 0 <-> S1 @ 1.0, 2.0
//! 2 S1 + S2 -> 2 S1 + 2 S2 @ 0.5
//! ```
//!
//! One reaction per line. `<->` declares a forward and a backward reaction and
//! needs two rates. The empty complex is written `0`. Species are numbered in
//! order of first appearance unless an optional leading declaration
//! `species: A, B, ...` fixes the order (or lists species used by no reaction).

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::network::{Complex, Reaction, ReactionNetwork};

/// Model text plus a display name used in diagnostics.
#[derive(Debug, Clone)]
pub struct ModelSource {
    pub text: String,
    pub name: String,
}

impl ModelSource {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        ModelSource { text: text.into(), name: name.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParseErrorKind {
    UnknownToken,
    UnexpectedToken,
    MissingRate,
    NonPositiveRate,
    InvalidCoefficient,
    SelfLoop,
    DuplicateReaction,
    InvalidDeclaration,
}

/// A located parse failure. `line` and `column` are 1-based and point at the
/// first character of `token`.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: {message} (at {token:?})")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number,
    Ident,
    Arrow,
    BiArrow,
    Plus,
    At,
    Comma,
    Colon,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    text: String,
    column: usize,
}

fn err(kind: ParseErrorKind, line: usize, tok: &Token, message: impl Into<String>) -> ParseError {
    ParseError { kind, line, column: tok.column, message: message.into(), token: tok.text.clone() }
}

fn lex_line(line_no: usize, line: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let simple =
            |kind: Tok, len: usize| Token { kind, text: chars[start..start + len].iter().collect(), column: start + 1 };
        if c == '#' {
            break;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '<' && chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') {
            out.push(simple(Tok::BiArrow, 3));
            i += 3;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(simple(Tok::Arrow, 2));
            i += 2;
        } else if c == '+' {
            out.push(simple(Tok::Plus, 1));
            i += 1;
        } else if c == '@' {
            out.push(simple(Tok::At, 1));
            i += 1;
        } else if c == ',' {
            out.push(simple(Tok::Comma, 1));
            i += 1;
        } else if c == ':' {
            out.push(simple(Tok::Colon, 1));
            i += 1;
        } else if c.is_ascii_digit()
            || c == '.'
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.'))
        {
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                // An exponent marker only counts when a digit or sign follows,
                // so "2S1" still splits into "2" and "S1" but "1e-3" stays whole.
                let exp = matches!(d, 'e' | 'E')
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '-' || *n == '+');
                if d.is_ascii_digit() || d == '.' || exp || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token { kind: Tok::Number, text: chars[start..i].iter().collect(), column: start + 1 });
        } else if c.is_alphabetic() || c == '_' {
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { kind: Tok::Ident, text: chars[start..i].iter().collect(), column: start + 1 });
        } else {
            let tok = Token { kind: Tok::Ident, text: c.to_string(), column: start + 1 };
            return Err(err(ParseErrorKind::UnknownToken, line_no, &tok, "unknown token"));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    line: usize,
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn last(&self) -> &'a Token {
        &self.toks[self.toks.len() - 1]
    }
}

struct Builder {
    species: Vec<String>,
    index: HashMap<String, usize>,
    /// (coefficient map) per side, keyed by species index.
    reactions: Vec<(Vec<(usize, u64)>, Vec<(usize, u64)>, f64, usize, Token)>,
}

impl Builder {
    fn species_index(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.species.push(name.to_string());
        self.index.insert(name.to_string(), self.species.len() - 1);
        self.species.len() - 1
    }
}

fn parse_side(cur: &mut Cursor, b: &mut Builder) -> Result<Vec<(usize, u64)>, ParseError> {
    let line = cur.line;
    let first = match cur.peek() {
        Some(t) => t,
        None => {
            return Err(err(ParseErrorKind::UnexpectedToken, line, cur.last(), "expected a complex"));
        }
    };
    if first.kind == Tok::Number && first.text == "0" {
        let is_empty = cur.toks.get(cur.pos + 1).is_none_or(|t| t.kind != Tok::Ident);
        if is_empty {
            cur.next();
            return Ok(Vec::new());
        }
    }
    let mut terms: Vec<(usize, u64)> = Vec::new();
    loop {
        let t = cur
            .next()
            .ok_or_else(|| err(ParseErrorKind::UnexpectedToken, line, cur.last(), "expected a species term"))?;
        let (coef, name_tok) = match t.kind {
            Tok::Number => {
                let coef: u64 = t.text.parse().map_err(|_| {
                    err(ParseErrorKind::InvalidCoefficient, line, t, "coefficient must be a positive integer")
                })?;
                if coef == 0 {
                    return Err(err(
                        ParseErrorKind::InvalidCoefficient,
                        line,
                        t,
                        "coefficient must be a positive integer",
                    ));
                }
                let name = cur.next().filter(|n| n.kind == Tok::Ident).ok_or_else(|| {
                    err(ParseErrorKind::UnexpectedToken, line, t, "coefficient must be followed by a species")
                })?;
                (coef, name)
            }
            Tok::Ident => (1, t),
            _ => return Err(err(ParseErrorKind::UnexpectedToken, line, t, "expected a species term")),
        };
        let s = b.species_index(&name_tok.text);
        match terms.iter_mut().find(|(i, _)| *i == s) {
            Some(entry) => {
                entry.1 = entry
                    .1
                    .checked_add(coef)
                    .ok_or_else(|| err(ParseErrorKind::InvalidCoefficient, line, name_tok, "coefficient overflow"))?
            }
            None => terms.push((s, coef)),
        }
        match cur.peek() {
            Some(t) if t.kind == Tok::Plus => {
                cur.next();
            }
            _ => return Ok(terms),
        }
    }
}

fn parse_rate(cur: &mut Cursor, after: &Token) -> Result<f64, ParseError> {
    let line = cur.line;
    let t = cur.next().ok_or_else(|| err(ParseErrorKind::MissingRate, line, after, "missing rate constant"))?;
    if t.kind != Tok::Number {
        return Err(err(ParseErrorKind::UnexpectedToken, line, t, "expected a rate constant"));
    }
    let v: f64 =
        t.text.parse().map_err(|_| err(ParseErrorKind::UnexpectedToken, line, t, "malformed rate constant"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(err(ParseErrorKind::NonPositiveRate, line, t, "rate constant must be positive"));
    }
    Ok(v)
}

fn parse_declaration(cur: &mut Cursor, b: &mut Builder) -> Result<(), ParseError> {
    let line = cur.line;
    cur.next();
    cur.next();
    loop {
        let t = cur
            .next()
            .ok_or_else(|| err(ParseErrorKind::InvalidDeclaration, line, cur.last(), "expected a species name"))?;
        if t.kind != Tok::Ident {
            return Err(err(ParseErrorKind::InvalidDeclaration, line, t, "expected a species name"));
        }
        if b.index.contains_key(&t.text) {
            return Err(err(ParseErrorKind::InvalidDeclaration, line, t, "species declared twice"));
        }
        b.species_index(&t.text);
        match cur.next() {
            None => return Ok(()),
            Some(c) if c.kind == Tok::Comma => continue,
            Some(c) => return Err(err(ParseErrorKind::InvalidDeclaration, line, c, "expected ','")),
        }
    }
}

fn dense(terms: &[(usize, u64)], n: usize) -> Complex {
    let mut v = vec![0; n];
    for &(i, k) in terms {
        v[i] = k;
    }
    Complex(v)
}

/// Parses model text into a network.
pub fn parse_network(src: &ModelSource) -> Result<ReactionNetwork, ParseError> {
    let mut b = Builder { species: Vec::new(), index: HashMap::new(), reactions: Vec::new() };
    let mut seen_reaction = false;
    for (li, raw) in src.text.lines().enumerate() {
        let line = li + 1;
        let toks = lex_line(line, raw)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor { line, toks: &toks, pos: 0 };
        if toks.len() >= 2 && toks[0].kind == Tok::Ident && toks[0].text == "species" && toks[1].kind == Tok::Colon {
            if seen_reaction || !b.species.is_empty() {
                return Err(err(
                    ParseErrorKind::InvalidDeclaration,
                    line,
                    &toks[0],
                    "species declaration must precede all reactions",
                ));
            }
            parse_declaration(&mut cur, &mut b)?;
            continue;
        }
        seen_reaction = true;
        let lhs = parse_side(&mut cur, &mut b)?;
        let arrow = cur
            .next()
            .ok_or_else(|| err(ParseErrorKind::UnexpectedToken, line, cur.last(), "expected '->' or '<->'"))?;
        let reversible = match arrow.kind {
            Tok::Arrow => false,
            Tok::BiArrow => true,
            _ => return Err(err(ParseErrorKind::UnexpectedToken, line, arrow, "expected '->' or '<->'")),
        };
        let rhs = parse_side(&mut cur, &mut b)?;
        let at = match cur.next() {
            Some(t) if t.kind == Tok::At => t,
            Some(t) => return Err(err(ParseErrorKind::UnexpectedToken, line, t, "expected '@'")),
            None => return Err(err(ParseErrorKind::MissingRate, line, cur.last(), "missing '@' and rate")),
        };
        let forward = parse_rate(&mut cur, at)?;
        let backward = if reversible {
            let comma = match cur.next() {
                Some(t) if t.kind == Tok::Comma => t,
                Some(t) => return Err(err(ParseErrorKind::UnexpectedToken, line, t, "expected ','")),
                None => return Err(err(ParseErrorKind::MissingRate, line, cur.last(), "'<->' needs a backward rate")),
            };
            Some(parse_rate(&mut cur, comma)?)
        } else {
            None
        };
        if let Some(t) = cur.next() {
            return Err(err(ParseErrorKind::UnexpectedToken, line, t, "unexpected trailing token"));
        }
        b.reactions.push((lhs.clone(), rhs.clone(), forward, line, arrow.clone()));
        if let Some(k) = backward {
            b.reactions.push((rhs, lhs, k, line, arrow.clone()));
        }
    }

    let n = b.species.len();
    let mut reactions = Vec::with_capacity(b.reactions.len());
    let mut first_seen: HashMap<(Complex, Complex), usize> = HashMap::new();
    for (lhs, rhs, rate, line, arrow) in &b.reactions {
        let (s, t) = (dense(lhs, n), dense(rhs, n));
        if s == t {
            return Err(err(ParseErrorKind::SelfLoop, *line, arrow, "source and target complexes coincide"));
        }
        if let Some(first) = first_seen.insert((s.clone(), t.clone()), *line) {
            return Err(err(
                ParseErrorKind::DuplicateReaction,
                *line,
                arrow,
                format!("reaction already declared on line {first}"),
            ));
        }
        reactions.push(Reaction::new(s, t, *rate));
    }
    // Validated above, so construction cannot fail.
    Ok(ReactionNetwork::new(b.species, reactions).expect("validated network"))
}

/// Parses a model from a plain string.
pub fn parse_str(text: &str) -> Result<ReactionNetwork, ParseError> {
    parse_network(&ModelSource::new("<string>", text))
}

/// Canonical text for a network; `parse_network` of the result rebuilds an
/// equal network. Each reaction is written on its own `->` line, and a
/// `species:` line is emitted only when first-appearance order would not
/// reproduce the species list.
pub fn render_network(net: &ReactionNetwork) -> String {
    let mut out = String::new();
    let mut order: Vec<usize> = Vec::new();
    for r in net.reactions() {
        for c in [&r.source, &r.target] {
            for (i, &k) in c.0.iter().enumerate() {
                if k > 0 && !order.contains(&i) {
                    order.push(i);
                }
            }
        }
    }
    let natural = order.len() == net.n_species() && order.iter().enumerate().all(|(a, &b)| a == b);
    if !natural {
        out.push_str("species: ");
        out.push_str(&net.species().join(", "));
        out.push('\n');
    }
    for r in net.reactions() {
        out.push_str(&format!("{} -> {} @ {}\n", net.complex_label(&r.source), net.complex_label(&r.target), r.rate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(text: &str) -> ParseError {
        parse_str(text).unwrap_err()
    }

    #[test]
    fn reversible_pair_expands_forward_then_backward() {
        let net = parse_str("0 <-> S1 @ 1.0, 2.0").unwrap();
        assert_eq!(net.n_species(), 1);
        assert_eq!(net.reactions().len(), 2);
        assert_eq!(net.reactions()[0].source.0, vec![0]);
        assert_eq!(net.reactions()[0].rate, 1.0);
        assert_eq!(net.reactions()[1].source.0, vec![1]);
        assert_eq!(net.reactions()[1].rate, 2.0);
    }

    #[test]
    fn coefficients_and_species_order() {
        let net = parse_str("2 S1 + S2 -> 2 S1 + 2 S2 @ 0.5").unwrap();
        assert_eq!(net.species(), &["S1".to_string(), "S2".to_string()]);
        let r = &net.reactions()[0];
        assert_eq!(r.source.0, vec![2, 1]);
        assert_eq!(r.target.0, vec![2, 2]);
        assert_eq!(r.rate, 0.5);
    }

    #[test]
    fn duplicate_species_in_a_side_are_summed() {
        let net = parse_str("A + A + 2 B -> 0 @ 1").unwrap();
        assert_eq!(net.reactions()[0].source.0, vec![2, 2]);
        let net = parse_str("2A -> A @ 1").unwrap();
        assert_eq!(net.reactions()[0].source.0, vec![2]);
    }

    #[test]
    fn comments_blank_lines_and_exponents() {
        let net = parse_str("# header\n\n  X -> 0 @ 1e-3 # trailing\n").unwrap();
        assert_eq!(net.reactions()[0].rate, 1e-3);
    }

    #[test]
    fn self_loop_is_rejected() {
        let e = parse_err("S1 -> S1 @ 1.0");
        assert_eq!(e.kind, ParseErrorKind::SelfLoop);
        assert_eq!((e.line, e.column, e.token.as_str()), (1, 4, "->"));
    }

    #[test]
    fn duplicate_reaction_is_rejected() {
        let e = parse_err("A -> B @ 1\nA -> B @ 2\n");
        assert_eq!(e.kind, ParseErrorKind::DuplicateReaction);
        assert_eq!(e.line, 2);
        let e = parse_err("A <-> B @ 1, 2\nB -> A @ 3\n");
        assert_eq!(e.kind, ParseErrorKind::DuplicateReaction);
    }

    #[test]
    fn rate_errors() {
        let e = parse_err("A -> B");
        assert_eq!(e.kind, ParseErrorKind::MissingRate);
        assert_eq!(e.token, "B");
        let e = parse_err("A -> B @");
        assert_eq!(e.kind, ParseErrorKind::MissingRate);
        assert_eq!((e.column, e.token.as_str()), (8, "@"));
        let e = parse_err("A <-> B @ 1");
        assert_eq!(e.kind, ParseErrorKind::MissingRate);
        let e = parse_err("A -> B @ 0");
        assert_eq!(e.kind, ParseErrorKind::NonPositiveRate);
        let e = parse_err("A -> B @ -2.5");
        assert_eq!(e.kind, ParseErrorKind::NonPositiveRate);
        assert_eq!((e.column, e.token.as_str()), (10, "-2.5"));
    }

    #[test]
    fn unknown_token_location() {
        let e = parse_err("A -> B @ 1\nA + $ -> B @ 1");
        assert_eq!(e.kind, ParseErrorKind::UnknownToken);
        assert_eq!((e.line, e.column, e.token.as_str()), (2, 5, "$"));
    }

    #[test]
    fn zero_must_stand_alone() {
        assert_eq!(parse_err("0 S1 -> 0 @ 1").kind, ParseErrorKind::InvalidCoefficient);
        assert_eq!(parse_err("0 + S1 -> S2 @ 1").kind, ParseErrorKind::UnexpectedToken);
    }

    #[test]
    fn render_examples() {
        let t1 = "S1 -> S2 @ 3\nS2 -> S1 + S2 @ 1\nS1 + S2 -> S1 @ 2\n";
        let net = parse_str(t1).unwrap();
        assert_eq!(render_network(&net), t1);
        assert_eq!(parse_str(&render_network(&net)).unwrap(), net);
        let mm = parse_str("0 <-> S1 @ 1, 2").unwrap();
        assert_eq!(render_network(&mm), "0 -> S1 @ 1\nS1 -> 0 @ 2\n");
        let cap = parse_str("2 S1 + S2 -> 2 S1 + 2 S2 @ 0.5").unwrap();
        assert_eq!(render_network(&cap), "2 S1 + S2 -> 2 S1 + 2 S2 @ 0.5\n");
    }

    #[test]
    fn declaration_fixes_order_and_keeps_unused_species() {
        let net = parse_str("species: B, A, C\nA -> B @ 1\n").unwrap();
        assert_eq!(net.species(), &["B", "A", "C"]);
        assert_eq!(net.reactions()[0].source.0, vec![0, 1, 0]);
        let text = render_network(&net);
        assert!(text.starts_with("species: B, A, C\n"));
        assert_eq!(parse_str(&text).unwrap(), net);
        let e = parse_err("A -> B @ 1\nspecies: A, B\n");
        assert_eq!(e.kind, ParseErrorKind::InvalidDeclaration);
    }

    #[test]
    fn species_named_species_is_an_ordinary_identifier() {
        let net = parse_str("species -> 0 @ 1").unwrap();
        assert_eq!(net.species(), &["species"]);
    }
}
