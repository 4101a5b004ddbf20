//! Model formulas.
//!
//! Linear formulas use the Wilkinson-Rogers notation restricted to column
//! names: `+` adds terms, `:` forms interactions, `a*b` expands to
//! `a + b + a:b`, `0`/`-1` drop the intercept and `1` keeps it. Nonlinear
//! model expressions live in [`expr`], design matrices in [`design`].

pub mod design;
pub mod expr;

use std::fmt;

use crate::error::{ResiError, Result};

pub use design::{build_design, build_design_with_levels, DesignMatrix, FactorLevels, TermColumns};
pub use expr::{parse_nls_expression, parse_nls_formula, BinaryOp, Expr};

/// A main effect (one factor) or an interaction (several distinct factors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    factors: Vec<String>,
}

impl Term {
    pub fn new(factors: Vec<String>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ResiError::Formula("empty term".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].contains(f) {
                return Err(ResiError::Formula(format!("factor `{f}` repeated in term")));
            }
        }
        Ok(Term { factors })
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn label(&self) -> String {
        self.factors.join(":")
    }

    /// Same factor set, ignoring order.
    pub fn same_factors(&self, other: &Term) -> bool {
        self.order() == other.order() && self.factors.iter().all(|f| other.factors.contains(f))
    }

    /// True when `other` contains every factor of `self` plus at least one more.
    pub fn is_contained_in(&self, other: &Term) -> bool {
        other.order() > self.order() && self.factors.iter().all(|f| other.factors.contains(f))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    response: String,
    terms: Vec<Term>,
    intercept: bool,
}

impl Formula {
    pub fn new(response: impl Into<String>, terms: Vec<Term>, intercept: bool) -> Self {
        Formula {
            response: response.into(),
            terms,
            intercept,
        }
    }

    /// Intercept-only formula for the given response.
    pub fn intercept_only(response: impl Into<String>) -> Self {
        Formula::new(response, Vec::new(), true)
    }

    pub fn response(&self) -> &str {
        &self.response
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Every column referenced by the formula, response first.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = vec![self.response.as_str()];
        for t in &self.terms {
            for f in &t.factors {
                if !out.contains(&f.as_str()) {
                    out.push(f);
                }
            }
        }
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        let mut parts: Vec<String> = Vec::new();
        if !self.intercept {
            parts.push("0".into());
        } else if self.terms.is_empty() {
            parts.push("1".into());
        }
        parts.extend(self.terms.iter().map(Term::label));
        f.write_str(&parts.join(" + "))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Zero,
    One,
    Plus,
    Minus,
    Star,
    Colon,
    LParen,
    RParen,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1
            }
            ':' => {
                tokens.push(Token::Colon);
                i += 1
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                match lit.as_str() {
                    "0" => tokens.push(Token::Zero),
                    "1" => tokens.push(Token::One),
                    _ => return Err(ResiError::Formula(format!("unknown token `{lit}`"))),
                }
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(ResiError::Formula(format!("unknown token `{other}`"))),
        }
    }
    Ok(tokens)
}

/// Intermediate value of a right-hand-side sub-expression.
#[derive(Debug, Default)]
struct TermSet {
    terms: Vec<Vec<String>>,
    intercept: Option<bool>,
}

impl TermSet {
    fn push_unique(&mut self, term: Vec<String>) {
        if !self.terms.iter().any(|t| same_set(t, &term)) {
            self.terms.push(term);
        }
    }
}

fn same_set(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

struct RhsParser {
    tokens: Vec<Token>,
    pos: usize,
}

impl RhsParser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn sum(&mut self) -> Result<TermSet> {
        let mut acc = if self.peek() == Some(&Token::Minus) {
            TermSet::default()
        } else {
            self.product()?
        };
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.product()?;
                    if rhs.intercept.is_some() {
                        acc.intercept = rhs.intercept;
                    }
                    for t in rhs.terms {
                        acc.push_unique(t);
                    }
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.product()?;
                    if let Some(flag) = rhs.intercept {
                        acc.intercept = Some(!flag);
                    }
                    acc.terms.retain(|t| !rhs.terms.iter().any(|r| same_set(t, r)));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<TermSet> {
        let mut acc = self.atom()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => Token::Star,
                Some(Token::Colon) => Token::Colon,
                _ => return Ok(acc),
            };
            self.pos += 1;
            let rhs = self.atom()?;
            if acc.intercept.is_some() || rhs.intercept.is_some() {
                return Err(ResiError::Formula(
                    "intercept markers cannot appear inside interactions".into(),
                ));
            }
            let mut out = TermSet::default();
            if op == Token::Star {
                for t in acc.terms.iter().chain(rhs.terms.iter()) {
                    out.push_unique(t.clone());
                }
            }
            for a in &acc.terms {
                for b in &rhs.terms {
                    let mut joined = a.clone();
                    for f in b {
                        if !joined.contains(f) {
                            joined.push(f.clone());
                        }
                    }
                    out.push_unique(joined);
                }
            }
            acc = out;
        }
    }

    fn atom(&mut self) -> Result<TermSet> {
        match self.next() {
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    return Err(ResiError::Formula(format!(
                        "unknown token `{name}(`: functions are not supported in linear formulas"
                    )));
                }
                Ok(TermSet {
                    terms: vec![vec![name]],
                    intercept: None,
                })
            }
            Some(Token::Zero) => Ok(TermSet {
                terms: Vec::new(),
                intercept: Some(false),
            }),
            Some(Token::One) => Ok(TermSet {
                terms: Vec::new(),
                intercept: Some(true),
            }),
            Some(Token::LParen) => {
                let inner = self.sum()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(ResiError::Formula("unbalanced parentheses".into())),
                }
            }
            Some(tok) => Err(ResiError::Formula(format!("unexpected token {tok:?}"))),
            None => Err(ResiError::Formula("unexpected end of formula".into())),
        }
    }
}

/// Parses a linear model formula such as `charges ~ region * age + sex + bmi`.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut sides = text.split('~');
    let lhs = sides.next().unwrap_or_default();
    let rhs = sides
        .next()
        .ok_or_else(|| ResiError::Formula("formula must contain `~`".into()))?;
    if sides.next().is_some() {
        return Err(ResiError::Formula("duplicate `~`".into()));
    }
    let response = lhs.trim();
    if response.is_empty() {
        return Err(ResiError::Formula("empty response".into()));
    }
    if !response.chars().next().is_some_and(is_ident_start) || !response.chars().all(is_ident_char) {
        return Err(ResiError::Formula(format!("invalid response `{response}`")));
    }

    let tokens = tokenize(rhs)?;
    if tokens.is_empty() {
        return Err(ResiError::Formula("empty right-hand side".into()));
    }
    let mut parser = RhsParser { tokens, pos: 0 };
    let set = parser.sum()?;
    if let Some(tok) = parser.peek() {
        return Err(ResiError::Formula(match tok {
            Token::RParen => "unbalanced parentheses".to_string(),
            other => format!("unexpected token {other:?}"),
        }));
    }

    let mut terms = set
        .terms
        .into_iter()
        .map(Term::new)
        .collect::<Result<Vec<_>>>()?;
    if terms
        .iter()
        .any(|t| t.factors().iter().any(|f| f == response))
    {
        return Err(ResiError::Formula(format!(
            "response `{response}` also appears on the right-hand side"
        )));
    }
    // stable: main effects keep appearance order, interactions follow by order
    terms.sort_by_key(Term::order);
    Ok(Formula::new(response, terms, set.intercept.unwrap_or(true)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(f: &Formula) -> Vec<String> {
        f.terms().iter().map(Term::label).collect()
    }

    #[test]
    fn star_expands_to_main_effects_and_interaction() {
        let f = parse_formula("charges ~ region * age + sex + bmi").unwrap();
        assert_eq!(f.response(), "charges");
        assert_eq!(labels(&f), ["region", "age", "sex", "bmi", "region:age"]);
        assert!(f.has_intercept());
    }

    #[test]
    fn intercept_only_and_duplicates() {
        let f = parse_formula("y ~ 1").unwrap();
        assert!(f.terms().is_empty());
        assert!(f.has_intercept());
        let f = parse_formula("y ~ a + a").unwrap();
        assert_eq!(labels(&f), ["a"]);
    }

    #[test]
    fn colon_yields_only_interaction() {
        let f = parse_formula("y ~ a:b").unwrap();
        assert_eq!(labels(&f), ["a:b"]);
        let f = parse_formula("y ~ a:b + b:a").unwrap();
        assert_eq!(labels(&f), ["a:b"]);
    }

    #[test]
    fn removing_intercept() {
        assert!(!parse_formula("y ~ 0 + a").unwrap().has_intercept());
        assert!(!parse_formula("y ~ a - 1").unwrap().has_intercept());
        assert!(parse_formula("y ~ a + 1").unwrap().has_intercept());
    }

    #[test]
    fn three_way_star_orders_by_interaction_order() {
        let f = parse_formula("y ~ a*b*c").unwrap();
        assert_eq!(labels(&f), ["a", "b", "c", "a:b", "a:c", "b:c", "a:b:c"]);
        let f = parse_formula("y ~ (a + b):c").unwrap();
        assert_eq!(labels(&f), ["a:c", "b:c"]);
        let f = parse_formula("y ~ a*b - a:b").unwrap();
        assert_eq!(labels(&f), ["a", "b"]);
    }

    #[test]
    fn errors() {
        assert!(parse_formula(" ~ a").is_err());
        assert!(parse_formula("y ~ a ~ b").is_err());
        assert!(parse_formula("y a").is_err());
        assert!(parse_formula("y ~ a^2").is_err());
        assert!(parse_formula("y ~ log(a)").is_err());
        assert!(parse_formula("y ~ (a + b").is_err());
        assert!(parse_formula("y ~ a + b)").is_err());
        assert!(parse_formula("y ~ 2").is_err());
        assert!(parse_formula("y ~ y + a").is_err());
    }

    #[test]
    fn display_round_trip() {
        for text in [
            "y ~ 1",
            "y ~ 0 + a",
            "charges ~ region * age + sex + bmi",
            "y ~ b:a + a",
            "y ~ a*b*c - 1",
        ] {
            let f = parse_formula(text).unwrap();
            let again = parse_formula(&f.to_string()).unwrap();
            assert_eq!(f, again, "{text}");
        }
    }
}
