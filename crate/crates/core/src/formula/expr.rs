//! Arithmetic expressions for nonlinear mean models, e.g. `s ~ c*a^z`.
//!
//! Precedence from tightest: `^` (right associative), unary minus, `*` `/`,
//! then `+` `-`. Identifiers listed as parameters become parameter nodes and
//! every other identifier refers to a data column. `exp` and `log` are the
//! only functions.

use std::collections::HashMap;
use std::fmt;

use crate::error::{ResiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Parameter with its position in the parameter list.
    Param { name: String, index: usize },
    Column(String),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    /// Data columns referenced by the expression, in first-appearance order.
    pub fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    /// Parameters referenced by the expression, in first-appearance order.
    pub fn parameters(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect(&mut out, true);
        out
    }

    fn collect_columns(&self, out: &mut Vec<String>) {
        self.collect(out, false)
    }

    fn collect(&self, out: &mut Vec<String>, params: bool) {
        match self {
            Expr::Column(name) | Expr::Param { name, .. } => {
                if matches!(self, Expr::Param { .. }) == params && !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Expr::Binary(_, a, b) => {
                a.collect(out, params);
                b.collect(out, params);
            }
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) => a.collect(out, params),
            Expr::Const(_) => {}
        }
    }

    /// Evaluates the expression on every row. `columns` maps column names to
    /// equally long value slices; `n` is the row count.
    pub fn eval(&self, params: &[f64], columns: &HashMap<&str, &[f64]>, n: usize) -> Result<Vec<f64>> {
        Ok(match self {
            Expr::Const(v) => vec![*v; n],
            Expr::Param { index, name } => {
                let v = params.get(*index).ok_or_else(|| {
                    ResiError::InvalidArgument(format!("no value for parameter `{name}`"))
                })?;
                vec![*v; n]
            }
            Expr::Column(name) => columns
                .get(name.as_str())
                .ok_or_else(|| ResiError::UnknownColumn(name.clone()))?
                .to_vec(),
            Expr::Binary(op, a, b) => {
                let a = a.eval(params, columns, n)?;
                let b = b.eval(params, columns, n)?;
                a.iter().zip(&b).map(|(&x, &y)| op.apply(x, y)).collect()
            }
            Expr::Neg(a) => a.eval(params, columns, n)?.into_iter().map(|x| -x).collect(),
            Expr::Exp(a) => a.eval(params, columns, n)?.into_iter().map(f64::exp).collect(),
            Expr::Log(a) => a.eval(params, columns, n)?.into_iter().map(f64::ln).collect(),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Param { name, .. } => f.write_str(name),
            Expr::Column(name) => f.write_str(name),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                // left operand of a right-associative power needs parentheses at equal precedence
                let wrap_left = if *op == BinaryOp::Pow {
                    a.precedence() <= p
                } else {
                    a.precedence() < p
                };
                let wrap_right = match op {
                    BinaryOp::Pow => b.precedence() < 3,
                    BinaryOp::Sub | BinaryOp::Div => b.precedence() <= p,
                    _ => b.precedence() < p,
                };
                if wrap_left {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if wrap_right {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[start..i].iter().collect();
            let v = lit
                .parse::<f64>()
                .map_err(|_| ResiError::Formula(format!("invalid number `{lit}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(ResiError::Formula(format!("unknown token `{c}`")));
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    params: &'a [String],
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut lhs = self.multiplicative()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let arg = self.additive()?;
                    self.expect_rparen()?;
                    return match name.as_str() {
                        "exp" => Ok(Expr::Exp(Box::new(arg))),
                        "log" => Ok(Expr::Log(Box::new(arg))),
                        other => Err(ResiError::Formula(format!("unknown function `{other}`"))),
                    };
                }
                Ok(match self.params.iter().position(|p| *p == name) {
                    Some(index) => Expr::Param { name, index },
                    None => Expr::Column(name),
                })
            }
            Some(Tok::LParen) => {
                let inner = self.additive()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::RParen) => Err(ResiError::Formula("unbalanced parentheses".into())),
            Some(Tok::Op(c)) => Err(ResiError::Formula(format!("unexpected operator `{c}`"))),
            None => Err(ResiError::Formula("unexpected end of expression".into())),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.bump() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(ResiError::Formula("unbalanced parentheses".into())),
        }
    }
}

/// Parses the right-hand side of a nonlinear model.
pub fn parse_nls_expression(text: &str, parameter_names: &[String]) -> Result<Expr> {
    for (i, p) in parameter_names.iter().enumerate() {
        if parameter_names[..i].contains(p) {
            return Err(ResiError::Formula(format!("duplicate parameter `{p}`")));
        }
    }
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ResiError::Formula("empty expression".into()));
    }
    let mut parser = ExprParser {
        tokens,
        pos: 0,
        params: parameter_names,
    };
    let expr = parser.additive()?;
    match parser.peek() {
        None => Ok(expr),
        Some(Tok::RParen) => Err(ResiError::Formula("unbalanced parentheses".into())),
        Some(tok) => Err(ResiError::Formula(format!("unexpected token {tok:?}"))),
    }
}

/// Parses `response ~ expression`, returning the response name and the expression.
pub fn parse_nls_formula(text: &str, parameter_names: &[String]) -> Result<(String, Expr)> {
    let (lhs, rhs) = text
        .split_once('~')
        .ok_or_else(|| ResiError::Formula("formula must contain `~`".into()))?;
    if rhs.contains('~') {
        return Err(ResiError::Formula("duplicate `~`".into()));
    }
    let response = lhs.trim();
    if response.is_empty() {
        return Err(ResiError::Formula("empty response".into()));
    }
    Ok((response.to_string(), parse_nls_expression(rhs, parameter_names)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn param(name: &str, index: usize) -> Box<Expr> {
        Box::new(Expr::Param {
            name: name.into(),
            index,
        })
    }

    fn col(name: &str) -> Box<Expr> {
        Box::new(Expr::Column(name.into()))
    }

    #[test]
    fn power_model() {
        let e = parse_nls_expression("c*a^z", &names(&["c", "z"])).unwrap();
        assert_eq!(
            e,
            Expr::Binary(
                BinaryOp::Mul,
                param("c", 0),
                Box::new(Expr::Binary(BinaryOp::Pow, col("a"), param("z", 1)))
            )
        );
    }

    #[test]
    fn constant_model_and_unary_minus() {
        assert_eq!(
            parse_nls_expression("b0", &names(&["b0"])).unwrap(),
            *param("b0", 0)
        );
        assert_eq!(
            parse_nls_expression("a - -b0", &names(&["b0"])).unwrap(),
            Expr::Binary(BinaryOp::Sub, col("a"), Box::new(Expr::Neg(param("b0", 0))))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let p = names(&[]);
        // -a^2 = -(a^2)
        assert_eq!(
            parse_nls_expression("-a^2", &p).unwrap(),
            Expr::Neg(Box::new(Expr::Binary(
                BinaryOp::Pow,
                col("a"),
                Box::new(Expr::Const(2.0))
            )))
        );
        // a^b^c = a^(b^c)
        assert_eq!(
            parse_nls_expression("a^b^c", &p).unwrap(),
            Expr::Binary(
                BinaryOp::Pow,
                col("a"),
                Box::new(Expr::Binary(BinaryOp::Pow, col("b"), col("c")))
            )
        );
        let e = parse_nls_expression("1 - 2 - 3", &p).unwrap();
        let v = e.eval(&[], &HashMap::new(), 1).unwrap();
        assert_eq!(v, vec![-4.0]);
        let e = parse_nls_expression("8 / 4 / 2 + 2 * 3", &p).unwrap();
        assert_eq!(e.eval(&[], &HashMap::new(), 1).unwrap(), vec![7.0]);
    }

    #[test]
    fn functions_and_errors() {
        let e = parse_nls_expression("exp(log(x) * k)", &names(&["k"])).unwrap();
        let x = [2.0, 3.0];
        let cols = HashMap::from([("x", &x[..])]);
        let v = e.eval(&[2.0], &cols, 2).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-12 && (v[1] - 9.0).abs() < 1e-12);
        assert!(parse_nls_expression("sin(x)", &[]).is_err());
        assert!(parse_nls_expression("(a + b", &[]).is_err());
        assert!(parse_nls_expression("a + b)", &[]).is_err());
        assert!(parse_nls_expression("a $ b", &[]).is_err());
    }

    #[test]
    fn nls_formula_split() {
        let (resp, e) = parse_nls_formula("s ~ c*a^z", &names(&["c", "z"])).unwrap();
        assert_eq!(resp, "s");
        assert_eq!(e.columns(), vec!["a".to_string()]);
        assert!(parse_nls_formula("~ c", &names(&["c"])).is_err());
    }

    #[test]
    fn display_round_trip() {
        let p = names(&["c", "z", "k"]);
        for text in [
            "c*a^z",
            "a - -c",
            "-(a + b) * c",
            "(a - b) - (c - z)",
            "a / (b / c)",
            "(a^b)^c",
            "a^-z",
            "exp(-k * x) + 1.5e-3",
            "-a^2",
        ] {
            let e = parse_nls_expression(text, &p).unwrap();
            let again = parse_nls_expression(&e.to_string(), &p).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }
}
