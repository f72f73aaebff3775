//! Expression language for defining functions and the domain description file.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' INT)?
//! atom    := NUMBER | 'z' INT | 'conj' '(' expr ')' | 'Re' '(' expr ')' | 'Im' '(' expr ')'
//!          | '(' expr ')' | '|' expr '|' '^' EVEN
//! ```

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cpoly::CPoly;
use crate::error::{FtlError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(usize),
    Conj(Box<Ast>),
    Re(Box<Ast>),
    Im(Box<Ast>),
    /// `|e|^k` with even `k`.
    Abs(Box<Ast>, u32),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, u32),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Int(u32),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T> {
    Err(FtlError::Parse { line, column: col, message: msg.into() })
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if s.chars().all(|d| d.is_ascii_digit()) {
                match s.parse::<u32>() {
                    Ok(v) => Tok::Int(v),
                    Err(_) => Tok::Num(s.parse::<f64>().map_err(|_| FtlError::Parse {
                        line: l0,
                        column: c0,
                        message: format!("bad number '{s}'"),
                    })?),
                }
            } else {
                Tok::Num(s.parse::<f64>().map_err(|_| FtlError::Parse {
                    line: l0,
                    column: c0,
                    message: format!("bad number '{s}'"),
                })?)
            };
            out.push(Token { tok, line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphabetic() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(s), line: l0, col: c0 });
            continue;
        }
        if "+-*/^()|".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line: l0, col: c0 });
            i += 1;
            col += 1;
            continue;
        }
        return err(l0, c0, format!("unexpected character '{c}'"));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    in_abs: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        let (l, col) = self.here();
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => err(l, col, format!("expected '{c}'")),
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('+')) => {
                    self.pos += 1;
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Sym('-')) => {
                    self.pos += 1;
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('*')) => {
                    self.pos += 1;
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Sym('/')) => {
                    self.pos += 1;
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if let Some(Tok::Sym('-')) = self.peek() {
            self.pos += 1;
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn int_exponent(&mut self) -> Result<(u32, usize, usize)> {
        let (l, c) = self.here();
        match self.peek().cloned() {
            Some(Tok::Int(k)) => {
                self.pos += 1;
                Ok((k, l, c))
            }
            _ => err(l, c, "expected a nonnegative integer exponent"),
        }
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if let Some(Tok::Sym('^')) = self.peek() {
            self.pos += 1;
            let (k, _, _) = self.int_exponent()?;
            return Ok(Ast::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast> {
        let (l, c) = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Ast::Num(v))
            }
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Ast::Num(v as f64))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "z" => {
                        let (k, kl, kc) = self.int_exponent()?;
                        if k == 0 {
                            return err(kl, kc, "variables are numbered from z1");
                        }
                        Ok(Ast::Var(k as usize - 1))
                    }
                    "conj" | "Re" | "Im" => {
                        self.expect_sym('(')?;
                        let inner = self.expr()?;
                        self.expect_sym(')')?;
                        Ok(match name.as_str() {
                            "conj" => Ast::Conj(Box::new(inner)),
                            "Re" => Ast::Re(Box::new(inner)),
                            _ => Ast::Im(Box::new(inner)),
                        })
                    }
                    _ => err(l, c, format!("unknown identifier '{name}'")),
                }
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_sym(')')?;
                Ok(inner)
            }
            Some(Tok::Sym('|')) if self.in_abs == 0 => {
                self.pos += 1;
                self.in_abs += 1;
                let inner = self.expr()?;
                self.in_abs -= 1;
                self.expect_sym('|')?;
                let (hl, hc) = self.here();
                match self.peek() {
                    Some(Tok::Sym('^')) => {
                        self.pos += 1;
                    }
                    _ => return err(hl, hc, "modulus must be raised to an even power, e.g. |z1|^2"),
                }
                let (k, kl, kc) = self.int_exponent()?;
                if k % 2 != 0 {
                    return err(kl, kc, format!("odd modulus power {k} is unsupported (use an even power)"));
                }
                Ok(Ast::Abs(Box::new(inner), k))
            }
            Some(Tok::Sym('|')) => err(l, c, "nested modulus bars are unsupported; use parentheses inside"),
            Some(Tok::Sym(s)) => err(l, c, format!("unexpected '{s}'")),
            None => err(l, c, "unexpected end of input"),
        }
    }
}

/// Parses an expression into its syntax tree.
pub fn parse_expr(src: &str) -> Result<Ast> {
    let toks = tokenize(src)?;
    let last_line = src.lines().count().max(1);
    let last_col = src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut p = Parser { toks, pos: 0, end: (last_line, last_col), in_abs: 0 };
    let ast = p.expr()?;
    if p.pos != p.toks.len() {
        let (l, c) = p.here();
        return err(l, c, "unexpected trailing input");
    }
    Ok(ast)
}

fn prec(a: &Ast) -> u8 {
    match a {
        Ast::Add(..) | Ast::Sub(..) => 1,
        Ast::Mul(..) | Ast::Div(..) => 2,
        Ast::Neg(..) => 3,
        Ast::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 4e9 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:?}");
        s
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, a: &Ast, min: u8| -> fmt::Result {
            if prec(a) < min {
                write!(f, "({a})")
            } else {
                write!(f, "{a}")
            }
        };
        match self {
            Ast::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({})", fmt_num(*v))
                } else {
                    write!(f, "{}", fmt_num(*v))
                }
            }
            Ast::Var(j) => write!(f, "z{}", j + 1),
            Ast::Conj(a) => write!(f, "conj({a})"),
            Ast::Re(a) => write!(f, "Re({a})"),
            Ast::Im(a) => write!(f, "Im({a})"),
            Ast::Abs(a, k) => write!(f, "|{a}|^{k}"),
            Ast::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Ast::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            Ast::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            Ast::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, b, 3)
            }
            Ast::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, b, 3)
            }
            Ast::Pow(a, k) => {
                wrap(f, a, 5)?;
                write!(f, "^{k}")
            }
        }
    }
}

/// Canonical text form; `parse_expr(&pretty_print(a)) == a`.
pub fn pretty_print(a: &Ast) -> String {
    a.to_string()
}

impl Ast {
    /// Largest variable index used plus one.
    pub fn num_vars(&self) -> usize {
        match self {
            Ast::Num(_) => 0,
            Ast::Var(j) => j + 1,
            Ast::Conj(a) | Ast::Re(a) | Ast::Im(a) | Ast::Abs(a, _) | Ast::Neg(a) | Ast::Pow(a, _) => a.num_vars(),
            Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b) => a.num_vars().max(b.num_vars()),
        }
    }

    /// Lowers the syntax tree to a polynomial in `n` variables.
    pub fn to_cpoly(&self, n: usize) -> Result<CPoly> {
        Ok(match self {
            Ast::Num(v) => CPoly::constant(n, C64::new(*v, 0.0)),
            Ast::Var(j) => {
                if *j >= n {
                    return Err(FtlError::Domain(format!("variable z{} exceeds dimension {n}", j + 1)));
                }
                CPoly::var(n, *j, false)
            }
            Ast::Conj(a) => a.to_cpoly(n)?.conj(),
            Ast::Re(a) => a.to_cpoly(n)?.real_part(),
            Ast::Im(a) => a.to_cpoly(n)?.imag_part(),
            Ast::Abs(a, k) => {
                let p = a.to_cpoly(n)?;
                p.mul(&p.conj()).pow(k / 2)
            }
            Ast::Neg(a) => a.to_cpoly(n)?.scale(C64::new(-1.0, 0.0)),
            Ast::Add(a, b) => a.to_cpoly(n)?.add(&b.to_cpoly(n)?),
            Ast::Sub(a, b) => a.to_cpoly(n)?.sub(&b.to_cpoly(n)?),
            Ast::Mul(a, b) => a.to_cpoly(n)?.mul(&b.to_cpoly(n)?),
            Ast::Div(a, b) => {
                let d = b.to_cpoly(n)?;
                let zero = vec![0u8; 2 * n];
                if d.degree() != 0 || d.coeff(&zero) == C64::new(0.0, 0.0) {
                    return Err(FtlError::Domain("division is only allowed by a nonzero constant".into()));
                }
                a.to_cpoly(n)?.scale(1.0 / d.coeff(&zero))
            }
            Ast::Pow(a, k) => a.to_cpoly(n)?.pow(*k),
        })
    }
}

/// Domain description file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub n: usize,
    /// One-based index of the normal coordinate in the expression.
    pub normal_slot: usize,
    #[serde(rename = "P")]
    pub p: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_window")]
    pub window: f64,
}

fn default_window() -> f64 {
    1.0
}

/// Parses a JSON domain description and checks its expression.
pub fn parse_domain(text: &str) -> Result<(DomainSpec, Ast)> {
    let spec: DomainSpec = serde_json::from_str(text).map_err(|e| FtlError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let ast = parse_expr(&spec.p)?;
    Ok((spec, ast))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn herbort_parses_and_round_trips() {
        let a = parse_expr("Re(z1) + |z2|^6 + |z3|^6 + |z2|^2*|z3|^2").unwrap();
        assert_eq!(parse_expr(&pretty_print(&a)).unwrap(), a);
        let p = a.to_cpoly(3).unwrap();
        assert!(p.is_real_valued(0.0));
    }

    #[test]
    fn odd_modulus_power_is_rejected_with_position() {
        match parse_expr("|z1|^3") {
            Err(FtlError::Parse { line, column, .. }) => {
                assert_eq!((line, column), (1, 6));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiline_diagnostic_reports_line() {
        match parse_expr("Re(z3) +\n  |z1|^2 + $") {
            Err(FtlError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 12)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_and_rational_literals_round_trip() {
        for src in ["-1/2*|z1|^2 + 0.25*Re(z1^2)", "(z1 + 2)^3 - -z2", "3*(z1 - z2)*conj(z1)"] {
            let a = parse_expr(src).unwrap();
            assert_eq!(parse_expr(&pretty_print(&a)).unwrap(), a, "{src}");
        }
    }
}
