//! Arithmetic expressions over literals with SI suffixes and random-variable names.

use std::fmt;

use crate::error::{Error, Result};

/// Highest total degree a parameter may have in the random variables.
pub const MAX_PARAM_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => xi[*i],
            Node::Neg(a) => -a.eval(xi),
            Node::Add(a, b) => a.eval(xi) + b.eval(xi),
            Node::Sub(a, b) => a.eval(xi) - b.eval(xi),
            Node::Mul(a, b) => a.eval(xi) * b.eval(xi),
            Node::Div(a, b) => a.eval(xi) / b.eval(xi),
        }
    }

    /// Polynomial degree in the variables; `None` when dividing by a non-constant.
    fn degree(&self) -> Option<usize> {
        match self {
            Node::Num(_) => Some(0),
            Node::Var(_) => Some(1),
            Node::Neg(a) => a.degree(),
            Node::Add(a, b) | Node::Sub(a, b) => Some(a.degree()?.max(b.degree()?)),
            Node::Mul(a, b) => Some(a.degree()? + b.degree()?),
            Node::Div(a, b) => match b.degree()? {
                0 => a.degree(),
                _ => None,
            },
        }
    }
}

/// A device parameter as a function of the random variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamExpr {
    pub source: String,
    /// Value with every random variable at zero.
    pub nominal: f64,
    root: Node,
}

impl ParamExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value}"),
            nominal: value,
            root: Node::Num(value),
        }
    }

    /// Parse `text`; `vars` lists the declared random variables in order.
    /// Error columns are reported relative to `col0`.
    pub fn parse(text: &str, vars: &[String], line: usize, col0: usize) -> Result<Self> {
        let mut p = Parser {
            chars: text.chars().collect(),
            pos: 0,
            vars,
            line,
            col0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error(format!("unexpected `{}`", p.chars[p.pos])));
        }
        let degree = root.degree();
        match degree {
            Some(d) if d <= MAX_PARAM_DEGREE => {}
            _ => {
                return Err(Error::Syntax {
                    line,
                    col: col0,
                    message: format!(
                        "`{text}` must be a polynomial of degree <= {MAX_PARAM_DEGREE} in the random variables"
                    ),
                })
            }
        }
        let nominal = root.eval(&vec![0.0; vars.len()]);
        Ok(Self {
            source: text.to_string(),
            nominal,
            root,
        })
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.root.eval(xi)
    }

    pub fn degree(&self) -> usize {
        self.root.degree().unwrap_or(usize::MAX)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Parse a plain number with optional SI suffix, e.g. `1k`, `2.2u`, `3meg`, `10pF`.
pub fn parse_number(text: &str) -> Option<f64> {
    let (sign, body) = match text.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, text.strip_prefix('+').unwrap_or(text)),
    };
    let chars: Vec<char> = body.chars().collect();
    let (v, used) = scan_number(&chars, 0)?;
    (used == chars.len()).then_some(sign * v)
}

// Returns the value and the index after the number (including any suffix/unit letters).
fn scan_number(chars: &[char], start: usize) -> Option<(f64, usize)> {
    let mut i = start;
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > s
    };
    let int = digits(&mut i);
    let mut frac = false;
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        frac = digits(&mut i);
    }
    if !int && !frac {
        return None;
    }
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            i = j;
            digits(&mut i);
        }
    }
    let mantissa: String = chars[start..i].iter().collect();
    let s = i;
    while i < chars.len() && chars[i].is_ascii_alphabetic() {
        i += 1;
    }
    let suffix: String = chars[s..i].iter().collect::<String>().to_ascii_lowercase();
    let shift: i32 = if suffix.starts_with("meg") {
        6
    } else {
        match suffix.chars().next() {
            Some('t') => 12,
            Some('g') => 9,
            Some('k') => 3,
            Some('m') => -3,
            Some('u') => -6,
            Some('n') => -9,
            Some('p') => -12,
            Some('f') => -15,
            _ => 0,
        }
    };
    // Fold the suffix into the decimal exponent so `200n` rounds like `200e-9`.
    let (base, exp) = match mantissa.find(['e', 'E']) {
        Some(k) => (&mantissa[..k], mantissa[k + 1..].parse::<i32>().ok()?),
        None => (mantissa.as_str(), 0),
    };
    let value: f64 = format!("{base}e{}", exp + shift).parse().ok()?;
    Some((value, i))
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    vars: &'a [String],
    line: usize,
    col0: usize,
}

impl Parser<'_> {
    fn error(&self, message: String) -> Error {
        Error::Syntax {
            line: self.line,
            col: self.col0 + self.pos,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                '-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                '*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                '/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression".into())),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let (v, end) = scan_number(&self.chars, self.pos)
                    .ok_or_else(|| self.error("malformed number".into()))?;
                self.pos = end;
                Ok(Node::Num(v))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                match self.vars.iter().position(|v| v.eq_ignore_ascii_case(&name)) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(Error::UndeclaredVariable {
                        line: self.line,
                        name,
                    }),
                }
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }
}
