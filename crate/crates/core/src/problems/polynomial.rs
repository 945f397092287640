//! Multivariate polynomials and the small expression grammar used for custom
//! problems.
//!
//! Grammar (whitespace is ignored):
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | var ['^' integer]
//! var    := 'x' index | 'x' | 'y' | 'z'      (index is 1-based; x, y, z = x1, x2, x3)
//! ```
//!
//! Examples: `x1^2 - x2^2`, `2*x*y`, `0.5 - 3e-1*x2^3*x1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    /// Exponent of each coordinate; trailing zeros may be omitted.
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        Polynomial {
            terms: vec![Monomial { coeff: c, powers: vec![] }],
        }
    }

    /// `c * x_i^p` with a 0-based coordinate index.
    pub fn monomial(c: f64, i: usize, p: u32) -> Self {
        let mut powers = vec![0; i + 1];
        powers[i] = p;
        Polynomial {
            terms: vec![Monomial { coeff: c, powers }],
        }
    }

    pub fn add(mut self, other: Polynomial) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// Number of coordinates the polynomial actually references.
    pub fn arity(&self) -> usize {
        self.terms
            .iter()
            .map(|m| m.powers.iter().rposition(|&p| p > 0).map_or(0, |i| i + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .fold(m.coeff, |acc, (i, &p)| acc * x[i].powi(p as i32))
            })
            .sum()
    }

    /// ∂/∂x_i.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|m| m.powers.get(i).copied().unwrap_or(0) > 0)
            .map(|m| {
                let mut powers = m.powers.clone();
                let p = powers[i];
                powers[i] = p - 1;
                Monomial {
                    coeff: m.coeff * p as f64,
                    powers,
                }
            })
            .collect();
        Polynomial { terms }
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| self.derivative(i).eval(x)).collect()
    }

    pub fn parse(src: &str) -> Result<Polynomial> {
        Parser::new(src).parse()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, m) in self.terms.iter().enumerate() {
            match (k, m.coeff < 0.0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let c = m.coeff.abs();
            let mut sep = "";
            if c != 1.0 || m.powers.iter().all(|&p| p == 0) {
                write!(f, "{c:?}")?;
                sep = "*";
            }
            for (i, &p) in m.powers.iter().enumerate() {
                match p {
                    0 => continue,
                    1 => write!(f, "{sep}x{}", i + 1)?,
                    _ => write!(f, "{sep}x{}^{}", i + 1, p)?,
                }
                sep = "*";
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            chars: src.chars().filter(|c| !c.is_whitespace()).collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn err<T>(&self, what: &str) -> Result<T> {
        usage(format!("cannot parse expression {:?}: {what} at token {}", self.src, self.pos))
    }

    fn parse(mut self) -> Result<Polynomial> {
        if self.chars.is_empty() {
            return self.err("empty expression");
        }
        let mut poly = Polynomial::zero();
        let mut sign = 1.0;
        match self.peek() {
            Some('-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some('+') => self.pos += 1,
            _ => {}
        }
        loop {
            let mut m = self.term()?;
            m.coeff *= sign;
            poly.terms.push(m);
            match self.peek() {
                None => return Ok(poly),
                Some('+') => sign = 1.0,
                Some('-') => sign = -1.0,
                Some(_) => return self.err("expected '+' or '-'"),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<Monomial> {
        let mut m = Monomial {
            coeff: 1.0,
            powers: vec![],
        };
        loop {
            self.factor(&mut m)?;
            if self.peek() == Some('*') {
                self.pos += 1;
            } else {
                return Ok(m);
            }
        }
    }

    fn factor(&mut self, m: &mut Monomial) -> Result<()> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                m.coeff *= self.number()?;
                Ok(())
            }
            Some('x') | Some('y') | Some('z') => {
                let c = self.peek().unwrap();
                self.pos += 1;
                let index = match c {
                    'y' => 1,
                    'z' => 2,
                    _ => match self.peek() {
                        Some(d) if d.is_ascii_digit() => {
                            let i = self.integer()?;
                            if i == 0 {
                                return self.err("coordinates are numbered from 1");
                            }
                            i as usize - 1
                        }
                        _ => 0,
                    },
                };
                let mut p = 1;
                if self.peek() == Some('^') {
                    self.pos += 1;
                    p = self.integer()?;
                }
                if m.powers.len() <= index {
                    m.powers.resize(index + 1, 0);
                }
                m.powers[index] += p;
                Ok(())
            }
            _ => self.err("expected a number or a coordinate"),
        }
    }

    fn integer(&mut self) -> Result<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        match s.parse() {
            Ok(v) => Ok(v),
            Err(_) => self.err("expected an integer"),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err("malformed number"),
        }
    }
}
