//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' rational)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `pi` is the only named constant.

use super::{Func, Rational, ScalarExpr};
use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<ScalarExpr> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = ScalarExpr::wrap(super::Node::Add(lhs, self.term()?));
            } else if self.eat(b'-') {
                lhs = ScalarExpr::wrap(super::Node::Sub(lhs, self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = ScalarExpr::wrap(super::Node::Mul(lhs, self.factor()?));
            } else if self.eat(b'/') {
                lhs = ScalarExpr::wrap(super::Node::Div(lhs, self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr> {
        if self.eat(b'-') {
            let inner = self.factor()?;
            return Ok(ScalarExpr::wrap(super::Node::Neg(inner)));
        }
        let base = self.base()?;
        if self.eat(b'^') {
            let q = self.rational()?;
            return Ok(ScalarExpr::wrap(super::Node::Pow(base, q)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<ScalarExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(ScalarExpr::constant(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                let name = self.ident().to_string();
                let name = name.as_str();
                if self.peek() == Some(b'(') {
                    let func = Func::from_name(name).ok_or_else(|| Error::UnknownFunction { name: name.to_string(), offset: start })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    Ok(ScalarExpr::call(func, &arg))
                } else if name == "pi" {
                    Ok(ScalarExpr::constant(std::f64::consts::PI))
                } else {
                    Ok(ScalarExpr::var(name))
                }
            }
            Some(_) => Err(self.error("expected a number, identifier or `(`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier")
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number_text(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        let int_digits = self.digits();
        let mut frac_digits = 0;
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac_digits = self.digits();
        }
        if int_digits + frac_digits == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                self.pos = save;
            }
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number"))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let text = self.number_text()?.to_string();
        text.parse::<f64>().map_err(|_| Error::Syntax { offset: start, message: "malformed number".into() })
    }

    /// Exponent: `n`, `-n`, `d.ddd`, or `(p/q)` with optional signs.
    fn rational(&mut self) -> Result<Rational> {
        if self.eat(b'(') {
            let neg = self.eat(b'-');
            let num = self.exact_rational()?;
            let q = if self.eat(b'/') {
                let den = self.exact_rational()?;
                if den.num() == 0 {
                    return Err(self.error("zero denominator in exponent"));
                }
                Rational::new(num.num() * den.den(), num.den() * den.num())
            } else {
                num
            };
            self.expect(b')')?;
            return Ok(if neg { Rational::new(-q.num(), q.den()) } else { q });
        }
        let neg = self.eat(b'-');
        let q = self.exact_rational()?;
        Ok(if neg { Rational::new(-q.num(), q.den()) } else { q })
    }

    fn exact_rational(&mut self) -> Result<Rational> {
        let start = self.pos;
        let text = self.number_text()?.to_string();
        if text.contains(['e', 'E']) {
            return Err(Error::Syntax { offset: start, message: "exponent must be a rational constant".into() });
        }
        let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
        let digits = format!("{int_part}{frac_part}");
        let num: i64 = digits.parse().map_err(|_| Error::Syntax { offset: start, message: "exponent out of range".into() })?;
        let den = 10i64
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(|| Error::Syntax { offset: start, message: "exponent out of range".into() })?;
        Ok(Rational::new(num, den))
    }
}
