//! Text form of polynomials: `c1*x1^a*x2^b + ...` with variables `x1..xk`.
//!
//! The parser accepts a slightly larger grammar than the renderer emits:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := ('+' | '-') factor | atom ('^' integer)?
//! atom   := number | 'x' integer | '(' expr ')'
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use super::{Monomial, Poly, PolyError};

/// Shortest round-trip decimal form, switching to exponent notation for very
/// large or small magnitudes.
pub fn format_coefficient(c: f64) -> String {
    let a = c.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

fn write_monomial(f: &mut fmt::Formatter<'_>, m: &Monomial) -> fmt::Result {
    let mut first = true;
    for (k, &e) in m.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        if !first {
            f.write_str("*")?;
        }
        first = false;
        write!(f, "x{}", k + 1)?;
        if e > 1 {
            write!(f, "^{e}")?;
        }
    }
    Ok(())
}

impl fmt::Display for Poly {
    /// Highest degree first, `x1`-heavy terms first within a degree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut terms: alloc::vec::Vec<_> = self.terms().collect();
        terms.sort_by_key(|(m, _)| core::cmp::Reverse(m.degree()));
        for (i, (m, c)) in terms.into_iter().enumerate() {
            let sign = if c < 0.0 { "-" } else { "+" };
            if i == 0 {
                if c < 0.0 {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let a = c.abs();
            if m.is_constant() {
                f.write_str(&format_coefficient(a))?;
            } else {
                if a != 1.0 {
                    write!(f, "{}*", format_coefficient(a))?;
                }
                write_monomial(f, m)?;
            }
        }
        Ok(())
    }
}

impl Poly {
    /// Parses the text form into a polynomial with `dim` variables.
    pub fn parse(s: &str, dim: usize) -> Result<Poly, PolyError> {
        let mut p = Parser { src: s.as_bytes(), pos: 0, dim };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PolyError {
        PolyError::Parse { pos: self.pos, msg: msg.to_string() }
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

    fn expr(&mut self) -> Result<Poly, PolyError> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == b'+' { acc.add(&rhs)? } else { acc.sub(&rhs)? };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly, PolyError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = acc.mul(&rhs)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly, PolyError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.factor()?.neg())
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            _ => {
                let base = self.atom()?;
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    self.skip_ws();
                    let e = self.integer()?;
                    Ok(base.pow(e as u32))
                } else {
                    Ok(base)
                }
            }
        }
    }

    fn integer(&mut self) -> Result<usize, PolyError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().map_err(|_| PolyError::Parse { pos: start, msg: "integer out of range".into() })
    }

    fn atom(&mut self) -> Result<Poly, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'x') => {
                let at = self.pos;
                self.pos += 1;
                let k = self.integer()?;
                if k == 0 || k > self.dim {
                    return Err(PolyError::Parse {
                        pos: at,
                        msg: format!("variable x{k} outside x1..x{}", self.dim),
                    });
                }
                Ok(Poly::var(self.dim, k - 1))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(_) => Err(self.err("expected a number, variable, or '('")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Poly, PolyError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| PolyError::Parse { pos: start, msg: format!("bad number '{text}'") })?;
        Ok(Poly::constant(self.dim, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn render_shape() {
        let p = Poly::parse("2*x1^2*x2 - x2 + 0.5 - x1^3", 2).unwrap();
        assert_eq!(p.to_string(), "-x1^3 + 2*x1^2*x2 - x2 + 0.5");
        assert_eq!(Poly::zero(3).to_string(), "0");
        assert_eq!(Poly::constant(1, -1e-9).to_string(), "-1e-9");
    }

    #[test]
    fn parse_grammar() {
        let a = Poly::parse("0.45*(1 - x1^2)*x2 - 0.81*x1^2", 2).unwrap();
        let b = Poly::parse("0.45*x2 - 0.45*x1^2*x2 - 0.81*x1^2", 2).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-16);
        let c = Poly::parse("-x1^2 + 1.5e-3*x1 - -2", 1).unwrap();
        assert_eq!(c.to_string(), "-x1^2 + 0.0015*x1 + 2");
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Poly::parse("x1 + x3", 2) {
            Err(PolyError::Parse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("{other:?}"),
        }
        assert!(Poly::parse("x1 +", 1).is_err());
        assert!(Poly::parse("(x1", 1).is_err());
        assert!(Poly::parse("x1 y", 1).is_err());
        assert!(Poly::parse("", 1).is_err());
    }

    #[test]
    fn render_parse_round_trip_is_exact() {
        let p = Poly::parse("0.1*x1^4 - 3.3333333333333335*x1*x2 + 1e-12*x2^2 - 7e20", 2).unwrap();
        let q = Poly::parse(&p.to_string(), 2).unwrap();
        assert_eq!(p, q);
    }
}
