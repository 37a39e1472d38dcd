//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr     := term  (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | postfix
//! postfix  := atom ('^' ['-'] integer)*
//! atom     := number | coordinate | function '(' expr ')' | '(' expr ')'
//! ```
//!
//! Binding strength: power, then unary minus, then `* /`, then `+ -`.
//! Binary operators associate to the left. Identifiers are the chart's
//! coordinate names (`x1..xn` by default) and the function names `sin`,
//! `cos`, `exp`, `ln`, `sqrt`, `atan`, all case-sensitive, ASCII only.

use crate::chart::Chart;
use crate::error::{Error, Result};

use super::ast::{Expr, Func};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        if !src.is_ascii() {
            return Err(Error::Syntax {
                position: src
                    .char_indices()
                    .find(|(_, c)| !c.is_ascii())
                    .map(|(i, _)| i)
                    .unwrap_or(0),
                message: "non-ASCII input".to_string(),
            });
        }
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Tok, usize)>> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }

    fn number(&mut self, start: usize) -> Result<Tok> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `e` belonged to an identifier or was stray; back off.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Tok::Num).map_err(|_| Error::Syntax {
            position: start,
            message: format!("malformed number literal `{}`", text),
        })
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    chart: &'a Chart,
    len: usize,
}

/// Parses `source` against the coordinates of `chart`.
pub fn parse_expr(source: &str, chart: &Chart) -> Result<Expr> {
    let toks = Lexer::tokens(source)?;
    let mut p = Parser {
        toks,
        idx: 0,
        chart,
        len: source.len(),
    };
    let e = p.expr()?;
    if let Some((tok, pos)) = p.peek_with_pos() {
        return Err(Error::Syntax {
            position: pos,
            message: format!("unexpected trailing input starting with {}", describe(tok)),
        });
    }
    Ok(e)
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number `{}`", v),
        Tok::Ident(s) => format!("identifier `{}`", s),
        Tok::Plus => "`+`".to_string(),
        Tok::Minus => "`-`".to_string(),
        Tok::Star => "`*`".to_string(),
        Tok::Slash => "`/`".to_string(),
        Tok::Caret => "`^`".to_string(),
        Tok::LParen => "`(`".to_string(),
        Tok::RParen => "`)`".to_string(),
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn peek_with_pos(&self) -> Option<(&Tok, usize)> {
        self.toks.get(self.idx).map(|(t, p)| (t, *p))
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.len)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            Some((t, p)) => Err(Error::Syntax {
                position: p,
                message: format!("expected {}, found {}", what, describe(&t)),
            }),
            None => Err(Error::Syntax {
                position: self.len,
                message: format!("expected {}, found end of input", what),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = Expr::Add(acc.into(), self.term()?.into());
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = Expr::Sub(acc.into(), self.term()?.into());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    acc = Expr::Mul(acc.into(), self.unary()?.into());
                }
                Some(Tok::Slash) => {
                    self.bump();
                    acc = Expr::Div(acc.into(), self.unary()?.into());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            Ok(Expr::Neg(self.unary()?.into()))
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut acc = self.atom()?;
        while matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let k = self.integer_exponent()?;
            acc = Expr::Pow(acc.into(), k);
        }
        Ok(acc)
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let negative = if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Some((Tok::Num(v), pos)) => {
                if v.fract() != 0.0 || v.abs() > f64::from(i32::MAX) {
                    return Err(Error::Syntax {
                        position: pos,
                        message: format!("exponent must be an integer, got `{}`", v),
                    });
                }
                let k = v as i32;
                Ok(if negative { -k } else { k })
            }
            Some((t, p)) => Err(Error::Syntax {
                position: p,
                message: format!("expected an integer exponent after `^`, found {}", describe(&t)),
            }),
            None => Err(Error::Syntax {
                position: self.len,
                message: "expected an integer exponent after `^`".to_string(),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expr::Const(v)),
            Some((Tok::Ident(name), pos)) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, &format!("`(` after function `{}`", name))?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)` closing the function argument")?;
                    Ok(Expr::Call(f, arg.into()))
                } else if let Some(i) = self.chart.coordinate_index(&name) {
                    Ok(Expr::Coord(i))
                } else {
                    Err(Error::UnknownIdentifier {
                        name,
                        position: pos,
                    })
                }
            }
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((t, p)) => Err(Error::Syntax {
                position: p,
                message: format!("expected a value, found {}", describe(&t)),
            }),
            None => Err(Error::Syntax {
                position: self.here(),
                message: "unexpected end of input".to_string(),
            }),
        }
    }
}
