//! Recursive-descent parser for the scalar DSL.
//!
//! Grammar (binding tightness increasing):
//!   sum    := term (("+"|"-") term)*
//!   term   := unary (("*"|"/") unary)*
//!   unary  := "-" unary | power
//!   power  := atom ("^" pexp)*            (left associative)
//!   pexp   := "-" pexp | atom
//!   atom   := number | ident | ident "(" sum ")" | "(" sum ")"
//!
//! Identifiers are `x<k>`/`y<k>` coordinates with 1 <= k <= n, or one of the
//! known function names when followed by "(".

use super::{Expr, Func};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("empty input")]
    Empty,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

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
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {}", v),
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((start, Tok::Eof));
        }
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
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                let mut seen_exp = false;
                while end < self.src.len() {
                    let d = self.src[end];
                    if d.is_ascii_digit() || d == b'.' {
                        end += 1;
                    } else if (d == b'e' || d == b'E') && !seen_exp {
                        // scientific notation, optionally signed
                        seen_exp = true;
                        end += 1;
                        if end < self.src.len() && (self.src[end] == b'+' || self.src[end] == b'-')
                        {
                            end += 1;
                        }
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    expected: "a numeric literal".into(),
                })?;
                self.pos = end;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Tok::Ident(text.to_string())
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: "a number, identifier, operator or parenthesis".into(),
                })
            }
        };
        Ok((start, tok))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> &(usize, Tok) {
        &self.toks[self.idx]
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, expected: &str) -> Result<(), ParseError> {
        let (off, t) = self.bump();
        if &t == want {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: off,
                expected: format!("{} (found {})", expected, t.describe()),
            })
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().1 {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::add(&lhs, &rhs);
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::sub(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().1 {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::mul(&lhs, &rhs);
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::div(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().1 == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.atom()?;
        while self.peek().1 == Tok::Caret {
            self.bump();
            let rhs = self.pexp()?;
            lhs = Expr::pow(&lhs, &rhs);
        }
        Ok(lhs)
    }

    fn pexp(&mut self) -> Result<Expr, ParseError> {
        if self.peek().1 == Tok::Minus {
            self.bump();
            let inner = self.pexp()?;
            return Ok(Expr::neg(&inner));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (off, t) = self.bump();
        match t {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().1 == Tok::LParen {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| ParseError::UnknownSymbol(name.clone()))?;
                    self.bump(); // (
                    let arg = self.sum()?;
                    self.expect(&Tok::RParen, "`)`")?;
                    return Ok(Expr::call(f, &arg));
                }
                self.coordinate(&name)
            }
            other => Err(ParseError::Syntax {
                offset: off,
                expected: format!(
                    "a number, coordinate, function call or `(` (found {})",
                    other.describe()
                ),
            }),
        }
    }

    fn coordinate(&self, name: &str) -> Result<Expr, ParseError> {
        let bytes = name.as_bytes();
        if bytes.len() >= 2 && (bytes[0] == b'x' || bytes[0] == b'y') {
            if let Ok(k) = name[1..].parse::<usize>() {
                if k >= 1 && k <= self.n {
                    let idx = if bytes[0] == b'x' { k - 1 } else { self.n + k - 1 };
                    return Ok(Expr::Var(idx));
                }
            }
        }
        Err(ParseError::UnknownSymbol(name.to_string()))
    }
}

/// Parse `text` in dimension `n` (coordinates `x1..xn`, `y1..yn`).
pub fn parse(text: &str, n: usize) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut lx = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let t = lx.next()?;
        let done = t.1 == Tok::Eof;
        toks.push(t);
        if done {
            break;
        }
    }
    let mut p = Parser { toks, idx: 0, n };
    let e = p.sum()?;
    let (off, t) = p.bump();
    if t != Tok::Eof {
        return Err(ParseError::Syntax {
            offset: off,
            expected: format!("end of input (found {})", t.describe()),
        });
    }
    Ok(e)
}
