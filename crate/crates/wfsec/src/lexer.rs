//! Tokenizer shared by the message grammar and the protocol file format.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Num(u64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Underscore,
    Dot,
    Comma,
    Semi,
    Colon,
    Eq,
    Arrow,
    Bot,
    Top,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Underscore => "`_`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Bot => "`⊥`".into(),
            Tok::Top => "`⊤`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '^' || c == '-'
}

/// Splits `text` into tokens. `#` and `//` start line comments.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                advance(1, &mut i, &mut col);
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '_' => Tok::Underscore,
            '.' => Tok::Dot,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '=' => Tok::Eq,
            '⊥' => Tok::Bot,
            '⊤' => Tok::Top,
            '-' if chars.get(i + 1) == Some(&'>') => {
                advance(2, &mut i, &mut col);
                out.push(Token {
                    tok: Tok::Arrow,
                    line: start.0,
                    col: start.1,
                });
                continue;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[i..j].iter().collect();
                let n = digits.parse::<u64>().map_err(|_| Error::Syntax {
                    line,
                    col,
                    expected: "a number".into(),
                    found: digits.clone(),
                })?;
                let len = j - i;
                advance(len, &mut i, &mut col);
                out.push(Token {
                    tok: Tok::Num(n),
                    line: start.0,
                    col: start.1,
                });
                continue;
            }
            c if is_ident_start(c) => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_continue(chars[j]) {
                    if chars[j] == '-' && chars.get(j + 1) == Some(&'>') {
                        break;
                    }
                    j += 1;
                }
                let ident: String = chars[i..j].iter().collect();
                let len = j - i;
                advance(len, &mut i, &mut col);
                out.push(Token {
                    tok: Tok::Ident(ident),
                    line: start.0,
                    col: start.1,
                });
                continue;
            }
            other => {
                return Err(Error::Syntax {
                    line,
                    col,
                    expected: "a token".into(),
                    found: format!("`{other}`"),
                })
            }
        };
        advance(1, &mut i, &mut col);
        out.push(Token {
            tok,
            line: start.0,
            col: start.1,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Cursor over a token vector with error helpers.
pub(crate) struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub(crate) fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub(crate) fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    pub(crate) fn next(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.next();
            true
        } else {
            false
        }
    }

    pub(crate) fn error(&self, expected: &str) -> Error {
        let t = self.peek();
        Error::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.to_string(),
            found: t.tok.describe(),
        }
    }

    pub(crate) fn expect(&mut self, tok: &Tok) -> Result<Token> {
        if self.at(tok) {
            Ok(self.next())
        } else {
            Err(self.error(&tok.describe()))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<(String, usize, usize)> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                let t = self.next();
                Ok((s, t.line, t.col))
            }
            _ => Err(self.error("an identifier")),
        }
    }

    pub(crate) fn keyword(&mut self, kw: &str) -> bool {
        if matches!(&self.peek().tok, Tok::Ident(s) if s == kw) {
            self.next();
            true
        } else {
            false
        }
    }
}
