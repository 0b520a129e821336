//! S-expression reader for the R4RS-subset lexical grammar.

use crate::datum::Datum;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReadError {
    #[error("{line}:{col}: unterminated {what}")]
    Unterminated { what: &'static str, line: usize, col: usize },
    #[error("{line}:{col}: illegal token `{tok}`")]
    IllegalToken { tok: String, line: usize, col: usize },
    #[error("{line}:{col}: unexpected `{tok}`")]
    Unexpected { tok: String, line: usize, col: usize },
}

pub struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    /// When set, unclosed lists are silently closed at end of input.
    /// Used by the annotation parser where trailing parens are implied.
    pub lenient_eof: bool,
}

impl<'a> Reader<'a> {
    pub fn new(src: &'a str) -> Self {
        Reader { src: src.as_bytes(), pos: 0, line: 1, col: 1, lenient_eof: false }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_atmosphere(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b';') => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn is_delimiter(c: u8) -> bool {
        c.is_ascii_whitespace() || matches!(c, b'(' | b')' | b'"' | b';')
    }

    fn err_here(&self, what: &'static str) -> ReadError {
        ReadError::Unterminated { what, line: self.line, col: self.col }
    }

    /// Reads the next datum, or Ok(None) at end of input.
    pub fn read(&mut self) -> Result<Option<Datum>, ReadError> {
        self.skip_atmosphere();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else { return Ok(None) };
        match c {
            b'(' => {
                self.bump();
                self.read_list().map(Some)
            }
            b')' => Err(ReadError::Unexpected { tok: ")".into(), line, col }),
            b'\'' => self.shorthand("quote"),
            b'`' => self.shorthand("quasiquote"),
            b',' => {
                self.bump();
                let name = if self.peek() == Some(b'@') {
                    self.bump();
                    "unquote-splicing"
                } else {
                    "unquote"
                };
                let inner = self.require_datum()?;
                Ok(Some(Datum::list([Datum::sym(name), inner])))
            }
            b'"' => self.read_string().map(Some),
            b'#' if matches!(self.src.get(self.pos + 1), Some(b't' | b'f' | b'(' | b'\\')) => {
                self.read_hash().map(Some)
            }
            _ => self.read_atom().map(Some),
        }
    }

    fn shorthand(&mut self, name: &str) -> Result<Option<Datum>, ReadError> {
        self.bump();
        let inner = self.require_datum()?;
        Ok(Some(Datum::list([Datum::sym(name), inner])))
    }

    fn require_datum(&mut self) -> Result<Datum, ReadError> {
        match self.read()? {
            Some(d) => Ok(d),
            None => Err(self.err_here("datum")),
        }
    }

    fn read_list(&mut self) -> Result<Datum, ReadError> {
        let mut elems: Vec<Datum> = Vec::new();
        let mut tail = Datum::Nil;
        loop {
            self.skip_atmosphere();
            match self.peek() {
                None => {
                    if self.lenient_eof {
                        break;
                    }
                    return Err(self.err_here("list"));
                }
                Some(b')') => {
                    self.bump();
                    break;
                }
                Some(b'.') => {
                    // "." as a dot only when delimited; otherwise an atom like .foo
                    let next = self.src.get(self.pos + 1).copied();
                    if next.is_none() || next.is_some_and(Self::is_delimiter) {
                        if elems.is_empty() {
                            return Err(ReadError::IllegalToken {
                                tok: ".".into(),
                                line: self.line,
                                col: self.col,
                            });
                        }
                        self.bump();
                        tail = self.require_datum()?;
                        self.skip_atmosphere();
                        match self.peek() {
                            Some(b')') => {
                                self.bump();
                            }
                            None if self.lenient_eof => {}
                            _ => return Err(self.err_here("list")),
                        }
                        break;
                    }
                    elems.push(self.require_datum()?);
                }
                Some(_) => elems.push(self.require_datum()?),
            }
        }
        Ok(elems.into_iter().rev().fold(tail, |acc, d| Datum::cons(d, acc)))
    }

    fn read_string(&mut self) -> Result<Datum, ReadError> {
        let (line, col) = (self.line, self.col);
        self.bump(); // opening quote
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(ReadError::Unterminated { what: "string", line, col }),
                Some(b'"') => return Ok(Datum::Str(out)),
                Some(b'\\') => match self.bump() {
                    Some(b'n') => out.push('\n'),
                    Some(b't') => out.push('\t'),
                    Some(b'"') => out.push('"'),
                    Some(b'\\') => out.push('\\'),
                    other => {
                        return Err(ReadError::IllegalToken {
                            tok: format!("\\{}", other.map(|c| c as char).unwrap_or(' ')),
                            line: self.line,
                            col: self.col,
                        })
                    }
                },
                Some(c) => out.push(c as char),
            }
        }
    }

    fn read_hash(&mut self) -> Result<Datum, ReadError> {
        let (line, col) = (self.line, self.col);
        self.bump(); // '#'
        match self.peek() {
            Some(b't') => {
                self.bump();
                Ok(Datum::Bool(true))
            }
            Some(b'f') => {
                self.bump();
                Ok(Datum::Bool(false))
            }
            Some(b'(') => {
                self.bump();
                let list = self.read_list()?;
                match list.list_elems() {
                    Some(elems) => Ok(Datum::Vector(elems)),
                    None => Err(ReadError::IllegalToken { tok: "#(".into(), line, col }),
                }
            }
            Some(b'\\') => {
                self.bump();
                let mut name = String::new();
                while let Some(c) = self.peek() {
                    if !name.is_empty() && Self::is_delimiter(c) {
                        break;
                    }
                    name.push(self.bump().unwrap() as char);
                }
                match name.as_str() {
                    "space" => Ok(Datum::Char(b' ')),
                    "newline" => Ok(Datum::Char(b'\n')),
                    "tab" => Ok(Datum::Char(b'\t')),
                    s if s.len() == 1 => Ok(Datum::Char(s.as_bytes()[0])),
                    s => Err(ReadError::IllegalToken { tok: format!("#\\{s}"), line, col }),
                }
            }
            other => Err(ReadError::IllegalToken {
                tok: format!("#{}", other.map(|c| c as char).unwrap_or(' ')),
                line,
                col,
            }),
        }
    }

    fn read_atom(&mut self) -> Result<Datum, ReadError> {
        let (line, col) = (self.line, self.col);
        let mut tok = String::new();
        while let Some(c) = self.peek() {
            if Self::is_delimiter(c) {
                break;
            }
            tok.push(self.bump().unwrap() as char);
        }
        if let Ok(n) = tok.parse::<i64>() {
            return Ok(Datum::Int(n));
        }
        if tok.is_empty() || !tok.bytes().all(|c| (32..=126).contains(&c)) {
            return Err(ReadError::IllegalToken { tok, line, col });
        }
        Ok(Datum::sym(&tok))
    }
}

/// Reads every datum in `src`.
pub fn read_all(src: &str) -> Result<Vec<Datum>, ReadError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    while let Some(d) = r.read()? {
        out.push(d);
    }
    Ok(out)
}
