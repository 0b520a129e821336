//! External representation of Scheme data read from source text.

use std::fmt;
use std::rc::Rc;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Datum {
    Int(i64),
    Sym(Rc<str>),
    Str(String),
    Char(u8),
    Bool(bool),
    Nil,
    Pair(Rc<Datum>, Rc<Datum>),
    Vector(Vec<Datum>),
}

impl Datum {
    pub fn sym(name: &str) -> Datum {
        Datum::Sym(Rc::from(name))
    }

    pub fn cons(car: Datum, cdr: Datum) -> Datum {
        Datum::Pair(Rc::new(car), Rc::new(cdr))
    }

    pub fn list(items: impl IntoIterator<Item = Datum, IntoIter: DoubleEndedIterator>) -> Datum {
        items
            .into_iter()
            .rev()
            .fold(Datum::Nil, |acc, d| Datum::cons(d, acc))
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Datum::Sym(s) => Some(s),
            _ => None,
        }
    }

    /// Splits a proper list into its elements. Returns None for improper
    /// lists and non-lists.
    pub fn list_elems(&self) -> Option<Vec<Datum>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Datum::Nil => return Some(out),
                Datum::Pair(a, d) => {
                    out.push((**a).clone());
                    cur = d;
                }
                _ => return None,
            }
        }
    }

    /// Splits a list into leading elements and a final tail (Nil when proper).
    pub fn improper_elems(&self) -> (Vec<Datum>, Datum) {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Datum::Pair(a, d) => {
                    out.push((**a).clone());
                    cur = d;
                }
                other => return (out, other.clone()),
            }
        }
    }
}

fn char_name(c: u8) -> Option<&'static str> {
    match c {
        b' ' => Some("space"),
        b'\n' => Some("newline"),
        b'\t' => Some("tab"),
        _ => None,
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Int(n) => write!(f, "{n}"),
            Datum::Sym(s) => write!(f, "{s}"),
            Datum::Str(s) => {
                write!(f, "\"")?;
                for c in s.chars() {
                    match c {
                        '"' => write!(f, "\\\"")?,
                        '\\' => write!(f, "\\\\")?,
                        '\n' => write!(f, "\\n")?,
                        '\t' => write!(f, "\\t")?,
                        _ => write!(f, "{c}")?,
                    }
                }
                write!(f, "\"")
            }
            Datum::Char(c) => match char_name(*c) {
                Some(name) => write!(f, "#\\{name}"),
                None => write!(f, "#\\{}", *c as char),
            },
            Datum::Bool(true) => write!(f, "#t"),
            Datum::Bool(false) => write!(f, "#f"),
            Datum::Nil => write!(f, "()"),
            Datum::Pair(_, _) => {
                let (elems, tail) = self.improper_elems();
                write!(f, "(")?;
                for (i, e) in elems.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{e}")?;
                }
                if !matches!(tail, Datum::Nil) {
                    write!(f, " . {tail}")?;
                }
                write!(f, ")")
            }
            Datum::Vector(v) => {
                write!(f, "#(")?;
                for (i, e) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}
