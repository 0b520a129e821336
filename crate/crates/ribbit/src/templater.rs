//! Host template specialization. A template is host source text carrying
//! `@@( ... )@@` annotations; specializing it deletes disabled feature
//! sections, regenerates the primitive dispatch cases for the live set
//! with dense indexes, substitutes compile-time values and the encoded
//! program, and expands location markers into feature snippets.

use crate::datum::Datum;
use crate::encode::code_to_char;
use crate::features::FeatureSet;
use crate::reader::read_all;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("line {0}: annotation closer `)@@` without an opener")]
    UnmatchedCloser(usize),
    #[error("line {0}: annotation block `{1}` is never closed")]
    UnclosedBlock(usize, String),
    #[error("line {line}: malformed annotation: {detail}")]
    BadAnnotation { line: usize, detail: String },
    #[error("line {0}: unknown annotation `{1}`")]
    UnknownAnnotation(usize, String),
    #[error("replace needle `{0}` not found in its block")]
    NeedleMissing(String),
    #[error("`gen` template references unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown feature value `{0}`")]
    UnknownValue(String),
    #[error("unsupported replace expression `{0}`")]
    BadExpr(String),
    #[error("code {0} does not fit in base {1}")]
    CodeOutOfBase(u32, u32),
}

#[derive(Debug, Clone)]
pub enum Node {
    /// Verbatim template line.
    Text(String),
    Annotation(Annotation),
}

#[derive(Debug, Clone)]
pub struct Annotation {
    pub name: String,
    pub args: Vec<Datum>,
    /// The whole line for inline annotations, which refer to their own line.
    pub inline_line: Option<String>,
    /// Lines between the opener and closer for block annotations.
    pub children: Vec<Node>,
    pub line: usize,
}

const NAMES: &[&str] = &["feature", "primitive", "primitives", "replace", "location"];

pub fn parse_template(text: &str) -> Result<Vec<Node>, TemplateError> {
    // (annotation under construction, opener line number)
    let mut stack: Vec<(Annotation, usize)> = Vec::new();
    let mut top: Vec<Node> = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        let dest = |stack: &mut Vec<(Annotation, usize)>, top: &mut Vec<Node>, n: Node| {
            match stack.last_mut() {
                Some((a, _)) => a.children.push(n),
                None => top.push(n),
            }
        };
        if let Some(open) = line.find("@@(") {
            let rest = &line[open + 3..];
            if let Some(close) = rest.find(")@@") {
                let ann = parse_head(&rest[..close], lineno)?;
                let ann = Annotation { inline_line: Some(line.to_string()), ..ann };
                dest(&mut stack, &mut top, Node::Annotation(ann));
            } else {
                stack.push((parse_head(rest, lineno)?, lineno));
            }
        } else if line.contains(")@@") {
            let (ann, _) = stack.pop().ok_or(TemplateError::UnmatchedCloser(lineno))?;
            dest(&mut stack, &mut top, Node::Annotation(ann));
        } else {
            dest(&mut stack, &mut top, Node::Text(line.to_string()));
        }
    }
    if let Some((a, lineno)) = stack.pop() {
        return Err(TemplateError::UnclosedBlock(lineno, a.name));
    }
    Ok(top)
}

/// The annotation head is the text after `@@(` on the opener line: a name
/// followed by argument datums.
fn parse_head(text: &str, line: usize) -> Result<Annotation, TemplateError> {
    let args = read_all(text)
        .map_err(|e| TemplateError::BadAnnotation { line, detail: e.to_string() })?;
    let name = args
        .first()
        .and_then(|d| d.as_sym())
        .ok_or_else(|| TemplateError::BadAnnotation {
            line,
            detail: "expected a name symbol".into(),
        })?
        .to_string();
    if !NAMES.contains(&name.as_str()) {
        return Err(TemplateError::UnknownAnnotation(line, name));
    }
    Ok(Annotation { name, args: args[1..].to_vec(), inline_line: None, children: vec![], line })
}

/// Everything specialization needs besides the template itself.
pub struct SpecializeEnv<'a> {
    pub features: &'a FeatureSet,
    /// Live primitive names in emission order; dense indexes follow the
    /// template order of the matching `primitive` annotations.
    pub live_primitives: Vec<String>,
    /// The encoded program as a code stream, one value per output byte.
    pub codes: Vec<u32>,
}

pub fn specialize(nodes: &[Node], env: &SpecializeEnv) -> Result<String, TemplateError> {
    let mut out: Vec<String> = Vec::new();
    emit(nodes, env, &mut out)?;
    Ok(out.join("\n"))
}

fn emit(nodes: &[Node], env: &SpecializeEnv, out: &mut Vec<String>) -> Result<(), TemplateError> {
    for node in nodes {
        match node {
            Node::Text(l) => out.push(l.clone()),
            Node::Annotation(a) => emit_annotation(a, env, out)?,
        }
    }
    Ok(())
}

fn emit_annotation(
    a: &Annotation,
    env: &SpecializeEnv,
    out: &mut Vec<String>,
) -> Result<(), TemplateError> {
    match a.name.as_str() {
        "feature" => {
            let name = a.args.first().and_then(|d| d.as_sym()).ok_or_else(|| bad(a))?;
            if env.features.is_enabled(name) {
                match &a.inline_line {
                    Some(line) => out.push(line.clone()),
                    None => emit(&a.children, env, out)?,
                }
            }
        }
        "primitive" => {
            // outside a `primitives` block the body is kept verbatim iff
            // the primitive is live
            if env.live_primitives.contains(&prim_name(a)?) {
                match &a.inline_line {
                    Some(line) => out.push(line.clone()),
                    None => emit(&a.children, env, out)?,
                }
            }
        }
        "primitives" => emit_primitives(a, env, out)?,
        "replace" => {
            let needle = match a.args.first() {
                Some(Datum::Str(s)) => s.clone(),
                _ => return Err(bad(a)),
            };
            let expr = a.args.get(1).ok_or_else(|| bad(a))?;
            let value = eval_replace_expr(expr, env)?;
            let mut body = Vec::new();
            emit(&a.children, env, &mut body)?;
            if !body.iter().any(|l| l.contains(needle.as_str())) {
                return Err(TemplateError::NeedleMissing(needle));
            }
            for line in body {
                out.push(line.replace(needle.as_str(), &value));
            }
        }
        "location" => {
            let name = a.args.first().and_then(|d| d.as_sym()).ok_or_else(|| bad(a))?;
            for f in &env.features.features {
                if !env.features.is_enabled(&f.name) {
                    continue;
                }
                for (loc, code) in &f.snippets {
                    if loc == name {
                        out.push(code.clone());
                    }
                }
            }
        }
        _ => unreachable!("unknown names are rejected at parse time"),
    }
    Ok(())
}

fn prim_name(a: &Annotation) -> Result<String, TemplateError> {
    let proto = a.args.first().and_then(|d| d.list_elems()).ok_or_else(|| bad(a))?;
    let name = proto.first().and_then(|d| d.as_sym()).ok_or_else(|| bad(a))?;
    Ok(name.to_string())
}

/// Re-emits a dispatch block: live `primitive` children go through the
/// `gen` template with dense indexes in template order, dead children
/// disappear, everything else passes through.
fn emit_primitives(
    a: &Annotation,
    env: &SpecializeEnv,
    out: &mut Vec<String>,
) -> Result<(), TemplateError> {
    let gen = a
        .args
        .first()
        .and_then(|d| d.list_elems())
        .filter(|l| l.first().and_then(|d| d.as_sym()) == Some("gen"))
        .ok_or_else(|| bad(a))?;
    let mut index = 0usize;
    for node in &a.children {
        match node {
            Node::Text(l) => out.push(l.clone()),
            Node::Annotation(child) if child.name == "primitive" => {
                if !env.live_primitives.contains(&prim_name(child)?) {
                    continue;
                }
                let mut body_lines = Vec::new();
                emit(&child.children, env, &mut body_lines)?;
                if let Some(line) = &child.inline_line {
                    body_lines.push(line.clone());
                }
                let body = body_lines.join("\n");
                let mut text = String::new();
                for part in &gen[1..] {
                    match part {
                        Datum::Str(s) => text.push_str(s),
                        Datum::Sym(s) if &**s == "index" => {
                            text.push_str(&index.to_string())
                        }
                        Datum::Sym(s) if &**s == "body" => text.push_str(&body),
                        Datum::Sym(s) => {
                            return Err(TemplateError::UnknownVariable(s.to_string()))
                        }
                        _ => return Err(bad(a)),
                    }
                }
                index += 1;
                out.push(text);
            }
            Node::Annotation(child) => emit_annotation(child, env, out)?,
        }
    }
    Ok(())
}

fn bad(a: &Annotation) -> TemplateError {
    TemplateError::BadAnnotation {
        line: a.line,
        detail: format!("bad `{}` arguments", a.name),
    }
}

/// The expression language inside `replace`: a bare feature value name,
/// `(encode base)`, `(encode-as-bytes base prefix sep suffix)` or
/// `(list->host name prefix sep suffix)`.
pub fn eval_replace_expr(expr: &Datum, env: &SpecializeEnv) -> Result<String, TemplateError> {
    match expr {
        Datum::Sym(name) => render_value(&lookup_value(name, env)?),
        Datum::Pair(..) => {
            let elems = expr.list_elems().ok_or_else(|| expr_err(expr))?;
            let head = elems.first().and_then(|d| d.as_sym()).unwrap_or("");
            match head {
                "encode" => {
                    let base = int_arg(&elems, 1, expr)?;
                    let mut s = String::from("\"");
                    for &c in &env.codes {
                        if c >= base {
                            return Err(TemplateError::CodeOutOfBase(c, base));
                        }
                        s.push(code_to_char(c, base).unwrap() as char);
                    }
                    s.push('"');
                    Ok(s)
                }
                "encode-as-bytes" => {
                    let base = int_arg(&elems, 1, expr)?;
                    for &c in &env.codes {
                        if c >= base {
                            return Err(TemplateError::CodeOutOfBase(c, base));
                        }
                    }
                    let parts: Vec<String> =
                        env.codes.iter().map(|c| c.to_string()).collect();
                    wrap(&elems, &parts, expr)
                }
                "list->host" => {
                    let name = elems
                        .get(1)
                        .and_then(|d| d.as_sym())
                        .ok_or_else(|| expr_err(expr))?;
                    let value = lookup_value(name, env)?;
                    let items = value.list_elems().ok_or_else(|| expr_err(expr))?;
                    let parts = items
                        .iter()
                        .map(|d| render_value(d))
                        .collect::<Result<Vec<_>, _>>()?;
                    wrap(&elems, &parts, expr)
                }
                _ => Err(expr_err(expr)),
            }
        }
        _ => Err(expr_err(expr)),
    }
}

fn lookup_value(name: &str, env: &SpecializeEnv) -> Result<Datum, TemplateError> {
    env.features
        .values
        .get(name)
        .cloned()
        .ok_or_else(|| TemplateError::UnknownValue(name.to_string()))
}

fn render_value(d: &Datum) -> Result<String, TemplateError> {
    match d {
        Datum::Int(n) => Ok(n.to_string()),
        Datum::Str(s) => Ok(s.clone()),
        other => Err(expr_err(other)),
    }
}

fn int_arg(elems: &[Datum], i: usize, expr: &Datum) -> Result<u32, TemplateError> {
    match elems.get(i) {
        Some(Datum::Int(n)) if *n > 0 => Ok(*n as u32),
        _ => Err(expr_err(expr)),
    }
}

/// prefix + parts joined by sep + suffix, taken from argument slots 2..4.
fn wrap(elems: &[Datum], parts: &[String], expr: &Datum) -> Result<String, TemplateError> {
    let get = |i: usize| match elems.get(i) {
        Some(Datum::Str(s)) => Ok(s.clone()),
        _ => Err(expr_err(expr)),
    };
    Ok(format!("{}{}{}", get(2)?, parts.join(&get(3)?), get(4)?))
}

fn expr_err(d: &Datum) -> TemplateError {
    TemplateError::BadExpr(format!("{d:?}"))
}
