//! Macro expansion: datums to core forms.
//!
//! Expanders fully control their own recursion. Built-in special forms are
//! registered alongside user expanders defined with `define-expander`, whose
//! bodies are pattern/template clauses. A template's output is re-expanded,
//! so a template that wraps its input in `quote` suppresses expansion of the
//! sub-forms.

use crate::datum::Datum;
use crate::features::{FeatureDecl, FeatureSet, PrimitiveDecl};
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreForm {
    Const(Datum),
    Ref(String),
    Set(String, Box<CoreForm>),
    If(Box<CoreForm>, Box<CoreForm>, Box<CoreForm>),
    Lambda {
        params: Vec<String>,
        rest: Option<String>,
        body: Box<CoreForm>,
    },
    Call(Box<CoreForm>, Vec<CoreForm>),
    Seq(Vec<CoreForm>),
    /// Resolved after the liveness analysis.
    FeatureIf(String, Box<CoreForm>, Box<CoreForm>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopForm {
    Define(String, CoreForm),
    Expr(CoreForm),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpandError {
    #[error("bad `{form}` form: {detail}")]
    BadForm { form: String, detail: String },
    #[error("`{0}` is only allowed at the top level")]
    NotTopLevel(String),
    #[error("no expander clause of `{0}` matches the call")]
    NoMatchingClause(String),
}

fn bad(form: &str, detail: &str) -> ExpandError {
    ExpandError::BadForm { form: form.into(), detail: detail.into() }
}

#[derive(Clone)]
enum Expander {
    Builtin(&'static str),
    Template(Vec<(Datum, Datum)>),
}

pub struct ExpandEnv {
    expanders: HashMap<String, Expander>,
    gensym: usize,
}

const BUILTINS: &[&str] = &[
    "quote", "if", "lambda", "set!", "begin", "let", "let*", "cond", "and", "or",
    "quasiquote", "define", "define-expander", "define-macro", "define-primitive",
    "define-feature", "if-feature",
];

impl Default for ExpandEnv {
    fn default() -> Self {
        let mut expanders = HashMap::new();
        for name in BUILTINS {
            expanders.insert(name.to_string(), Expander::Builtin(name));
        }
        ExpandEnv { expanders, gensym: 0 }
    }
}

impl ExpandEnv {
    fn fresh(&mut self, hint: &str) -> String {
        self.gensym += 1;
        format!("{hint}%{}", self.gensym)
    }
}

/// Expands one top-level datum. Definition forms register their effect
/// (on `env` or `features`) and yield no or one top form.
pub fn expand_top(
    d: &Datum,
    env: &mut ExpandEnv,
    features: &mut FeatureSet,
) -> Result<Vec<TopForm>, ExpandError> {
    if let Datum::Pair(head, _) = d {
        if let Some(name) = head.as_sym() {
            match name {
                "define" => return expand_define(d, env, features),
                "begin" => {
                    let elems = d.list_elems().ok_or_else(|| bad("begin", "improper list"))?;
                    let mut out = Vec::new();
                    for sub in &elems[1..] {
                        out.extend(expand_top(sub, env, features)?);
                    }
                    return Ok(out);
                }
                "define-expander" | "define-macro" => {
                    register_expander(d, env)?;
                    return Ok(vec![]);
                }
                "define-primitive" => {
                    register_primitive(d, features)?;
                    return Ok(vec![]);
                }
                "define-feature" => {
                    register_feature(d, features)?;
                    return Ok(vec![]);
                }
                _ => {}
            }
        }
    }
    Ok(vec![TopForm::Expr(expand(d, env, features)?)])
}

fn expand_define(
    d: &Datum,
    env: &mut ExpandEnv,
    features: &mut FeatureSet,
) -> Result<Vec<TopForm>, ExpandError> {
    let elems = d.list_elems().ok_or_else(|| bad("define", "improper list"))?;
    if elems.len() < 2 {
        return Err(bad("define", "missing name"));
    }
    match &elems[1] {
        Datum::Sym(name) => {
            if elems.len() != 3 {
                return Err(bad("define", "expected one value expression"));
            }
            let value = expand(&elems[2], env, features)?;
            Ok(vec![TopForm::Define(name.to_string(), value)])
        }
        Datum::Pair(f, formals) => {
            let name = f.as_sym().ok_or_else(|| bad("define", "procedure name"))?;
            let lambda = Datum::cons(
                Datum::sym("lambda"),
                Datum::cons(
                    (**formals).clone(),
                    Datum::list(elems[2..].iter().cloned()),
                ),
            );
            let value = expand(&lambda, env, features)?;
            Ok(vec![TopForm::Define(name.to_string(), value)])
        }
        _ => Err(bad("define", "name must be a symbol")),
    }
}

/// Expands an expression datum into a core form.
pub fn expand(
    d: &Datum,
    env: &mut ExpandEnv,
    features: &mut FeatureSet,
) -> Result<CoreForm, ExpandError> {
    match d {
        Datum::Sym(s) => Ok(CoreForm::Ref(s.to_string())),
        Datum::Int(_) | Datum::Str(_) | Datum::Char(_) | Datum::Bool(_) | Datum::Vector(_) => {
            Ok(CoreForm::Const(d.clone()))
        }
        Datum::Nil => Err(bad("()", "empty application")),
        Datum::Pair(head, _) => {
            if let Some(name) = head.as_sym() {
                match env.expanders.get(name).cloned() {
                    Some(Expander::Builtin(b)) => return expand_builtin(b, d, env, features),
                    Some(Expander::Template(clauses)) => {
                        let out = apply_template_expander(name, &clauses, d)?;
                        return expand(&out, env, features);
                    }
                    None => {}
                }
            }
            let elems = d.list_elems().ok_or_else(|| bad("call", "improper argument list"))?;
            let op = expand(&elems[0], env, features)?;
            let args = elems[1..]
                .iter()
                .map(|a| expand(a, env, features))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(CoreForm::Call(Box::new(op), args))
        }
    }
}

fn expand_body(
    body: &[Datum],
    env: &mut ExpandEnv,
    features: &mut FeatureSet,
) -> Result<CoreForm, ExpandError> {
    match body.len() {
        0 => Err(bad("body", "empty body")),
        1 => expand(&body[0], env, features),
        _ => Ok(CoreForm::Seq(
            body.iter()
                .map(|b| expand(b, env, features))
                .collect::<Result<Vec<_>, _>>()?,
        )),
    }
}

fn expand_builtin(
    name: &str,
    d: &Datum,
    env: &mut ExpandEnv,
    features: &mut FeatureSet,
) -> Result<CoreForm, ExpandError> {
    let elems = d
        .list_elems()
        .ok_or_else(|| bad(name, "improper form"))?;
    let args = &elems[1..];
    match name {
        "quote" => match args {
            [x] => Ok(CoreForm::Const(x.clone())),
            _ => Err(bad("quote", "expected one datum")),
        },
        "if" => match args {
            [t, c] => Ok(CoreForm::If(
                Box::new(expand(t, env, features)?),
                Box::new(expand(c, env, features)?),
                Box::new(CoreForm::Const(Datum::Bool(false))),
            )),
            [t, c, a] => Ok(CoreForm::If(
                Box::new(expand(t, env, features)?),
                Box::new(expand(c, env, features)?),
                Box::new(expand(a, env, features)?),
            )),
            _ => Err(bad("if", "expected test and branches")),
        },
        "lambda" => {
            if args.is_empty() {
                return Err(bad("lambda", "missing parameter list"));
            }
            let (params, rest) = parse_formals(&args[0])?;
            let body = expand_body(&args[1..], env, features)?;
            Ok(CoreForm::Lambda { params, rest, body: Box::new(body) })
        }
        "set!" => match args {
            [Datum::Sym(v), e] => Ok(CoreForm::Set(
                v.to_string(),
                Box::new(expand(e, env, features)?),
            )),
            _ => Err(bad("set!", "expected variable and expression")),
        },
        "begin" => expand_body(args, env, features),
        "let" => {
            if args.first().is_some_and(|a| a.as_sym().is_some()) {
                return Err(bad("let", "named let is not supported"));
            }
            let bindings = args
                .first()
                .and_then(|b| b.list_elems())
                .ok_or_else(|| bad("let", "bad binding list"))?;
            let mut names = Vec::new();
            let mut inits = Vec::new();
            for b in &bindings {
                match b.list_elems().as_deref() {
                    Some([Datum::Sym(v), e]) => {
                        names.push(v.to_string());
                        inits.push(e.clone());
                    }
                    _ => return Err(bad("let", "binding must be (name expr)")),
                }
            }
            let body = expand_body(&args[1..], env, features)?;
            let inits = inits
                .iter()
                .map(|e| expand(e, env, features))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(CoreForm::Call(
                Box::new(CoreForm::Lambda { params: names, rest: None, body: Box::new(body) }),
                inits,
            ))
        }
        "let*" => {
            let bindings = args
                .first()
                .and_then(|b| b.list_elems())
                .ok_or_else(|| bad("let*", "bad binding list"))?;
            let body = Datum::list(args[1..].iter().cloned());
            let mut form = body;
            for b in bindings.into_iter().rev() {
                form = Datum::list([
                    Datum::sym("let"),
                    Datum::list([b]),
                ])
                .append_body(form);
            }
            // form is (let ((v e)) . rest-chain); expand the outermost
            expand(&form, env, features)
        }
        "cond" => {
            let mut out = CoreForm::Const(Datum::Bool(false));
            for clause in args.iter().rev() {
                let parts = clause
                    .list_elems()
                    .ok_or_else(|| bad("cond", "bad clause"))?;
                if parts.is_empty() {
                    return Err(bad("cond", "empty clause"));
                }
                if parts[0].as_sym() == Some("else") {
                    out = expand_body(&parts[1..], env, features)?;
                } else if parts.len() == 1 {
                    // (cond (e) ...) yields e when true
                    let tmp = env.fresh("cond");
                    let test = expand(&parts[0], env, features)?;
                    out = CoreForm::Call(
                        Box::new(CoreForm::Lambda {
                            params: vec![tmp.clone()],
                            rest: None,
                            body: Box::new(CoreForm::If(
                                Box::new(CoreForm::Ref(tmp.clone())),
                                Box::new(CoreForm::Ref(tmp)),
                                Box::new(out),
                            )),
                        }),
                        vec![test],
                    );
                } else {
                    let test = expand(&parts[0], env, features)?;
                    let body = expand_body(&parts[1..], env, features)?;
                    out = CoreForm::If(Box::new(test), Box::new(body), Box::new(out));
                }
            }
            Ok(out)
        }
        "and" => {
            let mut out = CoreForm::Const(Datum::Bool(true));
            for (i, a) in args.iter().enumerate().rev() {
                let e = expand(a, env, features)?;
                out = if i == args.len() - 1 {
                    e
                } else {
                    CoreForm::If(Box::new(e), Box::new(out), Box::new(CoreForm::Const(Datum::Bool(false))))
                };
            }
            Ok(out)
        }
        "or" => {
            let mut out = CoreForm::Const(Datum::Bool(false));
            for (i, a) in args.iter().enumerate().rev() {
                let e = expand(a, env, features)?;
                out = if i == args.len() - 1 {
                    e
                } else {
                    let tmp = env.fresh("or");
                    CoreForm::Call(
                        Box::new(CoreForm::Lambda {
                            params: vec![tmp.clone()],
                            rest: None,
                            body: Box::new(CoreForm::If(
                                Box::new(CoreForm::Ref(tmp.clone())),
                                Box::new(CoreForm::Ref(tmp)),
                                Box::new(out),
                            )),
                        }),
                        vec![e],
                    )
                };
            }
            Ok(out)
        }
        "quasiquote" => match args {
            [x] => expand(&quasi(x)?, env, features),
            _ => Err(bad("quasiquote", "expected one datum")),
        },
        "if-feature" => match args {
            [Datum::Sym(f), t] => Ok(CoreForm::FeatureIf(
                f.to_string(),
                Box::new(expand(t, env, features)?),
                Box::new(CoreForm::Const(Datum::Bool(false))),
            )),
            [Datum::Sym(f), t, e] => Ok(CoreForm::FeatureIf(
                f.to_string(),
                Box::new(expand(t, env, features)?),
                Box::new(expand(e, env, features)?),
            )),
            _ => Err(bad("if-feature", "expected feature name and branches")),
        },
        "define" | "define-expander" | "define-macro" | "define-primitive" | "define-feature" => {
            Err(ExpandError::NotTopLevel(name.to_string()))
        }
        _ => unreachable!("unknown builtin {name}"),
    }
}

impl Datum {
    /// Helper for let*: attach `body` (a datum list) to a partial form list.
    fn append_body(self, body: Datum) -> Datum {
        // self is (let (binding)); produce (let (binding) . body-wrapped)
        let (elems, _) = self.improper_elems();
        let mut items: Vec<Datum> = elems;
        match body.list_elems() {
            Some(forms) if !forms.is_empty() => items.extend(forms),
            _ => items.push(body),
        }
        Datum::list(items)
    }
}

fn quasi(d: &Datum) -> Result<Datum, ExpandError> {
    match d {
        Datum::Pair(a, rest) => {
            if a.as_sym() == Some("unquote") {
                match rest.list_elems().as_deref() {
                    Some([x]) => return Ok(x.clone()),
                    _ => return Err(bad("unquote", "expected one expression")),
                }
            }
            if a.as_sym() == Some("quasiquote") {
                return Err(bad("quasiquote", "nesting is not supported"));
            }
            if let Datum::Pair(ah, _) = &**a {
                if ah.as_sym() == Some("unquote-splicing") {
                    return Err(bad("unquote-splicing", "not supported"));
                }
            }
            Ok(Datum::list([
                Datum::sym("cons"),
                quasi(a)?,
                quasi(rest)?,
            ]))
        }
        _ => Ok(Datum::list([Datum::sym("quote"), d.clone()])),
    }
}

fn parse_formals(d: &Datum) -> Result<(Vec<String>, Option<String>), ExpandError> {
    match d {
        Datum::Sym(rest) => Ok((vec![], Some(rest.to_string()))),
        _ => {
            let (elems, tail) = d.improper_elems();
            let params = elems
                .iter()
                .map(|p| {
                    p.as_sym()
                        .map(str::to_string)
                        .ok_or_else(|| bad("lambda", "parameter must be a symbol"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rest = match tail {
                Datum::Nil => None,
                Datum::Sym(s) => Some(s.to_string()),
                _ => return Err(bad("lambda", "bad rest parameter")),
            };
            Ok((params, rest))
        }
    }
}

fn register_expander(d: &Datum, env: &mut ExpandEnv) -> Result<(), ExpandError> {
    let elems = d
        .list_elems()
        .ok_or_else(|| bad("define-expander", "improper form"))?;
    match elems.get(1) {
        // (define-expander (name . pattern) template)
        Some(Datum::Pair(name, pattern)) => {
            let name = name
                .as_sym()
                .ok_or_else(|| bad("define-expander", "name must be a symbol"))?;
            if elems.len() != 3 {
                return Err(bad("define-expander", "expected one template"));
            }
            env.expanders.insert(
                name.to_string(),
                Expander::Template(vec![((**pattern).clone(), elems[2].clone())]),
            );
            Ok(())
        }
        // (define-expander name (pattern template) ...)
        Some(Datum::Sym(name)) => {
            let mut clauses = Vec::new();
            for c in &elems[2..] {
                match c.list_elems().as_deref() {
                    Some([pat, tmpl]) => clauses.push((pat.clone(), tmpl.clone())),
                    _ => return Err(bad("define-expander", "clause must be (pattern template)")),
                }
            }
            env.expanders.insert(name.to_string(), Expander::Template(clauses));
            Ok(())
        }
        _ => Err(bad("define-expander", "missing name")),
    }
}

fn register_primitive(d: &Datum, features: &mut FeatureSet) -> Result<(), ExpandError> {
    let elems = d
        .list_elems()
        .ok_or_else(|| bad("define-primitive", "improper form"))?;
    let sig = elems
        .get(1)
        .and_then(|s| s.list_elems())
        .ok_or_else(|| bad("define-primitive", "expected (name params...)"))?;
    let name = sig
        .first()
        .and_then(|n| n.as_sym())
        .ok_or_else(|| bad("define-primitive", "name must be a symbol"))?;
    let mut uses = Vec::new();
    let mut body = String::new();
    for clause in &elems[2..] {
        match clause {
            Datum::Str(s) => body = s.clone(),
            _ => match clause.list_elems().as_deref() {
                Some([u, deps @ ..]) if u.as_sym() == Some("use") => {
                    for dep in deps {
                        uses.push(
                            dep.as_sym()
                                .ok_or_else(|| bad("define-primitive", "use names a feature"))?
                                .to_string(),
                        );
                    }
                }
                _ => return Err(bad("define-primitive", "unknown clause")),
            },
        }
    }
    features.declare_primitive(PrimitiveDecl {
        name: name.to_string(),
        arity: sig.len() - 1,
        uses,
        body,
    });
    Ok(())
}

fn register_feature(d: &Datum, features: &mut FeatureSet) -> Result<(), ExpandError> {
    let elems = d
        .list_elems()
        .ok_or_else(|| bad("define-feature", "improper form"))?;
    let sig = elems
        .get(1)
        .and_then(|s| s.list_elems())
        .ok_or_else(|| bad("define-feature", "expected (name)"))?;
    let name = sig
        .first()
        .and_then(|n| n.as_sym())
        .ok_or_else(|| bad("define-feature", "name must be a symbol"))?;
    let mut decl = FeatureDecl { name: name.to_string(), ..Default::default() };
    for clause in &elems[2..] {
        match clause.list_elems().as_deref() {
            Some([u, deps @ ..]) if u.as_sym() == Some("use") => {
                for dep in deps {
                    decl.uses.push(
                        dep.as_sym()
                            .ok_or_else(|| bad("define-feature", "use names a feature"))?
                            .to_string(),
                    );
                }
            }
            Some([loc, Datum::Str(code)]) => {
                let loc = loc
                    .as_sym()
                    .ok_or_else(|| bad("define-feature", "location must be a symbol"))?;
                decl.snippets.push((loc.to_string(), code.clone()));
            }
            _ => return Err(bad("define-feature", "unknown clause")),
        }
    }
    features.declare_feature(decl);
    Ok(())
}

fn apply_template_expander(
    name: &str,
    clauses: &[(Datum, Datum)],
    call: &Datum,
) -> Result<Datum, ExpandError> {
    // Pattern matches the argument list (everything after the operator).
    let args = match call {
        Datum::Pair(_, rest) => (**rest).clone(),
        _ => Datum::Nil,
    };
    for (pat, tmpl) in clauses {
        let mut bindings = HashMap::new();
        if match_pattern(pat, &args, &mut bindings) {
            return Ok(substitute(tmpl, &bindings));
        }
    }
    Err(ExpandError::NoMatchingClause(name.to_string()))
}

fn match_pattern(pat: &Datum, input: &Datum, bindings: &mut HashMap<String, Datum>) -> bool {
    match pat {
        Datum::Sym(s) if &**s == "_" => true,
        Datum::Sym(s) => {
            bindings.insert(s.to_string(), input.clone());
            true
        }
        Datum::Pair(pa, pd) => match input {
            Datum::Pair(ia, id) => {
                match_pattern(pa, ia, bindings) && match_pattern(pd, id, bindings)
            }
            _ => false,
        },
        other => other == input,
    }
}

fn substitute(tmpl: &Datum, bindings: &HashMap<String, Datum>) -> Datum {
    match tmpl {
        Datum::Sym(s) => bindings.get(&**s).cloned().unwrap_or_else(|| tmpl.clone()),
        Datum::Pair(a, d) => Datum::Pair(
            Rc::new(substitute(a, bindings)),
            Rc::new(substitute(d, bindings)),
        ),
        Datum::Vector(v) => Datum::Vector(v.iter().map(|e| substitute(e, bindings)).collect()),
        _ => tmpl.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reader::read_all;

    fn expand_src(src: &str) -> Vec<TopForm> {
        let mut env = ExpandEnv::default();
        let mut features = FeatureSet::default();
        read_all(src)
            .unwrap()
            .iter()
            .flat_map(|d| expand_top(d, &mut env, &mut features).unwrap())
            .collect()
    }

    fn expr(src: &str) -> CoreForm {
        match expand_src(src).pop().unwrap() {
            TopForm::Expr(e) => e,
            other => panic!("expected expr, got {other:?}"),
        }
    }

    #[test]
    fn cond_desugars_to_conditionals() {
        let e = expr("(cond (a b) (else c))");
        assert_eq!(
            e,
            CoreForm::If(
                Box::new(CoreForm::Ref("a".into())),
                Box::new(CoreForm::Ref("b".into())),
                Box::new(CoreForm::Ref("c".into())),
            )
        );
    }

    #[test]
    fn plus_expander_rewrites_to_primitive() {
        // The library registers this expander; here we register it by hand.
        let forms = expand_src(
            "(define-expander + ((a b) (##+ a b)))
             (+ x y)",
        );
        match &forms[0] {
            TopForm::Expr(CoreForm::Call(op, args)) => {
                assert_eq!(**op, CoreForm::Ref("##+".into()));
                assert_eq!(args.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expander_swapping_argument_order() {
        let forms = expand_src(
            "(define-expander (swap a b) (f b a))
             (swap 1 2)",
        );
        match &forms[0] {
            TopForm::Expr(CoreForm::Call(_, args)) => {
                assert_eq!(args[0], CoreForm::Const(Datum::Int(2)));
                assert_eq!(args[1], CoreForm::Const(Datum::Int(1)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quoting_expander_suppresses_recursion() {
        let forms = expand_src(
            "(define-expander (freeze x) (quote x))
             (freeze (let ((a 1)) a))",
        );
        match &forms[0] {
            TopForm::Expr(CoreForm::Const(d)) => {
                // the let survives unexpanded inside the quoted datum
                assert!(d.to_string().contains("let"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expansion_is_deterministic() {
        let a = expand_src("(let* ((x 1) (y x)) (or x y) (and x y))");
        let b = expand_src("(let* ((x 1) (y x)) (or x y) (and x y))");
        assert_eq!(a, b);
    }

    #[test]
    fn if_with_no_test_is_an_error() {
        let mut env = ExpandEnv::default();
        let mut fs = FeatureSet::default();
        let d = read_all("(if)").unwrap().remove(0);
        let e = expand_top(&d, &mut env, &mut fs).unwrap_err();
        assert!(matches!(e, ExpandError::BadForm { form, .. } if form == "if"));
    }

    #[test]
    fn define_primitive_records_feature_data() {
        let mut env = ExpandEnv::default();
        let mut fs = FeatureSet::default();
        let d = read_all("(define-primitive (##putchar c) (use stdio) \"putchar(NUM(tos()));\")")
            .unwrap()
            .remove(0);
        assert!(expand_top(&d, &mut env, &mut fs).unwrap().is_empty());
        assert_eq!(fs.primitives.len(), 1);
        assert_eq!(fs.primitives[0].name, "##putchar");
        assert_eq!(fs.primitives[0].arity, 1);
        assert_eq!(fs.primitives[0].uses, vec!["stdio".to_string()]);
    }

    #[test]
    fn quasiquote_builds_cons_tree() {
        let e = expr("`(a ,b)");
        // (cons 'a (cons b '()))
        match e {
            CoreForm::Call(op, args) => {
                assert_eq!(*op, CoreForm::Ref("cons".into()));
                assert_eq!(args[0], CoreForm::Const(Datum::sym("a")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rest_parameter_formals() {
        let e = expr("(lambda (a . r) r)");
        match e {
            CoreForm::Lambda { params, rest, .. } => {
                assert_eq!(params, vec!["a".to_string()]);
                assert_eq!(rest, Some("r".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
