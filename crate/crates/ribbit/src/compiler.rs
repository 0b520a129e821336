//! Core forms to code DAG.
//!
//! Pipeline: liveness pruning, feature fixpoint, `if-feature` substitution,
//! code generation, constant lifting, symbol index assignment.
//!
//! Calling convention: arguments are pushed left to right; a call frame is
//! the rib [saved stack, closure, return pc] and sits under the callee's
//! locals, with the closure's captured environment reachable through the
//! frame's middle field. A `(let ...)` whose initializers are in place is
//! compiled without a frame: values stay on the caller's stack and the body
//! squeezes them out with `##arg2` calls when not in tail position.

use crate::datum::Datum;
use crate::expander::{CoreForm, ExpandError, TopForm};
use crate::features::{FeatureError, FeatureSet};
use crate::graph::{
    CodeGraph, NodeId, Operand, SymId, SymbolTable, OP_CONST, OP_GET, OP_IF, OP_JUMP_CALL, OP_SET,
};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Symbols the decoder installs before running any code: the rib primitive
/// and the three singletons.
pub const PINNED_SYMBOLS: [&str; 4] = ["##rib", "##false", "##true", "##nil"];

/// Primitives every compiled program can rely on: calling convention
/// plumbing plus the cell constructor.
pub const CORE_PRIMITIVES: [&str; 5] = ["##rib", "##id", "##pop", "##arg2", "##close"];

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("unbound global `{0}`")]
    Unbound(String),
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub arity_check: bool,
    pub prim_no_arity: bool,
    /// Keep a name for every symbol (needed by `string->symbol` and the
    /// interactive interpreter); otherwise only quoted symbols are named.
    pub name_all_symbols: bool,
    /// Emit primitive dispatch indexes renumbered densely over the live
    /// set instead of the baseline table positions.
    pub renumber_primitives: bool,
    pub enable: Vec<String>,
    pub disable: Vec<String>,
    /// Leave unknown globals to be resolved at run time (interactive use).
    pub allow_unbound: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            arity_check: true,
            prim_no_arity: false,
            name_all_symbols: false,
            renumber_primitives: false,
            enable: vec![],
            disable: vec![],
            allow_unbound: false,
        }
    }
}

/// Wire order of the symbol table: pinned symbols first, then the named
/// block, then anonymous symbols, more frequently referenced first.
pub struct SymbolLayout {
    pub order: Vec<SymId>,
    pub index_of: HashMap<SymId, u32>,
    /// Names for the first `named_count` entries.
    pub names: Vec<Option<String>>,
    pub named_count: usize,
    pub anonymous_count: usize,
}

pub struct CompiledProgram {
    pub graph: CodeGraph,
    pub root: NodeId,
    pub symbols: SymbolTable,
    pub layout: SymbolLayout,
    pub features: FeatureSet,
    /// Live primitives in baseline order: (name, baseline index). The
    /// position in this list is the dense renumbered index.
    pub live_primitives: Vec<(String, usize)>,
    pub arity_check: bool,
    pub prim_no_arity: bool,
}

pub fn compile_program(
    forms: Vec<TopForm>,
    mut features: FeatureSet,
    options: &CompileOptions,
) -> Result<CompiledProgram, CompileError> {
    let (forms, refs) = prune(forms);

    let prim_names: BTreeSet<String> =
        features.primitives.iter().map(|p| p.name.clone()).collect();
    let mut demand = base_demand(&refs, &prim_names, &forms, options);
    features.resolve(&demand, &options.enable, &options.disable)?;

    // if-feature resolution can drop code, so prune and resolve again on
    // what actually remains.
    let forms: Vec<TopForm> = forms
        .into_iter()
        .map(|f| match f {
            TopForm::Define(n, e) => TopForm::Define(n, subst_features(e, &features)),
            TopForm::Expr(e) => TopForm::Expr(subst_features(e, &features)),
        })
        .collect();
    let (forms, refs) = prune(forms);
    demand = base_demand(&refs, &prim_names, &forms, options);
    features.resolve(&demand, &options.enable, &options.disable)?;

    let has_rest = any_form(&forms, &mut |f| {
        matches!(f, CoreForm::Lambda { rest: Some(_), .. })
    });
    let arity_check = options.arity_check || has_rest;

    let defined: BTreeSet<String> = forms
        .iter()
        .filter_map(|f| match f {
            TopForm::Define(n, _) => Some(n.clone()),
            _ => None,
        })
        .collect();
    if !options.allow_unbound {
        for r in &refs {
            if !defined.contains(r)
                && !prim_names.contains(r.as_str())
                && !PINNED_SYMBOLS.contains(&r.as_str())
            {
                return Err(CompileError::Unbound(r.clone()));
            }
        }
    }

    // Globals assigned anywhere lose the static-primitive treatment.
    let mut assigned = defined.clone();
    each_form(&forms, &mut |f| {
        if let CoreForm::Set(n, _) = f {
            assigned.insert(n.clone());
        }
    });
    let static_prims: HashMap<String, usize> = features
        .primitives
        .iter()
        .filter(|p| !assigned.contains(&p.name))
        .map(|p| (p.name.clone(), p.arity))
        .collect();

    let live_primitives: Vec<(String, usize)> = features
        .primitives
        .iter()
        .enumerate()
        .filter(|(_, p)| features.is_enabled(&p.name) || CORE_PRIMITIVES.contains(&p.name.as_str()))
        .map(|(i, p)| (p.name.clone(), i))
        .collect();

    let mut graph = CodeGraph::new();
    let mut symbols = SymbolTable::default();
    for s in PINNED_SYMBOLS {
        symbols.intern(s);
    }
    let mut cg = Codegen {
        graph: &mut graph,
        syms: &mut symbols,
        arity_check,
        prim_no_arity: options.prim_no_arity,
        static_prims,
    };

    let root = cg.comp_top(&forms)?;
    let root = lift_constants(&mut cg, root)?;
    let root = prim_prelude(&mut cg, root, &live_primitives, options.renumber_primitives)?;

    let layout = assign_symbol_indexes(&graph, root, &symbols, options.name_all_symbols);

    Ok(CompiledProgram {
        graph,
        root,
        symbols,
        layout,
        features,
        live_primitives,
        arity_check,
        prim_no_arity: options.prim_no_arity,
    })
}

/// Feature names the program demands before any override: referenced
/// primitives, the calling convention core, subtraction when a negative
/// constant must be built, and arity checking when it cannot be turned off.
fn base_demand(
    refs: &BTreeSet<String>,
    prim_names: &BTreeSet<String>,
    forms: &[TopForm],
    options: &CompileOptions,
) -> BTreeSet<String> {
    let mut demand: BTreeSet<String> = refs
        .iter()
        .filter(|r| prim_names.contains(*r))
        .cloned()
        .collect();
    for p in CORE_PRIMITIVES {
        if prim_names.contains(p) {
            demand.insert(p.to_string());
        }
    }
    let mut has_neg = false;
    let mut has_rest = false;
    each_form(forms, &mut |f| {
        if let CoreForm::Const(d) = f {
            has_neg |= datum_has_negative(d);
        }
        if let CoreForm::Lambda { rest: Some(_), .. } = f {
            has_rest = true;
        }
    });
    if has_neg && prim_names.contains("##-") {
        demand.insert("##-".to_string());
    }
    if has_rest {
        demand.insert("rest-param".to_string());
    }
    if has_rest || options.arity_check {
        demand.insert("arity-check".to_string());
    }
    demand
}

fn datum_has_negative(d: &Datum) -> bool {
    match d {
        Datum::Int(n) => *n < 0,
        Datum::Pair(a, b) => datum_has_negative(a) || datum_has_negative(b),
        Datum::Vector(v) => v.iter().any(datum_has_negative),
        _ => false,
    }
}

/// Pre-order visit of every sub-form, including both feature branches.
fn each_core(form: &CoreForm, f: &mut impl FnMut(&CoreForm)) {
    f(form);
    match form {
        CoreForm::Set(_, e) => each_core(e, f),
        CoreForm::If(a, b, c) => {
            each_core(a, f);
            each_core(b, f);
            each_core(c, f);
        }
        CoreForm::FeatureIf(_, b, c) => {
            each_core(b, f);
            each_core(c, f);
        }
        CoreForm::Lambda { body, .. } => each_core(body, f),
        CoreForm::Call(op, args) => {
            each_core(op, f);
            args.iter().for_each(|a| each_core(a, f));
        }
        CoreForm::Seq(es) => es.iter().for_each(|e| each_core(e, f)),
        _ => {}
    }
}

fn each_form(forms: &[TopForm], f: &mut impl FnMut(&CoreForm)) {
    for form in forms {
        match form {
            TopForm::Define(_, e) | TopForm::Expr(e) => each_core(e, f),
        }
    }
}

fn any_form(forms: &[TopForm], pred: &mut impl FnMut(&CoreForm) -> bool) -> bool {
    let mut found = false;
    each_form(forms, &mut |f| found |= pred(f));
    found
}

/// Free global references of a form (locals excluded).
fn free_refs(form: &CoreForm, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match form {
        CoreForm::Ref(n) => {
            if !bound.iter().any(|b| b == n) {
                out.insert(n.clone());
            }
        }
        CoreForm::Set(n, e) => {
            if !bound.iter().any(|b| b == n) {
                out.insert(n.clone());
            }
            free_refs(e, bound, out);
        }
        CoreForm::If(a, b, c) => {
            free_refs(a, bound, out);
            free_refs(b, bound, out);
            free_refs(c, bound, out);
        }
        CoreForm::FeatureIf(_, b, c) => {
            free_refs(b, bound, out);
            free_refs(c, bound, out);
        }
        CoreForm::Lambda { params, rest, body } => {
            let depth = bound.len();
            bound.extend(params.iter().cloned());
            bound.extend(rest.iter().cloned());
            free_refs(body, bound, out);
            bound.truncate(depth);
        }
        CoreForm::Call(op, args) => {
            free_refs(op, bound, out);
            args.iter().for_each(|a| free_refs(a, bound, out));
        }
        CoreForm::Seq(es) => es.iter().for_each(|e| free_refs(e, bound, out)),
        CoreForm::Const(_) => {}
    }
}

/// Drops definitions unreachable from the program's expressions and returns
/// the set of globals the survivors reference.
fn prune(forms: Vec<TopForm>) -> (Vec<TopForm>, BTreeSet<String>) {
    let mut defs: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, f) in forms.iter().enumerate() {
        if let TopForm::Define(n, _) = f {
            defs.entry(n).or_default().push(i);
        }
    }
    let mut marked: BTreeSet<String> = BTreeSet::new();
    let mut work: Vec<String> = Vec::new();
    for f in &forms {
        if let TopForm::Expr(e) = f {
            let mut out = BTreeSet::new();
            free_refs(e, &mut Vec::new(), &mut out);
            for r in out {
                if marked.insert(r.clone()) {
                    work.push(r);
                }
            }
        }
    }
    while let Some(name) = work.pop() {
        for &i in defs.get(name.as_str()).into_iter().flatten() {
            if let TopForm::Define(_, body) = &forms[i] {
                let mut out = BTreeSet::new();
                free_refs(body, &mut Vec::new(), &mut out);
                for r in out {
                    if marked.insert(r.clone()) {
                        work.push(r);
                    }
                }
            }
        }
    }
    let kept = forms
        .into_iter()
        .filter(|f| match f {
            TopForm::Define(n, _) => marked.contains(n),
            TopForm::Expr(_) => true,
        })
        .collect();
    (kept, marked)
}

fn subst_features(form: CoreForm, features: &FeatureSet) -> CoreForm {
    match form {
        CoreForm::FeatureIf(f, t, e) => {
            if features.is_enabled(&f) {
                subst_features(*t, features)
            } else {
                subst_features(*e, features)
            }
        }
        CoreForm::Set(n, e) => CoreForm::Set(n, Box::new(subst_features(*e, features))),
        CoreForm::If(a, b, c) => CoreForm::If(
            Box::new(subst_features(*a, features)),
            Box::new(subst_features(*b, features)),
            Box::new(subst_features(*c, features)),
        ),
        CoreForm::Lambda { params, rest, body } => CoreForm::Lambda {
            params,
            rest,
            body: Box::new(subst_features(*body, features)),
        },
        CoreForm::Call(op, args) => CoreForm::Call(
            Box::new(subst_features(*op, features)),
            args.into_iter().map(|a| subst_features(a, features)).collect(),
        ),
        CoreForm::Seq(es) => {
            CoreForm::Seq(es.into_iter().map(|e| subst_features(e, features)).collect())
        }
        other => other,
    }
}

struct Codegen<'a> {
    graph: &'a mut CodeGraph,
    syms: &'a mut SymbolTable,
    arity_check: bool,
    prim_no_arity: bool,
    static_prims: HashMap<String, usize>,
}

impl<'a> Codegen<'a> {
    fn sym(&mut self, name: &str) -> Operand {
        Operand::Sym(self.syms.intern(name))
    }

    fn lookup(&mut self, cte: &[Option<String>], name: &str) -> Operand {
        match cte.iter().rev().position(|s| s.as_deref() == Some(name)) {
            Some(slot) => Operand::Int(slot as i64),
            None => self.sym(name),
        }
    }

    fn gen_call(&mut self, operand: Operand, tail: bool, cont: NodeId) -> NodeId {
        if tail {
            self.graph.hash_cons(OP_JUMP_CALL, operand, None)
        } else {
            self.graph.hash_cons(OP_JUMP_CALL, operand, Some(cont))
        }
    }

    /// Compiler-generated call to a calling convention primitive.
    fn gen_prim_call(&mut self, name: &str, nargs: i64, tail: bool, cont: NodeId) -> NodeId {
        let operand = self.sym(name);
        let mut code = self.gen_call(operand, tail, cont);
        if self.arity_check && !self.prim_no_arity {
            code = self.graph.hash_cons(OP_CONST, Operand::Int(nargs), Some(code));
        }
        code
    }

    /// Whole program: definitions assign their global, intermediate
    /// expression values are dropped, and the final value reaches the halt
    /// continuation through a jump to the identity primitive.
    fn comp_top(&mut self, forms: &[TopForm]) -> Result<NodeId, CompileError> {
        let ret = self.gen_prim_call("##id", 1, true, NodeId(0));
        let mut cont = ret;
        let mut cte = Vec::new();
        if !matches!(forms.last(), Some(TopForm::Expr(_))) {
            cont = self.graph.hash_cons(OP_CONST, Operand::Int(0), Some(cont));
        }
        for (i, form) in forms.iter().enumerate().rev() {
            let last = i == forms.len() - 1;
            cont = match form {
                TopForm::Expr(e) if last => self.comp(e, &mut cte, false, cont)?,
                TopForm::Expr(e) => self.comp_discard(e, &mut cte, cont)?,
                TopForm::Define(n, e) => self.comp_set_novalue(n, e, &mut cte, cont)?,
            };
        }
        Ok(cont)
    }

    /// Statement position: the value is not needed.
    fn comp_discard(
        &mut self,
        form: &CoreForm,
        cte: &mut Vec<Option<String>>,
        cont: NodeId,
    ) -> Result<NodeId, CompileError> {
        if let CoreForm::Set(n, e) = form {
            return self.comp_set_novalue(n, e, cte, cont);
        }
        let drop = self.gen_prim_call("##pop", 2, false, cont);
        self.comp(form, cte, false, drop)
    }

    fn comp_set_novalue(
        &mut self,
        name: &str,
        expr: &CoreForm,
        cte: &mut Vec<Option<String>>,
        cont: NodeId,
    ) -> Result<NodeId, CompileError> {
        let target = self.lookup(cte, name);
        let set = self.graph.hash_cons(OP_SET, target, Some(cont));
        self.comp(expr, cte, false, set)
    }

    fn comp(
        &mut self,
        form: &CoreForm,
        cte: &mut Vec<Option<String>>,
        tail: bool,
        cont: NodeId,
    ) -> Result<NodeId, CompileError> {
        match form {
            CoreForm::Const(d) => {
                let operand = match d {
                    Datum::Int(n) if *n >= 0 => Operand::Int(*n),
                    Datum::Sym(s) => self.sym(s),
                    other => Operand::Datum(other.clone()),
                };
                Ok(self.graph.hash_cons(OP_CONST, operand, Some(cont)))
            }
            CoreForm::Ref(n) => {
                let operand = self.lookup(cte, n);
                Ok(self.graph.hash_cons(OP_GET, operand, Some(cont)))
            }
            CoreForm::Set(n, e) => {
                // the value of an assignment expression is 0
                let value = self.graph.hash_cons(OP_CONST, Operand::Int(0), Some(cont));
                let target = self.lookup(cte, n);
                let set = self.graph.hash_cons(OP_SET, target, Some(value));
                self.comp(e, cte, false, set)
            }
            CoreForm::If(test, then, alt) => {
                let t = self.comp(then, cte, tail, cont)?;
                let e = self.comp(alt, cte, tail, cont)?;
                let branch = self.graph.hash_cons(OP_IF, Operand::Branch(t), Some(e));
                self.comp(test, cte, false, branch)
            }
            CoreForm::Lambda { params, rest, body } => {
                let arity = 2 * params.len() as i64 + rest.is_some() as i64;
                let depth = cte.len();
                cte.push(None); // closure
                cte.push(None); // frame
                if let Some(r) = rest {
                    cte.push(Some(r.clone()));
                }
                for p in params.iter().rev() {
                    cte.push(Some(p.clone()));
                }
                let ret = self.gen_prim_call("##id", 1, true, NodeId(0));
                let body_code = self.comp(body, cte, true, ret)?;
                cte.truncate(depth);
                let after = if cte.is_empty() {
                    cont
                } else {
                    self.gen_prim_call("##close", 1, tail, cont)
                };
                Ok(self
                    .graph
                    .hash_cons(OP_CONST, Operand::Proc { arity, body: body_code }, Some(after)))
            }
            CoreForm::Seq(es) => {
                let mut code = cont;
                for (i, e) in es.iter().enumerate().rev() {
                    code = if i == es.len() - 1 {
                        self.comp(e, cte, tail, code)?
                    } else {
                        self.comp_discard(e, cte, code)?
                    };
                }
                Ok(code)
            }
            CoreForm::Call(op, args) => self.comp_call(op, args, cte, tail, cont),
            CoreForm::FeatureIf(f, _, _) => {
                // resolved before code generation; treat leftovers as a bug
                unreachable!("feature conditional `{f}` not substituted")
            }
        }
    }

    fn comp_call(
        &mut self,
        op: &CoreForm,
        args: &[CoreForm],
        cte: &mut Vec<Option<String>>,
        tail: bool,
        cont: NodeId,
    ) -> Result<NodeId, CompileError> {
        // (lambda ...) in operator position binds on the caller's stack
        if let CoreForm::Lambda { params, rest: None, body } = op {
            if params.len() != args.len() {
                return Err(CompileError::ArityMismatch {
                    name: "let".into(),
                    expected: params.len(),
                    got: args.len(),
                });
            }
            let depth = cte.len();
            for _ in args {
                cte.push(None);
            }
            for (i, p) in params.iter().enumerate() {
                let slot = depth + i;
                cte[slot] = Some(p.clone());
            }
            let mut after = cont;
            if !tail {
                for _ in 0..args.len() {
                    after = self.gen_prim_call("##arg2", 2, false, after);
                }
            }
            let mut code = self.comp(body, cte, tail, after)?;
            for i in (0..args.len()).rev() {
                cte.truncate(depth + i);
                code = self.comp(&args[i], cte, false, code)?;
            }
            cte.truncate(depth);
            return Ok(code);
        }

        let named = match op {
            CoreForm::Ref(n) => Some(n.as_str()),
            _ => None,
        };
        let static_prim = named
            .filter(|n| self.static_prims.contains_key(*n))
            .map(|n| (n.to_string(), self.static_prims[n]));
        if let Some((name, expected)) = &static_prim {
            if args.len() != *expected {
                return Err(CompileError::ArityMismatch {
                    name: name.clone(),
                    expected: *expected,
                    got: args.len(),
                });
            }
        }
        let push_count =
            self.arity_check && !(self.prim_no_arity && static_prim.is_some());

        let complex_op = named.is_none();
        let depth = cte.len();
        if complex_op {
            cte.push(None); // operator value sits under the arguments
        }
        for _ in args {
            cte.push(None);
        }
        if push_count {
            cte.push(None); // argument count sits on top at call time
        }
        let operand = if complex_op {
            Operand::Int((args.len() + push_count as usize) as i64)
        } else {
            self.lookup(cte, named.unwrap())
        };
        if push_count {
            cte.pop();
        }

        let mut after = cont;
        if complex_op && !tail {
            // drop the operator value left under the result
            after = self.gen_prim_call("##arg2", 2, false, after);
        }
        let mut code = self.gen_call(operand, tail, after);
        if push_count {
            code = self
                .graph
                .hash_cons(OP_CONST, Operand::Int(args.len() as i64), Some(code));
        }
        for i in (0..args.len()).rev() {
            cte.truncate(depth + complex_op as usize + i);
            code = self.comp(&args[i], cte, false, code)?;
        }
        if complex_op {
            cte.truncate(depth);
            code = self.comp(op, cte, false, code)?;
        }
        cte.truncate(depth);
        Ok(code)
    }
}

/// Replaces composite constant operands with reads of globals built by a
/// prelude. Shared substructure (including repeated constants) is built
/// once: the memo is keyed by the datum itself.
fn lift_constants(cg: &mut Codegen, root: NodeId) -> Result<NodeId, CompileError> {
    let mut lift = Lifter::default();

    // children always have smaller ids, so one ascending rebuild suffices
    let mut map: Vec<NodeId> = Vec::with_capacity(cg.graph.len());
    for i in 0..cg.graph.len() {
        let node = cg.graph.node(NodeId(i as u32)).clone();
        let next = node.next.map(|n| map[n.0 as usize]);
        let id = match node.operand {
            Operand::Datum(d) => {
                let name = match &d {
                    Datum::Bool(true) => "##true".to_string(),
                    Datum::Bool(false) => "##false".to_string(),
                    Datum::Nil => "##nil".to_string(),
                    other => lift.ensure_built(other),
                };
                let op = cg.sym(&name);
                cg.graph.hash_cons(OP_GET, op, next)
            }
            Operand::Branch(b) => {
                let op = Operand::Branch(map[b.0 as usize]);
                cg.graph.hash_cons(node.op, op, next)
            }
            Operand::Proc { arity, body } => {
                let op = Operand::Proc { arity, body: map[body.0 as usize] };
                cg.graph.hash_cons(node.op, op, next)
            }
            op => cg.graph.hash_cons(node.op, op, next),
        };
        map.push(id);
    }
    let root = map[root.0 as usize];

    // prelude assignments run in emission order, so shared parts exist
    // before the composites referencing them
    let mut cont = root;
    let mut cte = Vec::new();
    for (name, expr) in lift.order.iter().rev() {
        cont = cg.comp_set_novalue(name, expr, &mut cte, cont)?;
    }
    Ok(cont)
}

#[derive(Default)]
struct Lifter {
    order: Vec<(String, CoreForm)>,
    memo: HashMap<Datum, String>,
}

impl Lifter {
    fn ensure_built(&mut self, d: &Datum) -> String {
        if let Some(name) = self.memo.get(d) {
            return name.clone();
        }
        let expr = self.composite_expr(d);
        let name = format!("%g{}", self.memo.len());
        self.memo.insert(d.clone(), name.clone());
        self.order.push((name.clone(), expr));
        name
    }

    /// Expression constructing a composite datum, assuming sub-globals exist.
    fn composite_expr(&mut self, d: &Datum) -> CoreForm {
        let rib = |a, b, c| {
            CoreForm::Call(Box::new(CoreForm::Ref("##rib".into())), vec![a, b, c])
        };
        let int = |n: i64| CoreForm::Const(Datum::Int(n));
        match d {
            Datum::Int(n) => {
                debug_assert!(*n < 0);
                CoreForm::Call(
                    Box::new(CoreForm::Ref("##-".into())),
                    vec![int(0), int(n.wrapping_neg())],
                )
            }
            Datum::Char(c) => rib(int(*c as i64), int(0), int(6)),
            Datum::Pair(a, b) => {
                let a = self.atom_or_ref(a);
                let b = self.atom_or_ref(b);
                rib(a, b, int(0))
            }
            Datum::Str(s) => {
                let codes = Datum::list(s.bytes().map(|b| Datum::Int(b as i64)));
                let codes = self.atom_or_ref(&codes);
                rib(codes, int(s.len() as i64), int(3))
            }
            Datum::Vector(v) => {
                let elems = Datum::list(v.iter().cloned());
                let elems = self.atom_or_ref(&elems);
                rib(elems, int(v.len() as i64), int(4))
            }
            _ => unreachable!("atom passed to composite_expr"),
        }
    }

    fn atom_or_ref(&mut self, d: &Datum) -> CoreForm {
        match d {
            Datum::Int(n) if *n >= 0 => CoreForm::Const(d.clone()),
            Datum::Sym(_) => CoreForm::Const(d.clone()),
            Datum::Bool(true) => CoreForm::Ref("##true".into()),
            Datum::Bool(false) => CoreForm::Ref("##false".into()),
            Datum::Nil => CoreForm::Ref("##nil".into()),
            other => CoreForm::Ref(self.ensure_built(other)),
        }
    }
}

/// Assignments giving each live primitive referenced by the code a global
/// holding its dispatch rib. The rib constructor itself is installed by the
/// decoder.
fn prim_prelude(
    cg: &mut Codegen,
    root: NodeId,
    live: &[(String, usize)],
    renumber: bool,
) -> Result<NodeId, CompileError> {
    let mut used: BTreeSet<SymId> = BTreeSet::new();
    for id in cg.graph.reachable(root) {
        if let Operand::Sym(s) = cg.graph.node(id).operand {
            used.insert(s);
        }
    }
    let mut cont = root;
    let mut cte = Vec::new();
    for (dense, (name, baseline)) in live.iter().enumerate().rev() {
        if name == "##rib" {
            continue;
        }
        if !cg.syms.lookup(name).is_some_and(|s| used.contains(&s)) {
            continue;
        }
        let index = if renumber { dense } else { *baseline };
        let expr = CoreForm::Call(
            Box::new(CoreForm::Ref("##rib".into())),
            vec![
                CoreForm::Const(Datum::Int(index as i64)),
                CoreForm::Const(Datum::Int(0)),
                CoreForm::Const(Datum::Int(1)),
            ],
        );
        cont = cg.comp_set_novalue(name, &expr, &mut cte, cont)?;
    }
    Ok(cont)
}

fn assign_symbol_indexes(
    graph: &CodeGraph,
    root: NodeId,
    syms: &SymbolTable,
    name_all: bool,
) -> SymbolLayout {
    let mut counts: HashMap<SymId, usize> = HashMap::new();
    let mut quoted: BTreeSet<SymId> = BTreeSet::new();
    for id in graph.reachable(root) {
        let node = graph.node(id);
        if let Operand::Sym(s) = node.operand {
            *counts.entry(s).or_insert(0) += 1;
            if node.op == OP_CONST {
                quoted.insert(s);
            }
        }
    }
    let pinned: Vec<SymId> = PINNED_SYMBOLS
        .iter()
        .map(|n| syms.lookup(n).expect("pinned symbols are interned first"))
        .collect();
    let mut rest: Vec<SymId> = counts
        .keys()
        .copied()
        .filter(|s| !pinned.contains(s))
        .collect();
    rest.sort_by(|a, b| {
        counts[b]
            .cmp(&counts[a])
            .then_with(|| syms.name(*a).cmp(syms.name(*b)))
    });

    let named: Vec<SymId>;
    let anon: Vec<SymId>;
    if name_all {
        named = rest;
        anon = vec![];
    } else {
        named = rest.iter().copied().filter(|s| quoted.contains(s)).collect();
        anon = rest.into_iter().filter(|s| !quoted.contains(s)).collect();
    }

    // an all-anonymous table needs no names, not even for the pinned four
    let named_count = if named.is_empty() && !name_all {
        0
    } else {
        pinned.len() + named.len()
    };
    let order: Vec<SymId> = pinned.into_iter().chain(named).chain(anon).collect();
    let index_of = order
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .collect();
    let names = order
        .iter()
        .enumerate()
        .map(|(i, &s)| (i < named_count).then(|| syms.name(s).to_string()))
        .collect();
    let anonymous_count = order.len() - named_count;
    SymbolLayout { order, index_of, names, named_count, anonymous_count }
}
