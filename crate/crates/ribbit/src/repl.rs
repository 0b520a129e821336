//! Interactive sessions: each input is read, expanded and compiled against
//! the live expander environment and feature set, materialized straight
//! into the running store (no byte encoding round trip), and executed.
//! Global symbols are matched by name across inputs, so definitions and
//! `set!` effects persist.

use crate::compiler::{compile_program, CompileOptions, CompiledProgram, PINNED_SYMBOLS};
use crate::datum::Datum;
use crate::decode::DecodedProgram;
use crate::expander::{expand_top, CoreForm, ExpandEnv, TopForm};
use crate::features::FeatureSet;
use crate::graph::{CodeGraph, NodeId, Operand};
use crate::library::{library_source, FrontendError, LibraryVariant};
use crate::reader::read_all;
use crate::store::{tag, RibRef, RibStore, RootId, StoreError, Value, FALSE, NIL, TRUE};
use crate::vm::{run_program, Io, RuntimeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot load {path}: {source}")]
    Load { path: String, source: std::io::Error },
}

pub struct Session {
    store: RibStore,
    env: ExpandEnv,
    features: FeatureSet,
    options: CompileOptions,
    /// The cell constructor closure; its second field is the runtime
    /// symbol list, the single registry for symbol identity.
    rib_proc: RibRef,
    rib_proc_root: RootId,
    /// Bumped per compiled chunk; suffixes compiler-generated globals so
    /// one chunk's lifted constants cannot clobber an earlier chunk's.
    chunk: u64,
}

/// Name a chunk's result printer so programs cannot shadow it by accident.
const PRINTER: &str = "%repl-print";

impl Session {
    pub fn new(
        variant: LibraryVariant,
        options: &CompileOptions,
        capacity: usize,
        io: &mut Io,
    ) -> Result<Session, ReplError> {
        let mut store = RibStore::new(capacity);
        let rib_proc = store.alloc(Value::Int(0), Value::Rib(NIL), Value::Int(tag::PROCEDURE))?;
        let rib_proc_root = store.add_root(Value::Rib(rib_proc));
        let mut session = Session {
            store,
            env: ExpandEnv::default(),
            features: FeatureSet::default(),
            options: CompileOptions {
                // cross-input identity needs every symbol named, and the
                // next input may reference anything defined so far
                name_all_symbols: true,
                allow_unbound: true,
                renumber_primitives: false,
                ..options.clone()
            },
            rib_proc,
            rib_proc_root,
            chunk: 0,
        };
        for (i, name) in PINNED_SYMBOLS.iter().enumerate() {
            let sym = session.symbol_rib(name)?;
            let value = match i {
                0 => Value::Rib(session.rib_proc),
                1 => Value::Rib(FALSE),
                2 => Value::Rib(TRUE),
                _ => Value::Rib(NIL),
            };
            session.store.set_field(sym, 0, value);
        }
        session.eval_chunk(&library_source(variant), io, false, true)?;
        session.eval_chunk(
            &format!("(define ({PRINTER} x) (write x) (newline))"),
            io,
            false,
            true,
        )?;
        Ok(session)
    }

    /// One prompt's worth of input. Expression results are printed with
    /// `write` when `echo` is set; definitions print nothing.
    pub fn eval(&mut self, src: &str, io: &mut Io, echo: bool) -> Result<i64, ReplError> {
        self.eval_chunk(src, io, echo, false)
    }

    pub fn load(&mut self, path: &str, io: &mut Io) -> Result<i64, ReplError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ReplError::Load { path: path.to_string(), source })?;
        self.eval_chunk(&text, io, false, false)
    }

    fn eval_chunk(
        &mut self,
        src: &str,
        io: &mut Io,
        echo: bool,
        keep_all: bool,
    ) -> Result<i64, ReplError> {
        let mut status = 0;
        for d in read_all(src).map_err(FrontendError::from)? {
            if let Some(path) = load_path(&d) {
                status = self.load(&path, io)?;
                continue;
            }
            let mut forms = expand_top(&d, &mut self.env, &mut self.features)
                .map_err(FrontendError::from)?;
            if echo {
                // assignments stay silent: their value is a placeholder
                if let [TopForm::Expr(e)] = &mut forms[..] {
                    if !matches!(e, CoreForm::Set(..)) {
                        let printed = CoreForm::Call(
                            Box::new(CoreForm::Ref(PRINTER.into())),
                            vec![e.clone()],
                        );
                        *e = printed;
                    }
                }
            }
            if forms.is_empty() {
                continue;
            }
            // dead code elimination would drop a definition that nothing in
            // this chunk references yet, so reference them all at the end
            let defined: Vec<String> = forms
                .iter()
                .filter_map(|f| match f {
                    TopForm::Define(n, _) => Some(n.clone()),
                    TopForm::Expr(_) => None,
                })
                .collect();
            let _ = keep_all;
            for n in defined {
                forms.push(TopForm::Expr(CoreForm::Ref(n)));
            }
            let program = compile_program(forms, self.features.clone(), &self.options)
                .map_err(FrontendError::from)?;
            self.chunk += 1;
            status = self.run_compiled(&program, io)?;
        }
        Ok(status)
    }

    fn run_compiled(
        &mut self,
        program: &CompiledProgram,
        io: &mut Io,
    ) -> Result<i64, ReplError> {
        let (main, temps) = self.materialize(&program.graph, program.root, program)?;
        let decoded = DecodedProgram {
            main,
            symbols: vec![],
            arity_check: program.arity_check,
            prim_no_arity: program.prim_no_arity,
        };
        let result = run_program(&mut self.store, &decoded, io, None);
        for _ in 0..temps {
            self.store.pop_temp();
        }
        Ok(result?)
    }

    /// Turns the code DAG into instruction ribs, sharing preserved, with
    /// symbol operands resolved against the session's symbol registry.
    /// Every created rib is left on the temp stack; the caller pops
    /// `temps` entries when execution is done.
    fn materialize(
        &mut self,
        graph: &CodeGraph,
        root: NodeId,
        program: &CompiledProgram,
    ) -> Result<(RibRef, usize), ReplError> {
        let mut reach = graph.reachable(root);
        reach.sort();
        let mut map: Vec<Option<RibRef>> = vec![None; graph.len()];
        let mut temps = 0usize;
        for id in reach {
            let node = graph.node(id);
            // children always have smaller node ids, so they exist already
            let operand = match &node.operand {
                Operand::Int(n) => Value::Int(*n),
                Operand::Sym(s) => {
                    let name = program.symbols.name(*s);
                    // lifted constant globals are private to their chunk
                    let name = if name.starts_with("%g") {
                        format!("{name}.{}", self.chunk)
                    } else {
                        name.to_string()
                    };
                    Value::Rib(self.symbol_rib(&name)?)
                }
                Operand::Branch(b) => Value::Rib(map[b.0 as usize].unwrap()),
                Operand::Proc { arity, body } => {
                    let body = map[body.0 as usize].unwrap();
                    let code = self.store.alloc(
                        Value::Int(*arity),
                        Value::Int(0),
                        Value::Rib(body),
                    )?;
                    self.store.push_temp(Value::Rib(code));
                    let proc = self.store.alloc(
                        Value::Rib(code),
                        Value::Int(0),
                        Value::Int(tag::PROCEDURE),
                    )?;
                    self.store.pop_temp();
                    Value::Rib(proc)
                }
                Operand::Datum(_) => unreachable!("constants are lifted before codegen"),
            };
            self.store.push_temp(operand);
            let next = match node.next {
                Some(n) => Value::Rib(map[n.0 as usize].unwrap()),
                None => Value::Int(0),
            };
            let rib = self.store.alloc(Value::Int(node.op as i64), operand, next)?;
            self.store.pop_temp();
            self.store.push_temp(Value::Rib(rib));
            temps += 1;
            map[id.0 as usize] = Some(rib);
        }
        Ok((map[root.0 as usize].unwrap(), temps))
    }

    /// The symbol rib for `name`, interned through the runtime symbol list
    /// so `string->symbol` and compiled references agree on identity.
    fn symbol_rib(&mut self, name: &str) -> Result<RibRef, ReplError> {
        let mut cur = self.store.f1(self.rib_proc);
        while let Value::Rib(cell) = cur {
            if cell == NIL {
                break;
            }
            let sym = self.store.f0(cell).as_rib().ok_or(RuntimeError::CorruptStack)?;
            if self.string_eq(sym, name) {
                return Ok(sym);
            }
            cur = self.store.f1(cell);
        }
        let string = self.make_string(name)?;
        self.store.push_temp(Value::Rib(string));
        let sym =
            self.store.alloc(Value::Int(0), Value::Rib(string), Value::Int(tag::SYMBOL))?;
        self.store.pop_temp();
        self.store.push_temp(Value::Rib(sym));
        let cell = self.store.alloc(
            Value::Rib(sym),
            self.store.f1(self.rib_proc),
            Value::Int(tag::PAIR),
        )?;
        self.store.pop_temp();
        self.store.set_field(self.rib_proc, 1, Value::Rib(cell));
        self.store.set_root(self.rib_proc_root, Value::Rib(self.rib_proc));
        Ok(sym)
    }

    fn string_eq(&self, sym: RibRef, name: &str) -> bool {
        let string = match self.store.f1(sym) {
            Value::Rib(r) => r,
            _ => return false,
        };
        if self.store.f1(string) != Value::Int(name.len() as i64) {
            return false;
        }
        let mut cur = self.store.f0(string);
        for b in name.bytes() {
            let cell = match cur {
                Value::Rib(r) if r != NIL => r,
                _ => return false,
            };
            if self.store.f0(cell) != Value::Int(b as i64) {
                return false;
            }
            cur = self.store.f1(cell);
        }
        cur == Value::Rib(NIL)
    }

    fn make_string(&mut self, s: &str) -> Result<RibRef, StoreError> {
        let mut chars = Value::Rib(NIL);
        let mut pushed = 0;
        for b in s.bytes().rev() {
            let cell = self.store.alloc(Value::Int(b as i64), chars, Value::Int(tag::PAIR))?;
            self.store.push_temp(Value::Rib(cell));
            pushed += 1;
            chars = Value::Rib(cell);
        }
        let r = self.store.alloc(chars, Value::Int(s.len() as i64), Value::Int(tag::STRING))?;
        for _ in 0..pushed {
            self.store.pop_temp();
        }
        Ok(r)
    }
}

/// Matches the `(load "path")` session command.
fn load_path(d: &Datum) -> Option<String> {
    let elems = d.list_elems()?;
    match &elems[..] {
        [head, Datum::Str(path)] if head.as_sym() == Some("load") => Some(path.clone()),
        _ => None,
    }
}

/// True when the reader stopped at an unterminated list or string, meaning
/// the console should keep accumulating lines for this input.
pub fn input_incomplete(src: &str) -> bool {
    matches!(
        read_all(src),
        Err(crate::reader::ReadError::Unterminated { .. })
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::OutputBuffer;
    use std::io::Write as _;

    fn session() -> (Session, Io, OutputBuffer) {
        let (mut io, out) = Io::captured(b"");
        let s = Session::new(
            LibraryVariant::Plain,
            &CompileOptions::default(),
            2_000_000,
            &mut io,
        )
        .unwrap();
        (s, io, out)
    }

    #[test]
    fn definitions_persist_across_inputs() {
        let (mut s, mut io, out) = session();
        s.eval("(define (f x) (* x x))", &mut io, true).unwrap();
        assert_eq!(out.take(), b"");
        s.eval("(f 7)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"49\n");
    }

    #[test]
    fn set_rewrites_an_existing_global() {
        let (mut s, mut io, out) = session();
        s.eval("(define x 1)", &mut io, true).unwrap();
        s.eval("(set! x 41)", &mut io, true).unwrap();
        s.eval("(+ x 1)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"42\n");
    }

    #[test]
    fn an_error_does_not_kill_the_session() {
        let (mut s, mut io, out) = session();
        assert!(s.eval("(undefined-thing 1)", &mut io, true).is_err());
        assert!(s.eval("(car 5)", &mut io, true).is_err());
        s.eval("(+ 1 2)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"3\n");
    }

    #[test]
    fn expander_definitions_persist() {
        let (mut s, mut io, out) = session();
        s.eval("(define-expander twice ((e) (* 2 e)))", &mut io, true).unwrap();
        s.eval("(twice 21)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"42\n");
    }

    #[test]
    fn symbols_share_identity_with_runtime_interning() {
        let (mut s, mut io, out) = session();
        s.eval("(define s 'foo)", &mut io, true).unwrap();
        s.eval("(eq? s (string->symbol \"foo\"))", &mut io, true).unwrap();
        assert_eq!(out.take(), b"#t\n");
    }

    #[test]
    fn write_formatting_is_used_for_results() {
        let (mut s, mut io, out) = session();
        s.eval("\"str\"", &mut io, true).unwrap();
        s.eval("'(1 #\\a)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"\"str\"\n(1 #\\a)\n");
    }

    #[test]
    fn load_runs_a_file_without_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prog.scm");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "(define (inc n) (+ n 1))").unwrap();
        writeln!(f, "(display (inc 41)) (newline)").unwrap();
        writeln!(f, "(inc 0)").unwrap();
        drop(f);

        let (mut s, mut io, out) = session();
        s.eval(&format!("(load \"{}\")", path.display()), &mut io, true).unwrap();
        assert_eq!(out.take(), b"42\n");
        // definitions made by the file persist too
        s.eval("(inc 9)", &mut io, true).unwrap();
        assert_eq!(out.take(), b"10\n");
    }

    #[test]
    fn missing_load_file_is_an_error() {
        let (mut s, mut io, _out) = session();
        let err = s.eval("(load \"/no/such/file.scm\")", &mut io, true).unwrap_err();
        assert!(matches!(err, ReplError::Load { .. }));
    }

    #[test]
    fn type_checked_library_reports_and_returns_to_the_prompt() {
        let (mut io, out) = Io::captured(b"");
        let mut s = Session::new(
            LibraryVariant::TypeChecked,
            &CompileOptions::default(),
            2_000_000,
            &mut io,
        )
        .unwrap();
        let status = s.eval("(car 5)", &mut io, true).unwrap();
        assert_eq!(status, 70);
        assert_eq!(out.take(), b"car: not a pair\n");
        s.eval("(car '(9))", &mut io, true).unwrap();
        assert_eq!(out.take(), b"9\n");
    }

    #[test]
    fn incomplete_input_detection() {
        assert!(input_incomplete("(define (f x)"));
        assert!(input_incomplete("\"open string"));
        assert!(!input_incomplete("(f 1)"));
        assert!(!input_incomplete(") junk ("));
    }
}
