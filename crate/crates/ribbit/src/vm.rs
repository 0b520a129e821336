//! The six-instruction interpreter.
//!
//! Stack cells are [value, next, 0]. A frame boundary is the one cell whose
//! third field is a rib: [saved stack, closure, return instruction]. Slot
//! lookups walk the second fields, so they pass through the frame cell,
//! then the closure rib, and continue into the environment captured at
//! closure creation.

use crate::decode::DecodedProgram;
use crate::features::baseline_primitives;
use crate::store::{tag, RibRef, RibStore, StoreError, Value, FALSE, NIL, TRUE};
use std::cell::RefCell;
use std::io::{Cursor, Read, Write};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("call to a value that is not a procedure{}", name_suffix(.0))]
    NotAProcedure(Option<String>),
    #[error("wrong number of arguments{}: expected {}{expected}, got {got}", name_suffix(name), if *variadic { "at least " } else { "" })]
    ArityMismatch {
        name: Option<String>,
        expected: usize,
        got: usize,
        variadic: bool,
    },
    #[error("{0} expects an integer")]
    ExpectedInteger(&'static str),
    #[error("{0} expects a rib")]
    ExpectedRib(&'static str),
    #[error("quotient by zero")]
    DivisionByZero,
    #[error("unknown file descriptor {0}")]
    BadFd(i64),
    #[error("unknown primitive index {0}")]
    UnknownPrimitive(i64),
    #[error("interpreter stack is corrupt")]
    CorruptStack,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn name_suffix(n: &Option<String>) -> String {
    match n {
        Some(n) => format!(" calling {n}"),
        None => String::new(),
    }
}

pub enum Stream {
    In(Box<dyn Read>),
    Out(Box<dyn Write>),
}

/// File descriptors are indexes into this table; 0 is input, 1 is output.
pub struct Io {
    streams: Vec<Option<Stream>>,
}

#[derive(Clone, Default)]
pub struct OutputBuffer(Rc<RefCell<Vec<u8>>>);

impl OutputBuffer {
    pub fn take(&self) -> Vec<u8> {
        std::mem::take(&mut self.0.borrow_mut())
    }
}

impl Write for OutputBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl Io {
    pub fn std() -> Io {
        Io {
            streams: vec![
                Some(Stream::In(Box::new(std::io::stdin()))),
                Some(Stream::Out(Box::new(std::io::stdout()))),
            ],
        }
    }

    /// In-memory standard streams for tests and the REPL.
    pub fn captured(input: &[u8]) -> (Io, OutputBuffer) {
        let out = OutputBuffer::default();
        let io = Io {
            streams: vec![
                Some(Stream::In(Box::new(Cursor::new(input.to_vec())))),
                Some(Stream::Out(Box::new(out.clone()))),
            ],
        };
        (io, out)
    }

    fn read_byte(&mut self, fd: i64) -> Result<i64, RuntimeError> {
        match self.streams.get_mut(fd as usize) {
            Some(Some(Stream::In(r))) => {
                let mut byte = [0u8];
                match r.read(&mut byte)? {
                    0 => Ok(-1),
                    _ => Ok(byte[0] as i64),
                }
            }
            _ => Err(RuntimeError::BadFd(fd)),
        }
    }

    fn write_byte(&mut self, fd: i64, b: u8) -> Result<(), RuntimeError> {
        match self.streams.get_mut(fd as usize) {
            Some(Some(Stream::Out(w))) => {
                w.write_all(&[b])?;
                Ok(())
            }
            _ => Err(RuntimeError::BadFd(fd)),
        }
    }

    fn open(&mut self, stream: Stream) -> i64 {
        for (i, s) in self.streams.iter_mut().enumerate() {
            if s.is_none() {
                *s = Some(stream);
                return i as i64;
            }
        }
        self.streams.push(Some(stream));
        (self.streams.len() - 1) as i64
    }

    /// Closing an unknown or already closed fd is a no-op.
    fn close(&mut self, fd: i64) {
        if let Some(slot) = self.streams.get_mut(fd as usize) {
            if let Some(Stream::Out(w)) = slot {
                let _ = w.flush();
            }
            *slot = None;
        }
    }

    pub fn flush(&mut self) {
        for s in self.streams.iter_mut().flatten() {
            if let Stream::Out(w) = s {
                let _ = w.flush();
            }
        }
    }
}

struct Vm<'a> {
    store: &'a mut RibStore,
    io: &'a mut Io,
    stack: Value,
    pc: Value,
    stack_root: crate::store::RootId,
    pc_root: crate::store::RootId,
    scratch_root: crate::store::RootId,
    arity_check: bool,
    prim_no_arity: bool,
    /// dense index -> baseline index, identity when numbering is baseline
    prim_map: Option<Vec<usize>>,
    prims: Vec<(&'static str, usize)>,
    halt: RibRef,
    status: i64,
}

enum Flow {
    Continue,
    Halt,
}

/// Execute a decoded program to completion and return its exit status.
pub fn run_program(
    store: &mut RibStore,
    program: &DecodedProgram,
    io: &mut Io,
    prim_map: Option<Vec<usize>>,
) -> Result<i64, RuntimeError> {
    let halt = store.alloc(Value::Int(5), Value::Int(0), Value::Int(0))?;
    store.push_temp(Value::Rib(halt));
    let base = store.alloc(Value::Int(0), Value::Int(0), Value::Rib(halt))?;
    store.pop_temp();
    let stack = Value::Rib(base);
    let pc = Value::Rib(program.main);
    let stack_root = store.add_root(stack);
    let pc_root = store.add_root(pc);
    let scratch_root = store.add_root(Value::Int(0));
    let mut vm = Vm {
        store,
        io,
        stack,
        pc,
        stack_root,
        pc_root,
        scratch_root,
        arity_check: program.arity_check,
        prim_no_arity: program.prim_no_arity,
        prim_map,
        prims: baseline_primitives(),
        halt,
        status: 0,
    };
    let result = vm.run();
    vm.io.flush();
    vm.store.set_root(stack_root, Value::Int(0));
    vm.store.set_root(pc_root, Value::Int(0));
    vm.store.set_root(scratch_root, Value::Int(0));
    result
}

impl<'a> Vm<'a> {
    fn sync(&mut self) {
        self.store.set_root(self.stack_root, self.stack);
        self.store.set_root(self.pc_root, self.pc);
    }

    fn push(&mut self, v: Value) -> Result<(), RuntimeError> {
        let cell = self.store.alloc(v, self.stack, Value::Int(0))?;
        self.stack = Value::Rib(cell);
        self.sync();
        Ok(())
    }

    fn pop(&mut self) -> Result<Value, RuntimeError> {
        let top = self.top_cell()?;
        let v = self.store.f0(top);
        self.stack = self.store.f1(top);
        self.sync();
        Ok(v)
    }

    fn pop_int(&mut self, who: &'static str) -> Result<i64, RuntimeError> {
        self.pop()?
            .as_int()
            .ok_or(RuntimeError::ExpectedInteger(who))
    }

    fn pop_rib(&mut self, who: &'static str) -> Result<RibRef, RuntimeError> {
        self.pop()?.as_rib().ok_or(RuntimeError::ExpectedRib(who))
    }

    fn top_cell(&self) -> Result<RibRef, RuntimeError> {
        self.stack
            .as_rib()
            .filter(|&r| r != NIL)
            .ok_or(RuntimeError::CorruptStack)
    }

    fn push_bool(&mut self, b: bool) -> Result<(), RuntimeError> {
        self.push(Value::Rib(if b { TRUE } else { FALSE }))
    }

    /// Cell designated by an instruction operand: a stack slot or a symbol.
    fn opnd_cell(&self, operand: Value) -> Result<RibRef, RuntimeError> {
        match operand {
            Value::Rib(sym) => Ok(sym),
            Value::Int(slot) => {
                let mut cur = self.stack;
                for _ in 0..slot {
                    let r = cur.as_rib().ok_or(RuntimeError::CorruptStack)?;
                    cur = self.store.f1(r);
                }
                cur.as_rib().ok_or(RuntimeError::CorruptStack)
            }
        }
    }

    fn operand_name(&self, operand: Value) -> Option<String> {
        let sym = operand.as_rib()?;
        if self.store.f2(sym) != Value::Int(tag::SYMBOL) {
            return None;
        }
        let s = self.store.f1(sym).as_rib()?;
        let mut out = Vec::new();
        let mut cur = self.store.f0(s);
        while let Value::Rib(cell) = cur {
            if cell == NIL {
                break;
            }
            out.push(self.store.f0(cell).as_int()? as u8);
            cur = self.store.f1(cell);
        }
        if out.is_empty() {
            return None; // anonymous symbol, no useful name
        }
        Some(String::from_utf8_lossy(&out).into_owned())
    }

    fn get_cont(&self) -> Result<RibRef, RuntimeError> {
        let mut cur = self.stack;
        loop {
            let r = cur
                .as_rib()
                .filter(|&r| r != NIL)
                .ok_or(RuntimeError::CorruptStack)?;
            if self.store.f2(r).is_rib() {
                return Ok(r);
            }
            cur = self.store.f1(r);
        }
    }

    fn run(&mut self) -> Result<i64, RuntimeError> {
        loop {
            let instr = self.pc.as_rib().ok_or(RuntimeError::CorruptStack)?;
            if instr == self.halt {
                return Ok(self.status);
            }
            let op = self
                .store
                .f0(instr)
                .as_int()
                .ok_or(RuntimeError::CorruptStack)?;
            let operand = self.store.f1(instr);
            let next = self.store.f2(instr);
            match op {
                0 => {
                    let target = self.opnd_cell(operand)?;
                    let proc = self.store.f0(target);
                    let name = self.operand_name(operand);
                    match self.invoke(proc, name, next)? {
                        Flow::Continue => {}
                        Flow::Halt => return Ok(self.status),
                    }
                }
                1 => {
                    let v = self.pop()?;
                    let target = self.opnd_cell(operand)?;
                    self.store.set_field(target, 0, v);
                    self.pc = next;
                    self.sync();
                }
                2 => {
                    let target = self.opnd_cell(operand)?;
                    let v = self.store.f0(target);
                    self.push(v)?;
                    self.pc = next;
                    self.sync();
                }
                3 => {
                    self.push(operand)?;
                    self.pc = next;
                    self.sync();
                }
                4 => {
                    let v = self.pop()?;
                    self.pc = if v == Value::Rib(FALSE) { next } else { operand };
                    self.sync();
                }
                5 => return Ok(self.status),
                _ => return Err(RuntimeError::CorruptStack),
            }
        }
    }

    fn invoke(
        &mut self,
        proc: Value,
        name: Option<String>,
        next: Value,
    ) -> Result<Flow, RuntimeError> {
        let proc = match proc {
            Value::Rib(r) if self.store.f2(r) == Value::Int(tag::PROCEDURE) => r,
            _ => return Err(RuntimeError::NotAProcedure(name)),
        };
        let is_call = next.is_rib();
        let code = self.store.f0(proc);
        match code {
            Value::Int(idx) => {
                let baseline = match &self.prim_map {
                    Some(map) => *map
                        .get(idx as usize)
                        .ok_or(RuntimeError::UnknownPrimitive(idx))?,
                    None => idx as usize,
                };
                let (pname, arity) = *self
                    .prims
                    .get(baseline)
                    .ok_or(RuntimeError::UnknownPrimitive(idx))?;
                if self.arity_check && !self.prim_no_arity {
                    let got = self.pop_int("argument count")? as usize;
                    if got != arity {
                        return Err(RuntimeError::ArityMismatch {
                            name: name.or(Some(pname.to_string())),
                            expected: arity,
                            got,
                            variadic: false,
                        });
                    }
                }
                if let Flow::Halt = self.primitive(baseline)? {
                    return Ok(Flow::Halt);
                }
                if is_call {
                    self.pc = next;
                } else {
                    let k = self.get_cont()?;
                    let top = self.top_cell()?;
                    let saved = self.store.f0(k);
                    self.store.set_field(top, 1, saved);
                    self.pc = self.store.f2(k);
                }
                self.sync();
                Ok(Flow::Continue)
            }
            Value::Rib(code) => {
                let field = self
                    .store
                    .f0(code)
                    .as_int()
                    .ok_or(RuntimeError::CorruptStack)?;
                let nparams = (field >> 1) as usize;
                let variadic = field & 1 == 1;
                let got = if self.arity_check {
                    self.pop_int("argument count")? as usize
                } else {
                    nparams
                };
                if got < nparams || (!variadic && got > nparams) {
                    return Err(RuntimeError::ArityMismatch {
                        name,
                        expected: nparams,
                        got,
                        variadic,
                    });
                }
                self.store.push_temp(Value::Rib(proc));
                let mut rest = Value::Rib(NIL);
                for _ in nparams..got {
                    let v = self.pop()?;
                    let cell = self.store.alloc(v, rest, Value::Int(tag::PAIR))?;
                    rest = Value::Rib(cell);
                }
                self.store.push_temp(rest);
                let cont = self
                    .store
                    .alloc(Value::Int(0), Value::Rib(proc), Value::Int(0))?;
                self.store.pop_temp();
                self.store.pop_temp();
                let mut frame = Value::Rib(cont);
                self.store.set_root(self.scratch_root, frame);
                if variadic {
                    let cell = self.store.alloc(rest, frame, Value::Int(0))?;
                    frame = Value::Rib(cell);
                    self.store.set_root(self.scratch_root, frame);
                }
                for _ in 0..nparams {
                    let v = self.pop()?;
                    let cell = self.store.alloc(v, frame, Value::Int(0))?;
                    frame = Value::Rib(cell);
                    self.store.set_root(self.scratch_root, frame);
                }
                if is_call {
                    self.store.set_field(cont, 0, self.stack);
                    self.store.set_field(cont, 2, next);
                } else {
                    let k = self.get_cont()?;
                    let saved = self.store.f0(k);
                    let ret = self.store.f2(k);
                    self.store.set_field(cont, 0, saved);
                    self.store.set_field(cont, 2, ret);
                }
                self.stack = frame;
                self.pc = self.store.f2(code);
                self.store.set_root(self.scratch_root, Value::Int(0));
                self.sync();
                Ok(Flow::Continue)
            }
        }
    }

    fn primitive(&mut self, idx: usize) -> Result<Flow, RuntimeError> {
        match idx {
            0 => {
                // rib: allocate a cell from three stack values
                let z = self.pop()?;
                let y = self.pop()?;
                let x = self.pop()?;
                let r = self.store.alloc(x, y, z)?;
                self.push(Value::Rib(r))?;
            }
            1 => {} // id: the value stays where it is
            2 => {
                // pop: discard the statement value, push nothing
                self.pop()?;
            }
            3 => {
                // arg2: keep the top value, drop the one under it
                let y = self.pop()?;
                self.pop()?;
                self.push(y)?;
            }
            4 => {
                // close: specialize a procedure template to the current env
                let p = self.pop_rib("##close")?;
                let code = self.store.f0(p);
                let r = self
                    .store
                    .alloc(code, self.stack, Value::Int(tag::PROCEDURE))?;
                self.push(Value::Rib(r))?;
            }
            5 => {
                let v = self.pop()?;
                self.push_bool(v.is_rib())?;
            }
            6 | 7 | 8 => {
                let r = self.pop_rib("field access")?;
                let v = self.store.field(r, idx - 6);
                self.push(v)?;
            }
            9 | 10 | 11 => {
                let v = self.pop()?;
                let r = self.pop_rib("field update")?;
                self.store.set_field(r, idx - 9, v);
                self.push(v)?;
            }
            12 => {
                let y = self.pop()?;
                let x = self.pop()?;
                self.push_bool(x == y)?;
            }
            13 => {
                let y = self.pop_int("##<")?;
                let x = self.pop_int("##<")?;
                self.push_bool(x < y)?;
            }
            14 | 15 | 16 => {
                let y = self.pop_int("arithmetic")?;
                let x = self.pop_int("arithmetic")?;
                let v = match idx {
                    14 => x.wrapping_add(y),
                    15 => x.wrapping_sub(y),
                    _ => x.wrapping_mul(y),
                };
                self.push(Value::Int(v))?;
            }
            17 => {
                let y = self.pop_int("##quotient")?;
                let x = self.pop_int("##quotient")?;
                if y == 0 {
                    return Err(RuntimeError::DivisionByZero);
                }
                self.push(Value::Int(x / y))?;
            }
            18 => {
                let b = self.io.read_byte(0)?;
                self.push(Value::Int(b))?;
            }
            19 => {
                let c = self.pop_int("##putchar")?;
                self.io.write_byte(1, c as u8)?;
                self.push(Value::Int(c))?;
            }
            20 => {
                self.status = self.pop_int("##exit")?;
                return Ok(Flow::Halt);
            }
            21 => self.push(Value::Int(0))?,
            22 => self.push(Value::Int(1))?,
            23 | 24 => {
                let name = self.pop_rib("file open")?;
                let path = self.rib_string(name)?;
                let fd = if idx == 23 {
                    std::fs::File::open(&path)
                        .ok()
                        .map(|f| self.io.open(Stream::In(Box::new(f))))
                } else {
                    std::fs::File::create(&path)
                        .ok()
                        .map(|f| self.io.open(Stream::Out(Box::new(f))))
                };
                match fd {
                    Some(fd) => self.push(Value::Int(fd))?,
                    None => self.push(Value::Rib(FALSE))?,
                }
            }
            25 => {
                let fd = self.pop_int("##read-char-fd")?;
                let b = self.io.read_byte(fd)?;
                self.push(Value::Int(b))?;
            }
            26 => {
                let fd = self.pop_int("##write-char-fd")?;
                let c = self.pop_int("##write-char-fd")?;
                self.io.write_byte(fd, c as u8)?;
                self.push(Value::Int(c))?;
            }
            27 | 28 => {
                let fd = self.pop_int("close")?;
                self.io.close(fd);
                self.push(Value::Int(0))?;
            }
            other => return Err(RuntimeError::UnknownPrimitive(other as i64)),
        }
        Ok(Flow::Continue)
    }

    fn rib_string(&self, r: RibRef) -> Result<String, RuntimeError> {
        let mut out = Vec::new();
        let mut cur = self.store.f0(r);
        while let Value::Rib(cell) = cur {
            if cell == NIL {
                break;
            }
            let c = self
                .store
                .f0(cell)
                .as_int()
                .ok_or(RuntimeError::ExpectedInteger("string contents"))?;
            out.push(c as u8);
            cur = self.store.f1(cell);
        }
        Ok(String::from_utf8_lossy(&out).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_program, CompileOptions, CompiledProgram};
    use crate::decode::decode_program;
    use crate::encode::{
        emit_container, encode_instrs, encode_symbol_table, linearize, search_optimal_table,
        ContainerOptions,
    };
    use crate::expander::{expand_top, ExpandEnv};
    use crate::features::baseline_feature_set;
    use crate::reader::read_all;
    use crate::table::EncodingTable;

    fn compiled_with(src: &str, options: &CompileOptions) -> CompiledProgram {
        let mut env = ExpandEnv::default();
        let mut features = baseline_feature_set();
        let mut forms = Vec::new();
        for d in read_all(src).unwrap() {
            forms.extend(expand_top(&d, &mut env, &mut features).unwrap());
        }
        compile_program(forms, features, options).unwrap()
    }

    fn container(p: &CompiledProgram, rb: u32, share: bool, lz: bool) -> Vec<u8> {
        let instrs = linearize(&p.graph, p.root, &p.layout.index_of, share).unwrap();
        let table = if share {
            search_optimal_table(&instrs, rb).unwrap()
        } else {
            EncodingTable::original()
        };
        let sym = encode_symbol_table(&p.layout, rb).unwrap();
        let codes = encode_instrs(&instrs, &table).unwrap();
        emit_container(
            &sym,
            &codes,
            &table,
            &ContainerOptions {
                rb,
                lzss: lz,
                optimal: share,
                arity_check: p.arity_check,
                prim_no_arity: p.prim_no_arity,
            },
        )
        .unwrap()
    }

    fn run_bytes(bytes: &[u8], input: &[u8], capacity: usize) -> (Result<i64, RuntimeError>, Vec<u8>) {
        let mut store = RibStore::new(capacity);
        let program = decode_program(&mut store, bytes).unwrap();
        let (mut io, out) = Io::captured(input);
        let status = run_program(&mut store, &program, &mut io, None);
        (status, out.take())
    }

    fn run_src(src: &str) -> (Result<i64, RuntimeError>, Vec<u8>) {
        let p = compiled_with(src, &CompileOptions::default());
        run_bytes(&container(&p, 92, true, false), b"", 1_000_000)
    }

    fn output(src: &str) -> Vec<u8> {
        let (status, out) = run_src(src);
        status.unwrap();
        out
    }

    #[test]
    fn putchar_writes_a_byte() {
        assert_eq!(output("(##putchar 65)"), b"A");
    }

    #[test]
    fn fib_10_is_55() {
        let out = output(
            "(define (fib n) (if (##< n 2) n (##+ (fib (##- n 1)) (fib (##- n 2)))))
             (##putchar (fib 10))",
        );
        assert_eq!(out, [55]);
    }

    #[test]
    fn absolute_value_of_negative_four() {
        let out = output(
            "(define (abs x) (if (##< x 0) (##- 0 x) x))
             (##putchar (##+ 48 (abs -4)))",
        );
        assert_eq!(out, b"4");
    }

    #[test]
    fn closures_capture_their_environment() {
        let out = output(
            "(define (make-adder n) (lambda (m) (##+ n m)))
             (##putchar (##+ 48 ((make-adder 3) 4)))",
        );
        assert_eq!(out, b"7");
    }

    #[test]
    fn rest_parameter_collects_extras_in_order() {
        let out = output(
            "(define (tail . r) r)
             (define l (tail 1 2 3))
             (##putchar (##+ 48 (##field0 l)))
             (##putchar (##+ 48 (##field0 (##field1 l))))
             (##putchar (##+ 48 (##field0 (##field1 (##field1 l)))))",
        );
        assert_eq!(out, b"123");
    }

    #[test]
    fn arity_mismatch_is_a_runtime_error() {
        let (status, _) = run_src("(define (two a b) a) (two 1)");
        assert!(matches!(
            status.unwrap_err(),
            RuntimeError::ArityMismatch { expected: 2, got: 1, .. }
        ));
    }

    #[test]
    fn calling_an_integer_names_the_global() {
        let p = compiled_with(
            "(define five 5) (five 1)",
            &CompileOptions { name_all_symbols: true, ..Default::default() },
        );
        let (status, _) = run_bytes(&container(&p, 92, true, false), b"", 100_000);
        match status.unwrap_err() {
            RuntimeError::NotAProcedure(Some(n)) => assert_eq!(n, "five"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quotient_by_zero_is_an_error() {
        let (status, _) = run_src("(##quotient 1 0)");
        assert!(matches!(status.unwrap_err(), RuntimeError::DivisionByZero));
    }

    #[test]
    fn exit_sets_the_status() {
        let (status, out) = run_src("(##putchar 65) (##exit 3) (##putchar 66)");
        assert_eq!(status.unwrap(), 3);
        assert_eq!(out, b"A");
    }

    #[test]
    fn set_rebinds_a_global() {
        let out = output("(define x 65) (set! x 66) (##putchar x)");
        assert_eq!(out, b"B");
    }

    #[test]
    fn getchar_reads_standard_input() {
        let p = compiled_with("(##putchar (##getchar)) (##putchar (##getchar))", &CompileOptions::default());
        let (status, out) = run_bytes(&container(&p, 92, true, false), b"hi", 100_000);
        status.unwrap();
        assert_eq!(out, b"hi");
        // end of file reads as -1
        let p = compiled_with("(if (##eqv? (##getchar) 0) (##putchar 48) (##putchar 49))", &CompileOptions::default());
        let (status, out) = run_bytes(&container(&p, 92, true, false), b"", 100_000);
        status.unwrap();
        assert_eq!(out, b"1");
    }

    #[test]
    fn file_round_trip_through_fd_primitives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "Q").unwrap();
        let src = format!(
            "(define fd (##get-fd-input-file \"{}\"))
             (##putchar (##read-char-fd fd))
             (##close-input-fd fd)
             (##close-input-fd fd)",
            path.display()
        );
        assert_eq!(output(&src), b"Q");
    }

    #[test]
    fn missing_file_opens_as_false() {
        let out = output(
            "(if (##rib? (##get-fd-input-file \"/definitely/not/here\"))
                 (##putchar 70)
                 (##putchar 84))",
        );
        assert_eq!(out, b"F");
    }

    #[test]
    fn output_identical_across_encodings_and_conventions() {
        let src = "(define (fib n) (if (##< n 2) n (##+ (fib (##- n 1)) (fib (##- n 2)))))
                   (##putchar (##+ 48 (##quotient (fib 10) 10)))
                   (##putchar (##+ 48 (##- (fib 10) 50)))";
        let mut outputs = Vec::new();
        for opts in [
            CompileOptions::default(),
            CompileOptions { arity_check: false, ..Default::default() },
            CompileOptions { prim_no_arity: true, ..Default::default() },
        ] {
            let p = compiled_with(src, &opts);
            for (rb, share, lz) in [(92, false, false), (92, true, false), (256, true, false), (186, true, true)] {
                let (status, out) = run_bytes(&container(&p, rb, share, lz), b"", 1_000_000);
                status.unwrap();
                outputs.push(out);
            }
        }
        assert!(outputs.iter().all(|o| o == b"55"));
    }

    #[test]
    fn tail_recursion_runs_in_constant_space() {
        let src = "(define (loop n) (if (##eqv? n 0) 0 (loop (##- n 1))))
                   (loop 100000) (##putchar 100)";
        let p = compiled_with(src, &CompileOptions::default());
        // a heap far too small for 100k frames
        let (status, out) = run_bytes(&container(&p, 92, true, false), b"", 8192);
        status.unwrap();
        assert_eq!(out, b"d");
    }

    #[test]
    fn deep_non_tail_recursion_allocates_frames() {
        // sanity check the bound above is meaningful: the non-tail version
        // of the same loop exhausts the same heap
        let src = "(define (loop n) (if (##eqv? n 0) 0 (##+ 0 (loop (##- n 1)))))
                   (loop 100000) (##putchar 100)";
        let p = compiled_with(src, &CompileOptions::default());
        let (status, _) = run_bytes(&container(&p, 92, true, false), b"", 8192);
        assert!(matches!(status.unwrap_err(), RuntimeError::Store(_)));
    }
}
