//! Container parsing and program reconstruction, both into a fresh code
//! graph (for round-trip checks) and into ribs (for execution).

use crate::encode::{
    code_to_char, decode_instrs, vlq128_decode, vlq_full_decode, EncodeError, FLAG_ARITY_CHECK,
    FLAG_LZSS, FLAG_OPTIMAL, FLAG_PRIM_NO_ARITY, MAGIC,
};
use crate::graph::{CodeGraph, NodeId, Operand, SymId, OP_CONST, OP_GET, OP_IF, OP_JUMP_CALL, OP_SET};
use crate::lzss::{self, LzssError};
use crate::store::{self, tag, RibRef, RibStore, StoreError, Value, FALSE, NIL, TRUE};
use crate::table::{EncodingTable, Instr, Kind, TableError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("bad magic, not a program container")]
    BadMagic,
    #[error("container is truncated")]
    Truncated,
    #[error("payload length field does not match the data")]
    LengthMismatch,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Lzss(#[from] LzssError),
    #[error("code stream: {0}")]
    Stream(#[from] EncodeError),
    #[error("decoder stack underflow")]
    StackUnderflow,
    #[error("tail skip {0} runs past the end of the chain")]
    ShareOutOfRange(u64),
    #[error("decoding left {0} chains on the stack instead of one")]
    LeftoverStack(usize),
    #[error("symbol index {0} out of range")]
    SymbolOutOfRange(u64),
    #[error("decode step budget exhausted, stream is likely corrupt")]
    BudgetExhausted,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone)]
pub struct Container {
    pub rb: u32,
    pub lzss: bool,
    pub sb: Option<u32>,
    pub optimal: bool,
    pub arity_check: bool,
    pub prim_no_arity: bool,
    pub table: EncodingTable,
    pub codes: Vec<u32>,
}

impl Container {
    pub fn parse(bytes: &[u8]) -> Result<Container, DecodeError> {
        if bytes.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        if &bytes[0..4] != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let flags = *bytes.get(4).ok_or(DecodeError::Truncated)?;
        let rb_byte = *bytes.get(5).ok_or(DecodeError::Truncated)?;
        let rb = if rb_byte == 0 { 256 } else { rb_byte as u32 };
        let lzss = flags & FLAG_LZSS != 0;
        let optimal = flags & FLAG_OPTIMAL != 0;
        let mut pos = 6;
        let sb = if lzss {
            let b = *bytes.get(pos).ok_or(DecodeError::Truncated)?;
            pos += 1;
            Some(b as u32)
        } else {
            None
        };
        let table = if optimal {
            let mut sizes = [0u32; 19];
            for s in sizes.iter_mut() {
                let (v, next) = vlq128_decode(bytes, pos).map_err(|_| DecodeError::Truncated)?;
                *s = v as u32;
                pos = next;
            }
            EncodingTable::from_sizes(rb, &sizes)?
        } else {
            EncodingTable::original()
        };
        if bytes.len() < pos + 4 {
            return Err(DecodeError::Truncated);
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() != pos + len {
            return Err(DecodeError::LengthMismatch);
        }
        let payload = &bytes[pos..];
        let raw: Vec<u8> = if lzss {
            let (expect, start) =
                vlq128_decode(payload, 0).map_err(|_| DecodeError::Truncated)?;
            lzss::decompress(&payload[start..], rb, sb.unwrap(), expect as usize)?
        } else {
            payload.to_vec()
        };
        let codes: Vec<u32> = raw.iter().map(|&b| b as u32).collect();
        if let Some(&c) = codes.iter().max() {
            if c >= rb {
                return Err(DecodeError::Stream(EncodeError::UnassignedCode(c)));
            }
        }
        Ok(Container {
            rb,
            lzss,
            sb,
            optimal,
            arity_check: flags & FLAG_ARITY_CHECK != 0,
            prim_no_arity: flags & FLAG_PRIM_NO_ARITY != 0,
            table,
            codes,
        })
    }
}

/// Names as the decoder sees them: `names[i]` is symbol index i, `None`
/// for anonymous slots. The named block sits at the low indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedSymbols {
    pub names: Vec<Option<String>>,
    pub named_count: usize,
}

pub fn decode_symbol_section(
    codes: &[u32],
    rb: u32,
) -> Result<(DecodedSymbols, usize), DecodeError> {
    let (anon, pos) = vlq_full_decode(codes, 0, rb)?;
    let (named, mut pos) = vlq_full_decode(codes, pos, rb)?;
    // corrupt counts must not drive allocation; a stream this short cannot
    // legitimately reference this many symbols
    let limit = 16 * codes.len().max(64) as u64;
    if anon + named > limit {
        return Err(DecodeError::BudgetExhausted);
    }
    let mut reversed: Vec<String> = Vec::with_capacity(named as usize);
    for _ in 0..named {
        let (len, next) = vlq_full_decode(codes, pos, rb)?;
        pos = next;
        if codes.len() < pos + len as usize {
            return Err(DecodeError::Truncated);
        }
        let mut bytes: Vec<u8> = Vec::with_capacity(len as usize);
        for &c in codes[pos..pos + len as usize].iter().rev() {
            bytes.push(code_to_char(c, rb)?);
        }
        pos += len as usize;
        reversed.push(String::from_utf8_lossy(&bytes).into_owned());
    }
    reversed.reverse();
    let mut names: Vec<Option<String>> = reversed.into_iter().map(Some).collect();
    names.extend((0..anon).map(|_| None));
    Ok((
        DecodedSymbols {
            names,
            named_count: named as usize,
        },
        pos,
    ))
}

/// Rebuild a code graph from an instruction stream. Sharing is taken
/// literally (no hash-consing) so the result has exactly one node per
/// materialized cell; symbol ids equal symbol indexes.
pub fn build_graph(instrs: &[Instr]) -> Result<(CodeGraph, NodeId), DecodeError> {
    let mut g = CodeGraph::default();
    let mut stack: Vec<NodeId> = Vec::new();
    let operand = |sym: bool, arg: u64| {
        if sym {
            Operand::Sym(SymId(arg as u32))
        } else {
            Operand::Int(arg as i64)
        }
    };
    for instr in instrs {
        match instr.kind {
            Kind::Push0 => {
                stack.push(g.insert_raw(OP_JUMP_CALL, operand(instr.sym, instr.arg), None));
            }
            Kind::Link0 | Kind::Link1 | Kind::Link2 | Kind::Link3 => {
                let op = match instr.kind {
                    Kind::Link0 => OP_JUMP_CALL,
                    Kind::Link1 => OP_SET,
                    Kind::Link2 => OP_GET,
                    _ => OP_CONST,
                };
                let top = stack.last_mut().ok_or(DecodeError::StackUnderflow)?;
                *top = g.insert_raw(op, operand(instr.sym, instr.arg), Some(*top));
            }
            Kind::Merge3 => {
                let body = stack.pop().ok_or(DecodeError::StackUnderflow)?;
                let top = stack.last_mut().ok_or(DecodeError::StackUnderflow)?;
                let proc = Operand::Proc {
                    arity: instr.arg as i64,
                    body,
                };
                *top = g.insert_raw(OP_CONST, proc, Some(*top));
            }
            Kind::Merge4 => {
                let branch = stack.pop().ok_or(DecodeError::StackUnderflow)?;
                let top = stack.last_mut().ok_or(DecodeError::StackUnderflow)?;
                *top = g.insert_raw(OP_IF, Operand::Branch(branch), Some(*top));
            }
            Kind::Share => {
                let mut cur = *stack.last().ok_or(DecodeError::StackUnderflow)?;
                for _ in 0..instr.arg {
                    cur = g
                        .node(cur)
                        .next
                        .ok_or(DecodeError::ShareOutOfRange(instr.arg))?;
                }
                stack.push(cur);
            }
        }
    }
    match stack.len() {
        1 => Ok((g, stack[0])),
        n => Err(DecodeError::LeftoverStack(n)),
    }
}

/// A program reconstructed into ribs, ready to run.
pub struct DecodedProgram {
    /// Head of the main instruction chain.
    pub main: RibRef,
    /// Symbol ribs by index.
    pub symbols: Vec<RibRef>,
    pub arity_check: bool,
    pub prim_no_arity: bool,
}

fn make_string(store: &mut RibStore, s: &str) -> Result<RibRef, StoreError> {
    let mut chars = Value::Rib(NIL);
    for b in s.bytes().rev() {
        let cell = store.alloc(Value::Int(b as i64), chars, Value::Int(tag::PAIR))?;
        store.push_temp(Value::Rib(cell));
        chars = Value::Rib(cell);
    }
    for _ in s.bytes() {
        store.pop_temp();
    }
    let r = store.alloc(chars, Value::Int(s.len() as i64), Value::Int(tag::STRING))?;
    Ok(r)
}

/// Decode a container straight into the store. The step budget bounds the
/// work at a small multiple of the payload size so corrupt input cannot
/// loop forever.
pub fn decode_program(store: &mut RibStore, bytes: &[u8]) -> Result<DecodedProgram, DecodeError> {
    let container = Container::parse(bytes)?;
    let rb = container.rb;
    let (sym_names, pos) = decode_symbol_section(&container.codes, rb)?;
    let budget = 16 * container.codes.len().max(64);

    // symbol ribs, each rooted through one growing list
    let mut symbols: Vec<RibRef> = Vec::with_capacity(sym_names.names.len());
    let mut symlist = Value::Rib(NIL);
    let list_root = store.add_root(symlist);
    for name in sym_names.names.iter().rev() {
        let name_rib = match name {
            Some(n) => make_string(store, n)?,
            None => make_string(store, "")?,
        };
        store.push_temp(Value::Rib(name_rib));
        let sym = store.alloc(
            Value::Int(0),
            Value::Rib(name_rib),
            Value::Int(tag::SYMBOL),
        )?;
        store.pop_temp();
        store.push_temp(Value::Rib(sym));
        let cell = store.alloc(Value::Rib(sym), symlist, Value::Int(tag::PAIR))?;
        store.pop_temp();
        symlist = Value::Rib(cell);
        store.set_root(list_root, symlist);
    }
    // the list was built back to front, so walk it to index order
    {
        let mut cur = symlist;
        while let Value::Rib(cell) = cur {
            if cell == NIL {
                break;
            }
            symbols.push(store.f0(cell).as_rib().expect("symbol list holds ribs"));
            cur = store.f1(cell);
        }
    }

    let instrs = decode_instrs(&container.codes, pos, &container.table)?;
    if instrs.len() > budget {
        return Err(DecodeError::BudgetExhausted);
    }

    // decoder stack is itself a list of ribs so everything stays rooted
    let mut stack = Value::Rib(NIL);
    let stack_root = store.add_root(stack);
    let push = |store: &mut RibStore, stack: &mut Value, v: Value| -> Result<(), StoreError> {
        let cell = store.alloc(v, *stack, Value::Int(tag::PAIR))?;
        *stack = Value::Rib(cell);
        Ok(())
    };
    let operand = |store: &RibStore, sym: bool, arg: u64| -> Result<Value, DecodeError> {
        if sym {
            symbols
                .get(arg as usize)
                .map(|&r| Value::Rib(r))
                .ok_or(DecodeError::SymbolOutOfRange(arg))
        } else {
            let _ = store;
            Ok(Value::Int(arg as i64))
        }
    };
    for instr in &instrs {
        match instr.kind {
            Kind::Push0 => {
                let v = operand(store, instr.sym, instr.arg)?;
                let node = store.alloc(Value::Int(0), v, Value::Int(0))?;
                push(store, &mut stack, Value::Rib(node))?;
            }
            Kind::Link0 | Kind::Link1 | Kind::Link2 | Kind::Link3 => {
                let op = match instr.kind {
                    Kind::Link0 => 0,
                    Kind::Link1 => 1,
                    Kind::Link2 => 2,
                    _ => 3,
                };
                let top = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let v = operand(store, instr.sym, instr.arg)?;
                let node = store.alloc(Value::Int(op), v, store.f0(top))?;
                store.set_field(top, 0, Value::Rib(node));
            }
            Kind::Merge3 => {
                let top = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let body = store.f0(top);
                stack = store.f1(top);
                let code = store.alloc(Value::Int(instr.arg as i64), Value::Int(0), body)?;
                store.push_temp(Value::Rib(code));
                let proc = store.alloc(Value::Rib(code), Value::Int(0), Value::Int(tag::PROCEDURE))?;
                store.pop_temp();
                store.push_temp(Value::Rib(proc));
                let x = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let node = store.alloc(Value::Int(3), Value::Rib(proc), store.f0(x))?;
                store.pop_temp();
                store.set_field(x, 0, Value::Rib(node));
            }
            Kind::Merge4 => {
                let top = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let branch = store.f0(top);
                stack = store.f1(top);
                let x = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let node = store.alloc(Value::Int(4), branch, store.f0(x))?;
                store.set_field(x, 0, Value::Rib(node));
            }
            Kind::Share => {
                let top = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
                let mut cur = store.f0(top);
                for _ in 0..instr.arg {
                    let r = cur.as_rib().ok_or(DecodeError::ShareOutOfRange(instr.arg))?;
                    cur = store.f2(r);
                }
                if cur.as_rib().is_none() {
                    return Err(DecodeError::ShareOutOfRange(instr.arg));
                }
                push(store, &mut stack, cur)?;
            }
        }
        store.set_root(stack_root, stack);
    }
    let top = stack.as_rib().filter(|&r| r != NIL).ok_or(DecodeError::StackUnderflow)?;
    if store.f1(top) != Value::Rib(NIL) {
        let mut n = 0;
        let mut cur = stack;
        while let Value::Rib(r) = cur {
            if r == NIL {
                break;
            }
            n += 1;
            cur = store.f1(r);
        }
        return Err(DecodeError::LeftoverStack(n));
    }
    let main = store.f0(top).as_rib().ok_or(DecodeError::StackUnderflow)?;

    // position-based global installation: index 0 holds the cell
    // constructor closing over the symbol list, indexes 1..3 the singletons
    if let Some(&s) = symbols.first() {
        let prim0 = store.alloc(Value::Int(0), symlist, Value::Int(tag::PROCEDURE))?;
        store.set_field(s, 0, Value::Rib(prim0));
    }
    for (i, r) in [FALSE, TRUE, NIL].iter().enumerate() {
        if let Some(&s) = symbols.get(i + 1) {
            store.set_field(s, 0, Value::Rib(*r));
        }
    }

    let main_root = store.add_root(Value::Rib(main));
    let _ = (main_root, store::DEFAULT_CAPACITY);
    Ok(DecodedProgram {
        main,
        symbols,
        arity_check: container.arity_check,
        prim_no_arity: container.prim_no_arity,
    })
}
