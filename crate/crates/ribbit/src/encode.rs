//! Serialization of the code DAG: linearization into decoding instructions,
//! VLQ argument encoding, the greedy table search, the symbol section, and
//! the container byte format.

use crate::graph::{CodeGraph, NodeId, Operand, SymId, OP_CONST, OP_GET, OP_IF, OP_JUMP_CALL, OP_SET};
use crate::compiler::SymbolLayout;
use crate::lzss::{self, LzssError};
use crate::table::{EncodingTable, Instr, Kind, RangeDesc, TableError, CANONICAL};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Lzss(#[from] LzssError),
    #[error("constant was not lifted before encoding")]
    UnliftedConstant,
    #[error("negative operand {0} cannot be encoded")]
    NegativeOperand(i64),
    #[error("symbol is missing from the layout")]
    SymbolNotIndexed,
    #[error("table has no usable range for {0:?}")]
    Inexpressible(Kind),
    #[error("code stream ends inside a long-form argument")]
    TruncatedStream,
    #[error("code {0} falls outside every table range")]
    UnassignedCode(u32),
    #[error("character {0:?} is outside the symbol alphabet")]
    CharOutsideAlphabet(char),
}

/// Long-form argument encoding. The leading code selects the range and
/// carries the most significant digit; following codes are base-d digits
/// (d = rb/2) where a digit >= d marks continuation.
pub fn vlq_encode(value: u64, range: &RangeDesc, rb: u32) -> Vec<u32> {
    debug_assert!(range.long && range.size > 0);
    let d = (rb / 2) as u64;
    let size = range.size as u64;
    let mut k = 1u32;
    let mut pow = d;
    while value / pow >= size {
        k += 1;
        pow *= d;
    }
    let mut out = Vec::with_capacity(k as usize + 1);
    out.push(range.start + (value / pow) as u32);
    let mut rem = value % pow;
    for j in (0..k).rev() {
        let p = d.pow(j);
        let digit = rem / p;
        rem %= p;
        out.push(if j > 0 { (digit + d) as u32 } else { digit as u32 });
    }
    out
}

/// Inverse of `vlq_encode` given the leading code already matched to its
/// range. Returns the value and the position after the last digit.
pub fn vlq_decode(
    codes: &[u32],
    pos: usize,
    range: &RangeDesc,
    rb: u32,
) -> Result<(u64, usize), EncodeError> {
    let d = (rb / 2) as u64;
    let mut v = (codes[pos] - range.start) as u64;
    let mut i = pos + 1;
    loop {
        let c = *codes.get(i).ok_or(EncodeError::TruncatedStream)? as u64;
        i += 1;
        if c < d {
            return Ok((v * d + c, i));
        }
        v = v * d + (c - d);
    }
}

fn full_range(rb: u32) -> RangeDesc {
    RangeDesc { kind: Kind::Share, sym: false, long: true, start: 0, size: rb }
}

/// VLQ over the whole code space, used by the symbol section.
pub fn vlq_full_encode(value: u64, rb: u32) -> Vec<u32> {
    vlq_encode(value, &full_range(rb), rb)
}

pub fn vlq_full_decode(codes: &[u32], pos: usize, rb: u32) -> Result<(u64, usize), EncodeError> {
    if pos >= codes.len() {
        return Err(EncodeError::TruncatedStream);
    }
    vlq_decode(codes, pos, &full_range(rb), rb)
}

/// Byte-level VLQ for container headers: 7-bit groups, most significant
/// first, high bit set on all but the last.
pub fn vlq128_encode(mut value: u64, out: &mut Vec<u8>) {
    let mut groups = vec![(value & 0x7f) as u8];
    value >>= 7;
    while value > 0 {
        groups.push((value & 0x7f) as u8 | 0x80);
        value >>= 7;
    }
    groups.reverse();
    out.extend_from_slice(&groups);
}

pub fn vlq128_decode(bytes: &[u8], pos: usize) -> Result<(u64, usize), EncodeError> {
    let mut v = 0u64;
    let mut i = pos;
    loop {
        let b = *bytes.get(i).ok_or(EncodeError::TruncatedStream)?;
        i += 1;
        v = (v << 7) | (b & 0x7f) as u64;
        if b & 0x80 == 0 {
            return Ok((v, i));
        }
    }
}

/// Flattens the DAG into decoding instructions by simulating the decoder's
/// stack in reverse. With `use_share` off (the original encoding has no
/// SHARE ranges), join points are tail-duplicated instead, which grows
/// exponentially on sequences of non-tail conditionals.
pub fn linearize(
    graph: &CodeGraph,
    root: NodeId,
    index_of: &HashMap<SymId, u32>,
    use_share: bool,
) -> Result<Vec<Instr>, EncodeError> {
    let mut lin = Linearizer {
        graph,
        index_of,
        use_share,
        stack: Vec::new(),
        out: Vec::new(),
    };
    lin.emit_chain(root)?;
    debug_assert_eq!(lin.stack.len(), 1);
    Ok(lin.out)
}

struct Linearizer<'a> {
    graph: &'a CodeGraph,
    index_of: &'a HashMap<SymId, u32>,
    use_share: bool,
    /// Decoding stack mirror; chains are stored tail first so building
    /// prepends by pushing.
    stack: Vec<Vec<NodeId>>,
    out: Vec<Instr>,
}

impl<'a> Linearizer<'a> {
    fn arg_of(&self, operand: &Operand) -> Result<(bool, u64), EncodeError> {
        match operand {
            Operand::Int(n) if *n >= 0 => Ok((false, *n as u64)),
            Operand::Int(n) => Err(EncodeError::NegativeOperand(*n)),
            Operand::Sym(s) => self
                .index_of
                .get(s)
                .map(|&i| (true, i as u64))
                .ok_or(EncodeError::SymbolNotIndexed),
            Operand::Datum(_) => Err(EncodeError::UnliftedConstant),
            _ => unreachable!("structured operand has no argument"),
        }
    }

    fn emit_chain(&mut self, head: NodeId) -> Result<(), EncodeError> {
        let mut spine = Vec::new();
        let mut cur = head;
        let mut share_at = None;
        loop {
            if self.use_share {
                if let Some(top) = self.stack.last() {
                    if let Some(i) = top.iter().position(|&n| n == cur) {
                        share_at = Some(i);
                        break;
                    }
                }
            }
            spine.push(cur);
            match self.graph.node(cur).next {
                Some(n) => cur = n,
                None => break,
            }
        }
        match share_at {
            Some(i) => {
                let top = self.stack.last().unwrap();
                let skip = top.len() - 1 - i;
                self.out.push(Instr::int(Kind::Share, skip as u64));
                let chain = top[..=i].to_vec();
                self.stack.push(chain);
            }
            None => {
                let jump = spine.pop().expect("chains end in a jump");
                let (sym, arg) = self.arg_of(&self.graph.node(jump).operand)?;
                self.out.push(Instr { kind: Kind::Push0, sym, arg });
                self.stack.push(vec![jump]);
            }
        }
        for &id in spine.iter().rev() {
            let node = self.graph.node(id);
            match (&node.op, &node.operand) {
                (&OP_IF, Operand::Branch(t)) => {
                    self.emit_chain(*t)?;
                    self.stack.pop();
                    self.out.push(Instr::merge4());
                }
                (&OP_CONST, Operand::Proc { arity, body }) => {
                    self.emit_chain(*body)?;
                    self.stack.pop();
                    self.out.push(Instr::int(Kind::Merge3, *arity as u64));
                }
                (op, operand) => {
                    let kind = match *op {
                        OP_JUMP_CALL => Kind::Link0,
                        OP_SET => Kind::Link1,
                        OP_GET => Kind::Link2,
                        OP_CONST => Kind::Link3,
                        other => unreachable!("opcode {other}"),
                    };
                    let (sym, arg) = self.arg_of(operand)?;
                    self.out.push(Instr { kind, sym, arg });
                }
            }
            self.stack.last_mut().unwrap().push(id);
        }
        Ok(())
    }
}

pub fn encode_instrs(instrs: &[Instr], table: &EncodingTable) -> Result<Vec<u32>, EncodeError> {
    let mut out = Vec::new();
    for instr in instrs {
        let (short, long) = table.entry_indexes(instr.kind, instr.sym);
        if instr.kind == Kind::Merge4 {
            let e = &table.entries[short.ok_or(EncodeError::Inexpressible(instr.kind))?];
            if e.size == 0 {
                return Err(EncodeError::Inexpressible(instr.kind));
            }
            out.push(e.start);
            continue;
        }
        let short = short.map(|i| &table.entries[i]);
        if let Some(e) = short {
            if instr.arg < e.size as u64 {
                out.push(e.start + instr.arg as u32);
                continue;
            }
        }
        let e = long
            .map(|i| &table.entries[i])
            .filter(|e| e.size > 0)
            .ok_or(EncodeError::Inexpressible(instr.kind))?;
        out.extend(vlq_encode(instr.arg, e, table.rb));
    }
    Ok(out)
}

/// Instruction-level inverse of `encode_instrs`, starting at `pos`.
pub fn decode_instrs(
    codes: &[u32],
    pos: usize,
    table: &EncodingTable,
) -> Result<Vec<Instr>, EncodeError> {
    let mut out = Vec::new();
    let mut i = pos;
    while i < codes.len() {
        let c = codes[i];
        let e = table
            .entry_for_code(c)
            .ok_or(EncodeError::UnassignedCode(c))?;
        let sym = match e.kind {
            Kind::Merge3 | Kind::Merge4 | Kind::Share => false,
            _ => e.sym,
        };
        if e.kind == Kind::Merge4 {
            out.push(Instr::merge4());
            i += 1;
            continue;
        }
        let (arg, next) = if e.long {
            vlq_decode(codes, i, e, table.rb)?
        } else {
            ((c - e.start) as u64, i + 1)
        };
        out.push(Instr { kind: e.kind, sym, arg });
        i = next;
    }
    Ok(out)
}

/// Greedy specialization of the table to an instruction stream: start with
/// the smallest legal table (each long range one code wide, one code for
/// MERGE4, empty shorts) and repeatedly grant one more code to the range
/// saving the most stream codes, earliest canonical entry on ties, until
/// the code space is spent.
pub fn search_optimal_table(instrs: &[Instr], rb: u32) -> Result<EncodingTable, TableError> {
    Ok(search_with_trace(instrs, rb)?.0)
}

pub fn search_with_trace(
    instrs: &[Instr],
    rb: u32,
) -> Result<(EncodingTable, Vec<u64>), TableError> {
    let mandatory: u32 = CANONICAL
        .iter()
        .map(|&(k, _, long)| (long || k == Kind::Merge4) as u32)
        .sum();
    if rb < mandatory {
        return Err(TableError::BaseTooSmall(rb));
    }
    let mut sizes = [0u32; 19];
    for (i, &(k, _, long)) in CANONICAL.iter().enumerate() {
        if long || k == Kind::Merge4 {
            sizes[i] = 1;
        }
    }

    let class_of = |kind: Kind, sym: bool| -> (Kind, bool) {
        match kind {
            Kind::Merge3 | Kind::Merge4 | Kind::Share => (kind, false),
            _ => (kind, sym),
        }
    };
    // canonical entry indexes per class, without needing a built table
    let indexes_of = |class: (Kind, bool)| -> (Option<usize>, Option<usize>) {
        let mut short = None;
        let mut long = None;
        for (i, &(k, s, l)) in CANONICAL.iter().enumerate() {
            let hit = match class.0 {
                Kind::Merge3 | Kind::Merge4 | Kind::Share => k == class.0,
                _ => k == class.0 && s == class.1,
            };
            if hit {
                if l {
                    long = Some(i);
                } else {
                    short = Some(i);
                }
            }
        }
        (short, long)
    };

    // histogram per class: sorted (arg, count)
    let mut hist: HashMap<(Kind, bool), HashMap<u64, u64>> = HashMap::new();
    for instr in instrs {
        *hist
            .entry(class_of(instr.kind, instr.sym))
            .or_default()
            .entry(instr.arg)
            .or_insert(0) += 1;
    }
    let hist: HashMap<(Kind, bool), Vec<(u64, u64)>> = hist
        .into_iter()
        .map(|(k, m)| {
            let mut v: Vec<(u64, u64)> = m.into_iter().collect();
            v.sort_unstable();
            (k, v)
        })
        .collect();

    let d = (rb / 2) as u64;
    let long_len = |arg: u64, size: u32| -> u64 {
        let mut k = 1u64;
        let mut pow = d;
        while arg / pow >= size as u64 {
            k += 1;
            pow *= d;
        }
        1 + k
    };
    let class_cost = |class: (Kind, bool), sizes: &[u32; 19]| -> u64 {
        let Some(args) = hist.get(&class) else { return 0 };
        if class.0 == Kind::Merge4 {
            return args.iter().map(|&(_, c)| c).sum();
        }
        let (short, long) = indexes_of(class);
        let short_size = short.map_or(0, |i| sizes[i]);
        let long_size = long.map_or(0, |i| sizes[i]);
        args.iter()
            .map(|&(arg, count)| {
                let len = if arg < short_size as u64 {
                    1
                } else {
                    debug_assert!(long_size > 0, "long range vanished for a live class");
                    long_len(arg, long_size)
                };
                len * count
            })
            .sum()
    };

    let mut assigned: u32 = sizes.iter().sum();
    let mut trace = Vec::new();
    let total = |sizes: &[u32; 19]| -> u64 { hist.keys().map(|&c| class_cost(c, sizes)).sum() };
    trace.push(total(&sizes));
    while assigned < rb {
        let remaining = rb - assigned;
        // widest net per step: grow one entry by any k codes, ranked by
        // gain per code, so plateaus in the argument distribution do not
        // stall the search
        let mut best: Option<(u64, u32, usize)> = None;
        for i in 0..19 {
            let class = class_of(CANONICAL[i].0, CANONICAL[i].1);
            if !hist.contains_key(&class) {
                continue;
            }
            let base = class_cost(class, &sizes);
            for k in 1..=remaining {
                sizes[i] += k;
                let gain = base - class_cost(class, &sizes);
                sizes[i] -= k;
                let better = match best {
                    None => gain > 0,
                    Some((bg, bk, _)) => {
                        gain as u128 * bk as u128 > bg as u128 * k as u128
                            || (gain as u128 * bk as u128 == bg as u128 * k as u128 && gain > bg)
                    }
                };
                if better {
                    best = Some((gain, k, i));
                }
            }
        }
        match best {
            Some((gain, k, i)) => {
                sizes[i] += k;
                assigned += k;
                let current = *trace.last().unwrap();
                trace.push(current - gain);
            }
            None => {
                // nothing left to save; park the rest in the first range
                sizes[0] += remaining;
                assigned = rb;
                trace.push(*trace.last().unwrap());
            }
        }
    }
    Ok((EncodingTable::from_sizes(rb, &sizes)?, trace))
}

/// The 92 characters that need no escaping in common host languages:
/// printable ASCII without double quote, backslash and backtick.
pub fn alphabet92() -> Vec<u8> {
    (32u8..=126).filter(|c| !matches!(c, b'"' | b'\\' | b'`')).collect()
}

pub fn char_to_code(ch: u8, rb: u32) -> Result<u32, EncodeError> {
    if rb > 126 {
        return Ok(ch as u32);
    }
    alphabet92()
        .iter()
        .position(|&c| c == ch)
        .map(|i| i as u32)
        .filter(|&i| i < rb)
        .ok_or(EncodeError::CharOutsideAlphabet(ch as char))
}

pub fn code_to_char(code: u32, rb: u32) -> Result<u8, EncodeError> {
    if rb > 126 {
        return Ok(code as u8);
    }
    alphabet92()
        .get(code as usize)
        .copied()
        .ok_or(EncodeError::UnassignedCode(code))
}

/// Symbol section: anonymous count, named count, then each named symbol
/// from the highest index down as length plus reversed characters.
pub fn encode_symbol_table(layout: &SymbolLayout, rb: u32) -> Result<Vec<u32>, EncodeError> {
    let mut out = Vec::new();
    out.extend(vlq_full_encode(layout.anonymous_count as u64, rb));
    out.extend(vlq_full_encode(layout.named_count as u64, rb));
    for idx in (0..layout.named_count).rev() {
        let name = layout.names[idx].as_deref().expect("named block has names");
        out.extend(vlq_full_encode(name.len() as u64, rb));
        for ch in name.bytes().rev() {
            out.push(char_to_code(ch, rb)?);
        }
    }
    Ok(out)
}

pub const MAGIC: &[u8; 4] = b"RVM1";
pub const FLAG_LZSS: u8 = 1;
pub const FLAG_OPTIMAL: u8 = 2;
pub const FLAG_ARITY_CHECK: u8 = 4;
pub const FLAG_PRIM_NO_ARITY: u8 = 8;

#[derive(Debug, Clone)]
pub struct ContainerOptions {
    pub rb: u32,
    pub lzss: bool,
    /// Include the table section (the decoder otherwise assumes the
    /// original table).
    pub optimal: bool,
    pub arity_check: bool,
    pub prim_no_arity: bool,
}

/// Container layout: magic, flags, rb byte (0 means 256), sb byte iff
/// compressed, 19 range sizes iff optimal, then 4-byte little-endian
/// payload length and the payload. A compressed payload starts with the
/// decompressed length so the decoder can size its buffer up front.
pub fn emit_container(
    symtab_codes: &[u32],
    instr_codes: &[u32],
    table: &EncodingTable,
    opts: &ContainerOptions,
) -> Result<Vec<u8>, EncodeError> {
    let codes: Vec<u8> = symtab_codes
        .iter()
        .chain(instr_codes)
        .map(|&c| {
            debug_assert!(c < opts.rb);
            c as u8
        })
        .collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let mut flags = 0u8;
    if opts.lzss {
        flags |= FLAG_LZSS;
    }
    if opts.optimal {
        flags |= FLAG_OPTIMAL;
    }
    if opts.arity_check {
        flags |= FLAG_ARITY_CHECK;
    }
    if opts.prim_no_arity {
        flags |= FLAG_PRIM_NO_ARITY;
    }
    out.push(flags);
    out.push(if opts.rb == 256 { 0 } else { opts.rb as u8 });
    let payload = if opts.lzss {
        let (compressed, sb) = lzss::compress(&codes, opts.rb)?;
        out.push(sb as u8);
        let mut p = Vec::new();
        vlq128_encode(codes.len() as u64, &mut p);
        p.extend_from_slice(&compressed);
        p
    } else {
        codes
    };
    if opts.optimal {
        for size in table.sizes() {
            vlq128_encode(size as u64, &mut out);
        }
    }
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_program, CompileOptions};
    use crate::expander::{expand_top, ExpandEnv};
    use crate::features::baseline_feature_set;
    use crate::reader::read_all;
    use crate::table::ORIGINAL_SIZES;

    fn rng(seed: u64) -> impl FnMut() -> u64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            s >> 33
        }
    }

    #[test]
    fn vlq_worked_example() {
        // long range 50..55 at rb 92: codes [53,4] mean 3*46+4 = 142
        let range = RangeDesc { kind: Kind::Link0, sym: false, long: true, start: 50, size: 6 };
        assert_eq!(vlq_encode(142, &range, 92), vec![53, 4]);
        assert_eq!(vlq_decode(&[53, 4], 0, &range, 92).unwrap(), (142, 2));
    }

    #[test]
    fn vlq_zero_takes_two_codes() {
        let range = RangeDesc { kind: Kind::Link0, sym: false, long: true, start: 20, size: 1 };
        assert_eq!(vlq_encode(0, &range, 92), vec![20, 0]);
        assert_eq!(vlq_decode(&[20, 0], 0, &range, 92).unwrap(), (0, 2));
    }

    #[test]
    fn vlq_matches_brute_force_minimum() {
        // at a small base, enumerate every code sequence up to length 4 and
        // record the shortest one decoding to each value
        let rb = 10u32;
        let range = RangeDesc { kind: Kind::Link0, sym: false, long: true, start: 2, size: 3 };
        let d = rb / 2;
        let mut shortest: HashMap<u64, usize> = HashMap::new();
        for lead in range.start..range.start + range.size {
            let mut seqs: Vec<Vec<u32>> = vec![vec![lead]];
            for len in 1..=3 {
                let mut next_seqs = Vec::new();
                for s in &seqs {
                    for digit in 0..rb {
                        let mut s2 = s.clone();
                        s2.push(digit);
                        if digit < d {
                            if let Ok((v, used)) = vlq_decode(&s2, 0, &range, rb) {
                                if used == s2.len() {
                                    let e = shortest.entry(v).or_insert(usize::MAX);
                                    *e = (*e).min(s2.len());
                                }
                            }
                        } else {
                            next_seqs.push(s2);
                        }
                    }
                }
                seqs = next_seqs;
                let _ = len;
            }
        }
        for v in 0..300u64 {
            let enc = vlq_encode(v, &range, rb);
            assert_eq!(vlq_decode(&enc, 0, &range, rb).unwrap(), (v, enc.len()));
            assert_eq!(enc.len(), shortest[&v], "value {v} not minimal");
        }
    }

    #[test]
    fn original_table_code_42_is_call_sym_19() {
        let t = EncodingTable::original();
        let codes = encode_instrs(&[Instr::sym(Kind::Link0, 19)], &t).unwrap();
        assert_eq!(codes, vec![42]);
        let back = decode_instrs(&[42], 0, &t).unwrap();
        assert_eq!(back, vec![Instr::sym(Kind::Link0, 19)]);
    }

    #[test]
    fn original_table_small_jump_and_merge4() {
        let t = EncodingTable::original();
        assert_eq!(encode_instrs(&[Instr::sym(Kind::Push0, 5)], &t).unwrap(), vec![5]);
        assert_eq!(encode_instrs(&[Instr::merge4()], &t).unwrap(), vec![91]);
    }

    #[test]
    fn share_is_inexpressible_in_the_original_table() {
        let t = EncodingTable::original();
        let e = encode_instrs(&[Instr::int(Kind::Share, 1)], &t).unwrap_err();
        assert!(matches!(e, EncodeError::Inexpressible(Kind::Share)));
    }

    #[test]
    fn instruction_stream_round_trip_random() {
        let t = EncodingTable::original();
        let mut next = rng(4242);
        for _ in 0..200 {
            let n = next() % 40;
            let instrs: Vec<Instr> = (0..n)
                .map(|_| {
                    let kinds = [Kind::Push0, Kind::Link0, Kind::Link1, Kind::Link2, Kind::Link3];
                    match next() % 7 {
                        0 => Instr::merge4(),
                        1 => Instr::int(Kind::Merge3, next() % 50),
                        _ => {
                            let kind = kinds[(next() % 5) as usize];
                            let arg = next() % 500;
                            if next() % 2 == 0 {
                                Instr::sym(kind, arg)
                            } else {
                                Instr::int(kind, arg)
                            }
                        }
                    }
                })
                .collect();
            let codes = encode_instrs(&instrs, &t).unwrap();
            assert_eq!(decode_instrs(&codes, 0, &t).unwrap(), instrs);
        }
    }

    fn compiled(src: &str) -> crate::compiler::CompiledProgram {
        let mut env = ExpandEnv::default();
        let mut features = baseline_feature_set();
        let mut forms = Vec::new();
        for d in read_all(src).unwrap() {
            forms.extend(expand_top(&d, &mut env, &mut features).unwrap());
        }
        compile_program(forms, features, &CompileOptions::default()).unwrap()
    }

    fn index_map(p: &crate::compiler::CompiledProgram) -> HashMap<SymId, u32> {
        p.layout.index_of.clone()
    }

    #[test]
    fn straight_line_code_has_no_share() {
        let p = compiled("(##+ 1 (##+ 2 3))");
        let instrs = linearize(&p.graph, p.root, &index_map(&p), true).unwrap();
        assert!(instrs.iter().all(|i| i.kind != Kind::Share));
    }

    #[test]
    fn conditional_join_emits_share_one() {
        // the join point right after the branches is one instruction deep
        let p = compiled("(define (f n) (##* (if (##< n 0) 0 1) n)) (f 5)");
        let instrs = linearize(&p.graph, p.root, &index_map(&p), true).unwrap();
        let shares: Vec<&Instr> = instrs.iter().filter(|i| i.kind == Kind::Share).collect();
        assert_eq!(shares.len(), 1);
        assert_eq!(shares[0].arg, 1);
    }

    #[test]
    fn tail_duplication_grows_without_share() {
        let p = compiled("(define (f n) (##* (if (##< n 0) 0 1) n)) (f 5)");
        let with = linearize(&p.graph, p.root, &index_map(&p), true).unwrap();
        let without = linearize(&p.graph, p.root, &index_map(&p), false).unwrap();
        assert!(without.len() > with.len());
        assert!(without.iter().all(|i| i.kind != Kind::Share));
    }

    #[test]
    fn optimal_search_favors_the_dominant_class() {
        let instrs: Vec<Instr> = (0..1000).map(|_| Instr::int(Kind::Link2, 0)).collect();
        let t = search_optimal_table(&instrs, 92).unwrap();
        // entry 8 is the get-int short range
        let link2_short = t.entries[8].size;
        assert!(link2_short >= 1);
        let cost = encode_instrs(&instrs, &t).unwrap().len();
        assert_eq!(cost, 1000);
    }

    #[test]
    fn optimal_search_keeps_long_ranges_alive_and_partitions() {
        let p = compiled("(define (f n) (if (##< n 2) n (##+ (f (##- n 1)) (f (##- n 2))))) (f 10)");
        let instrs = linearize(&p.graph, p.root, &index_map(&p), true).unwrap();
        for rb in [13u32, 92, 186, 256] {
            let t = search_optimal_table(&instrs, rb).unwrap();
            assert_eq!(t.sizes().iter().sum::<u32>(), rb);
            for (i, &(k, _, long)) in CANONICAL.iter().enumerate() {
                if long || k == Kind::Merge4 {
                    assert!(t.sizes()[i] >= 1);
                }
            }
        }
        assert!(search_optimal_table(&instrs, 12).is_err());
    }

    #[test]
    fn greedy_steps_never_increase_cost() {
        let p = compiled("(define (f n) (if (##< n 2) n (##+ (f (##- n 1)) (f (##- n 2))))) (f 10)");
        let instrs = linearize(&p.graph, p.root, &index_map(&p), true).unwrap();
        let (_, trace) = search_with_trace(&instrs, 92).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn searched_table_beats_the_original_on_its_own_stream() {
        let p = compiled(
            "(define (f n) (if (##< n 2) n (##+ (f (##- n 1)) (f (##- n 2)))))
             (##putchar (##+ 48 (f 10)))",
        );
        let instrs = linearize(&p.graph, p.root, &index_map(&p), false).unwrap();
        let original = encode_instrs(&instrs, &EncodingTable::original()).unwrap();
        let searched = search_optimal_table(&instrs, 92).unwrap();
        let optimal = encode_instrs(&instrs, &searched).unwrap();
        assert!(optimal.len() <= original.len());
    }

    #[test]
    fn symbol_section_example() {
        use crate::compiler::SymbolLayout;
        let layout = SymbolLayout {
            order: vec![],
            index_of: HashMap::new(),
            names: vec![Some("ab".into())],
            named_count: 1,
            anonymous_count: 0,
        };
        let codes = encode_symbol_table(&layout, 92).unwrap();
        let mut expect = Vec::new();
        expect.extend(vlq_full_encode(0, 92));
        expect.extend(vlq_full_encode(1, 92));
        expect.extend(vlq_full_encode(2, 92));
        expect.push(char_to_code(b'b', 92).unwrap());
        expect.push(char_to_code(b'a', 92).unwrap());
        assert_eq!(codes, expect);
    }

    #[test]
    fn container_header_layout() {
        let t = EncodingTable::original();
        let opts = ContainerOptions {
            rb: 92,
            lzss: false,
            optimal: false,
            arity_check: true,
            prim_no_arity: false,
        };
        let bytes = emit_container(&[1, 2], &[3, 4, 5], &t, &opts).unwrap();
        assert_eq!(&bytes[0..4], MAGIC);
        assert_eq!(bytes[4], FLAG_ARITY_CHECK);
        assert_eq!(bytes[5], 92);
        assert_eq!(&bytes[6..10], &5u32.to_le_bytes());
        assert_eq!(&bytes[10..], &[1, 2, 3, 4, 5]);
    }

    #[test]
    fn container_rb_256_marker() {
        let t = EncodingTable::from_sizes(256, &{
            let mut sizes = ORIGINAL_SIZES;
            sizes[0] += 256 - 92;
            sizes
        })
        .unwrap();
        let opts = ContainerOptions {
            rb: 256,
            lzss: false,
            optimal: true,
            arity_check: false,
            prim_no_arity: false,
        };
        let bytes = emit_container(&[], &[255], &t, &opts).unwrap();
        assert_eq!(bytes[5], 0);
        assert_eq!(bytes[4], FLAG_OPTIMAL);
    }

    #[test]
    fn vlq128_round_trip() {
        let mut next = rng(5);
        for _ in 0..500 {
            let v = next() * next() % (1 << 40);
            let mut bytes = Vec::new();
            vlq128_encode(v, &mut bytes);
            assert_eq!(vlq128_decode(&bytes, 0).unwrap(), (v, bytes.len()));
        }
    }
}
