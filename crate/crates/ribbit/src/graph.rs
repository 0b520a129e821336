//! Hash-consed code DAG.
//!
//! Nodes are canonical: building the same (opcode, operand, next) triple
//! twice returns the identical node id, so structurally equal subgraphs are
//! shared and join points fall out of construction.

use crate::datum::Datum;
use std::collections::HashMap;

pub const OP_JUMP_CALL: u8 = 0;
pub const OP_SET: u8 = 1;
pub const OP_GET: u8 = 2;
pub const OP_CONST: u8 = 3;
pub const OP_IF: u8 = 4;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct SymId(pub u32);

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Operand {
    Int(i64),
    Sym(SymId),
    /// True branch of an `if` node.
    Branch(NodeId),
    /// Constant procedure: arity field is 2*nparams + rest bit.
    Proc { arity: i64, body: NodeId },
    /// Unprocessed constant; removed by constant lifting.
    Datum(Datum),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Node {
    pub op: u8,
    pub operand: Operand,
    pub next: Option<NodeId>,
}

impl Node {
    pub fn is_jump(&self) -> bool {
        self.op == OP_JUMP_CALL && self.next.is_none()
    }
}

#[derive(Default)]
pub struct CodeGraph {
    nodes: Vec<Node>,
    memo: HashMap<Node, NodeId>,
}

impl CodeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hash_cons(&mut self, op: u8, operand: Operand, next: Option<NodeId>) -> NodeId {
        debug_assert!(
            (op == OP_JUMP_CALL) || next.is_some(),
            "only jump nodes end a chain"
        );
        let node = Node { op, operand, next };
        if let Some(&id) = self.memo.get(&node) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node.clone());
        self.memo.insert(node, id);
        id
    }

    /// Insert without consulting the memo table. Used when importing an
    /// already-materialized structure whose sharing must be kept exactly
    /// as given rather than maximized.
    pub fn insert_raw(&mut self, op: u8, operand: Operand, next: Option<NodeId>) -> NodeId {
        debug_assert!(
            (op == OP_JUMP_CALL) || next.is_some(),
            "only jump nodes end a chain"
        );
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, operand, next });
        id
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes reachable from `root`, each visited once.
    pub fn reachable(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut work = vec![root];
        let mut out = Vec::new();
        while let Some(id) = work.pop() {
            if seen[id.0 as usize] {
                continue;
            }
            seen[id.0 as usize] = true;
            out.push(id);
            let n = self.node(id);
            match &n.operand {
                Operand::Branch(b) => work.push(*b),
                Operand::Proc { body, .. } => work.push(*body),
                _ => {}
            }
            if let Some(next) = n.next {
                work.push(next);
            }
        }
        out
    }

    /// Checks the chain invariants: every path ends in a jump and `if`
    /// nodes carry a branch operand.
    pub fn validate(&self, root: NodeId) -> bool {
        self.reachable(root).iter().all(|&id| {
            let n = self.node(id);
            let tail_ok = n.next.is_some() || n.is_jump();
            let if_ok = n.op != OP_IF || matches!(n.operand, Operand::Branch(_));
            tail_ok && if_ok
        })
    }
}

/// Interned symbol names.
#[derive(Default, Clone)]
pub struct SymbolTable {
    names: Vec<String>,
    by_name: HashMap<String, SymId>,
}

impl SymbolTable {
    pub fn intern(&mut self, name: &str) -> SymId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = SymId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<SymId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: SymId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_triples_are_identical() {
        let mut g = CodeGraph::new();
        let j = g.hash_cons(OP_JUMP_CALL, Operand::Int(0), None);
        let a = g.hash_cons(OP_CONST, Operand::Int(5), Some(j));
        let b = g.hash_cons(OP_CONST, Operand::Int(5), Some(j));
        assert_eq!(a, b);
    }

    #[test]
    fn different_operands_are_distinct() {
        let mut g = CodeGraph::new();
        let j = g.hash_cons(OP_JUMP_CALL, Operand::Int(0), None);
        let a = g.hash_cons(OP_CONST, Operand::Int(5), Some(j));
        let b = g.hash_cons(OP_CONST, Operand::Int(6), Some(j));
        assert_ne!(a, b);
    }

    #[test]
    fn structural_equality_iff_identity_fuzzed() {
        // Build random small trees twice through the graph; equal structure
        // must yield the same id, and ids with different structure differ.
        let mut seed = 12345u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            seed >> 33
        };
        let mut g = CodeGraph::new();
        let build = |g: &mut CodeGraph, choices: &[u64]| -> NodeId {
            let mut id = g.hash_cons(OP_JUMP_CALL, Operand::Int(0), None);
            for &c in choices {
                let op = [OP_SET, OP_GET, OP_CONST][(c % 3) as usize];
                id = g.hash_cons(op, Operand::Int((c % 4) as i64), Some(id));
            }
            id
        };
        for _ in 0..200 {
            let choices: Vec<u64> = (0..(next() % 6)).map(|_| next()).collect();
            let a = build(&mut g, &choices);
            let b = build(&mut g, &choices);
            assert_eq!(a, b);
        }
    }
}
