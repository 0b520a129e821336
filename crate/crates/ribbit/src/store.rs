//! Rib allocation and mark-sweep collection.
//!
//! A rib is a three field cell; every field is a `Value` (signed integer or
//! rib reference). Code, data and stacks all live in one `RibStore`. The
//! three singletons (false, true, nil) occupy the first three slots and
//! survive every collection.

use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RibRef(pub(crate) u32);

impl fmt::Debug for RibRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Value {
    Int(i64),
    Rib(RibRef),
}

impl Value {
    pub fn is_rib(self) -> bool {
        matches!(self, Value::Rib(_))
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(n),
            Value::Rib(_) => None,
        }
    }

    pub fn as_rib(self) -> Option<RibRef> {
        match self {
            Value::Rib(r) => Some(r),
            Value::Int(_) => None,
        }
    }
}

pub const FALSE: RibRef = RibRef(0);
pub const TRUE: RibRef = RibRef(1);
pub const NIL: RibRef = RibRef(2);

/// Type tags stored in the third field of data ribs.
pub mod tag {
    pub const PAIR: i64 = 0;
    pub const PROCEDURE: i64 = 1;
    pub const SYMBOL: i64 = 2;
    pub const STRING: i64 = 3;
    pub const VECTOR: i64 = 4;
    pub const SINGLETON: i64 = 5;
    pub const CHAR: i64 = 6;
    pub const INPUT_PORT: i64 = 8;
    pub const OUTPUT_PORT: i64 = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcStats {
    pub live: usize,
    pub reclaimed: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("rib heap exhausted ({0} cells)")]
    OutOfMemory(usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RootId(usize);

pub const DEFAULT_CAPACITY: usize = 4_000_000;

pub struct RibStore {
    cells: Vec<[Value; 3]>,
    free: Vec<u32>,
    capacity: usize,
    roots: Vec<Value>,
    temps: Vec<Value>,
}

impl RibStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 3, "capacity must hold the singletons");
        let singleton = |_| [Value::Int(0), Value::Int(0), Value::Int(tag::SINGLETON)];
        RibStore {
            cells: (0..3).map(singleton).collect(),
            free: Vec::new(),
            capacity,
            roots: Vec::new(),
            temps: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn live_count(&self) -> usize {
        self.cells.len() - self.free.len()
    }

    pub fn add_root(&mut self, v: Value) -> RootId {
        self.roots.push(v);
        RootId(self.roots.len() - 1)
    }

    pub fn set_root(&mut self, id: RootId, v: Value) {
        self.roots[id.0] = v;
    }

    pub fn root(&self, id: RootId) -> Value {
        self.roots[id.0]
    }

    /// Push a scratch root; pair with `pop_temp`. Used while a value is
    /// reachable from nowhere else across a potential collection.
    pub fn push_temp(&mut self, v: Value) {
        self.temps.push(v);
    }

    pub fn pop_temp(&mut self) -> Value {
        self.temps.pop().expect("temp root underflow")
    }

    pub fn alloc(&mut self, f0: Value, f1: Value, f2: Value) -> Result<RibRef, StoreError> {
        if let Some(i) = self.free.pop() {
            self.cells[i as usize] = [f0, f1, f2];
            return Ok(RibRef(i));
        }
        if self.cells.len() < self.capacity {
            self.cells.push([f0, f1, f2]);
            return Ok(RibRef((self.cells.len() - 1) as u32));
        }
        // Full: collect with the arguments treated as extra roots, then retry.
        self.temps.push(f0);
        self.temps.push(f1);
        self.temps.push(f2);
        self.collect();
        self.temps.truncate(self.temps.len() - 3);
        if let Some(i) = self.free.pop() {
            self.cells[i as usize] = [f0, f1, f2];
            Ok(RibRef(i))
        } else {
            Err(StoreError::OutOfMemory(self.capacity))
        }
    }

    pub fn field(&self, r: RibRef, i: usize) -> Value {
        self.cells[r.0 as usize][i]
    }

    pub fn set_field(&mut self, r: RibRef, i: usize, v: Value) {
        self.cells[r.0 as usize][i] = v;
    }

    pub fn f0(&self, r: RibRef) -> Value {
        self.field(r, 0)
    }

    pub fn f1(&self, r: RibRef) -> Value {
        self.field(r, 1)
    }

    pub fn f2(&self, r: RibRef) -> Value {
        self.field(r, 2)
    }

    pub fn fields(&self, r: RibRef) -> [Value; 3] {
        self.cells[r.0 as usize]
    }

    pub fn collect(&mut self) -> GcStats {
        let mut marks = vec![false; self.cells.len()];
        let mut work: Vec<u32> = vec![FALSE.0, TRUE.0, NIL.0];
        let rooted = self.roots.iter().chain(self.temps.iter());
        for v in rooted {
            if let Value::Rib(r) = v {
                work.push(r.0);
            }
        }
        while let Some(i) = work.pop() {
            let i = i as usize;
            if marks[i] {
                continue;
            }
            marks[i] = true;
            for v in self.cells[i] {
                if let Value::Rib(r) = v {
                    if !marks[r.0 as usize] {
                        work.push(r.0);
                    }
                }
            }
        }
        let before_free = self.free.len();
        self.free.clear();
        for (i, m) in marks.iter().enumerate() {
            if !m {
                self.free.push(i as u32);
            }
        }
        let live = self.cells.len() - self.free.len();
        GcStats {
            live,
            reclaimed: self.free.len() - before_free,
        }
    }
}

impl Default for RibStore {
    fn default() -> Self {
        RibStore::new(DEFAULT_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn int(n: i64) -> Value {
        Value::Int(n)
    }

    #[test]
    fn field_read_after_write() {
        let mut s = RibStore::new(100);
        let r = s.alloc(int(1), int(2), int(3)).unwrap();
        for i in 0..3 {
            s.set_field(r, i, int(42 + i as i64));
            assert_eq!(s.field(r, i), int(42 + i as i64));
        }
    }

    #[test]
    fn improper_list_shape() {
        // (1 2 . 3) is [1, [2, 3, 0], 0]
        let mut s = RibStore::new(100);
        let tail = s.alloc(int(2), int(3), int(tag::PAIR)).unwrap();
        let head = s.alloc(int(1), Value::Rib(tail), int(tag::PAIR)).unwrap();
        assert_eq!(s.f0(head), int(1));
        let t = s.f1(head).as_rib().unwrap();
        assert_eq!(s.fields(t), [int(2), int(3), int(tag::PAIR)]);
    }

    #[test]
    fn singleton_shaped_rib_is_distinct_from_false() {
        let mut s = RibStore::new(100);
        let r = s.alloc(int(0), int(0), int(tag::SINGLETON)).unwrap();
        assert_ne!(r, FALSE);
        assert_eq!(s.fields(r), s.fields(FALSE));
    }

    /// Independent reachability oracle: DFS over the cell graph.
    fn reachable(s: &RibStore, roots: &[Value]) -> HashSet<u32> {
        let mut seen = HashSet::new();
        let mut work: Vec<u32> = vec![FALSE.0, TRUE.0, NIL.0];
        for v in roots {
            if let Value::Rib(r) = v {
                work.push(r.0);
            }
        }
        while let Some(i) = work.pop() {
            if !seen.insert(i) {
                continue;
            }
            for v in s.fields(RibRef(i)) {
                if let Value::Rib(r) = v {
                    work.push(r.0);
                }
            }
        }
        seen
    }

    #[test]
    fn collect_retains_only_rooted_chain() {
        let mut s = RibStore::new(10_000);
        let mut chain = Value::Int(0);
        for i in 0..100 {
            let r = s.alloc(int(i), chain, int(tag::PAIR)).unwrap();
            chain = Value::Rib(r);
        }
        for _ in 0..900 {
            s.alloc(int(9), int(9), int(9)).unwrap();
        }
        let root = s.add_root(chain);
        let stats = s.collect();
        let oracle = reachable(&s, &[s.root(root)]);
        assert_eq!(stats.live, oracle.len());
        assert_eq!(stats.live, 100 + 3);
        assert!(stats.reclaimed >= 900);
    }

    #[test]
    fn cyclic_structure_survives() {
        let mut s = RibStore::new(100);
        let a = s.alloc(int(0), int(0), int(0)).unwrap();
        let b = s.alloc(Value::Rib(a), int(0), int(0)).unwrap();
        s.set_field(a, 0, Value::Rib(b));
        s.add_root(Value::Rib(a));
        let stats = s.collect();
        assert_eq!(stats.live, 2 + 3);
        assert_eq!(s.f0(a), Value::Rib(b));
        assert_eq!(s.f0(b), Value::Rib(a));
    }

    #[test]
    fn second_collection_reclaims_nothing() {
        let mut s = RibStore::new(1000);
        let r = s.alloc(int(1), int(2), int(3)).unwrap();
        s.add_root(Value::Rib(r));
        for _ in 0..50 {
            s.alloc(int(0), int(0), int(0)).unwrap();
        }
        s.collect();
        let again = s.collect();
        assert_eq!(again.reclaimed, 0);
    }

    #[test]
    fn sharing_preserved_across_collection() {
        let mut s = RibStore::new(100);
        let shared = s.alloc(int(7), int(8), int(9)).unwrap();
        let a = s.alloc(Value::Rib(shared), int(0), int(0)).unwrap();
        let b = s.alloc(Value::Rib(shared), int(0), int(0)).unwrap();
        s.add_root(Value::Rib(a));
        s.add_root(Value::Rib(b));
        s.collect();
        assert_eq!(s.f0(a), s.f0(b));
        assert_eq!(s.fields(shared), [int(7), int(8), int(9)]);
    }

    #[test]
    fn alloc_after_exhaustion_collects() {
        let mut s = RibStore::new(16);
        // fill with garbage, nothing rooted
        for _ in 0..13 {
            s.alloc(int(0), int(0), int(0)).unwrap();
        }
        // next alloc must collect and succeed
        let r = s.alloc(int(5), int(6), int(7)).unwrap();
        assert_eq!(s.fields(r), [int(5), int(6), int(7)]);
    }

    #[test]
    fn out_of_memory_when_all_rooted() {
        let mut s = RibStore::new(8);
        let mut chain = Value::Int(0);
        loop {
            match s.alloc(int(0), chain, int(0)) {
                Ok(r) => {
                    chain = Value::Rib(r);
                    s.add_root(chain); // root every cell
                }
                Err(e) => {
                    assert_eq!(e, StoreError::OutOfMemory(8));
                    break;
                }
            }
        }
    }

    #[test]
    fn gc_soundness_fuzzed_random_graphs() {
        // deterministic xorshift; no dependency needed here
        let mut seed = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..20 {
            let mut s = RibStore::new(5000);
            let mut refs = Vec::new();
            for _ in 0..500 {
                let pick = |n: u64, refs: &Vec<RibRef>| -> Value {
                    if refs.is_empty() || n % 3 == 0 {
                        Value::Int((n % 100) as i64)
                    } else {
                        Value::Rib(refs[(n as usize / 3) % refs.len()])
                    }
                };
                let f0 = pick(next(), &refs);
                let f1 = pick(next(), &refs);
                let f2 = pick(next(), &refs);
                refs.push(s.alloc(f0, f1, f2).unwrap());
            }
            let mut roots = Vec::new();
            for _ in 0..5 {
                let r = refs[(next() as usize) % refs.len()];
                roots.push(s.add_root(Value::Rib(r)));
            }
            let root_vals: Vec<Value> = roots.iter().map(|&r| s.root(r)).collect();
            let oracle = reachable(&s, &root_vals);
            let stats = s.collect();
            assert_eq!(stats.live, oracle.len());
        }
    }
}
