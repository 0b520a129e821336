//! Encoding tables: how decoding instructions map onto the code space
//! 0..rb-1 of a byte notation with base `rb`.

use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Kind {
    Push0,
    Link0,
    Link1,
    Link2,
    Link3,
    Merge3,
    Merge4,
    Share,
}

/// One decoding instruction. `sym` distinguishes symbol-table arguments
/// from plain integers; MERGE3's arity and SHARE's skip count are integers,
/// MERGE4 has no argument (arg = 0).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Instr {
    pub kind: Kind,
    pub sym: bool,
    pub arg: u64,
}

impl Instr {
    pub fn int(kind: Kind, arg: u64) -> Instr {
        Instr { kind, sym: false, arg }
    }
    pub fn sym(kind: Kind, arg: u64) -> Instr {
        Instr { kind, sym: true, arg }
    }
    pub fn merge4() -> Instr {
        Instr { kind: Kind::Merge4, sym: false, arg: 0 }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RangeDesc {
    pub kind: Kind,
    pub sym: bool,
    pub long: bool,
    pub start: u32,
    pub size: u32,
}

/// The canonical entry order, fixed across all tables: (kind, sym, long).
pub const CANONICAL: [(Kind, bool, bool); 19] = [
    (Kind::Push0, true, false),
    (Kind::Push0, false, true),
    (Kind::Push0, true, true),
    (Kind::Link0, true, false),
    (Kind::Link0, false, true),
    (Kind::Link0, true, true),
    (Kind::Link1, false, true),
    (Kind::Link1, true, true),
    (Kind::Link2, false, false),
    (Kind::Link2, false, true),
    (Kind::Link2, true, true),
    (Kind::Link3, false, false),
    (Kind::Link3, false, true),
    (Kind::Link3, true, true),
    (Kind::Merge3, false, false),
    (Kind::Merge3, true, true),
    (Kind::Merge4, false, false),
    (Kind::Share, false, false),
    (Kind::Share, false, true),
];

pub const ORIGINAL_SIZES: [u32; 19] =
    [20, 1, 2, 30, 1, 2, 1, 2, 10, 1, 2, 11, 1, 2, 4, 1, 1, 0, 0];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("range sizes sum to {0}, expected the code space {1}")]
    NotAPartition(u32, u32),
    #[error("long range `{0:?}` has size 0")]
    EmptyLongRange(Kind),
    #[error("code space {0} is too small for the mandatory long ranges")]
    BaseTooSmall(u32),
}

#[derive(Clone, Debug)]
pub struct EncodingTable {
    pub rb: u32,
    pub entries: [RangeDesc; 19],
}

impl EncodingTable {
    /// Builds a table from sizes listed in canonical order; start codes are
    /// assigned cumulatively. A size of 0 disables an entry; long entries
    /// with size 0 make the instruction inexpressible (the original table
    /// has no SHARE ranges, forcing tail duplication).
    pub fn from_sizes(rb: u32, sizes: &[u32; 19]) -> Result<EncodingTable, TableError> {
        let total: u32 = sizes.iter().sum();
        if total != rb {
            return Err(TableError::NotAPartition(total, rb));
        }
        let mut entries = [RangeDesc {
            kind: Kind::Push0,
            sym: false,
            long: false,
            start: 0,
            size: 0,
        }; 19];
        let mut start = 0;
        for (i, &(kind, sym, long)) in CANONICAL.iter().enumerate() {
            entries[i] = RangeDesc { kind, sym, long, start, size: sizes[i] };
            start += sizes[i];
        }
        Ok(EncodingTable { rb, entries })
    }

    /// The hand-tuned base-92 table of the previous system. It cannot
    /// express SHARE.
    pub fn original() -> EncodingTable {
        EncodingTable::from_sizes(92, &ORIGINAL_SIZES).expect("fixed sizes partition 92")
    }

    pub fn sizes(&self) -> [u32; 19] {
        let mut out = [0; 19];
        for (i, e) in self.entries.iter().enumerate() {
            out[i] = e.size;
        }
        out
    }

    /// Entry index for an instruction's short and long form. MERGE3, MERGE4
    /// and SHARE are matched by kind alone (the MERGE3 long entry carries
    /// the `sym` label for historical reasons but its argument is the
    /// arity integer).
    pub fn entry_indexes(&self, kind: Kind, sym: bool) -> (Option<usize>, Option<usize>) {
        let mut short = None;
        let mut long = None;
        for (i, e) in self.entries.iter().enumerate() {
            if e.kind != kind {
                continue;
            }
            let matches = match kind {
                Kind::Merge3 | Kind::Merge4 | Kind::Share => true,
                _ => e.sym == sym,
            };
            if !matches {
                continue;
            }
            if e.long {
                long = Some(i);
            } else {
                short = Some(i);
            }
        }
        (short, long)
    }

    /// The entry covering a code, if any nonempty range contains it.
    pub fn entry_for_code(&self, code: u32) -> Option<&RangeDesc> {
        self.entries
            .iter()
            .find(|e| e.size > 0 && code >= e.start && code < e.start + e.size)
    }
}
