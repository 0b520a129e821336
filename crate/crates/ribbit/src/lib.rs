//! A compact Scheme toolchain: an AOT compiler from a Scheme subset to a
//! hash-consed code DAG, a specialized byte encoding (RIBN) with LZSS
//! compression, a rib-based six-instruction virtual machine, a host-template
//! specializer, and an interactive REPL.

pub mod compiler;
pub mod datum;
pub mod decode;
pub mod encode;
pub mod expander;
pub mod features;
pub mod graph;
pub mod library;
pub mod lzss;
pub mod reader;
pub mod repl;
pub mod store;
pub mod table;
pub mod templater;
pub mod vm;
