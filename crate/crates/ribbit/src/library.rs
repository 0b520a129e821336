//! The embedded standard library and the front end that compiles a
//! program behind it. The library declares the whole primitive table, so
//! compiling with it starts from an empty feature set.

use crate::compiler::{compile_program, CompileError, CompileOptions, CompiledProgram};
use crate::expander::{expand_top, ExpandEnv, ExpandError};
use crate::features::FeatureSet;
use crate::reader::{read_all, ReadError};
use thiserror::Error;

const PLAIN: &str = include_str!("../lib/plain.scm");
const TYPE_CHECKED: &str = include_str!("../lib/type-checked.scm");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LibraryVariant {
    #[default]
    Plain,
    /// Plain plus set! overrides that type check accessor arguments and
    /// exit with status 70 on a violation.
    TypeChecked,
}

pub fn library_source(variant: LibraryVariant) -> String {
    match variant {
        LibraryVariant::Plain => PLAIN.to_string(),
        LibraryVariant::TypeChecked => format!("{PLAIN}\n{TYPE_CHECKED}"),
    }
}

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Reads and expands `sources` in order under one expander environment,
/// then compiles the result. Library text goes first so its expanders and
/// primitive declarations are in scope for the program.
pub fn compile_sources(
    sources: &[&str],
    options: &CompileOptions,
) -> Result<CompiledProgram, FrontendError> {
    let mut env = ExpandEnv::default();
    let mut features = FeatureSet::default();
    let mut forms = Vec::new();
    for src in sources {
        for d in read_all(src)? {
            forms.extend(expand_top(&d, &mut env, &mut features)?);
        }
    }
    Ok(compile_program(forms, features, options)?)
}

pub fn compile_with_library(
    program: &str,
    variant: LibraryVariant,
    options: &CompileOptions,
) -> Result<CompiledProgram, FrontendError> {
    compile_sources(&[&library_source(variant), program], options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::decode_program;
    use crate::encode::{
        emit_container, encode_instrs, encode_symbol_table, linearize, ContainerOptions,
    };
    use crate::store::RibStore;
    use crate::table::EncodingTable;
    use crate::vm::{run_program, Io};

    fn bytes_for(p: &CompiledProgram) -> Vec<u8> {
        let instrs = linearize(&p.graph, p.root, &p.layout.index_of, false).unwrap();
        let table = EncodingTable::original();
        let sym = encode_symbol_table(&p.layout, 92).unwrap();
        let codes = encode_instrs(&instrs, &table).unwrap();
        emit_container(
            &sym,
            &codes,
            &table,
            &ContainerOptions {
                rb: 92,
                lzss: false,
                optimal: false,
                arity_check: p.arity_check,
                prim_no_arity: p.prim_no_arity,
            },
        )
        .unwrap()
    }

    fn run_variant(src: &str, variant: LibraryVariant, input: &[u8]) -> (i64, String) {
        let p = compile_with_library(src, variant, &CompileOptions::default()).unwrap();
        let bytes = bytes_for(&p);
        let mut store = RibStore::new(4_000_000);
        let program = decode_program(&mut store, &bytes).unwrap();
        let (mut io, out) = Io::captured(input);
        let status = run_program(&mut store, &program, &mut io, None).unwrap();
        (status, String::from_utf8(out.take()).unwrap())
    }

    fn run(src: &str) -> String {
        let (status, out) = run_variant(src, LibraryVariant::Plain, b"");
        assert_eq!(status, 0, "unexpected exit status, output: {out}");
        out
    }


    #[test]
    fn primitive_table_matches_the_baseline() {
        let mut env = ExpandEnv::default();
        let mut features = FeatureSet::default();
        for d in read_all(PLAIN).unwrap() {
            expand_top(&d, &mut env, &mut features).unwrap();
        }
        let declared: Vec<(&str, usize)> = features
            .primitives
            .iter()
            .map(|p| (p.name.as_str(), p.arity))
            .collect();
        assert_eq!(declared, crate::features::baseline_primitives());
    }

    #[test]
    fn arithmetic_folds_and_fast_paths_agree() {
        assert_eq!(run("(display (+ 1 2 3))"), "6");
        assert_eq!(run("(display (+))"), "0");
        assert_eq!(run("(display (* 2 3 4))"), "24");
        assert_eq!(run("(display (- 10 1 2))"), "7");
        assert_eq!(run("(display (- 5))"), "-5");
        // the two argument shape goes through the expander fast path
        assert_eq!(run("(display (+ 20 22))"), "42");
        assert_eq!(run("(define f +) (display (f 1 2))"), "3");
    }

    #[test]
    fn integer_division_family() {
        assert_eq!(run("(display (quotient 17 5))"), "3");
        assert_eq!(run("(display (remainder 17 5))"), "2");
        assert_eq!(run("(display (remainder (- 17) 5))"), "-2");
        assert_eq!(run("(display (modulo (- 17) 5))"), "3");
        assert_eq!(run("(display (modulo 17 (- 5)))"), "-3");
    }

    #[test]
    fn type_predicates_are_disjoint() {
        let preds = [
            "pair?", "procedure?", "symbol?", "string?", "vector?", "char?",
            "boolean?", "null?", "number?",
        ];
        let values = [
            "(cons 1 2)", "(lambda (x) x)", "'sym", "\"s\"", "(make-vector 2)",
            "#\\a", "#t", "'()", "42",
        ];
        for (i, v) in values.iter().enumerate() {
            for (j, p) in preds.iter().enumerate() {
                let expected = if i == j { "#t" } else { "#f" };
                let out = run(&format!("(display ({p} {v}))"));
                assert_eq!(out, expected, "({p} {v})");
            }
        }
    }

    #[test]
    fn eqv_compares_fresh_characters_by_code() {
        assert_eq!(run("(display (eqv? (integer->char 97) #\\a))"), "#t");
        assert_eq!(run("(display (eq? (integer->char 97) (integer->char 97)))"), "#f");
        assert_eq!(run("(display (eqv? 3 3))"), "#t");
        assert_eq!(run("(display (eqv? (list 1) (list 1)))"), "#f");
        // identical literals are lifted into one shared constant
        assert_eq!(run("(display (eqv? '(1) '(1)))"), "#t");
    }

    #[test]
    fn list_operations() {
        assert_eq!(run("(display (length '(a b c)))"), "3");
        assert_eq!(run("(display (append '(1 2) '(3) '() '(4)))"), "(1 2 3 4)");
        assert_eq!(run("(display (reverse '(1 2 3)))"), "(3 2 1)");
        assert_eq!(run("(display (list-tail '(1 2 3 4) 2))"), "(3 4)");
        assert_eq!(run("(display (assq 'b '((a 1) (b 2))))"), "(b 2)");
        assert_eq!(run("(display (memq 3 '(1 2 3 4)))"), "(3 4)");
        assert_eq!(run("(display (memq 9 '(1 2)))"), "#f");
    }

    #[test]
    fn string_operations_match_a_host_oracle() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let len = rng.gen_range(0..8);
            let a: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            let len = rng.gen_range(0..8);
            let b: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            let out = run(&format!(
                "(display (string-length \"{a}\")) (newline)\
                 (display (string<? \"{a}\" \"{b}\")) (newline)\
                 (display (string-append \"{a}\" \"{b}\"))"
            ));
            let expected = format!(
                "{}\n{}\n{}{}",
                a.len(),
                if a < b { "#t" } else { "#f" },
                a,
                b
            );
            assert_eq!(out, expected, "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn string_cells_are_mutable() {
        assert_eq!(
            run("(define s (make-string 3 #\\x))\
                 (string-set! s 1 #\\o)\
                 (display s) (newline)\
                 (display (string-ref s 1))"),
            "xox\no"
        );
        assert_eq!(run("(display (list->string (string->list \"abc\")))"), "abc");
    }

    #[test]
    fn symbols_intern_through_the_runtime_table() {
        assert_eq!(run("(display (eq? (string->symbol \"abc\") 'abc))"), "#t");
        assert_eq!(
            run("(display (eq? (string->symbol \"zq1\") (string->symbol \"zq1\")))"),
            "#t"
        );
        assert_eq!(run("(display (symbol->string 'hello))"), "hello");
    }

    #[test]
    fn character_comparisons() {
        assert_eq!(run("(display (char<? #\\a #\\b))"), "#t");
        assert_eq!(run("(display (char>? #\\a #\\b))"), "#f");
        assert_eq!(run("(display (char>? #\\b #\\a))"), "#t");
        assert_eq!(run("(display (char=? #\\a #\\a))"), "#t");
        assert_eq!(run("(display (char->integer #\\A))"), "65");
        assert_eq!(run("(display (integer->char 66))"), "B");
    }

    #[test]
    fn vectors() {
        assert_eq!(
            run("(define v (make-vector 3 7))\
                 (vector-set! v 1 'mid)\
                 (display v) (newline)\
                 (display (vector-ref v 1)) (newline)\
                 (display (vector-length v))"),
            "#(7 mid 7)\nmid\n3"
        );
    }

    #[test]
    fn peek_char_caches_without_consuming() {
        let (status, out) = run_variant(
            "(display (peek-char)) (display (peek-char)) (display (read-char))\
             (display (read-char)) (display (eof-object? (read-char)))",
            LibraryVariant::Plain,
            b"hi",
        );
        assert_eq!(status, 0);
        assert_eq!(out, "hhhi#t");
    }

    #[test]
    fn closing_a_port_twice_is_harmless() {
        assert_eq!(
            run("(define p (current-input-port))\
                 (close-input-port p)\
                 (close-input-port p)\
                 (display (eof-object? (read-char p)))"),
            "#t"
        );
    }

    #[test]
    fn missing_file_is_false() {
        assert_eq!(run("(display (open-input-file \"/no/such/file\"))"), "#f");
    }

    #[test]
    fn display_and_write_golden() {
        let cases: &[(&str, &str, &str)] = &[
            ("(cons 1 2)", "(1 . 2)", "(1 . 2)"),
            ("'(1 (2) . 3)", "(1 (2) . 3)", "(1 (2) . 3)"),
            ("\"a\\\"b\"", "a\"b", "\"a\\\"b\""),
            ("#\\space", " ", "#\\space"),
            ("#\\newline", "\n", "#\\newline"),
            ("#\\z", "z", "#\\z"),
            ("(- 7)", "-7", "-7"),
            ("'#(1 a \"s\")", "#(1 a s)", "#(1 a \"s\")"),
            ("car", "#<proc>", "#<proc>"),
        ];
        for (expr, disp, written) in cases {
            assert_eq!(&run(&format!("(display {expr})")), disp, "display {expr}");
            assert_eq!(&run(&format!("(write {expr})")), written, "write {expr}");
        }
    }

    #[test]
    fn type_checked_variant_reports_and_exits() {
        let (status, out) =
            run_variant("(car 5)", LibraryVariant::TypeChecked, b"");
        assert_eq!(status, 70);
        assert_eq!(out, "car: not a pair\n");

        let (status, out) =
            run_variant("(vector-ref (make-vector 2) 5)", LibraryVariant::TypeChecked, b"");
        assert_eq!(status, 70);
        assert_eq!(out, "vector-ref: index out of range\n");

        // well typed programs behave the same under both variants
        let src = "(display (vector-ref (make-vector 3 'x) 2)) (display (car '(1 2)))";
        let plain = run_variant(src, LibraryVariant::Plain, b"");
        let checked = run_variant(src, LibraryVariant::TypeChecked, b"");
        assert_eq!(plain, checked);
        assert_eq!(plain.1, "x1");
    }
}
