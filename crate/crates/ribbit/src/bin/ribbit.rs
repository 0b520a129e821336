use clap::{Args, Parser, Subcommand};
use ribbit::compiler::{CompileOptions, CompiledProgram};
use ribbit::decode::decode_program;
use ribbit::encode::{
    emit_container, encode_instrs, encode_symbol_table, linearize, search_optimal_table,
    ContainerOptions,
};
use ribbit::library::{compile_sources, library_source, LibraryVariant};
use ribbit::repl::{input_incomplete, Session};
use ribbit::store::{RibStore, DEFAULT_CAPACITY};
use ribbit::table::EncodingTable;
use ribbit::templater::{parse_template, specialize, SpecializeEnv};
use ribbit::vm::{run_program, Io};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_COMPILE: u8 = 2;
const EXIT_DECODE: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "ribbit", about = "Compact Scheme compiler, encoder and virtual machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a program to a container, optionally specializing a host template
    Compile(CompileArgs),
    /// Decode a container and execute it
    Run(RunArgs),
    /// Interactive session
    Repl(ReplArgs),
    /// Size report across encoding settings
    Stats(StatsArgs),
}

#[derive(Args, Clone)]
struct BuildArgs {
    /// original or optimal
    #[arg(long, default_value = "optimal")]
    encoding: String,
    /// Code base: 92 (printable), 186 (with LZSS), 256 (binary)
    #[arg(long, default_value_t = 92)]
    rb: u32,
    #[arg(long)]
    lzss: bool,
    #[arg(long, default_value_t = true, overrides_with = "no_arity_check")]
    arity_check: bool,
    #[arg(long = "no-arity-check")]
    no_arity_check: bool,
    /// Skip argument counts at primitive call sites
    #[arg(long)]
    prim_no_arity: bool,
    /// plain, tc, or a path to a library source file
    #[arg(long, default_value = "plain")]
    library: String,
    /// Force a feature on (+NAME) or off (-NAME); repeatable
    #[arg(short = 'f', value_name = "(+|-)NAME", allow_hyphen_values = true)]
    feature: Vec<String>,
}

#[derive(Args)]
struct CompileArgs {
    source: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Annotated host source to specialize alongside the container
    #[arg(long)]
    host_template: Option<PathBuf>,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct RunArgs {
    container: PathBuf,
    /// Heap capacity in ribs
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    heap: usize,
}

#[derive(Args)]
struct ReplArgs {
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    heap: usize,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct StatsArgs {
    source: PathBuf,
    #[command(flatten)]
    build: BuildArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match cli.command {
        Command::Compile(args) => cmd_compile(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Repl(args) => cmd_repl(&args),
        Command::Stats(args) => cmd_stats(&args),
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

impl BuildArgs {
    fn validate(&self) -> Result<(), String> {
        if self.encoding != "original" && self.encoding != "optimal" {
            return Err(format!("unknown encoding `{}`", self.encoding));
        }
        if self.rb < 13 || self.rb > 256 {
            return Err(format!("rb {} out of range 13..=256", self.rb));
        }
        if self.encoding == "original" && self.rb < 92 {
            return Err("the original encoding table needs rb >= 92".into());
        }
        if self.lzss && self.rb > 250 {
            return Err("lzss needs rb <= 250 to leave back-pointer code space".into());
        }
        if self.lzss && self.encoding != "optimal" {
            return Err("lzss requires the optimal encoding pipeline".into());
        }
        Ok(())
    }

    fn compile_options(&self) -> Result<CompileOptions, String> {
        let mut enable = Vec::new();
        let mut disable = Vec::new();
        for f in &self.feature {
            match f.split_at_checked(1) {
                Some(("+", name)) if !name.is_empty() => enable.push(name.to_string()),
                Some(("-", name)) if !name.is_empty() => disable.push(name.to_string()),
                _ => return Err(format!("feature override `{f}` must start with + or -")),
            }
        }
        Ok(CompileOptions {
            arity_check: self.arity_check && !self.no_arity_check,
            prim_no_arity: self.prim_no_arity,
            enable,
            disable,
            ..Default::default()
        })
    }

    fn library_text(&self) -> Result<String, String> {
        match self.library.as_str() {
            "plain" => Ok(library_source(LibraryVariant::Plain)),
            "tc" | "type-checked" => Ok(library_source(LibraryVariant::TypeChecked)),
            path => std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read library {path}: {e}")),
        }
    }

    fn compile_file(&self, source: &Path) -> Result<CompiledProgram, (u8, String)> {
        let text = std::fs::read_to_string(source)
            .map_err(|e| (EXIT_USAGE, format!("cannot read {}: {e}", source.display())))?;
        let lib = self.library_text().map_err(|e| (EXIT_USAGE, e))?;
        let options = self.compile_options().map_err(|e| (EXIT_USAGE, e))?;
        compile_sources(&[&lib, &text], &options)
            .map_err(|e| (EXIT_COMPILE, format!("{}: {e}", source.display())))
    }
}

struct Encoded {
    codes: Vec<u32>,
    container: Vec<u8>,
    table: EncodingTable,
}

fn encode_with(
    p: &CompiledProgram,
    rb: u32,
    optimal: bool,
    lzss: bool,
) -> Result<Encoded, String> {
    let instrs =
        linearize(&p.graph, p.root, &p.layout.index_of, optimal).map_err(|e| e.to_string())?;
    let table = if optimal {
        search_optimal_table(&instrs, rb).map_err(|e| e.to_string())?
    } else {
        EncodingTable::original()
    };
    let sym_codes = encode_symbol_table(&p.layout, rb).map_err(|e| e.to_string())?;
    let instr_codes = encode_instrs(&instrs, &table).map_err(|e| e.to_string())?;
    let container = emit_container(
        &sym_codes,
        &instr_codes,
        &table,
        &ContainerOptions {
            rb,
            lzss,
            optimal,
            arity_check: p.arity_check,
            prim_no_arity: p.prim_no_arity,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut codes = sym_codes;
    codes.extend(instr_codes);
    Ok(Encoded { codes, container, table })
}

fn cmd_compile(args: &CompileArgs) -> ExitCode {
    if let Err(e) = args.build.validate() {
        return usage(&e);
    }
    let program = match args.build.compile_file(&args.source) {
        Ok(p) => p,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let optimal = args.build.encoding == "optimal";
    let encoded = match encode_with(&program, args.build.rb, optimal, args.build.lzss) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_COMPILE);
        }
    };
    if !optimal {
        warn_on_tail_duplication(&program);
    }

    let out = args
        .output
        .clone()
        .unwrap_or_else(|| args.source.with_extension("rbn"));
    if let Err(e) = std::fs::write(&out, &encoded.container) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_USAGE);
    }
    println!(
        "{}: {} codes, {} container bytes{}",
        out.display(),
        encoded.codes.len(),
        encoded.container.len(),
        if args.build.lzss { " (lzss)" } else { "" }
    );

    if let Some(template) = &args.host_template {
        match specialize_template(template, &program, &encoded) {
            Ok(text) => {
                let host_out = host_output_path(&out, template);
                if let Err(e) = std::fs::write(&host_out, text) {
                    eprintln!("error: cannot write {}: {e}", host_out.display());
                    return ExitCode::from(EXIT_USAGE);
                }
                println!("{}: specialized host source", host_out.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_COMPILE);
            }
        }
    }
    ExitCode::SUCCESS
}

/// The original encoding duplicates join continuations; if that blows the
/// stream up relative to the shared form, say so.
fn warn_on_tail_duplication(p: &CompiledProgram) {
    let dup = linearize(&p.graph, p.root, &p.layout.index_of, false).map(|v| v.len());
    let shared = linearize(&p.graph, p.root, &p.layout.index_of, true).map(|v| v.len());
    if let (Ok(dup), Ok(shared)) = (dup, shared) {
        if dup > 2 * shared {
            eprintln!(
                "warning: tail duplication grows the original encoding to {dup} \
                 instructions ({shared} with sharing); consider --encoding optimal"
            );
        }
    }
}

fn host_output_path(container_out: &Path, template: &Path) -> PathBuf {
    match template.extension() {
        Some(ext) => container_out.with_extension(ext),
        None => container_out.with_extension("host"),
    }
}

fn specialize_template(
    template: &Path,
    program: &CompiledProgram,
    encoded: &Encoded,
) -> Result<String, String> {
    let text = std::fs::read_to_string(template)
        .map_err(|e| format!("cannot read {}: {e}", template.display()))?;
    let nodes = parse_template(&text).map_err(|e| e.to_string())?;
    let mut features = program.features.clone();
    let size = ribbit::datum::Datum::Int(encoded.codes.len() as i64);
    features.set_value("ribn-size", size.clone());
    features.set_value("compression/lzss/2b/ribn-size", size);
    features.set_value(
        "encoding/optimal/start",
        ribbit::datum::Datum::list(encoded.table.entries.iter().map(|e| {
            ribbit::datum::Datum::Int(e.start as i64)
        })),
    );
    let env = SpecializeEnv {
        features: &features,
        live_primitives: program.live_primitives.iter().map(|(n, _)| n.clone()).collect(),
        codes: encoded.codes.clone(),
    };
    specialize(&nodes, &env).map_err(|e| e.to_string())
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let bytes = match std::fs::read(&args.container) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.container.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut store = RibStore::new(args.heap);
    let program = match decode_program(&mut store, &bytes) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("decode error: {e}");
            return ExitCode::from(EXIT_DECODE);
        }
    };
    let mut io = Io::std();
    match run_program(&mut store, &program, &mut io, None) {
        Ok(status) => ExitCode::from(status.clamp(0, 255) as u8),
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_repl(args: &ReplArgs) -> ExitCode {
    if let Err(e) = args.build.validate() {
        return usage(&e);
    }
    let variant = match args.build.library.as_str() {
        "plain" => LibraryVariant::Plain,
        "tc" | "type-checked" => LibraryVariant::TypeChecked,
        other => return usage(&format!("repl library must be plain or tc, got `{other}`")),
    };
    let options = match args.build.compile_options() {
        Ok(o) => o,
        Err(e) => return usage(&e),
    };
    let mut io = Io::std();
    let mut session = match Session::new(variant, &options, args.heap, &mut io) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_COMPILE);
        }
    };
    let stdin = std::io::stdin();
    let mut pending = String::new();
    loop {
        print!("{}", if pending.is_empty() { "> " } else { "  " });
        let _ = std::io::stdout().flush();
        let mut line = String::new();
        match stdin.lock().read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        pending.push_str(&line);
        if input_incomplete(&pending) {
            continue;
        }
        let input = std::mem::take(&mut pending);
        if let Err(e) = session.eval(&input, &mut io, true) {
            eprintln!("error: {e}");
        }
    }
    ExitCode::SUCCESS
}

fn cmd_stats(args: &StatsArgs) -> ExitCode {
    let settings: [(&str, u32, bool, bool); 4] = [
        ("original-92", 92, false, false),
        ("optimal-92", 92, true, false),
        ("optimal-256", 256, true, false),
        ("optimal-186+lzss", 186, true, true),
    ];
    println!("{:<18} {:<14} {:>8} {:>8}", "setting", "convention", "codes", "bytes");
    for prim_no_arity in [false, true] {
        let mut build = args.build.clone();
        build.prim_no_arity = prim_no_arity;
        let program = match build.compile_file(&args.source) {
            Ok(p) => p,
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                return ExitCode::from(code);
            }
        };
        let convention = if prim_no_arity { "prim-no-arity" } else { "arity-check" };
        for (name, rb, optimal, lzss) in settings {
            match encode_with(&program, rb, optimal, lzss) {
                Ok(e) => println!(
                    "{:<18} {:<14} {:>8} {:>8}",
                    name,
                    convention,
                    e.codes.len(),
                    e.container.len()
                ),
                Err(e) => {
                    eprintln!("error: {name}: {e}");
                    return ExitCode::from(EXIT_COMPILE);
                }
            }
        }
    }
    ExitCode::SUCCESS
}
