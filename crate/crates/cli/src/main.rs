use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dig_core::binding::{enumerate_root, unroll, BindingState};
use dig_core::catalog::{Catalog, SqliteBackend};
use dig_core::choice::DomainDescriptor;
use dig_core::dbt::{translate_project, ProjectGraph};
use dig_core::interface::{check_valid, synthesize, synthesize_default, InterfaceSpec, RecursionStrategy, SynthOptions};
use dig_core::tooling::{generate_workload, plan_tutorial, write_jsonl, UserModel};
use dig_core::syntax::format_predicate;
use dig_core::{format_grammar, parse_grammar, validate_grammar, ChoiceModel, GrammarAst};

#[derive(Parser)]
#[command(name = "dig", version, about = "Data interface grammars: parse, synthesize interfaces, generate workloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where query domains and `rel`/`attr` types are looked up.
#[derive(clap::Args, Clone, Default)]
struct Db {
    /// SQLite database file (`:memory:` for an empty one).
    #[arg(long, env = "DIG_DB")]
    db: Option<String>,
    /// SQL scripts run against the database before use.
    #[arg(long = "script")]
    scripts: Vec<PathBuf>,
}

impl Db {
    fn open(&self) -> Result<Option<Catalog>> {
        let backend = match self.db.as_deref() {
            None if self.scripts.is_empty() => return Ok(None),
            None | Some(":memory:") => SqliteBackend::open_in_memory()?,
            Some(path) => SqliteBackend::open(path).with_context(|| format!("opening {path}"))?,
        };
        for s in &self.scripts {
            backend.run_script(&read(s)?).with_context(|| format!("running {}", s.display()))?;
        }
        Ok(Some(Catalog::new(Arc::new(backend))))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a grammar and print it in canonical form.
    Parse {
        file: PathBuf,
        /// Print the syntax tree as JSON instead.
        #[arg(long)]
        json: bool,
    },
    /// Check a grammar for undefined rules, bad constraints and type errors.
    Validate { file: PathBuf },
    /// List the choice variables of a grammar.
    Vars {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print every query a grammar can express.
    Enumerate {
        file: PathBuf,
        /// Refuse starting rules with more queries than this.
        #[arg(long, default_value_t = 100_000)]
        cap: usize,
        /// Only this starting rule.
        #[arg(long)]
        root: Option<String>,
        /// Unroll recursive rules to this depth first.
        #[arg(long)]
        unroll: Option<usize>,
        /// Print only the number of queries per starting rule.
        #[arg(long)]
        count: bool,
        #[command(flatten)]
        db: Db,
    },
    /// Synthesize an interface specification.
    Synth {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// The console interface: one text input per starting rule.
        #[arg(long)]
        default_text: bool,
        /// Unroll recursive rules to this depth instead of add-instance buttons.
        #[arg(long)]
        unroll: Option<usize>,
        #[command(flatten)]
        db: Db,
    },
    /// Check an interface specification against its grammar.
    Check { file: PathBuf, spec: PathBuf },
    /// Translate a dbt project into a grammar.
    TranslateDbt {
        dir: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Plan the interactions that take an interface from one state to another.
    Tutorial {
        file: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// JSON object of assignments, keyed by choice variable.
        #[arg(long)]
        start: PathBuf,
        #[arg(long)]
        end: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        db: Db,
    },
    /// Simulate a user and write the resulting trace as JSON lines.
    Workload {
        file: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// User model (TOML or JSON); uniform random when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(short = 'n', long, default_value_t = 100)]
        events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        db: Db,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long, env = "DIG_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Rows per result page.
        #[arg(long, default_value_t = dig_server::DEFAULT_ROW_CAP)]
        row_cap: usize,
        /// Grammars to load at startup.
        #[arg(long = "grammar")]
        grammars: Vec<PathBuf>,
        #[command(flatten)]
        db: Db,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_grammar(path: &Path) -> Result<GrammarAst> {
    parse_grammar(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_spec(path: &Path) -> Result<InterfaceSpec> {
    InterfaceSpec::from_json(&read(path)?).with_context(|| format!("reading spec {}", path.display()))
}

/// The model a spec was synthesized against.
fn spec_model(ast: &GrammarAst, spec: &InterfaceSpec) -> Result<ChoiceModel> {
    match spec.layout.as_ref().and_then(|l| l.unrolled_depth) {
        Some(d) => Ok(ChoiceModel::build(&unroll(ast, d)?)?),
        None => Ok(ChoiceModel::build(ast)?),
    }
}

fn load_state(model: &ChoiceModel, path: &Path, catalog: Option<&Catalog>) -> Result<BindingState> {
    let json: serde_json::Value = serde_json::from_str(&read(path)?).with_context(|| format!("reading {}", path.display()))?;
    let map = json.as_object().context("a state file holds a JSON object of assignments")?;
    Ok(BindingState::from_assignments(model, map, catalog)?)
}

fn describe(d: &DomainDescriptor) -> String {
    match d {
        DomainDescriptor::EnumeratedInts { lo, hi } => format!("alternative {lo}..{hi}"),
        DomainDescriptor::PredicateDom { var, base, predicate: Some(p) } => {
            format!("{{ {var}:{base} | {} }}", format_predicate(p))
        }
        DomainDescriptor::PredicateDom { var, base, predicate: None } => format!("{{ {var}:{base} }}"),
        DomainDescriptor::QueryDom { query } => format!("{{ {query} }}"),
        DomainDescriptor::Naturals { cap: Some(c) } => format!("instances 0..{c}"),
        DomainDescriptor::Naturals { cap: None } => "instances 0..".to_string(),
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Parse { file, json } => {
            let ast = load_grammar(&file)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&ast)?)?;
            } else {
                write!(out, "{}", format_grammar(&ast))?;
            }
        }
        Command::Validate { file } => {
            let report = validate_grammar(&load_grammar(&file)?);
            if !report.is_empty() {
                for f in &report.findings {
                    writeln!(out, "{f}")?;
                }
                bail!("{} problem(s) found", report.findings.len());
            }
            writeln!(out, "ok")?;
        }
        Command::Vars { file, json } => {
            let model = ChoiceModel::build(&load_grammar(&file)?)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&model.variables)?)?;
            } else {
                for v in &model.variables {
                    let kind = serde_json::to_value(v.kind)?;
                    writeln!(out, "{}\t{}\t{}", model.display(&v.qname), kind.as_str().unwrap_or_default(), describe(&v.domain))?;
                }
            }
        }
        Command::Enumerate { file, cap, root, unroll: depth, count, db } => {
            let mut ast = load_grammar(&file)?;
            if let Some(d) = depth {
                ast = unroll(&ast, d)?;
            }
            let model = ChoiceModel::build(&ast)?;
            let catalog = db.open()?;
            let roots: Vec<String> = match root {
                Some(r) => vec![r],
                None => model.grammar.roots().map(str::to_string).collect(),
            };
            for r in roots {
                let queries = enumerate_root(&model, &r, catalog.as_ref(), cap)?;
                if count {
                    writeln!(out, "{r}\t{}", queries.len())?;
                } else {
                    for q in queries {
                        writeln!(out, "{q}")?;
                    }
                }
            }
        }
        Command::Synth { file, output, default_text, unroll: depth, db } => {
            let ast = load_grammar(&file)?;
            let spec = if default_text {
                synthesize_default(&ast)?
            } else {
                let recursion = depth.map_or(RecursionStrategy::InstanceButton, RecursionStrategy::Unroll);
                synthesize(&ast, db.open()?.as_ref(), &SynthOptions { recursion })?
            };
            emit(output.as_deref(), &(spec.to_json() + "\n"))?;
        }
        Command::Check { file, spec } => {
            let report = check_valid(&load_spec(&spec)?, &load_grammar(&file)?);
            if !report.is_empty() {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
                bail!("the interface is not valid for this grammar");
            }
            writeln!(out, "ok")?;
        }
        Command::TranslateDbt { dir, output } => {
            let project = ProjectGraph::load(&dir)?;
            let undeclared = project.undeclared_vars()?;
            if !undeclared.is_empty() {
                bail!("variables without declared domains: {}", undeclared.join(", "));
            }
            emit(output.as_deref(), &format_grammar(&translate_project(&project)?))?;
        }
        Command::Tutorial { file, spec, start, end, json, db } => {
            let ast = load_grammar(&file)?;
            let spec = load_spec(&spec)?;
            let model = spec_model(&ast, &spec)?;
            let catalog = db.open()?;
            let start = load_state(&model, &start, catalog.as_ref())?;
            let end = load_state(&model, &end, catalog.as_ref())?;
            let steps = plan_tutorial(&model, &spec, &start, &end, catalog.as_ref())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&steps)?)?;
            } else {
                for (k, s) in steps.iter().enumerate() {
                    writeln!(out, "{}. {}", k + 1, s.instruction)?;
                }
            }
        }
        Command::Workload { file, spec, model: user, events, seed, output, db } => {
            let ast = load_grammar(&file)?;
            let spec = load_spec(&spec)?;
            let model = spec_model(&ast, &spec)?;
            let user = match user {
                None => UserModel::default(),
                Some(p) if p.extension().is_some_and(|e| e == "json") => UserModel::from_json(&read(&p)?)?,
                Some(p) => UserModel::from_toml(&read(&p)?)?,
            };
            let trace = generate_workload(&model, &spec, &user, events, seed, db.open()?.as_ref())?;
            let mut buf = Vec::new();
            write_jsonl(&trace, &mut buf)?;
            emit(output.as_deref(), std::str::from_utf8(&buf)?)?;
        }
        Command::Serve { port, host, row_cap, grammars, db } => {
            let state = dig_server::AppState::with_row_cap(db.open()?, row_cap);
            for g in &grammars {
                let loaded = state.load_grammar(read(g)?).map_err(|e| anyhow::anyhow!("{}: {e}", g.display()))?;
                writeln!(out, "{} loaded as {}", g.display(), loaded.id)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                tracing::info!(addr = %listener.local_addr()?, "listening");
                dig_server::serve(listener, state).await
            })?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
