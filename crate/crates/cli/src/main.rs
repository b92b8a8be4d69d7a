use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cpgkit::bench::bench_client_server;
use cpgkit::cpg::{
    build_system_cpg, detect_deadlocks, emit_dot, graph_json, program_matrix, stats, BuildOptions, Cpg,
    CpgError, DotOptions, DEFAULT_MAX_NODES,
};
use cpgkit::model::{parse_system, SystemModel};
use cpgkit::oracle::{compare_with_cpg, explore, random_system, OracleError};
use cpgkit::reduce::{output_cpg_reduced, ReduceOptions, TraceAction, TraceStep};
use cpgkit::verify::certify_deadlock_free;

const EXIT_DEADLOCK: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

/// Concurrent Program Graphs for semaphore-synchronized programs.
///
/// Exit status: 0 success, 1 deadlock found (or oracle mismatch), 2 input
/// error, 3 node cap exceeded.
#[derive(Parser)]
#[command(author, version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// System description; standard input when omitted.
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,

    /// Write results here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    format: Option<Format>,

    /// Eliminate redundant interleavings of edges without shared accesses.
    #[arg(long, global = true)]
    reduce_nsv: bool,

    #[arg(long, global = true, default_value_t = DEFAULT_MAX_NODES)]
    max_nodes: usize,

    /// Worker threads for successor evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Seed for the randomized oracle suite.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Build the CPG and print it (DOT by default).
    Build,
    /// Print node/edge counts, potential order and build time as JSON.
    Stats,
    /// Report reachable deadlocks with witness paths.
    Deadlock,
    /// Try to certify deadlock freedom from p-v-symmetry.
    Certify,
    /// Build the CPG with NSV reduction.
    Reduce {
        /// Include the iteration trace in JSON output.
        #[arg(long)]
        trace: bool,
    },
    /// Compare the CPG against brute-force interleaving, for the input or
    /// for a batch of random systems when no input is given.
    OracleCheck {
        /// Number of random systems.
        #[arg(long, default_value_t = 200)]
        count: u64,
    },
    /// Print the CPG as DOT with composite indices and deadlocks marked.
    Dot,
    /// Client-server scaling benchmark.
    Bench {
        /// Client counts; defaults to 1 2 4 8 16 32.
        #[arg(long, value_delimiter = ',')]
        clients: Vec<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Dot,
    Json,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: error.into(),
    }
}

impl From<CpgError> for Failure {
    fn from(e: CpgError) -> Self {
        let code = match e {
            CpgError::NodeCap { .. } => EXIT_RESOURCE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::StateCap { .. } => EXIT_RESOURCE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        input_error(e)
    }
}

impl Cli {
    fn build_options(&self) -> BuildOptions {
        BuildOptions {
            max_nodes: self.max_nodes,
            workers: self.workers.max(1),
        }
    }

    fn system(&self) -> Result<SystemModel, Failure> {
        let text = match &self.input {
            Some(path) => fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(input_error)?,
            None => {
                let mut s = String::new();
                io::stdin().read_to_string(&mut s)?;
                s
            }
        };
        let name = self
            .input
            .as_ref()
            .map_or("<stdin>".to_string(), |p| p.display().to_string());
        parse_system(&text)
            .map_err(|e| input_error(anyhow!("{name}: {e}")))
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.output {
            Some(path) => fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(input_error),
            None => Ok(io::stdout().write_all(text.as_bytes())?),
        }
    }

    fn emit_json(&self, value: &Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.emit(&text)
    }

    fn cpg(&self, system: &SystemModel) -> Result<Cpg, Failure> {
        if self.reduce_nsv {
            Ok(self.reduce(system)?.0)
        } else {
            Ok(build_system_cpg(system, &self.build_options())?)
        }
    }

    fn reduce(&self, system: &SystemModel) -> Result<(Cpg, Vec<TraceStep>), Failure> {
        let p = program_matrix(system).map_err(CpgError::from)?;
        let options = ReduceOptions {
            build: self.build_options(),
            ..ReduceOptions::default()
        };
        let r = output_cpg_reduced(&p, system, &options)?;
        Ok((r.cpg, r.trace))
    }

    fn emit_graph(&self, cpg: &Cpg, extra: Option<(&str, Value)>) -> Result<(), Failure> {
        match self.format.unwrap_or(Format::Dot) {
            Format::Dot => self.emit(&emit_dot(cpg, &DotOptions::default())),
            Format::Json => {
                let mut value = graph_json(cpg);
                if let Some((key, v)) = extra {
                    value[key] = v;
                }
                self.emit_json(&value)
            }
        }
    }
}

fn trace_json(trace: &[TraceStep]) -> Value {
    let pairs = |es: &[(cpgkit::kronecker::CompositeIndex, cpgkit::kronecker::CompositeIndex)]| {
        es.iter()
            .map(|(a, b)| json!([a.to_string(), b.to_string()]))
            .collect::<Vec<_>>()
    };
    trace
        .iter()
        .map(|t| {
            let action = match &t.action {
                TraceAction::Processed(n) => json!({ "processed": n.to_string() }),
                TraceAction::Chose {
                    label,
                    emitted,
                    eliminated,
                } => json!({
                    "label": label.name(),
                    "emitted": pairs(emitted),
                    "eliminated": pairs(eliminated),
                }),
            };
            let deferred: serde_json::Map<String, Value> = t
                .tbdnsv
                .iter()
                .map(|(l, es)| (l.name().to_string(), Value::from(pairs(es))))
                .collect();
            json!({
                "iteration": t.iteration,
                "action": action,
                "tbd": t.tbd.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "tbdnsv": deferred,
                "done": t.done.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "reconsider": t.reconsider,
            })
        })
        .collect()
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Build => {
            let cpg = cli.cpg(&cli.system()?)?;
            cli.emit_graph(&cpg, None)?;
        }
        Command::Stats => {
            let cpg = cli.cpg(&cli.system()?)?;
            cli.emit_json(&json!(stats(&cpg)))?;
        }
        Command::Deadlock => {
            let cpg = cli.cpg(&cli.system()?)?;
            let report = detect_deadlocks(&cpg);
            if cli.format == Some(Format::Json) {
                cli.emit_json(&json!(report))?;
            } else {
                let mut text = String::new();
                if report.is_deadlock_free() {
                    text.push_str("no deadlocks\n");
                }
                for d in &report.deadlocked {
                    text.push_str(&format!(
                        "deadlock at node {} {}: {}\n",
                        d.node,
                        d.composite,
                        d.witness.join(" ")
                    ));
                }
                for w in &report.warnings {
                    text.push_str(&format!("warning: node {w} terminates holding a semaphore\n"));
                }
                cli.emit(&text)?;
            }
            if !report.is_deadlock_free() {
                return Ok(EXIT_DEADLOCK);
            }
        }
        Command::Certify => {
            cli.emit_json(&json!(certify_deadlock_free(&cli.system()?)))?;
        }
        Command::Reduce { trace } => {
            let (cpg, steps) = cli.reduce(&cli.system()?)?;
            cli.emit_graph(&cpg, trace.then(|| ("trace", trace_json(&steps))))?;
        }
        Command::OracleCheck { count } => {
            let options = cli.build_options();
            let check = |system: &SystemModel| -> Result<Value, Failure> {
                let cpg = build_system_cpg(system, &options)?;
                let g = explore(system, options.max_nodes)?;
                Ok(json!(compare_with_cpg(&g, &cpg)))
            };
            let (value, equal) = if cli.input.is_some() {
                let report = check(&cli.system()?)?;
                let equal = report["equal"] == true;
                (report, equal)
            } else {
                let mut failures = Vec::new();
                for k in 0..*count {
                    let seed = cli.seed.wrapping_add(k);
                    let report = check(&random_system(seed))?;
                    if report["equal"] != true {
                        failures.push(json!({ "seed": seed, "report": report }));
                    }
                }
                let equal = failures.is_empty();
                (
                    json!({ "equal": equal, "systems": count, "seed": cli.seed, "failures": failures }),
                    equal,
                )
            };
            cli.emit_json(&value)?;
            if !equal {
                return Ok(EXIT_DEADLOCK);
            }
        }
        Command::Dot => {
            let cpg = cli.cpg(&cli.system()?)?;
            let report = detect_deadlocks(&cpg);
            cli.emit(&emit_dot(
                &cpg,
                &DotOptions {
                    show_composite: true,
                    report: Some(&report),
                },
            ))?;
        }
        Command::Bench { clients } => {
            let ks = if clients.is_empty() {
                vec![1, 2, 4, 8, 16, 32]
            } else {
                clients.clone()
            };
            if ks.contains(&0) {
                return Err(input_error(anyhow!("client count must be at least 1")));
            }
            let rows = ks
                .iter()
                .map(|&k| bench_client_server(k, &cli.build_options()).map(|r| json!(r)))
                .collect::<Result<Vec<_>, _>>()?;
            cli.emit_json(&Value::from(rows))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
