use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use membank_core::dispatch::{apply_overrides, dispatch, CommandEnvelope, ResponseEnvelope, Verb};
use membank_core::model::BankId;
use membank_core::providers::{CommandProvider, Turn};
use membank_core::{Engine, EngineConfig, ErrorKind, FixedClock, ProviderSuite};
use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;
pub const EXIT_STORAGE: i32 = 5;
pub const EXIT_NOT_FOUND: i32 = 6;
pub const EXIT_CONFLICT: i32 = 7;

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Provider => EXIT_PROVIDER,
        ErrorKind::Storage => EXIT_STORAGE,
        ErrorKind::NotFound => EXIT_NOT_FOUND,
        ErrorKind::Conflict => EXIT_CONFLICT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Mock,
    External,
}

#[derive(Debug, Parser)]
#[command(
    name = "membank",
    version,
    about = "Agent memory banks: retain, recall, reflect"
)]
pub struct Cli {
    /// Directory holding one snapshot file per bank.
    #[arg(long, global = true, env = "MEMBANK_DATA_DIR", default_value = "membank-data")]
    pub data_dir: PathBuf,

    /// TOML file with engine settings.
    #[arg(long, global = true, env = "MEMBANK_CONFIG")]
    pub config: Option<PathBuf>,

    /// Config override as key=value; the value is parsed as JSON when possible.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long, global = true, value_enum, default_value = "mock")]
    pub provider: ProviderKind,

    /// Program (with arguments) speaking the line-JSON provider protocol.
    #[arg(long, global = true, env = "MEMBANK_PROVIDER_COMMAND")]
    pub provider_command: Option<String>,

    /// Fix the engine clock (RFC 3339), for reproducible runs.
    #[arg(long, global = true)]
    pub now: Option<DateTime<Utc>>,

    /// Human-readable output instead of one JSON record per line.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ProfileArgs {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub skepticism: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub literalism: Option<u8>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub empathy: Option<u8>,
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub background: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    Create {
        #[arg(long)]
        bank: String,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    Configure {
        #[arg(long)]
        bank: String,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    Export {
        #[arg(long)]
        bank: String,
        /// Write the snapshot here instead of embedding it in the output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Import {
        #[arg(long)]
        file: PathBuf,
        /// Overwrite an existing bank with the same id.
        #[arg(long)]
        replace: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Bank(BankCommand),
    /// Ingest a transcript of {speaker, text, timestamp} records, one per line.
    Retain {
        #[arg(long)]
        bank: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        biographical: bool,
    },
    Recall {
        #[arg(long)]
        bank: String,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = membank_core::dispatch::DEFAULT_RECALL_BUDGET)]
        budget: usize,
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        no_graph: bool,
        #[arg(long)]
        no_keyword: bool,
        #[arg(long)]
        no_temporal: bool,
        #[arg(long)]
        no_rerank: bool,
    },
    Reflect {
        #[arg(long)]
        bank: String,
        #[arg(long)]
        query: String,
        #[arg(long)]
        show_system_message: bool,
    },
    Inspect {
        #[arg(long)]
        bank: String,
        #[arg(long)]
        opinions: bool,
    },
    /// Execute raw command envelopes, one JSON object per line ("-" for stdin).
    Dispatch {
        #[arg(long, default_value = "-")]
        file: PathBuf,
    },
    /// Serve the HTTP interface.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

pub fn parse_override(raw: &str) -> anyhow::Result<(String, Value)> {
    let Some((k, v)) = raw.split_once('=') else {
        bail!("override {raw:?} is not KEY=VALUE");
    };
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Loads the config file and applies `--set` overrides.
pub fn load_config(cli: &Cli) -> anyhow::Result<EngineConfig> {
    let base = match &cli.config {
        Some(p) => EngineConfig::from_file(p)?,
        None => EngineConfig::default(),
    };
    let mut overrides = Map::new();
    for raw in &cli.overrides {
        let (k, v) = parse_override(raw)?;
        overrides.insert(k, v);
    }
    Ok(apply_overrides(&base, &overrides)?)
}

pub fn build_engine(cli: &Cli, config: EngineConfig) -> anyhow::Result<Engine> {
    let providers = match cli.provider {
        ProviderKind::Mock => ProviderSuite::mock(&config),
        ProviderKind::External => {
            let line = cli
                .provider_command
                .as_deref()
                .context("--provider external needs --provider-command")?;
            let cmd = CommandProvider::from_command_line(line, config.embedding_dim)
                .context("empty provider command")?;
            ProviderSuite::external(cmd, &config)
        }
    };
    let mut builder = Engine::builder(config)
        .providers(providers)
        .data_dir(&cli.data_dir);
    if let Some(t) = cli.now {
        builder = builder.clock(Arc::new(FixedClock::new(t)));
    }
    Ok(builder.build()?)
}

fn profile_payload(p: &ProfileArgs) -> Map<String, Value> {
    let mut m = Map::new();
    if let Some(v) = &p.name {
        m.insert("name".into(), json!(v));
    }
    for (k, v) in [
        ("skepticism", p.skepticism),
        ("literalism", p.literalism),
        ("empathy", p.empathy),
    ] {
        if let Some(v) = v {
            m.insert(k.into(), json!(v));
        }
    }
    if let Some(v) = p.bias {
        m.insert("bias_strength".into(), json!(v));
    }
    if let Some(v) = &p.background {
        m.insert("background".into(), json!(v));
    }
    m
}

/// Parses a transcript file. Errors carry the offending line number.
pub fn read_transcript(path: &Path) -> Result<Vec<Turn>, Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let mut turns = Vec::new();
    let mut violations = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Err(vec![format!("line {}: {e}", i + 1)]),
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Turn>(&line) {
            Ok(t) => turns.push(t),
            Err(e) => violations.push(format!("line {}: {e}", i + 1)),
        }
    }
    if turns.is_empty() && violations.is_empty() {
        violations.push("transcript has no turns".into());
    }
    if violations.is_empty() {
        Ok(turns)
    } else {
        Err(violations)
    }
}

fn validation_failure(
    verb: Verb,
    bank: Option<BankId>,
    config: &EngineConfig,
    violations: Vec<String>,
) -> ResponseEnvelope {
    ResponseEnvelope {
        ok: false,
        verb,
        bank_id: bank,
        result: Value::Null,
        error: Some(membank_core::dispatch::ErrorBody {
            kind: "validation".into(),
            message: violations.join("; "),
            violations,
        }),
        effective_config: config.clone(),
        error_kind: Some(ErrorKind::Validation),
    }
}

/// Envelopes for a single-verb command; `Err` holds an early failure.
fn envelope(cmd: &Command) -> Result<CommandEnvelope, (Verb, Option<BankId>, Vec<String>)> {
    let env = |verb, bank: &str, payload: Value| CommandEnvelope::new(verb, Some(BankId::new(bank)), payload);
    Ok(match cmd {
        Command::Bank(BankCommand::Create { bank, profile }) => {
            let mut m = profile_payload(profile);
            let mut bp = Map::new();
            for k in ["skepticism", "literalism", "empathy", "bias_strength"] {
                if let Some(v) = m.remove(k) {
                    bp.insert(k.into(), v);
                }
            }
            if !bp.is_empty() {
                let d = membank_core::model::BehavioralProfile::default();
                let mut full = serde_json::to_value(d).expect("profile serializes");
                full.as_object_mut().expect("object").extend(bp);
                m.insert("profile".into(), full);
            }
            env(Verb::CreateBank, bank, Value::Object(m))
        }
        Command::Bank(BankCommand::Configure { bank, profile }) => {
            env(Verb::Configure, bank, Value::Object(profile_payload(profile)))
        }
        Command::Bank(BankCommand::Export { bank, .. }) => env(Verb::Export, bank, Value::Null),
        Command::Bank(BankCommand::Import { file, replace }) => {
            let snapshot = std::fs::read_to_string(file)
                .map_err(|e| (Verb::Import, None, vec![format!("{}: {e}", file.display())]))?;
            CommandEnvelope::new(
                Verb::Import,
                None,
                json!({ "snapshot": snapshot, "replace": replace }),
            )
        }
        Command::Retain {
            bank,
            file,
            biographical,
        } => {
            let turns =
                read_transcript(file).map_err(|v| (Verb::Retain, Some(BankId::new(bank.as_str())), v))?;
            env(
                Verb::Retain,
                bank,
                json!({ "turns": turns, "biographical": biographical }),
            )
        }
        Command::Recall {
            bank,
            query,
            budget,
            explain,
            no_graph,
            no_keyword,
            no_temporal,
            no_rerank,
        } => env(
            Verb::Recall,
            bank,
            json!({
                "query": query,
                "budget": budget,
                "explain": explain,
                "graph": !no_graph,
                "keyword": !no_keyword,
                "temporal": !no_temporal,
                "rerank": !no_rerank,
            }),
        ),
        Command::Reflect { bank, query, .. } => env(Verb::Reflect, bank, json!({ "query": query })),
        Command::Inspect { bank, opinions } => env(Verb::Inspect, bank, json!({ "opinions": opinions })),
        Command::Dispatch { .. } | Command::Serve { .. } => unreachable!("not a single-verb command"),
    })
}

/// Drops fields the caller did not ask for and applies `--out`.
fn post_process(cmd: &Command, resp: &mut ResponseEnvelope) -> anyhow::Result<()> {
    if !resp.ok {
        return Ok(());
    }
    match cmd {
        Command::Reflect {
            show_system_message: false,
            ..
        } => {
            if let Some(o) = resp.result.as_object_mut() {
                o.remove("system_message_used");
            }
        }
        Command::Bank(BankCommand::Export { out: Some(path), .. }) => {
            let snapshot = resp.result["snapshot"].as_str().unwrap_or_default().to_string();
            std::fs::write(path, &snapshot).with_context(|| format!("writing {}", path.display()))?;
            resp.result = json!({ "path": path, "bytes": snapshot.len() });
        }
        _ => {}
    }
    Ok(())
}

pub fn write_response(out: &mut dyn Write, resp: &ResponseEnvelope, pretty: bool) -> std::io::Result<()> {
    if pretty {
        writeln!(out, "{}", crate::render::render(resp))
    } else {
        writeln!(
            out,
            "{}",
            serde_json::to_string(resp).expect("response serializes")
        )
    }
}

fn run_dispatch_file(engine: &Engine, file: &Path, pretty: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let reader: Box<dyn BufRead> = if file == Path::new("-") {
        Box::new(std::io::BufReader::new(std::io::stdin()))
    } else {
        Box::new(std::io::BufReader::new(
            std::fs::File::open(file).with_context(|| file.display().to_string())?,
        ))
    };
    let mut code = EXIT_OK;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<CommandEnvelope>(&line) {
            Ok(env) => dispatch(engine, &env),
            Err(e) => {
                let raw: Value = serde_json::from_str(&line).unwrap_or(Value::Null);
                let verb = serde_json::from_value(raw["verb"].clone()).unwrap_or(Verb::Inspect);
                validation_failure(verb, None, engine.config(), vec![format!("line {}: {e}", i + 1)])
            }
        };
        if let Some(k) = resp.error_kind {
            if code == EXIT_OK {
                code = exit_code(k);
            }
        }
        write_response(out, &resp, pretty)?;
    }
    Ok(code)
}

/// Runs one parsed invocation and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let violations = match e.downcast_ref::<membank_core::Error>() {
                Some(err) if !err.violations().is_empty() => err.violations(),
                _ => vec![e.to_string()],
            };
            let resp = validation_failure(Verb::Inspect, None, &EngineConfig::default(), violations);
            eprintln!("error: {}", resp.error.as_ref().expect("error set").message);
            return Ok(EXIT_VALIDATION);
        }
    };
    let engine = match build_engine(&cli, config) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<membank_core::Error>()
                .map(|err| exit_code(err.kind()))
                .unwrap_or(EXIT_USAGE);
            return Ok(code);
        }
    };
    match &cli.command {
        Command::Serve { host, port } => {
            let addr = format!("{host}:{port}");
            crate::http::serve(Arc::new(engine), &addr)?;
            Ok(EXIT_OK)
        }
        Command::Dispatch { file } => run_dispatch_file(&engine, file, cli.pretty, out),
        cmd => {
            let mut resp = match envelope(cmd) {
                Ok(env) => dispatch(&engine, &env),
                Err((verb, bank, violations)) => validation_failure(verb, bank, engine.config(), violations),
            };
            post_process(cmd, &mut resp)?;
            engine.flush_background();
            write_response(out, &resp, cli.pretty)?;
            Ok(resp.error_kind.map(exit_code).unwrap_or(EXIT_OK))
        }
    }
}
