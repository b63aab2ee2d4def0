//! The `agentmesh` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (the error code is
//! printed to stderr), 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use agentmesh::flowlog::{self, table, TokenJaccard};
use agentmesh::network::Route;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::client::{Client, ClientError};
use crate::config::GatewayConfig;
use crate::server::{parse_registration, Gateway};

#[derive(Debug, Parser)]
#[command(name = "agentmesh", version, about = "Agent network gateway and tools")]
pub struct Cli {
    /// Base URL of a running gateway.
    #[arg(
        long,
        global = true,
        env = "AGENTMESH_URL",
        default_value = "http://127.0.0.1:8080"
    )]
    pub server: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsFormat {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway service.
    Serve {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Overrides listen_addr from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Register a service from a registration or vertex descriptor file.
    Register {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
    },
    Deregister {
        service_id: String,
    },
    Heartbeat {
        service_id: String,
    },
    /// Query the registry.
    Discover {
        #[arg(long)]
        name: Option<String>,
        /// Comma-separated keywords.
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Submit a task; prints its id.
    Submit {
        #[arg(long)]
        vertex: String,
        /// JSON object payload.
        #[arg(long, default_value = "{}")]
        input: String,
        #[arg(long)]
        deadline: Option<f64>,
    },
    Status {
        task_id: String,
    },
    Graph {
        task_id: String,
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
    },
    /// Task, subtask and protocol tables from a flow log.
    Stats {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value_t = StatsFormat::Table)]
        format: StatsFormat,
    },
    /// Per-vertex contribution from a flow log.
    Contribution {
        #[arg(long)]
        log: PathBuf,
    },
    /// Propose HARD routes from a flow log; `--apply` adds them to the gateway.
    Mine {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        min_support: f64,
        #[arg(long, default_value_t = 1.0)]
        min_lift: f64,
        #[arg(long)]
        apply: bool,
    },
    /// Check a descriptor file offline.
    Validate {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
    },
}

/// A failed command: the code printed to stderr and the exit status.
#[derive(Debug)]
struct Failure {
    exit: i32,
    code: String,
    message: String,
}

impl Failure {
    fn domain(code: impl Into<String>, message: impl ToString) -> Self {
        Self {
            exit: 1,
            code: code.into(),
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Self {
            exit: 2,
            code: "UsageError".into(),
            message: message.to_string(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let message = match &e {
            ClientError::Api { message, .. } => message.clone(),
            ClientError::Transport(t) => t.to_string(),
        };
        Self::domain(e.code(), message)
    }
}

type CmdResult = Result<String, Failure>;

/// Parses `argv` (program name first) and runs the command.
pub async fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(cli).await {
        Ok(text) => {
            if !text.is_empty() {
                let _ = writeln!(out, "{}", text.trim_end());
            }
            0
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}: {}", f.code, f.message);
            f.exit
        }
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::domain("IoError", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::domain("InvalidDescriptor", e))
}

fn scan(path: &Path) -> Result<flowlog::LogScan, Failure> {
    flowlog::scan_file(path).map_err(|e| Failure::domain("IoError", e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

async fn execute(cli: Cli) -> CmdResult {
    let client = Client::new(&cli.server);
    match cli.command {
        Command::Serve { config, listen } => {
            let mut cfg = GatewayConfig::load(config.as_deref())
                .map_err(|e| Failure::domain("ConfigError", e))?;
            if let Some(l) = listen {
                cfg.listen_addr = l;
            }
            let gw = Gateway::bind(&cfg).await.map_err(|e| {
                let code = if matches!(e, crate::GatewayError::Bind { .. }) {
                    "BindError"
                } else {
                    "ConfigError"
                };
                Failure::domain(code, e)
            })?;
            tracing::info!(addr = %gw.local_addr(), "gateway listening");
            gw.serve_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::domain("IoError", e))?;
            Ok(String::new())
        }
        Command::Register { file } => {
            let body = read_json(&file)?;
            Ok(client.register(&body).await?)
        }
        Command::Deregister { service_id } => {
            client.deregister(&service_id).await?;
            Ok(String::new())
        }
        Command::Heartbeat { service_id } => {
            let v = client.heartbeat(&service_id).await?;
            Ok(v["liveness"].as_str().unwrap_or_default().to_string())
        }
        Command::Discover {
            name,
            keywords,
            top_k,
        } => {
            let v = client.discover(name.as_deref(), &keywords, top_k).await?;
            Ok(pretty(&v))
        }
        Command::Submit {
            vertex,
            input,
            deadline,
        } => {
            let payload: Value = serde_json::from_str(&input)
                .map_err(|e| Failure::usage(format!("--input is not JSON: {e}")))?;
            if !payload.is_object() {
                return Err(Failure::usage("--input must be a JSON object"));
            }
            Ok(client.submit(&vertex, &payload, deadline).await?)
        }
        Command::Status { task_id } => Ok(pretty(&client.status(&task_id).await?)),
        Command::Graph { task_id, format } => match format {
            GraphFormat::Json => Ok(pretty(&client.graph_json(&task_id).await?)),
            GraphFormat::Dot => Ok(client.graph_dot(&task_id).await?),
        },
        Command::Stats { log, format } => {
            let report = scan(&log)?.stats();
            Ok(match format {
                StatsFormat::Table => table::render_report(&report),
                StatsFormat::Json => pretty(&report),
            })
        }
        Command::Contribution { log } => {
            let scan = scan(&log)?;
            let c = flowlog::contribution(&scan.records, &TokenJaccard);
            let rows: Vec<Vec<String>> = c
                .iter()
                .map(|(v, x)| vec![v.to_string(), format!("{x:.4}")])
                .collect();
            Ok(table::render_table(
                "Contribution of Vertexes",
                &["Vertex", "Contribution"],
                &rows,
            ))
        }
        Command::Mine {
            log,
            min_support,
            min_lift,
            apply,
        } => {
            let scan = scan(&log)?;
            let existing = if apply {
                client.routes().await?
            } else {
                Vec::new()
            };
            let mined = flowlog::mine_hard_routes(&scan.records, min_support, min_lift, &existing)
                .map_err(|e| Failure::usage(e))?;
            let mut lines: Vec<String> = mined.iter().map(route_line).collect();
            if apply {
                for r in &mined {
                    client.add_route(r).await?;
                }
                lines.push(format!("applied {} route(s)", mined.len()));
            }
            Ok(lines.join("\n"))
        }
        Command::Validate { file } => {
            let reg = parse_registration(read_json(&file)?)
                .map_err(|e| Failure::domain("InvalidDescriptor", e))?;
            let problems = reg.vertex.self_check();
            if problems.is_empty() {
                Ok(format!("ok {}", reg.id()))
            } else {
                Err(Failure::domain("InvalidDescriptor", problems.join("; ")))
            }
        }
    }
}

fn route_line(r: &Route) -> String {
    serde_json::to_string(r).expect("route serializes")
}
