use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reslink::config::ServerConfig;
use reslink::scenario::{Scenario, ScenarioError};
use reslink::{conformance, seed, server};

#[derive(Parser)]
#[command(name = "reslink", version, about = "Reporting server that pairs capped query previews with resource links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the REST and MCP server
    Serve {
        /// JSON config file
        config: PathBuf,
    },
    /// Write the deterministic sample dataset as CSV
    Seed {
        /// Output path
        #[arg(default_value = "orders.csv")]
        output: PathBuf,
    },
    /// Run a scripted YAML scenario against a server
    Scenario {
        /// Scenario file
        file: PathBuf,
        /// Server root, e.g. http://127.0.0.1:8080
        #[arg(long)]
        base_url: String,
    },
    /// Run the black-box conformance suite against a server
    Conformance {
        /// Server root, e.g. http://127.0.0.1:8080
        #[arg(long)]
        base_url: String,
        /// JSON-RPC endpoint path on the server
        #[arg(long, default_value = reslink::config::DEFAULT_MCP_PATH)]
        mcp_path: String,
        /// Bearer token; pass twice with tokens of different tenants to
        /// enable the full isolation check
        #[arg(long = "token", required = true)]
        tokens: Vec<String>,
    },
}

// 0 pass, 1 assertion/conformance failure, 2 usage/config, 3 connectivity
fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Serve { config } => cmd_serve(config),
        Command::Seed { output } => cmd_seed(output),
        Command::Scenario { file, base_url } => cmd_scenario(file, &base_url),
        Command::Conformance { base_url, mcp_path, tokens } => {
            cmd_conformance(&base_url, &mcp_path, &tokens)
        }
    };
    ExitCode::from(code)
}

fn cmd_serve(path: PathBuf) -> u8 {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let mut config = match ServerConfig::load(&path) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Err(e) = config.apply_env() {
        eprintln!("{e}");
        return 2;
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(runtime) => runtime,
        Err(e) => {
            eprintln!("failed to start runtime: {e}");
            return 2;
        }
    };
    match runtime.block_on(server::run(config)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            2
        }
    }
}

fn cmd_seed(output: PathBuf) -> u8 {
    match seed::write_orders_csv(&output) {
        Ok(()) => {
            println!("wrote {} ({} rows)", output.display(), seed::ROWS);
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", output.display());
            2
        }
    }
}

fn cmd_scenario(file: PathBuf, base_url: &str) -> u8 {
    let scenario = match Scenario::load(&file) {
        Ok(scenario) => scenario,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    match scenario.run(base_url) {
        Ok(outcome) => {
            for report in &outcome.reports {
                let verdict = if report.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {}: {}", report.id, report.detail);
            }
            if outcome.passed() {
                println!("scenario '{}' passed", scenario.name);
                0
            } else {
                println!("scenario '{}' failed", scenario.name);
                1
            }
        }
        Err(e @ ScenarioError::Connect(_)) => {
            eprintln!("{e}");
            3
        }
        Err(e) => {
            eprintln!("{e}");
            2
        }
    }
}

fn cmd_conformance(base_url: &str, mcp_path: &str, tokens: &[String]) -> u8 {
    match conformance::run_conformance(base_url, mcp_path, tokens) {
        Ok(reports) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).expect("reports serialize")
            );
            if reports.iter().all(|r| r.pass) {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("{e}");
            3
        }
    }
}
