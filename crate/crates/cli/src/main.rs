mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::{command_registry, ConfigError, Context};
use coupling_bounds::BoundsError;

#[derive(Parser)]
#[command(name = "cbound", version, about = "Coupling and drift bounds for Markov chains")]
struct Args {
    /// `list` prints the commands: bound, bound-inhom, rate, verify-finite, couple, identity, ar, anneal, pi-shift, selftest
    command: String,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Clamp TV bounds at 1 and f-norm bounds at the trivial bound
    #[arg(long)]
    clamp: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<BoundsError>()) {
        Some(e) if e.is_input_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.command == "list" {
        let registry = command_registry();
        for name in registry.names() {
            if let Ok(cmd) = registry.build(name) {
                println!("{name:<14} {}", cmd.about());
            }
        }
        return ExitCode::SUCCESS;
    }
    let ctx = Context {
        config: args.config,
        seed: args.seed,
        out: args.out,
        replicas: args.replicas,
        horizon: args.horizon,
        clamp: args.clamp,
    };
    let result = command_registry()
        .build(&args.command)
        .map_err(|e| anyhow::Error::new(ConfigError(e.to_string())))
        .and_then(|cmd| cmd.run(&ctx));
    let (code, status) = match &result {
        Ok(o) if o.failures.is_empty() => (0, json!({ "command": args.command, "status": "ok", "failures": [], "files": o.files, "summary": o.summary })),
        Ok(o) => (1, json!({ "command": args.command, "status": "check_failed", "failures": o.failures, "files": o.files, "summary": o.summary })),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = exit_code(e);
            let status = if code == 2 { "config_error" } else { "runtime_error" };
            (code, json!({ "command": args.command, "status": status, "failures": [format!("{e:#}")], "files": [] }))
        }
    };
    println!("{status}");
    ExitCode::from(code)
}
