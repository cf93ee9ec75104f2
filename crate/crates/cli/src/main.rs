use std::process::ExitCode;

use clap::Parser;
use sifigan_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SIFI_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} utterance(s) failed:", outcome.failures.len());
                let width = outcome.failures.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
                for (name, err) in &outcome.failures {
                    eprintln!("  {name:width$}  {err}");
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
