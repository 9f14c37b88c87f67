use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = anyclass_cli::Cli::parse();
    match anyclass_cli::run(cli) {
        Ok(done) => {
            for line in &done.summary {
                println!("{line}");
            }
            println!("{}: wrote {} files", done.manifest.command, done.manifest.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
