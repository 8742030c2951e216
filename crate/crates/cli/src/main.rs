use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = ptgan_cli::Cli::parse();
    match ptgan_cli::run(cli) {
        Ok(()) => ExitCode::from(ptgan_cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ptgan_cli::exit_code(&e) as u8)
        }
    }
}
