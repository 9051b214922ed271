use clap::Parser;

use schwarz_net_cli::args::Cli;
use schwarz_net_cli::{error_json, exit_code, init_thread_pool, run_and_report};

fn main() {
    let cli = Cli::parse();
    init_thread_pool();
    let code = match cli.into_config() {
        Ok(cfg) => run_and_report(&cfg),
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
