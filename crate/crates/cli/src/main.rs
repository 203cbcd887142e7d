use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = ivxv_sim::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    ExitCode::from(ivxv_sim::execute(cli, &mut stdout))
}
