use std::process::ExitCode;

use clap::Parser;

use btf_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match btf_cli::execute(cli, None) {
        Ok(m) => {
            eprintln!("{}: wrote {} files ({:.1} s)", m.command, m.outputs.len(), m.elapsed_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
