//! `opkit` binary entry point.

use clap::Parser;
use opkit_cli::args::Cli;
use std::io::Write;

fn main() {
    opkit_cli::configure_threads();
    let cli = Cli::parse();
    let code = match opkit_cli::execute(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.text.as_bytes());
            let _ = stdout.flush();
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code);
}
