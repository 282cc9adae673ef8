use clap::Parser;
use orfem::cli::{error_category, exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => print!("{report}"),
        Err(e) => {
            eprintln!("error ({}): {e}", error_category(&e));
            std::process::exit(exit_code(&e));
        }
    }
}
