use clap::Parser;
use tenscorr_harness::cli::{configure_threads, exit_code, run, Cli};

fn main() {
    // clap reports bad flags itself and exits with status 2.
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli));
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    std::process::exit(exit_code(&result));
}
