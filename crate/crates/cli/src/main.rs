use clap::Parser;

use jumpdiff_cli::cli::{init_threads, run, Args};

fn main() {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
    std::process::exit(run(args));
}
