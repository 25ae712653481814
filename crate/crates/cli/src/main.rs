use clap::Parser;
use gridshield_cli::commands::{run, Cli};

/// Caps the worker pool; rayon's default is one thread per core.
const THREADS_ENV: &str = "GRIDSHIELD_THREADS";

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
