use sinkhorn_bridge::cli::{self, THREADS_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot start {n} worker threads: {e}");
                    std::process::exit(cli::EXIT_CONFIG);
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{raw}`");
                std::process::exit(cli::EXIT_CONFIG);
            }
        }
    }
    std::process::exit(cli::main_with_args(std::env::args_os()));
}
