use clap::Parser;

use synctool::cli::{run, Args};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            std::process::exit(e.exit_code());
        }
    }
}
