use std::process::exit;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    exit(sharebound::cli::run(&args));
}
