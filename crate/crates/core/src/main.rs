use clap::Parser;
use duelfuel::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
