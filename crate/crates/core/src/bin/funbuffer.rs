use clap::Parser;
use funbuffer::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
