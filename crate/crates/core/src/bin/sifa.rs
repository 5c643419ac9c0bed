use clap::Parser;
use sifa::cli::{run, Args, RunConfig};

fn main() {
    let out = run(&RunConfig::from(Args::parse()));
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    std::process::exit(out.code);
}
