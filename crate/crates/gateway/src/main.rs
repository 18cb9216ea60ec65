use std::io;

use autograms_gateway::cli::{run, Cli, Io};
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let (mut out, mut err) = (io::stdout(), io::stderr());
    let code = run(cli, &mut Io { input: &mut input, out: &mut out, err: &mut err });
    std::process::exit(code);
}
