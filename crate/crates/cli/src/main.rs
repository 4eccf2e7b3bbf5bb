use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gridflex_cli::{run, Command, RunOptions};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Opf,
    Envelope,
    Coordinate,
    Verify,
}

/// Combined MV/LV scheduling and P-Q flexibility envelopes.
#[derive(Parser)]
#[command(name = "gridflex", version)]
struct Args {
    /// Scenario config (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    command: Cmd,
    /// Directions per envelope sweep; overrides the config.
    #[arg(long)]
    n_dirs: Option<usize>,
    /// `tso_leader` or `dso_leader`; overrides the config.
    #[arg(long)]
    scheme: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also plot envelopes as SVG.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let command = match a.command {
        Cmd::Opf => Command::Opf,
        Cmd::Envelope => Command::Envelope,
        Cmd::Coordinate => Command::Coordinate,
        Cmd::Verify => Command::Verify,
    };
    let opts = RunOptions { config: a.config, command, n_dirs: a.n_dirs, scheme: a.scheme, out: a.out, svg: a.svg };
    match run(&opts) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.summary());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
