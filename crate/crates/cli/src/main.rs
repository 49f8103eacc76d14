use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use peridyn_oc::config::{DEFAULT_OUTPUT, OUTPUT_ENV};
use peridyn_oc::{exit, parse_config, run, CliError};

/// Optimal control of bond-based peridynamics: solves and limit studies.
#[derive(Parser, Debug)]
#[command(name = "peridyn-oc", version)]
struct Args {
    /// TOML run description.
    config: PathBuf,
    /// `section.key=value`, applied on top of the file.
    #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(short, long)]
    threads: Option<usize>,
}

fn fallback_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match parse_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => return fail(&fallback_dir(), e),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&cfg.output, CliError::Threads(e.to_string()));
        }
    }
    match run(&cfg) {
        Ok(o) => {
            print!("{}", o.summary.render());
            println!("output: {}", o.dir.display());
            ExitCode::from(if o.passed { exit::OK } else { exit::CHECK_FAILED } as u8)
        }
        Err(e) => fail(&cfg.output, e),
    }
}

fn fail(dir: &std::path::Path, e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(p) = peridyn_oc::run::write_error(dir, &e) {
        eprintln!("details written to {}", p.display());
    }
    ExitCode::from(exit::ERROR as u8)
}
