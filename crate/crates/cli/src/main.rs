use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anticonc::bounds::ConstantsConfig;
use anticonc::RngSeed;
use anticonc_cli::commands::{
    bounds_csv, cmd_bounds, cmd_gapfit, cmd_lcd, cmd_q, Common, Format, QMethod,
};
use anticonc_cli::error::{CliError, EXIT_VERIFICATION};
use anticonc_cli::instance::{load_corpus, load_instances, sort_and_check_ids, InstanceSpec};
use anticonc_cli::verify::run_verify;
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "anticonc",
    version,
    about = "Concentration functions of weighted sums and their bounds"
)]
struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON table of absolute constants.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on enumerated outcomes of an exact computation.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Concentration function of one instance.
    Q {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = QMethod::Exact)]
        method: QMethod,
    },
    /// Least common denominator bracket of one instance.
    Lcd { instance: PathBuf },
    /// Bound report for an instance, an array of instances or a directory.
    Bounds {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Heuristic GAP fit of the weights with its coverage.
    Gapfit { instance: PathBuf },
    /// Runs the verification suite over a corpus directory.
    Verify { dir: PathBuf },
}

fn single(path: &Path) -> Result<InstanceSpec, CliError> {
    let mut all = load_instances(path)?;
    if all.len() != 1 {
        return Err(CliError::input(format!(
            "{}: expected one instance, found {}",
            path.display(),
            all.len()
        )));
    }
    Ok(all.remove(0))
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::input(e.to_string()))
}

fn configure_threads() {
    if let Some(n) = std::env::var("ANTICONC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // a second initialization only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(String, bool), CliError> {
    let constants = match &cli.constants {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let c: ConstantsConfig = serde_path_to_error::deserialize(de).map_err(|e| {
                CliError::input(format!(
                    "{}: field `{}`: {}",
                    p.display(),
                    e.path(),
                    e.inner()
                ))
            })?;
            c.validate()
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            c
        }
        None => ConstantsConfig::default(),
    };
    let common = Common {
        seed: RngSeed(cli.seed),
        constants,
        budget: cli.budget,
    };
    match &cli.command {
        Command::Q { instance, method } => {
            Ok((json(&cmd_q(&single(instance)?, *method, &common)?)?, true))
        }
        Command::Lcd { instance } => Ok((json(&cmd_lcd(&single(instance)?)?)?, true)),
        Command::Gapfit { instance } => {
            Ok((json(&cmd_gapfit(&single(instance)?, &common)?)?, true))
        }
        Command::Bounds { input, format } => {
            let instances = if input.is_dir() {
                load_corpus(input)?
            } else {
                let mut v = load_instances(input)?;
                sort_and_check_ids(&mut v)?;
                v
            };
            let out = cmd_bounds(&instances, &common)?;
            let text = match format {
                Format::Json => json(&out)?,
                Format::Csv => bounds_csv(&out)?,
            };
            Ok((text, true))
        }
        Command::Verify { dir } => {
            let report = run_verify(&load_corpus(dir)?, &common)?;
            if let Some(c) = &report.first_counterexample {
                eprintln!(
                    "counterexample: instance `{}`, check `{}`: {}",
                    c.instance, c.check, c.detail
                );
            }
            Ok((json(&report)?, report.passed))
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok((text, ok)) => {
            let written = match &out {
                Some(p) => fs::write(p, &text).map_err(|e| format!("{}: {e}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("input error: {e}");
                return ExitCode::from(2);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFICATION as u8)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
