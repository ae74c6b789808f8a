use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pointwalk::experiment::{self, Command, ExperimentSpec};

/// Run one experiment and write its CSV and JSON artifacts.
#[derive(Debug, Parser)]
#[command(name = "pointwalk", version)]
struct Cli {
    /// simulate, lln, clt1d, clt-hd, recurrence2d, transience, isoperimetry,
    /// corrector, entropy or expsum. Taken from the config when omitted.
    command: Option<String>,

    /// Spec file, or any artifact written by an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for both the environment and the walk.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for replica parallelism.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Output directory (overrides POINTWALK_OUT and the spec).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut command = None;
    let result = (|| {
        command = cli.command.as_deref().map(str::parse::<Command>).transpose()?;
        let mut spec = match &cli.config {
            Some(path) => experiment::load_spec(path, command)?,
            None => ExperimentSpec::defaults(
                command.ok_or_else(|| pointwalk::Error::Config("give a command or --config".into()))?,
            ),
        };
        command = Some(spec.command);
        if let Some(seed) = cli.seed {
            spec.set_seed(seed);
        }
        if let Some(n) = cli.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| pointwalk::Error::Config(e.to_string()))?;
        }
        let dir = experiment::resolve_output_dir(cli.out.clone(), &spec);
        let outcome = experiment::run(&spec)?;
        let written = outcome.write_to(&dir)?;
        Ok::<_, pointwalk::Error>((outcome, written))
    })();
    match result {
        Ok((outcome, written)) => {
            for c in &outcome.checks {
                println!(
                    "{} {} value={} threshold={}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(err) => {
            eprintln!("{}", experiment::error_json(command, &err));
            ExitCode::from(experiment::exit_code(&err) as u8)
        }
    }
}
