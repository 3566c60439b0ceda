use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use cylfront::experiments::{parse_config, run_scenario, RunManifest, Scenario, DEFAULTS_HELP};
use cylfront::{Error, Result};

#[derive(Parser)]
#[command(name = "cylfront", version, about = "Bistable fronts in cylinders: waves, gaps and convergence experiments", after_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Selected speed and profile.
    Wave(RunArgs),
    /// Tracked moving-frame run with decay fits.
    Converge(RunArgs),
    /// Zero mode and spectral gap of the linearization.
    Gap(RunArgs),
    /// Speed of the front invading the plateau from above.
    SecondarySpeed(RunArgs),
    /// Order preservation on random ordered pairs.
    Compare(RunArgs),
    /// Sampled checks of the reaction hypotheses.
    CheckHypotheses(RunArgs),
    /// Run several configs concurrently, each into `<out>/<config stem>`.
    Sweep {
        /// Config files; each must name its scenario.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn load(path: &Path) -> Result<cylfront::experiments::ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    parse_config(&text).map_err(|e| e.context(path.display().to_string()))
}

fn run_one(path: &Path, verb: Option<Scenario>, out: &Path) -> Result<RunManifest> {
    let config = load(path)?;
    let scenario = config.resolve_scenario(verb)?;
    run_scenario(&config, scenario, out)
}

fn report(label: &str, res: &Result<RunManifest>) -> bool {
    match res {
        Ok(m) => {
            for a in &m.assertions {
                println!("{label}: {} {} ({})", a.name, if a.pass { "PASS" } else { "FAIL" }, a.detail);
            }
            for n in &m.notes {
                println!("{label}: note: {n}");
            }
            m.all_passed()
        }
        Err(e) => {
            eprintln!("{label}: error: {e}");
            false
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let single = |args: &RunArgs, s: Scenario| {
        let res = run_one(&args.config, Some(s), &args.out);
        report(&s.to_string(), &res)
    };
    let ok = match &cli.command {
        Command::Wave(a) => single(a, Scenario::Wave),
        Command::Converge(a) => single(a, Scenario::Converge),
        Command::Gap(a) => single(a, Scenario::Gap),
        Command::SecondarySpeed(a) => single(a, Scenario::SecondarySpeed),
        Command::Compare(a) => single(a, Scenario::Comparison),
        Command::CheckHypotheses(a) => single(a, Scenario::Hypotheses),
        Command::Sweep { configs, out, jobs } => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads((*jobs).max(1)).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("sweep: {e}");
                    return ExitCode::from(2);
                }
            };
            let mut dirs: Vec<PathBuf> = Vec::new();
            for c in configs {
                let stem = c.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
                let mut dir = out.join(&stem);
                let mut n = 1;
                while dirs.contains(&dir) {
                    n += 1;
                    dir = out.join(format!("{stem}-{n}"));
                }
                dirs.push(dir);
            }
            let results: Vec<(String, Result<RunManifest>)> = pool.install(|| {
                configs
                    .par_iter()
                    .zip(dirs.par_iter())
                    .map(|(c, d)| (c.display().to_string(), run_one(c, None, d)))
                    .collect()
            });
            // report every run before deciding
            let oks: Vec<bool> = results.iter().map(|(label, r)| report(label, r)).collect();
            oks.into_iter().all(|b| b)
        }
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
