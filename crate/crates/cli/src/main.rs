use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ucnn_cli::{cmd_compile, cmd_gen, cmd_report, cmd_run, cmd_sim, CliError, ExperimentSpec};

#[derive(Parser)]
#[command(name = "ucnn", version, about = "Weight-repetition accelerator experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in experiment: smoke, resnet50-16b-50, design-space, model-size.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the experiment's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the experiment's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic weights, codebooks and inputs.
    Gen(Common),
    /// Compile indirection tables and write sizes.csv.
    Compile(Common),
    /// Execute through the tables.
    Run {
        #[command(flatten)]
        common: Common,
        /// Compare every layer with the dense convolution.
        #[arg(long)]
        check_oracle: bool,
    },
    /// Simulate cycles and energy; writes sim.csv and sim.json.
    Sim(Common),
    /// Normalized tables from sim.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// sim.csv to read (default: <out>/sim.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<(ExperimentSpec, PathBuf), CliError> {
    let mut spec = match (&c.spec, &c.preset) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Some(name)) => ExperimentSpec::preset(name)?,
        (None, None) => return Err(ucnn_core::Error::Config("one of --spec or --preset is required".into()).into()),
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    let out = c.out.clone().or_else(|| spec.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    Ok((spec, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.cmd {
        Cmd::Gen(c) | Cmd::Compile(c) | Cmd::Sim(c) => c,
        Cmd::Run { common, .. } | Cmd::Report { common, .. } => common,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(|e| ucnn_core::Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.cmd {
        Cmd::Gen(c) => {
            let (spec, out) = load(c)?;
            let n = cmd_gen(&spec, &out)?;
            println!("wrote {n} layer data sets under {}", out.join("gen").display());
            Ok(())
        }
        Cmd::Compile(c) => {
            let (spec, out) = load(c)?;
            println!("wrote {}", cmd_compile(&spec, &out)?.display());
            Ok(())
        }
        Cmd::Run { common, check_oracle } => {
            let (spec, out) = load(common)?;
            println!("wrote {}", cmd_run(&spec, &out, *check_oracle)?.display());
            Ok(())
        }
        Cmd::Sim(c) => {
            let (spec, out) = load(c)?;
            let runs = cmd_sim(&spec, &out)?;
            println!("simulated {} configs; wrote {}", runs.len(), out.join("sim.csv").display());
            Ok(())
        }
        Cmd::Report { common, input } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out)?;
            let input = input.clone().unwrap_or_else(|| out.join("sim.csv"));
            let f = cmd_report(&input, &out)?;
            println!("wrote {}, {}, {}", f.energy.display(), f.cycles.display(), f.model_size.display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
