use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use sentidist::config::ExperimentConfig;
use sentidist::runner::{self, Mode};
use sentidist::synth::{generate, write_sentiment140, SynthConfig};
use sentidist::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMode {
    Single,
    Distributed,
    Both,
    CostOnly,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Single => Mode::Single,
            CliMode::Distributed => Mode::Distributed,
            CliMode::Both => Mode::Both,
            CliMode::CostOnly => Mode::CostOnly,
        }
    }
}

/// Train a sentiment classifier on one node and on a simulated cluster, and compare.
#[derive(Debug, Parser)]
#[command(name = "sentidist", version)]
struct Cli {
    /// Experiment config file.
    #[arg(long, env = "SENTIDIST_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    mode: CliMode,
    /// Worker count, overriding cluster.workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Use only the first N examples.
    #[arg(long)]
    subsample: Option<usize>,
    /// Shuffle seed, overriding training.shuffle_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input file, overriding data.input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Run distributed training for each worker count and write sweep.csv.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    /// Validate the config and print the plan without reading data or writing files.
    #[arg(long)]
    dry_run: bool,
    /// Write the bundled synthetic dataset to PATH and exit.
    #[arg(long, value_name = "PATH")]
    generate_sample: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cli.workers {
        cfg.cluster.worker_count = k;
    }
    if let Some(n) = cli.subsample {
        cfg.subsample = Some(n);
    }
    if let Some(seed) = cli.seed {
        cfg.hyperparams.shuffle_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(input) = &cli.input {
        cfg.input = Some(input.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Some(path) = &cli.generate_sample {
        let docs = generate(&SynthConfig::default());
        let file = fs::File::create(path).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
        write_sentiment140(&docs, file).map_err(|e| Error::Output(e.to_string()))?;
        println!("wrote {} examples to {}", docs.len(), path.display());
        return Ok(());
    }

    let cfg = load_config(cli)?;
    let mode = Mode::from(cli.mode);
    if cli.dry_run {
        println!("mode: {:?}", cli.mode);
        println!("input: {}", cfg.input.as_ref().map_or("(none)".into(), |p| p.display().to_string()));
        println!("workers: {}", cfg.cluster.worker_count);
        println!("output: {}", cfg.output.dir.display());
        if let Some(ks) = &cli.sweep {
            println!("sweep: {ks:?}");
        }
        println!("config fingerprint: {}", sentidist::report::fingerprint(&cfg)?);
        return Ok(());
    }

    if let Some(ks) = &cli.sweep {
        let rows = runner::sweep(&cfg, ks)?;
        let csv = runner::sweep_csv(&rows);
        print!("{csv}");
        fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Output(e.to_string()))?;
        let path = cfg.output.dir.join("sweep.csv");
        fs::write(&path, csv).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
        return Ok(());
    }

    let output = runner::run(&cfg, mode)?;
    print!("{}", output.summary);
    for path in output.write_to(&cfg.output.dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
