use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qgeo::experiment::{run_experiment, verify_manifest, ExperimentConfig, OutputFormat, Stages};
use qgeo::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "qgeo", version, about = "Wavepacket scattering, Bohmian trajectories and extended-space geodesics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the field and export ψ snapshots.
    Propagate(Common),
    /// Field plus first- and second-order Bohmian trajectories.
    Trajectories(Common),
    /// Field plus extended-space geodesics and their fronts.
    Geodesics(Common),
    /// Geodesics plus scalar curvature along them.
    Curvature(Common),
    /// Every stage.
    RunExperiment(Common),
    /// Check a config file and, if the output directory holds a manifest, its file hashes.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// key=value config file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Worker threads for the trajectory stages (QGEO_THREADS takes precedence).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> qgeo::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(f) = &self.format {
            cfg.format = f.parse::<OutputFormat>()?;
        }
        if let Some(every) = self.snapshot_every {
            cfg.snapshot_every = every;
        }
        for kv in &self.overrides {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn threads(&self) -> qgeo::Result<Option<usize>> {
        match std::env::var("QGEO_THREADS") {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("QGEO_THREADS: expected a positive integer, got '{v}'"))),
            Err(_) => match self.threads {
                Some(0) => Err(Error::Config("--threads must be positive".into())),
                t => Ok(t),
            },
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io(_) => 1,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("qgeo: {err}");
    ExitCode::from(exit_code(&err))
}

fn validate(args: &Common) -> ExitCode {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    println!("config ok");
    if !cfg.output_dir.join("manifest.json").exists() {
        return ExitCode::SUCCESS;
    }
    match verify_manifest(&cfg.output_dir) {
        Ok(bad) if bad.is_empty() => {
            println!("manifest ok: {}", cfg.output_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Ok(bad) => {
            for f in &bad {
                eprintln!("hash mismatch or missing: {f}");
            }
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(e) => fail(e),
    }
}

fn run(args: &Common, stages: Stages) -> ExitCode {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let threads = match args.threads() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(Error::Config(format!("thread pool: {e}")));
        }
    }
    match run_experiment(&cfg, stages, &cfg.output_dir) {
        Ok((_, manifest)) => {
            println!(
                "wrote {} files to {} in {:.1}s",
                manifest.files.len(),
                cfg.output_dir.display(),
                manifest.wall_time_s.unwrap_or(0.0)
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("manifest: {}", cfg.output_dir.join("manifest.json").display());
            fail(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Propagate(a) => run(a, Stages::FIELD),
        Command::Trajectories(a) => run(a, Stages::TRAJECTORIES),
        Command::Geodesics(a) => run(a, Stages::GEODESICS),
        Command::Curvature(a) => run(a, Stages::CURVATURE),
        Command::RunExperiment(a) => run(a, Stages::ALL),
        Command::Validate(a) => validate(a),
    }
}
