use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dwlab::config::{load_config, Command, ExperimentConfig};
use dwlab::experiment::{read_verdict, run_experiment, run_sweep, RunArtifact, VerdictReport};
use dwlab::Error;

/// Damped-wave / diffusion laboratory.
#[derive(Parser)]
#[command(name = "dwlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and verify the auxiliary weight only.
    Weight(RunArgs),
    /// Damped wave run with energies and inequality checks.
    Wave(RunArgs),
    /// Heat-only run and its decay rate.
    Heat(RunArgs),
    /// Wave and heat runs with the difference norm.
    Compare(RunArgs),
    /// Isometry and stationary-profile checks of the change of variables.
    TransformCheck(RunArgs),
    /// Duhamel reconstruction of the wave solution from heat flows.
    Duhamel(RunArgs),
    /// Runs one command over a parameter grid, concurrently.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    config: PathBuf,
    /// Overrides DWLAB_OUTPUT_DIR and the config's output_dir.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Runs the experiment a second time and compares the CSV bytes.
    #[arg(long)]
    seed_check: bool,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Command run at each grid point.
    #[arg(long, default_value = "compare")]
    command: String,
    /// Axis as `key=v1,v2,...` with a dotted key such as `grid.n`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUES")]
    axes: Vec<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

const ENV_OUTPUT_DIR: &str = "DWLAB_OUTPUT_DIR";

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(ENV_OUTPUT_DIR).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("dwlab-out"))
}

fn print_verdict(v: &VerdictReport) {
    for r in &v.rates {
        println!(
            "{} {:<14} slope {:+.4} ± {:.4} target -{:.4} tol {:.3} margin {:+.4}",
            if r.pass { "PASS" } else { "FAIL" },
            r.quantity,
            r.fitted_slope,
            r.stderr,
            r.target,
            r.tol,
            r.margin
        );
    }
    for c in &v.checks {
        println!(
            "{} {:<14} value {:.4e} limit {:.4e}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit,
            c.detail
        );
    }
}

fn same_csvs(a: &RunArtifact, b: &RunArtifact) -> Result<Vec<String>, Error> {
    let mut differing = Vec::new();
    for (x, y) in a.csvs().into_iter().zip(b.csvs()) {
        if std::fs::read(x)? != std::fs::read(y)? {
            differing.push(x.display().to_string());
        }
    }
    if a.csvs().len() != b.csvs().len() {
        differing.push("number of CSV files".into());
    }
    Ok(differing)
}

fn run(args: RunArgs, command: Command) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config)?;
    cfg.validate_for(command)?;
    let out = output_dir(args.output_dir, &cfg);
    let art = run_experiment(&cfg, command, &out)?;
    let verdict = read_verdict(&art)?;
    print_verdict(&verdict);
    let mut ok = art.all_pass;
    if args.seed_check {
        let again_dir = out.join("seed-check");
        let again = run_experiment(&cfg, command, &again_dir)?;
        let differing = same_csvs(&art, &again)?;
        std::fs::remove_dir_all(&again_dir)?;
        if differing.is_empty() {
            println!("PASS seed-check     {} CSV files byte-identical", art.csvs().len());
        } else {
            println!("FAIL seed-check     differing: {}", differing.join(", "));
            ok = false;
        }
    }
    println!("artifacts in {}", out.display());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn parse_axis(spec: &str) -> Result<(String, Vec<f64>), Error> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("sweep axis `{spec}` is not KEY=V1,V2,...")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{v}` in `{spec}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((key.trim().to_string(), values))
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let command: Command = args.command.parse()?;
    let cfg = load_config(&args.config)?;
    let base = serde_json::to_value(&cfg)?;
    let axes = args.axes.iter().map(|s| parse_axis(s)).collect::<Result<Vec<_>, _>>()?;
    let out = output_dir(args.output_dir, &cfg);
    let entries = run_sweep(&base, &axes, command, &out)?;
    for e in &entries {
        let label: Vec<String> = e.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{} {:<30} {}",
            if e.all_pass { "PASS" } else { "FAIL" },
            if label.is_empty() { "base".to_string() } else { label.join(" ") },
            e.error.as_deref().unwrap_or(&e.status)
        );
    }
    println!("summary in {}", Path::new(&out).join("sweep.json").display());
    Ok(if entries.iter().all(|e| e.all_pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Weight(a) => run(a, Command::Weight),
        Cmd::Wave(a) => run(a, Command::Wave),
        Cmd::Heat(a) => run(a, Command::Heat),
        Cmd::Compare(a) => run(a, Command::Compare),
        Cmd::TransformCheck(a) => run(a, Command::TransformCheck),
        Cmd::Duhamel(a) => run(a, Command::Duhamel),
        Cmd::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dwlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
