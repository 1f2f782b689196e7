use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nlab::config::{ConfigError, Family};
use nlab::ExperimentConfig;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUN_ERROR: u8 = 3;

/// Runs one nlab experiment and writes its tables and figures.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on a
/// usage or config error, 3 when the computation itself fails.
#[derive(Debug, Parser)]
#[command(name = "nlab", version)]
struct Cli {
    /// theorem2, theorem1, proof-chain, lemma, proposition or transport-selftest.
    command: String,
    /// JSON experiment config; defaults of the command are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed of the random fields or instances.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "NLAB_JOBS")]
    jobs: Option<usize>,
    /// Field families, comma separated (sine, random, bump).
    #[arg(long, value_delimiter = ',')]
    family: Option<Vec<String>>,
    /// Sine frequencies, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<f64>>,
    /// Orthogonality indices of random fields, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Transport exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Lattice nodes per side.
    #[arg(long)]
    resolution: Option<usize>,
    /// Random fields per index.
    #[arg(long)]
    count: Option<usize>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn family(name: &str) -> Result<Family, ConfigError> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| ConfigError(format!("--family: unknown family `{name}`")))
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.command() != cli.command {
                return Err(ConfigError(format!(
                    "command `{}` does not match config command `{}`",
                    cli.command,
                    cfg.command()
                )));
            }
            cfg
        }
        None => ExperimentConfig::default_for(&cli.command)?,
    };
    let command = cfg.command();
    let unsupported = |flag: &str| ConfigError(format!("{flag} does not apply to `{command}`"));
    if let Some(out) = &cli.out {
        cfg.set_out(out.clone());
    }
    if let Some(seed) = cli.seed {
        *cfg.seed_mut().ok_or_else(|| unsupported("--seed"))? = seed;
    }
    if let Some(p) = &cli.p {
        *cfg.p_mut().ok_or_else(|| unsupported("--p"))? = p.clone();
    }
    let field_flags = cli.family.is_some()
        || cli.m.is_some()
        || cli.n.is_some()
        || cli.resolution.is_some()
        || cli.count.is_some();
    if field_flags {
        let fs = cfg
            .fields_mut()
            .ok_or_else(|| unsupported("field options"))?;
        if let Some(names) = &cli.family {
            fs.families = names.iter().map(|s| family(s)).collect::<Result<_, _>>()?;
        }
        if let Some(m) = &cli.m {
            fs.m = m.clone();
        }
        if let Some(n) = &cli.n {
            fs.n = n.clone();
        }
        if let Some(r) = cli.resolution {
            fs.resolution = r;
        }
        if let Some(c) = cli.count {
            fs.count = c;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.3e}")
    }
}

fn set_threads(jobs: Option<usize>) -> Result<(), ConfigError> {
    let Some(k) = jobs else { return Ok(()) };
    if k == 0 {
        return Err(ConfigError("--jobs must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| ConfigError(format!("cannot start {k} threads: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match set_threads(cli.jobs).and_then(|_| build_config(&cli)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("nlab: usage error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if cli.print_config {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    match nlab::run(&cfg) {
        Ok(outcome) => {
            for c in &outcome.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {}: {} (expected {})",
                    c.name,
                    short(c.value),
                    c.expected
                );
            }
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("nlab: {e:#}");
            ExitCode::from(EXIT_RUN_ERROR)
        }
    }
}
