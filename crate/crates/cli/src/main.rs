mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qpspectra::operators::{golden_mean, Rational, TrigPoly};
use serde_json::json;

use config::{EnergyGrid, FrequencySpec, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(qpspectra::Error),
    Numeric(String),
    Io(String),
    Tolerance(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) | CliError::Tolerance(m) => f.write_str(m),
        }
    }
}

impl From<qpspectra::Error> for CliError {
    fn from(e: qpspectra::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) if e.is_config() => "config",
            CliError::Core(_) | CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
            CliError::Tolerance(_) => "tolerance",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" | "io" => 2,
            _ => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qpspectra", version, about = "Spectra, cocycles and gaps of quasi-periodic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base JSON config; flags and --set override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Potential polynomial, or an object with "hopping" and "potential".
    #[arg(long, global = true)]
    potential: Option<PathBuf>,
    /// Hopping polynomial.
    #[arg(long, global = true)]
    hopping: Option<PathBuf>,
    /// Almost Mathieu coupling: potential 2λ cos 2πx.
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, value_name = "P/Q")]
    pq: Option<String>,
    /// Irrational frequency (defaults to the golden mean).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Sweep the first N convergents of alpha.
    #[arg(long, global = true, value_name = "N")]
    alpha_convergents: Option<usize>,
    #[arg(long = "E", global = true, value_name = "lo:hi:n", allow_hyphen_values = true)]
    energies: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    xgrid: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    bloch_grid: Option<usize>,
    /// Phase for single-phase runs.
    #[arg(long, global = true, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "NAME=VAL")]
    tol: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write frames as raw little-endian complex doubles.
    #[arg(long, global = true)]
    dump_frames: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Butterfly data and merged bands of rational approximants.
    Spectrum,
    /// Integrated density of states on an energy grid.
    Ids,
    /// Lyapunov exponents, optionally at complex phase heights.
    Lyapunov,
    /// Acceleration from the complexified exponent.
    Acceleration,
    /// Fibered rotation numbers.
    Rotation,
    /// Labeled spectral gaps.
    Gaps,
    /// Invariant unstable, center and stable bundles.
    Splitting,
    /// Symplectic block diagonalization with a 2×2 center.
    Blockdiag,
    /// Holonomy of the center frame along an energy interval.
    Transport,
    /// Compare spectra of an operator and its Aubry dual.
    DualityCheck,
    /// Spectral distance between consecutive approximants.
    Holder,
    /// Run the acceptance suite.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Ids => "ids",
            Command::Lyapunov => "lyapunov",
            Command::Acceleration => "acceleration",
            Command::Rotation => "rotation",
            Command::Gaps => "gaps",
            Command::Splitting => "splitting",
            Command::Blockdiag => "blockdiag",
            Command::Transport => "transport",
            Command::DualityCheck => "duality-check",
            Command::Holder => "holder",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Defaults, then the config file, then flags, then `--set`.
fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.version = env!("CARGO_PKG_VERSION").into();
    cfg.command = cli.command.name().into();
    if cli.potential.is_some() && cli.lambda.is_some() {
        return Err(CliError::Config("--potential and --lambda both set the potential".into()));
    }
    if let Some(p) = &cli.potential {
        cfg.load_potential(p)?;
    }
    if let Some(p) = &cli.hopping {
        cfg.load_hopping(p)?;
    }
    if let Some(l) = cli.lambda {
        cfg.potential = TrigPoly::cosine(l);
    }
    if cli.pq.is_some() as u8 + cli.alpha_convergents.is_some() as u8 > 1 {
        return Err(CliError::Config("--pq and --alpha-convergents are exclusive".into()));
    }
    if let Some(s) = &cli.pq {
        let r = Rational::parse(s)?;
        cfg.frequency = Some(FrequencySpec::Rational { p: r.p, q: r.q });
    }
    let alpha = cli.alpha.unwrap_or_else(golden_mean);
    if let Some(count) = cli.alpha_convergents {
        cfg.frequency = Some(FrequencySpec::Convergents { alpha, count });
    } else if cli.alpha.is_some() {
        if cli.pq.is_some() {
            return Err(CliError::Config("--pq and --alpha are exclusive".into()));
        }
        cfg.frequency = Some(FrequencySpec::Irrational { alpha });
    }
    if let Some(e) = &cli.energies {
        cfg.energies = Some(EnergyGrid::parse(e)?);
    }
    if let Some(n) = cli.xgrid {
        cfg.x_grid = n;
    }
    if let Some(n) = cli.bloch_grid {
        cfg.bloch_grid = n;
    }
    if cli.x.is_some() {
        cfg.x = cli.x;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    for t in &cli.tol {
        cfg.set_tolerance(t)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.dump_frames {
        cfg.dump_frames = true;
    }
    if let Command::Verify { suite: Some(s) } = &cli.command {
        cfg.suite = s.clone();
    }
    for s in &cli.set {
        cfg = cfg.apply_set(s)?;
    }
    cfg.command = cli.command.name().into();
    cfg.resolve();
    cfg.validate()?;
    if cfg.command == "verify" {
        qpspectra::verify::Suite::parse(&cfg.suite)?;
    }
    Ok(cfg)
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.render().to_string().trim_end().to_string())),
    };
    let cfg = build_config(&cli)?;
    for path in commands::run(&cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind(), "message": e.to_string() }, "exit_code": e.exit_code() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
