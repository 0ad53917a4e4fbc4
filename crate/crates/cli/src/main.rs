use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rwre_core::environment::{deserialize, sample_environment, serialize};
use rwre_core::harness::{self, config_schema, Experiment, ExperimentConfig};
use rwre_core::{Domain, Family, FamilySpec};

#[derive(Parser)]
#[command(name = "rwre", version, about = "Exact solves and Monte Carlo experiments for random walks in random environments")]
struct Cli {
    /// worker threads (default: all cores)
    #[arg(long, global = true, env = "RWRE_THREADS")]
    threads: Option<usize>,
    /// interior point limit for exact solves (a config `capacity` takes precedence)
    #[arg(long, global = true, env = "RWRE_CAPACITY")]
    capacity: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// output directory (default: the config's output_path, else ".")
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// sup-distances D*_t and D*_{t,ψ} per environment
    Dstar(RunArgs),
    /// frequencies of the b_i events against their thresholds
    C1scan(RunArgs),
    /// mean exit time indicator per environment
    C2scan(RunArgs),
    /// sojourn decomposition, Λ bound and time classes
    Sojourn(RunArgs),
    /// local CLT error scaling of the coarse SRW
    Cltscan(RunArgs),
    /// Monte Carlo Green function asymptote of the coarse SRW
    Greenasym(RunArgs),
    /// Γ kernel properties and the empirical constant of ĝ against Γ
    Gammacheck(RunArgs),
    /// hitting and annulus exit probabilities against their closed forms
    Hitprob(RunArgs),
    /// smoothed exit laws against the Brownian analogue
    Smoothcmp(RunArgs),
    /// escape probabilities over annuli
    Transience(RunArgs),
    /// isotropy cancellation of symmetrized coarse step differences
    Isotropy(RunArgs),
    /// parses and validates a config without running it
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// prints the config JSON schema
    Schema,
    /// environment files
    #[command(subcommand)]
    Env(EnvCommand),
}

#[derive(Subcommand)]
enum EnvCommand {
    /// samples an environment and writes its laws on V_radius
    Gen {
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// srw, isotropic_tilt, symmetric_balanced or balanced_axis:<k> (k from 1)
        #[arg(long, default_value = "isotropic_tilt")]
        family: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// prints an environment file as JSON
    Dump { path: PathBuf },
}

fn parse_family(s: &str) -> Result<Family> {
    Ok(match s {
        "srw" => Family::Srw,
        "isotropic_tilt" => Family::IsotropicTilt,
        "symmetric_balanced" => Family::SymmetricBalanced,
        _ => match s.strip_prefix("balanced_axis:").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 1 => Family::BalancedAxis { axis: k - 1 },
            _ => bail!("unknown family {s:?}"),
        },
    })
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> Result<bool> {
    let mut cfg = load_config(&args.config)?;
    if cfg.experiment != experiment {
        bail!("config is for experiment {:?}, not {:?}", cfg.experiment.name(), experiment.name());
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    cfg.validate()?;
    for w in cfg.warnings() {
        eprintln!("{w}");
    }
    let out = harness::run(&cfg, args.out.as_deref())?;
    println!("config {}", cfg.hash());
    for s in &out.summary {
        let ci = match (s.ci_lo, s.ci_hi) {
            (Some(a), Some(b)) => format!(" [{a:.4e}, {b:.4e}]"),
            _ => String::new(),
        };
        let coords = [
            s.l.map(|v| format!("L={v}")),
            s.epsilon.map(|v| format!("eps={v}")),
            s.psi.map(|v| format!("psi={v}")),
            (!s.key.is_empty()).then(|| s.key.clone()),
        ];
        let coords: Vec<String> = coords.into_iter().flatten().collect();
        println!("{:<24} {:<40} n={:<5} mean={:.6e}{ci}", s.metric, coords.join(" "), s.n, s.mean);
    }
    println!("rows {} errors {}", out.n_rows, out.n_errors);
    println!("wrote {} and {}", out.jsonl.display(), out.csv.display());
    Ok(out.n_errors == 0)
}

fn env_command(cmd: &EnvCommand) -> Result<()> {
    match cmd {
        EnvCommand::Gen { d, family, epsilon, seed, radius, out } => {
            let spec = FamilySpec::new(*d, parse_family(family)?, *epsilon)?;
            let env = sample_environment(spec, *seed)?;
            let region = Domain::ball(&vec![0; *d], *radius)?;
            std::fs::write(out, serialize(&env, &region)?)?;
            println!("wrote {} sites to {}", region.n_interior(), out.display());
        }
        EnvCommand::Dump { path } => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let (env, points) = deserialize(&bytes)?;
            let sites: Vec<serde_json::Value> = points
                .iter()
                .map(|p| serde_json::json!({ "x": p.0.to_vec(), "law": env.law(&p.0).probs.to_vec() }))
                .collect();
            let doc = serde_json::json!({
                "version": env.version,
                "d": env.d(),
                "family": env.spec.family,
                "epsilon": env.epsilon(),
                "seed": env.seed,
                "sites": sites,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    if let Some(c) = cli.capacity {
        rwre_core::lattice::set_capacity_limit(c);
    }
    let experiment = |e: Experiment, a: &RunArgs| run_experiment(e, a);
    let result = match &cli.command {
        Command::Dstar(a) => experiment(Experiment::Dstar, a),
        Command::C1scan(a) => experiment(Experiment::C1scan, a),
        Command::C2scan(a) => experiment(Experiment::C2scan, a),
        Command::Sojourn(a) => experiment(Experiment::Sojourn, a),
        Command::Cltscan(a) => experiment(Experiment::Cltscan, a),
        Command::Greenasym(a) => experiment(Experiment::Greenasym, a),
        Command::Gammacheck(a) => experiment(Experiment::Gammacheck, a),
        Command::Hitprob(a) => experiment(Experiment::Hitprob, a),
        Command::Smoothcmp(a) => experiment(Experiment::Smoothcmp, a),
        Command::Transience(a) => experiment(Experiment::Transience, a),
        Command::Isotropy(a) => experiment(Experiment::Isotropy, a),
        Command::ValidateConfig { config } => load_config(config).and_then(|c| {
            c.validate()?;
            for w in c.warnings() {
                eprintln!("{w}");
            }
            println!("ok {} {}", c.experiment.name(), c.hash());
            Ok(true)
        }),
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config_schema()).expect("schema serializes"));
            Ok(true)
        }
        Command::Env(cmd) => env_command(cmd).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
