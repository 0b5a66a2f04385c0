//! Command-line front end: configure, run and sweep experiments, spot-check
//! invariants on random instances, and dump assembled conic subproblems.
//!
//! Exit codes: 0 success, 1 configuration or i/o error, 2 at least one
//! trial (or invariant check) hard-failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use irs_secrecy::channel::generate_channels;
use irs_secrecy::perfect_csi::{build_w_maxmin_problem, mrt_init, random_grid_phase};
use irs_secrecy::robust::{
    build_power_beam_problem, build_robust_beam_problem, certify_worst_case, normalized_csi,
    unit_phases, PccpReport, RobustIterate, RobustStatus,
};
use irs_secrecy_cli::{
    median, preset, run_and_emit, run_validation, ExperimentSpec, HarnessError, Scenario,
    PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "irs-secrecy",
    about = "Secrecy-rate optimization experiments for reflector-aided downlinks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec file, preset, or defaults.
    Run(RunArgs),
    /// Run with sweep axes overridden from the command line.
    Sweep(SweepArgs),
    /// Check library invariants on random instances.
    Validate(ValidateArgs),
    /// Assemble one conic subproblem and print it.
    DumpProblem(DumpArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Spec file (structured text); CLI flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Bundled preset name (see --preset help with `list`).
    #[arg(long)]
    preset: Option<String>,
    /// Scenario override: maxmin_perfect, ssr_perfect, maxmin_robust,
    /// ssr_robust, power_min.
    #[arg(long)]
    scenario: Option<String>,
    /// Base seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for the CSV set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: RunArgs,
    /// Comma-separated antenna counts, e.g. 4,6,8.
    #[arg(long)]
    antennas: Option<String>,
    /// Comma-separated phase resolutions in bits; -1 means continuous.
    #[arg(long)]
    bits: Option<String>,
    /// Comma-separated CSI uncertainty levels.
    #[arg(long)]
    deltas: Option<String>,
    /// Comma-separated QoS SINR targets (power_min).
    #[arg(long)]
    gammas: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Randomized rounds per check family.
    #[arg(long, default_value_t = 3)]
    trials: usize,
}

#[derive(Args)]
struct DumpArgs {
    /// Scenario whose beam subproblem to assemble.
    #[arg(long, default_value = "maxmin_perfect")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate(args) => cmd_validate(args),
        Command::DumpProblem(args) => cmd_dump(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn resolve_spec(args: &RunArgs) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match (&args.spec, &args.preset) {
        (Some(path), _) => ExperimentSpec::from_file(path)?,
        (None, Some(name)) => preset(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown preset `{name}`; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?,
        (None, None) => ExperimentSpec::default(),
    };
    if let Some(s) = &args.scenario {
        spec.scenario = s.parse()?;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(out) = &args.out {
        spec.out_dir = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, HarnessError> {
    let spec = resolve_spec(&args)?;
    execute(&spec)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, HarnessError> {
    let mut spec = resolve_spec(&args.base)?;
    if let Some(list) = &args.antennas {
        spec.sweep.antennas = parse_list(list, "antennas")?;
    }
    if let Some(list) = &args.bits {
        spec.sweep.bits = parse_list(list, "bits")?;
    }
    if let Some(list) = &args.deltas {
        spec.sweep.delta = parse_list(list, "deltas")?;
    }
    if let Some(list) = &args.gammas {
        spec.sweep.gamma = parse_list(list, "gammas")?;
    }
    spec.validate()?;
    execute(&spec)
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, HarnessError> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| {
                HarnessError::Config(format!("cannot parse `{s}` in --{what} list"))
            })
        })
        .collect()
}

fn execute(spec: &ExperimentSpec) -> Result<ExitCode, HarnessError> {
    let result = run_and_emit(spec)?;
    let n = result.records.len();
    let failed = result.records.iter().filter(|r| r.hard_failed()).count();
    let min_rates: Vec<f64> = result.records.iter().map(|r| r.min_sr_bps).collect();
    let jains: Vec<f64> = result.records.iter().map(|r| r.jain).collect();
    println!(
        "{}: {} records ({} sweep points x {} trials) -> {}",
        spec.scenario.as_str(),
        n,
        spec.sweep_points().len(),
        spec.trials,
        spec.out_dir.display()
    );
    if !min_rates.is_empty() {
        println!(
            "median min-rate {:.4} bps/Hz, median fairness {:.4}, hard failures {}",
            median(&min_rates),
            median(&jains),
            failed
        );
    }
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, HarnessError> {
    let checks = run_validation(args.seed, args.trials);
    let mut failed = 0;
    for c in &checks {
        if c.passed {
            println!("check {}: PASS", c.name);
        } else {
            failed += 1;
            println!("check {}: FAIL ({})", c.name, c.detail);
        }
    }
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_dump(args: DumpArgs) -> Result<ExitCode, HarnessError> {
    let scenario: Scenario = args.scenario.parse()?;
    let spec = ExperimentSpec::default();
    let point = spec.sweep_points()[0];
    let mut config = spec.to_config(&point, args.seed);
    config.seed = args.seed;
    if scenario == Scenario::PowerMin && config.m <= config.k {
        return Err(HarnessError::Config(
            "power_min dump needs M > K for artificial noise".into(),
        ));
    }
    if scenario.is_perfect() {
        config.delta_k = 0.0;
        config.delta_e = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let channels = generate_channels(&config, &mut rng);
    let phase = random_grid_phase(&config);
    let beams = mrt_init(&channels, &phase, config.p_t);

    let problem = match scenario {
        Scenario::MaxminPerfect | Scenario::SsrPerfect => {
            // The sum-rate beam update is closed-form; the max-min beam
            // subproblem is the representative conic program either way.
            build_w_maxmin_problem(&channels, &phase, &beams, config.p_t)
                .map_err(|e| HarnessError::Config(format!("assembly failed: {e}")))?
        }
        Scenario::MaxminRobust | Scenario::SsrRobust | Scenario::PowerMin => {
            let nd = normalized_csi(&channels);
            let v = unit_phases(&phase);
            let (_, slacks) = certify_worst_case(&nd, &v, &beams);
            let iterate = RobustIterate {
                bf: irs_secrecy::channel::BeamformingSet::new(beams.clone()),
                phase: phase.clone(),
                slacks,
                pccp: PccpReport::default(),
                history: Vec::new(),
                iter: 0,
                status: RobustStatus::Running,
            };
            let assembled = if scenario == Scenario::PowerMin {
                build_power_beam_problem(&channels, &phase, &iterate, spec.system.qos_gamma, config.p_t)
            } else {
                build_robust_beam_problem(
                    &channels,
                    &phase,
                    &iterate,
                    config.p_t,
                    scenario == Scenario::SsrRobust,
                )
            };
            assembled.map_err(|e| HarnessError::Config(format!("assembly failed: {e}")))?
        }
    };

    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            problem.dump(&mut file)?;
            println!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            problem.dump(&mut stdout)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
