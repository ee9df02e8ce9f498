//! `maskref` binary: dispatches the six subcommands and maps errors to exit
//! codes (0 success, 1 usage/config, 2 verification failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maskref_cli::config::ExperimentConfig;
use maskref_cli::instance::{parse_denoiser, parse_mode, DataKind};
use maskref_cli::{plot, runner, verify, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "maskref",
    version,
    about = "Reward-guided sampling experiments for masked discrete diffusion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Overrides shared by every experiment subcommand. Values given here win
/// over the config file; omitted values fall back to the file or defaults.
#[derive(Args, Debug)]
struct CommonArgs {
    /// INI-style experiment config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Instance shape as `L,V,T` (sequence length, vocab size, steps).
    #[arg(long, value_name = "L,V,T")]
    instance: Option<String>,
    /// Denoiser: `exact` or `meanfield`.
    #[arg(long, value_name = "KIND")]
    denoiser: Option<String>,
    /// Terminal reward, e.g. `pattern:aaaaaa` or `token_count:b`.
    #[arg(long, value_name = "NAME:PARAMS")]
    reward: Option<String>,
    /// Guidance temperature (lower = sharper tilting).
    #[arg(long, value_name = "F64", allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Intermediate-reward mode: `exact`, `mc:<m>`, or `x0pred`.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Execute the configured sampler list across the configured budgets.
    Run(CommonArgs),
    /// Sweep every sampler family across budgets with auto-scaled parameters.
    Sweep(CommonArgs),
    /// Compare refinement placement across schedule fractions at equal cost.
    Timesteps(CommonArgs),
    /// Trade iteration count against pool size at a fixed k*N product.
    Kn(CommonArgs),
    /// Run the exhaustive-enumeration verification suite on a small instance.
    Verify(CommonArgs),
    /// Render a result CSV as an SVG of mean reward versus budget.
    Plot {
        /// Input CSV produced by `run` or `sweep`.
        csv: PathBuf,
        /// Output SVG path (default: the CSV path with extension `svg`).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &CommonArgs, base: ExperimentConfig) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => base,
    };
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.run.out = out.clone();
    }
    if let Some(instance) = &args.instance {
        let (length, vocab, steps) = parse_instance_triple(instance)?;
        if args.config.is_none() {
            // The built-in defaults carry letter patterns sized to the default
            // length; resize them so a bare `--instance` stays self-consistent.
            // Explicit configs keep their letters and fail loudly on mismatch.
            match &mut cfg.instance.data {
                DataKind::Pattern { letters, .. } | DataKind::Cluster { letters, .. } => {
                    *letters = cycle_letters(letters, length);
                }
                _ => {}
            }
            if args.reward.is_none() {
                if let Some((head @ ("pattern" | "hamming"), rest)) =
                    cfg.reward.name.split_once(':')
                {
                    cfg.reward.name = format!("{head}:{}", cycle_letters(rest, length));
                }
            }
        }
        cfg.instance.length = length;
        cfg.instance.vocab = vocab;
        cfg.instance.steps = steps;
    }
    if let Some(denoiser) = &args.denoiser {
        cfg.instance.denoiser = parse_denoiser(denoiser).map_err(CliError::Usage)?;
    }
    if let Some(reward) = &args.reward {
        cfg.reward.name = reward.clone();
    }
    if let Some(alpha) = args.alpha {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(CliError::Usage(format!(
                "--alpha must be positive and finite, got {alpha}"
            )));
        }
        cfg.reward.alpha = alpha;
    }
    if let Some(mode) = &args.mode {
        cfg.reward.mode = parse_mode(mode).map_err(CliError::Usage)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cycle_letters(letters: &str, len: usize) -> String {
    if letters.is_empty() {
        return String::new();
    }
    letters.chars().cycle().take(len).collect()
}

fn parse_instance_triple(s: &str) -> CliResult<(usize, u32, u32)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = |what: &str, part: &str| {
        CliError::Usage(format!("--instance {what} `{part}` is not a positive integer"))
    };
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--instance expects `L,V,T`, got `{s}`"
        )));
    }
    let length: usize = parts[0].parse().map_err(|_| bad("length", parts[0]))?;
    let vocab: u32 = parts[1].parse().map_err(|_| bad("vocab size", parts[1]))?;
    let steps: u32 = parts[2].parse().map_err(|_| bad("step count", parts[2]))?;
    if length == 0 || vocab == 0 || steps == 0 {
        return Err(CliError::Usage(format!(
            "--instance values must all be at least 1, got `{s}`"
        )));
    }
    Ok((length, vocab, steps))
}

fn dispatch(cmd: &Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Run(args) => {
            let cfg = load_config(args, ExperimentConfig::default())?;
            runner::run_cmd(&cfg).map(|_| ())
        }
        Cmd::Sweep(args) => {
            let cfg = load_config(args, ExperimentConfig::default())?;
            runner::sweep_cmd(&cfg).map(|_| ())
        }
        Cmd::Timesteps(args) => {
            let cfg = load_config(args, ExperimentConfig::default())?;
            runner::timesteps_cmd(&cfg).map(|_| ())
        }
        Cmd::Kn(args) => {
            let cfg = load_config(args, ExperimentConfig::default())?;
            runner::kn_cmd(&cfg).map(|_| ())
        }
        Cmd::Verify(args) => {
            let cfg = load_config(args, verify::verify_base_config())?;
            verify::verify_cmd(&cfg)
        }
        Cmd::Plot { csv, out } => {
            let out = out.clone().unwrap_or_else(|| csv.with_extension("svg"));
            plot::plot_cmd(csv, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successful outcomes.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
