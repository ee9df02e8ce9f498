//! Experiment orchestration: the `run`, `sweep`, `timesteps`, and `kn`
//! subcommands.
//!
//! Every subcommand expands its configuration into a list of *arms* (a
//! labeled sampler configuration with a budget), executes `replicates`
//! independent runs per arm — concurrently, each on its own deterministic
//! substream keyed by (arm index, replicate) — and emits result rows in arm
//! order through a single CSV writer, so output bytes are independent of
//! thread scheduling.

use std::path::{Path, PathBuf};

use maskref::reward::terminal_reward;
use maskref::samplers::cost::{plan_for_budget, worst_case_cost, BUDGET_SLACK};
use maskref::samplers::IterRefConfig;
use maskref::{Denoiser, RewardSpec, RngStream, SamplerConfig};
use rayon::prelude::*;

use crate::config::{sampler_spec_string, ExperimentConfig};
use crate::csvio::{write_csv, write_result_rows, ResultRow};
use crate::instance::{build_instance, build_reward};
use crate::{CliError, CliResult};

/// One labeled sampler configuration scheduled for execution.
#[derive(Debug, Clone)]
pub struct Arm {
    /// Label written to the CSV `sampler` column.
    pub label: String,
    /// Budget multiplier written to the CSV `budget` column.
    pub budget: u32,
    /// The configuration to run.
    pub config: SamplerConfig,
}

/// Per-arm aggregate for the printed summary and the study CSVs.
#[derive(Debug, Clone)]
pub struct ArmSummary {
    /// Arm label.
    pub label: String,
    /// Budget multiplier.
    pub budget: u32,
    /// Mean terminal reward across replicates.
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// Mean denoiser evaluations.
    pub nfe_denoiser: f64,
    /// Mean reward evaluations.
    pub nfe_reward: f64,
    /// Number of replicates.
    pub replicates: u32,
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn instance_and_reward(cfg: &ExperimentConfig) -> CliResult<(Denoiser, RewardSpec)> {
    let (denoiser, data) = build_instance(&cfg.instance)?;
    let spec = build_reward(&cfg.reward, cfg.instance.length, denoiser.vocab(), &data)?;
    Ok((denoiser, spec))
}

/// Runs all arms × replicates concurrently; rows come back in arm-major,
/// replicate-minor order. Each row is checked against the arm's budget
/// allowance.
pub fn execute(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    arms: &[Arm],
    replicates: u32,
    seed: u64,
) -> CliResult<Vec<ResultRow>> {
    let t = denoiser.schedule().t_max() as u64;
    let total = arms.len() * replicates as usize;
    let rows: Vec<CliResult<ResultRow>> = (0..total)
        .into_par_iter()
        .map(|job| {
            let arm_idx = job / replicates as usize;
            let rep = (job % replicates as usize) as u32;
            let arm = &arms[arm_idx];
            let stream = RngStream::new(seed, arm_idx as u64 * 1_000_000 + rep as u64);
            let outcome = arm
                .config
                .run(denoiser, spec, stream)
                .map_err(|e| CliError::Usage(format!("arm `{}`: {e}", arm.label)))?;
            let reward = terminal_reward(spec, &outcome.terminal, denoiser.vocab())
                .map_err(|e| CliError::Usage(format!("arm `{}`: {e}", arm.label)))?;
            let allowed = arm.budget as u64 * t + BUDGET_SLACK;
            if outcome.ledger.total() > allowed {
                return Err(CliError::Usage(format!(
                    "internal: arm `{}` consumed {} evaluations, over its allowance {}",
                    arm.label,
                    outcome.ledger.total(),
                    allowed
                )));
            }
            Ok(ResultRow {
                sampler: arm.label.clone(),
                budget: arm.budget,
                replicate: rep,
                terminal_reward: reward,
                nfe_denoiser: outcome.ledger.denoiser_evals(),
                nfe_reward: outcome.ledger.reward_evals(),
                wall_time_ms: 0,
                seed,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Aggregates executed rows back into per-arm summaries (arm order kept).
pub fn summarize(arms: &[Arm], rows: &[ResultRow], replicates: u32) -> Vec<ArmSummary> {
    arms.iter()
        .zip(rows.chunks(replicates as usize))
        .map(|(arm, chunk)| {
            let rewards: Vec<f64> = chunk.iter().map(|r| r.terminal_reward).collect();
            let (mean, stderr) = mean_and_se(&rewards);
            let nd = chunk.iter().map(|r| r.nfe_denoiser).sum::<u64>() as f64 / chunk.len() as f64;
            let nr = chunk.iter().map(|r| r.nfe_reward).sum::<u64>() as f64 / chunk.len() as f64;
            ArmSummary {
                label: arm.label.clone(),
                budget: arm.budget,
                mean,
                stderr,
                nfe_denoiser: nd,
                nfe_reward: nr,
                replicates: chunk.len() as u32,
            }
        })
        .collect()
}

fn print_summary(summaries: &[ArmSummary]) {
    println!(
        "{:<24} {:>6} {:>10} {:>10} {:>10} {:>10} {:>5}",
        "sampler", "budget", "mean", "stderr", "nfe_den", "nfe_rew", "reps"
    );
    for s in summaries {
        println!(
            "{:<24} {:>6} {:>10.4} {:>10.4} {:>10.1} {:>10.1} {:>5}",
            s.label, s.budget, s.mean, s.stderr, s.nfe_denoiser, s.nfe_reward, s.replicates
        );
    }
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    Path::new(&cfg.run.out).join(name)
}

fn budget_for(config: &SamplerConfig, t_max: u32, unit_cost: u64) -> u32 {
    let (d, r) = worst_case_cost(config, t_max, unit_cost);
    ((d + r).div_ceil(t_max as u64)).max(1) as u32
}

fn effective_jump(jump: u32, t_max: u32) -> u32 {
    if jump == 0 {
        t_max.div_ceil(2)
    } else {
        jump
    }
}

/// `run`: executes the explicitly configured samplers as given. The budget
/// column reports each arm's worst-case cost rounded up to whole ancestral
/// passes.
pub fn run_cmd(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let (denoiser, spec) = instance_and_reward(cfg)?;
    let t_max = cfg.instance.steps;
    let c = cfg.reward.mode.unit_cost();
    let arms: Vec<Arm> = cfg
        .run
        .samplers
        .iter()
        .map(|config| {
            if let SamplerConfig::IterRef(ir) = config {
                ir.validate(t_max).map_err(CliError::usage)?;
            }
            Ok(Arm {
                label: sampler_spec_string(config),
                budget: budget_for(config, t_max, c),
                config: config.clone(),
            })
        })
        .collect::<CliResult<_>>()?;
    let rows = execute(&denoiser, &spec, &arms, cfg.run.replicates, cfg.run.seed)?;
    let path = out_path(cfg, "run.csv");
    write_result_rows(&path, &rows)?;
    print_summary(&summarize(&arms, &rows, cfg.run.replicates));
    println!("wrote {}", path.display());
    Ok(path)
}

/// `sweep`: for every (family, budget multiplier) pair, auto-scales the
/// family's hyperparameters to the largest configuration whose worst-case
/// cost fits, runs it, and reports mean ± stderr. Families that cannot fit a
/// budget degenerate to ancestral sampling with the shortfall logged.
pub fn sweep_cmd(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let (denoiser, spec) = instance_and_reward(cfg)?;
    let t_max = cfg.instance.steps;
    let mut arms = Vec::new();
    for &axis in &cfg.sweep.axes {
        for &mult in &cfg.run.budgets {
            let plan = plan_for_budget(axis, mult, t_max, cfg.reward.mode, &cfg.plan.0)
                .map_err(CliError::usage)?;
            if plan.degenerated {
                eprintln!(
                    "note: {} cannot fit budget {mult}x (shortfall {} evaluations); running ancestral",
                    axis.name(),
                    plan.shortfall
                );
            } else if plan.worst_total < plan.budget_total {
                eprintln!(
                    "note: {} at {mult}x attains {}/{} evaluations (shortfall {})",
                    axis.name(),
                    plan.worst_total,
                    plan.budget_total,
                    plan.budget_total - plan.worst_total
                );
            }
            arms.push(Arm {
                label: axis.name().to_string(),
                budget: mult,
                config: plan.config,
            });
        }
    }
    let rows = execute(&denoiser, &spec, &arms, cfg.run.replicates, cfg.run.seed)?;
    let path = out_path(cfg, "sweep.csv");
    write_result_rows(&path, &rows)?;
    print_summary(&summarize(&arms, &rows, cfg.run.replicates));
    println!("wrote {}", path.display());
    Ok(path)
}

/// Arms of the timestep-placement study: one single-level arm per fraction
/// plus an equal-cost `evenly` arm across all the distinct levels.
pub fn timestep_arms(cfg: &ExperimentConfig) -> CliResult<Vec<Arm>> {
    let t_max = cfg.instance.steps;
    let ts = &cfg.timesteps;
    let c = cfg.reward.mode.unit_cost();
    let jump = effective_jump(ts.jump, t_max);
    let n = ts.n;
    // Distinct refined levels of the evenly arm, one per fraction.
    let mut levels: Vec<u32> = ts
        .fractions
        .iter()
        .map(|&f| ((f * t_max as f64).floor() as u32).clamp(1, t_max))
        .collect();
    let singles = levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let u = levels.len() as u64;
    // Every single-level arm matches the evenly arm's cost
    //   T + u*k*N*(1+c) + u*c
    // to within one refinement iteration: it runs u*k iterations plus as
    // many extra ones as the evenly arm's additional per-level charges buy.
    let extra = ((u - 1) * c) / (n as u64 * (1 + c));
    let k_single = u as u32 * ts.k + extra as u32;
    let mut arms = Vec::new();
    for (frac, level) in ts.fractions.iter().zip(&singles) {
        let config = SamplerConfig::IterRef(IterRefConfig {
            n_candidates: n,
            k_iters: k_single,
            jump,
            refine_steps: vec![*level],
            pool_reuse: false,
        });
        arms.push(Arm {
            label: format!("f={frac}"),
            budget: budget_for(&config, t_max, c),
            config,
        });
    }
    let evenly = SamplerConfig::IterRef(IterRefConfig {
        n_candidates: n,
        k_iters: ts.k,
        jump,
        refine_steps: levels,
        pool_reuse: false,
    });
    arms.push(Arm {
        label: "evenly".into(),
        budget: budget_for(&evenly, t_max, c),
        config: evenly,
    });
    for arm in &arms {
        if let SamplerConfig::IterRef(ir) = &arm.config {
            ir.validate(t_max).map_err(CliError::usage)?;
        }
    }
    // Equal-cost construction check: spread at most one refinement iteration.
    let totals: Vec<u64> = arms
        .iter()
        .map(|a| {
            let (d, r) = worst_case_cost(&a.config, t_max, c);
            d + r
        })
        .collect();
    let spread = totals.iter().max().unwrap() - totals.iter().min().unwrap();
    debug_assert!(
        spread <= n as u64 * (1 + c) + c,
        "timestep arms differ by {spread} evaluations"
    );
    Ok(arms)
}

/// `timesteps`: where along the schedule refinement is applied. Writes the
/// per-replicate rows plus a one-row-per-arm summary CSV.
pub fn timesteps_cmd(cfg: &ExperimentConfig) -> CliResult<(PathBuf, PathBuf)> {
    let (denoiser, spec) = instance_and_reward(cfg)?;
    let arms = timestep_arms(cfg)?;
    let rows = execute(&denoiser, &spec, &arms, cfg.run.replicates, cfg.run.seed)?;
    let rows_path = out_path(cfg, "timesteps.csv");
    write_result_rows(&rows_path, &rows)?;
    let summaries = summarize(&arms, &rows, cfg.run.replicates);
    let summary_lines: Vec<String> = summaries
        .iter()
        .zip(&arms)
        .map(|(s, arm)| {
            let (levels, iters) = match &arm.config {
                SamplerConfig::IterRef(ir) => (
                    ir.refine_steps
                        .iter()
                        .map(|l| l.to_string())
                        .collect::<Vec<_>>()
                        .join("+"),
                    ir.k_iters,
                ),
                _ => (String::new(), 0),
            };
            format!(
                "{},{},{},{},{},{},{},{}",
                s.label, levels, iters, s.mean, s.stderr, s.nfe_denoiser, s.nfe_reward, s.replicates
            )
        })
        .collect();
    let summary_path = out_path(cfg, "timesteps_summary.csv");
    write_csv(
        &summary_path,
        "arm,levels,iters_per_level,mean_reward,stderr,nfe_denoiser,nfe_reward,replicates",
        &summary_lines,
    )?;
    print_summary(&summaries);
    println!("wrote {}", rows_path.display());
    println!("wrote {}", summary_path.display());
    Ok((rows_path, summary_path))
}

/// Arms of the iteration-count versus pool-size study at a constant `k*N`
/// product.
pub fn kn_arms(cfg: &ExperimentConfig) -> CliResult<Vec<Arm>> {
    let t_max = cfg.instance.steps;
    let c = cfg.reward.mode.unit_cost();
    let kn = &cfg.kn;
    let jump = effective_jump(kn.jump, t_max);
    let pairs: Vec<(u32, u32)> = if kn.pairs.is_empty() {
        (1..=kn.product)
            .filter(|k| kn.product % k == 0)
            .map(|k| (k, kn.product / k))
            .collect()
    } else {
        kn.pairs.clone()
    };
    let levels: Vec<u32> = if kn.levels.is_empty() {
        vec![(t_max / 2).max(1)]
    } else {
        kn.levels.clone()
    };
    let mut arms = Vec::new();
    for &(k, n) in &pairs {
        let config = SamplerConfig::IterRef(IterRefConfig {
            n_candidates: n,
            k_iters: k,
            jump,
            refine_steps: levels.clone(),
            pool_reuse: false,
        });
        if let SamplerConfig::IterRef(ir) = &config {
            ir.validate(t_max).map_err(CliError::usage)?;
        }
        arms.push(Arm {
            label: format!("k{k}n{n}"),
            budget: budget_for(&config, t_max, c),
            config,
        });
    }
    // Constant product => identical ledger totals across arms.
    let totals: Vec<u64> = arms
        .iter()
        .map(|a| {
            let (d, r) = worst_case_cost(&a.config, t_max, c);
            d + r
        })
        .collect();
    debug_assert!(totals.windows(2).all(|w| w[0] == w[1]));
    Ok(arms)
}

/// `kn`: trades iterations against pool size at fixed `k*N`. Writes the
/// per-replicate rows plus a one-row-per-pair summary CSV in the given
/// order.
pub fn kn_cmd(cfg: &ExperimentConfig) -> CliResult<(PathBuf, PathBuf)> {
    let (denoiser, spec) = instance_and_reward(cfg)?;
    let arms = kn_arms(cfg)?;
    let rows = execute(&denoiser, &spec, &arms, cfg.run.replicates, cfg.run.seed)?;
    let rows_path = out_path(cfg, "kn.csv");
    write_result_rows(&rows_path, &rows)?;
    let summaries = summarize(&arms, &rows, cfg.run.replicates);
    let summary_lines: Vec<String> = summaries
        .iter()
        .zip(&arms)
        .map(|(s, arm)| {
            let (k, n) = match &arm.config {
                SamplerConfig::IterRef(ir) => (ir.k_iters, ir.n_candidates),
                _ => (0, 0),
            };
            format!(
                "{},{},{},{},{},{},{}",
                k, n, s.mean, s.stderr, s.nfe_denoiser, s.nfe_reward, s.replicates
            )
        })
        .collect();
    let summary_path = out_path(cfg, "kn_summary.csv");
    write_csv(
        &summary_path,
        "k,n,mean_reward,stderr,nfe_denoiser,nfe_reward,replicates",
        &summary_lines,
    )?;
    print_summary(&summaries);
    println!("wrote {}", rows_path.display());
    println!("wrote {}", summary_path.display());
    Ok((rows_path, summary_path))
}
