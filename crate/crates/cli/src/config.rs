//! Experiment configuration: an INI-style sectioned key-value file with a
//! canonical serialization, so parsing and re-serializing is idempotent.
//!
//! Sections and keys (all optional; omitted keys take the defaults shown by
//! [`ExperimentConfig::default`]):
//!
//! ```ini
//! [instance]
//! length = 6            ; sequence length L
//! vocab = 4             ; ordinary tokens V (MASK is implicit)
//! steps = 24            ; schedule steps T
//! data = cluster:aaaaaa@0.9
//! data_seed = 0         ; consumed by data kinds "random" and "markov"
//! denoiser = meanfield  ; exact | meanfield
//!
//! [reward]
//! name = pattern:aaaaaa
//! alpha = 0.1
//! mode = exact          ; exact | mc:<m> | x0pred
//!
//! [run]
//! samplers = ancestral  ; explicit sampler specs for `run`
//! budgets = 1,2,4,8,16,32
//! replicates = 8
//! seed = 0
//! out = out
//!
//! [sweep]
//! axes = ancestral,bon,svdd,fk,sop,iterref
//!
//! [plan]                ; budget-planner preferences
//! fk_every = 2
//! sop_particles = 2
//! sop_remask = 0.5
//! sop_block = 2
//! iterref_pool = 1
//! iterref_jump = 0      ; 0 = ceil(T/2)
//! iterref_levels = 2
//! iterref_pool_reuse = true
//!
//! [timesteps]
//! fractions = 0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1
//! k = 4                 ; iterations per level of the evenly arm
//! n = 2                 ; candidate pool size
//! jump = 0              ; 0 = ceil(T/2)
//!
//! [kn]
//! product = 32          ; k*N; ignored when pairs is non-empty
//! pairs =               ; e.g. 1x32,2x16,4x8 (equal products required)
//! levels =              ; refined levels; empty = max(1, floor(T/2))
//! jump = 0              ; 0 = ceil(T/2)
//! ```
//!
//! Sampler spec grammar (comma-separated in `[run] samplers`):
//! `ancestral` | `bon:<n>` | `svdd:<n>` | `fk:<n>:<every>` |
//! `sop:<n>:<m>:<f>:<b>` | `iterref:<N>:<k>:<jump>:<l1+l2+..>:<reuse|noreuse>`.

use maskref::samplers::cost::{PlanPrefs, SamplerAxis};
use maskref::samplers::{IterRefConfig, SopConfig};
use maskref::SamplerConfig;

use crate::instance::{DataKind, InstanceSection, RewardSection};
use crate::{CliError, CliResult};

/// `[run]` section: shared experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    /// Explicit sampler specs executed by the `run` subcommand.
    pub samplers: Vec<SamplerConfig>,
    /// Budget multipliers (relative to one ancestral pass), strictly
    /// increasing.
    pub budgets: Vec<u32>,
    /// Replicates per arm, at least 1.
    pub replicates: u32,
    /// Master seed; every (arm, replicate) derives its own substream.
    pub seed: u64,
    /// Output directory for CSV/SVG artifacts.
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            samplers: vec![SamplerConfig::Ancestral],
            budgets: vec![1, 2, 4, 8, 16, 32],
            replicates: 8,
            seed: 0,
            out: "out".into(),
        }
    }
}

/// `[sweep]` section: which sampler families the budget sweep covers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    /// Families, in reporting order.
    pub axes: Vec<SamplerAxis>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axes: SamplerAxis::all().to_vec(),
        }
    }
}

/// `[timesteps]` section: where to place refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepsSection {
    /// Schedule fractions in (0, 1]; each yields one single-level arm at
    /// level `max(1, floor(f*T))`.
    pub fractions: Vec<f64>,
    /// Iterations per refined level of the evenly arm.
    pub k: u32,
    /// Candidate pool size.
    pub n: u32,
    /// Proposal jump; 0 means `ceil(T/2)`.
    pub jump: u32,
}

impl Default for TimestepsSection {
    fn default() -> Self {
        Self {
            fractions: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1],
            k: 4,
            n: 2,
            jump: 0,
        }
    }
}

/// `[kn]` section: iteration-count versus pool-size trade at fixed product.
#[derive(Debug, Clone, PartialEq)]
pub struct KnSection {
    /// Constant product `k*N` used to derive all divisor pairs when `pairs`
    /// is empty.
    pub product: u32,
    /// Explicit `(k, N)` pairs, kept in the given order; all products must be
    /// equal.
    pub pairs: Vec<(u32, u32)>,
    /// Refined levels; empty means the single level `max(1, floor(T/2))`.
    pub levels: Vec<u32>,
    /// Proposal jump; 0 means `ceil(T/2)`.
    pub jump: u32,
}

impl Default for KnSection {
    fn default() -> Self {
        Self {
            product: 32,
            pairs: Vec::new(),
            levels: Vec::new(),
            jump: 0,
        }
    }
}

/// The complete experiment configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    /// `[instance]` section.
    pub instance: InstanceSection,
    /// `[reward]` section.
    pub reward: RewardSection,
    /// `[run]` section.
    pub run: RunSection,
    /// `[sweep]` section.
    pub sweep: SweepSection,
    /// `[plan]` section (budget-planner preferences).
    pub plan: PlanPrefsSection,
    /// `[timesteps]` section.
    pub timesteps: TimestepsSection,
    /// `[kn]` section.
    pub kn: KnSection,
}

/// `[plan]` section wrapper; mirrors [`PlanPrefs`] field by field so the
/// config crate owns parsing and canonical formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPrefsSection(pub PlanPrefs);

impl Default for PlanPrefsSection {
    fn default() -> Self {
        Self(PlanPrefs::default())
    }
}

impl ExperimentConfig {
    /// Parses a config file body. Unknown sections or keys are rejected.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad_line(lineno, raw, "unterminated section header"))?
                    .trim();
                if !KNOWN_SECTIONS.contains(&name) {
                    return Err(bad_line(lineno, raw, "unknown section"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad_line(lineno, raw, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)
                .map_err(|msg| bad_line(lineno, raw, &msg))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        match (section, key) {
            ("instance", "length") => self.instance.length = parse_num(value)?,
            ("instance", "vocab") => self.instance.vocab = parse_num(value)?,
            ("instance", "steps") => self.instance.steps = parse_num(value)?,
            ("instance", "data") => self.instance.data = DataKind::parse(value)?,
            ("instance", "data_seed") => self.instance.data_seed = parse_num(value)?,
            ("instance", "denoiser") => {
                self.instance.denoiser = crate::instance::parse_denoiser(value)?
            }
            ("reward", "name") => self.reward.name = value.to_string(),
            ("reward", "alpha") => self.reward.alpha = parse_num(value)?,
            ("reward", "mode") => self.reward.mode = crate::instance::parse_mode(value)?,
            ("run", "samplers") => {
                self.run.samplers = split_list(value)
                    .map(parse_sampler_spec)
                    .collect::<Result<_, _>>()?
            }
            ("run", "budgets") => {
                self.run.budgets = split_list(value).map(parse_num).collect::<Result<_, _>>()?
            }
            ("run", "replicates") => self.run.replicates = parse_num(value)?,
            ("run", "seed") => self.run.seed = parse_num(value)?,
            ("run", "out") => self.run.out = value.to_string(),
            ("sweep", "axes") => {
                self.sweep.axes = split_list(value)
                    .map(|s| SamplerAxis::parse(s).map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?
            }
            ("plan", "fk_every") => self.plan.0.fk_every = parse_num(value)?,
            ("plan", "sop_particles") => self.plan.0.sop_particles = parse_num(value)?,
            ("plan", "sop_remask") => self.plan.0.sop_remask = parse_num(value)?,
            ("plan", "sop_block") => self.plan.0.sop_block = parse_num(value)?,
            ("plan", "iterref_pool") => self.plan.0.iterref_pool = parse_num(value)?,
            ("plan", "iterref_jump") => self.plan.0.iterref_jump = parse_num(value)?,
            ("plan", "iterref_levels") => self.plan.0.iterref_levels = parse_num(value)?,
            ("plan", "iterref_pool_reuse") => self.plan.0.iterref_pool_reuse = parse_bool(value)?,
            ("timesteps", "fractions") => {
                self.timesteps.fractions =
                    split_list(value).map(parse_num).collect::<Result<_, _>>()?
            }
            ("timesteps", "k") => self.timesteps.k = parse_num(value)?,
            ("timesteps", "n") => self.timesteps.n = parse_num(value)?,
            ("timesteps", "jump") => self.timesteps.jump = parse_num(value)?,
            ("kn", "product") => self.kn.product = parse_num(value)?,
            ("kn", "pairs") => {
                self.kn.pairs = split_list(value).map(parse_kn_pair).collect::<Result<_, _>>()?
            }
            ("kn", "levels") => {
                self.kn.levels = split_list(value).map(parse_num).collect::<Result<_, _>>()?
            }
            ("kn", "jump") => self.kn.jump = parse_num(value)?,
            ("", _) => return Err("key before any section header".into()),
            _ => return Err(format!("unknown key '{key}' in section [{section}]")),
        }
        Ok(())
    }

    /// Structural invariants that parsing alone cannot enforce.
    pub fn validate(&self) -> CliResult<()> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        if self.run.replicates < 1 {
            return usage("replicates must be >= 1".into());
        }
        if self.run.budgets.is_empty() {
            return usage("budgets must be non-empty".into());
        }
        if self.run.budgets.iter().any(|&b| b < 1) {
            return usage("budgets below one ancestral pass are unattainable".into());
        }
        if self.run.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return usage(format!(
                "budgets must be strictly increasing, got {:?}",
                self.run.budgets
            ));
        }
        if self.run.samplers.is_empty() {
            return usage("sampler list must be non-empty".into());
        }
        if self.sweep.axes.is_empty() {
            return usage("sweep axes must be non-empty".into());
        }
        for &f in &self.timesteps.fractions {
            if !(f > 0.0 && f <= 1.0) {
                return usage(format!("timestep fraction {f} outside (0, 1]"));
            }
        }
        if self.timesteps.fractions.is_empty() {
            return usage("timestep fractions must be non-empty".into());
        }
        if self.timesteps.k < 1 || self.timesteps.n < 1 {
            return usage("timesteps k and n must be >= 1".into());
        }
        if !self.kn.pairs.is_empty() {
            let product = self.kn.pairs[0].0 as u64 * self.kn.pairs[0].1 as u64;
            for &(k, n) in &self.kn.pairs {
                if k < 1 || n < 1 {
                    return usage("kn pairs need k >= 1 and N >= 1".into());
                }
                if k as u64 * n as u64 != product {
                    return usage(format!(
                        "kn pairs must share one k*N product; {k}x{n} != {product}"
                    ));
                }
            }
        } else if self.kn.product < 1 {
            return usage("kn product must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical serialization: fixed section and key order, every key
    /// explicit. `parse(serialize(c)) == c` and serialization is idempotent.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let kn_pairs = self
            .kn
            .pairs
            .iter()
            .map(|&(k, n)| format!("{k}x{n}"))
            .collect::<Vec<_>>()
            .join(",");
        let sections = [
            (
                "instance",
                vec![
                    ("length", self.instance.length.to_string()),
                    ("vocab", self.instance.vocab.to_string()),
                    ("steps", self.instance.steps.to_string()),
                    ("data", self.instance.data.to_string()),
                    ("data_seed", self.instance.data_seed.to_string()),
                    (
                        "denoiser",
                        crate::instance::denoiser_name(self.instance.denoiser).to_string(),
                    ),
                ],
            ),
            (
                "reward",
                vec![
                    ("name", self.reward.name.clone()),
                    ("alpha", fmt_float(self.reward.alpha)),
                    ("mode", self.reward.mode.name()),
                ],
            ),
            (
                "run",
                vec![
                    (
                        "samplers",
                        self.run
                            .samplers
                            .iter()
                            .map(sampler_spec_string)
                            .collect::<Vec<_>>()
                            .join(","),
                    ),
                    ("budgets", join_nums(&self.run.budgets)),
                    ("replicates", self.run.replicates.to_string()),
                    ("seed", self.run.seed.to_string()),
                    ("out", self.run.out.clone()),
                ],
            ),
            (
                "sweep",
                vec![(
                    "axes",
                    self.sweep
                        .axes
                        .iter()
                        .map(|a| a.name())
                        .collect::<Vec<_>>()
                        .join(","),
                )],
            ),
            (
                "plan",
                vec![
                    ("fk_every", self.plan.0.fk_every.to_string()),
                    ("sop_particles", self.plan.0.sop_particles.to_string()),
                    ("sop_remask", fmt_float(self.plan.0.sop_remask)),
                    ("sop_block", self.plan.0.sop_block.to_string()),
                    ("iterref_pool", self.plan.0.iterref_pool.to_string()),
                    ("iterref_jump", self.plan.0.iterref_jump.to_string()),
                    ("iterref_levels", self.plan.0.iterref_levels.to_string()),
                    (
                        "iterref_pool_reuse",
                        self.plan.0.iterref_pool_reuse.to_string(),
                    ),
                ],
            ),
            (
                "timesteps",
                vec![
                    (
                        "fractions",
                        self.timesteps
                            .fractions
                            .iter()
                            .map(|&f| fmt_float(f))
                            .collect::<Vec<_>>()
                            .join(","),
                    ),
                    ("k", self.timesteps.k.to_string()),
                    ("n", self.timesteps.n.to_string()),
                    ("jump", self.timesteps.jump.to_string()),
                ],
            ),
            (
                "kn",
                vec![
                    ("product", self.kn.product.to_string()),
                    ("pairs", kn_pairs),
                    ("levels", join_nums(&self.kn.levels)),
                    ("jump", self.kn.jump.to_string()),
                ],
            ),
        ];
        for (name, keys) in sections {
            s.push_str(&format!("[{name}]\n"));
            for (key, value) in keys {
                s.push_str(&format!("{key} = {value}\n"));
            }
            s.push('\n');
        }
        s
    }
}

const KNOWN_SECTIONS: [&str; 7] = [
    "instance",
    "reward",
    "run",
    "sweep",
    "plan",
    "timesteps",
    "kn",
];

fn strip_comment(line: &str) -> &str {
    match line.find([';', '#']) {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn bad_line(lineno: usize, raw: &str, msg: &str) -> CliError {
    CliError::Usage(format!(
        "config line {}: {msg}: `{}`",
        lineno + 1,
        raw.trim()
    ))
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn parse_kn_pair(s: &str) -> Result<(u32, u32), String> {
    let (k, n) = s
        .split_once('x')
        .ok_or_else(|| format!("expected `<k>x<N>`, got `{s}`"))?;
    Ok((parse_num(k)?, parse_num(n)?))
}

/// Shortest-round-trip float formatting; keeps a decimal point so the value
/// re-parses as written and integers stay visibly floats.
pub fn fmt_float(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn join_nums<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses one sampler spec (see the module docs for the grammar).
pub fn parse_sampler_spec(spec: &str) -> Result<SamplerConfig, String> {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    let arity = |want: usize| -> Result<(), String> {
        if rest.len() == want {
            Ok(())
        } else {
            Err(format!(
                "sampler `{spec}`: expected {want} parameter(s) after `{head}`, got {}",
                rest.len()
            ))
        }
    };
    match head {
        "ancestral" => {
            arity(0)?;
            Ok(SamplerConfig::Ancestral)
        }
        "bon" => {
            arity(1)?;
            Ok(SamplerConfig::BestOfN {
                n: parse_num(rest[0])?,
            })
        }
        "svdd" => {
            arity(1)?;
            Ok(SamplerConfig::Svdd {
                n: parse_num(rest[0])?,
            })
        }
        "fk" => {
            arity(2)?;
            Ok(SamplerConfig::FkSteering {
                n: parse_num(rest[0])?,
                resample_every: parse_num(rest[1])?,
            })
        }
        "sop" => {
            arity(4)?;
            Ok(SamplerConfig::Sop(SopConfig {
                n: parse_num(rest[0])?,
                m: parse_num(rest[1])?,
                f: parse_num(rest[2])?,
                b: parse_num(rest[3])?,
            }))
        }
        "iterref" => {
            arity(5)?;
            let refine_steps: Vec<u32> = rest[3]
                .split('+')
                .map(parse_num)
                .collect::<Result<_, _>>()?;
            let pool_reuse = match rest[4] {
                "reuse" => true,
                "noreuse" => false,
                other => {
                    return Err(format!(
                        "sampler `{spec}`: expected reuse or noreuse, got `{other}`"
                    ))
                }
            };
            Ok(SamplerConfig::IterRef(IterRefConfig {
                n_candidates: parse_num(rest[0])?,
                k_iters: parse_num(rest[1])?,
                jump: parse_num(rest[2])?,
                refine_steps,
                pool_reuse,
            }))
        }
        other => Err(format!(
            "unknown sampler `{other}` (expected ancestral, bon, svdd, fk, sop, or iterref)"
        )),
    }
}

/// Canonical spec string; inverse of [`parse_sampler_spec`].
pub fn sampler_spec_string(config: &SamplerConfig) -> String {
    match config {
        SamplerConfig::Ancestral => "ancestral".into(),
        SamplerConfig::BestOfN { n } => format!("bon:{n}"),
        SamplerConfig::Svdd { n } => format!("svdd:{n}"),
        SamplerConfig::FkSteering { n, resample_every } => format!("fk:{n}:{resample_every}"),
        SamplerConfig::Sop(cfg) => format!("sop:{}:{}:{}:{}", cfg.n, cfg.m, fmt_float(cfg.f), cfg.b),
        SamplerConfig::IterRef(cfg) => format!(
            "iterref:{}:{}:{}:{}:{}",
            cfg.n_candidates,
            cfg.k_iters,
            cfg.jump,
            cfg.refine_steps
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join("+"),
            if cfg.pool_reuse { "reuse" } else { "noreuse" },
        ),
    }
}
