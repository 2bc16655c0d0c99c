//! The `storyplan` command line: optimize, sample or analyse kitchen
//! stories and export them as script JSON, belief CSV and SVG storyboards.
//!
//! Exit codes: 0 success, 1 I/O or rerun mismatch, 2 bad flags,
//! 3 unparseable or invalid input, 4 planning or search failure.

pub mod beliefs;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod script_file;
pub mod storyboard;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use storyplan::inference::SpaceMode;
use storyplan::objectives::{EvalConfig, BUILTINS};
use storyplan::optimizer::{SearchConfig, FLASHBACK_BEAM_WIDTH};
use storyplan::planner::PlannerConfig;
use storyplan::world::RewardParams;

use commands::{layout_from_record, load_layout, load_objective, obtain_cache, run_to_dir, Run};
use config::{pick, ConfigFile};
use manifest::{CommandSpec, ModelSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Search(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("rerun differs from the manifest in: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Mismatch(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Search(_) => 4,
        }
    }
}

/// Sign class of the robot's social weight, for naive rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoClass {
    Help,
    Hinder,
    Indifferent,
}

impl RhoClass {
    pub fn rho_values(self) -> &'static [i8] {
        match self {
            RhoClass::Help => &[1, 3],
            RhoClass::Hinder => &[-3, -1],
            RhoClass::Indifferent => &[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HypothesesArg {
    /// 36 hypotheses; irrelevant latents of irrational characters merged
    Collapsed,
    /// 72 hypotheses
    Full,
}

impl From<HypothesesArg> for SpaceMode {
    fn from(a: HypothesesArg) -> Self {
        match a {
            HypothesesArg::Collapsed => SpaceMode::Collapsed,
            HypothesesArg::Full => SpaceMode::Full,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "storyplan", version)]
#[command(about = "Optimize robot-and-cheese stories for a simulated Bayesian audience")]
pub struct Cli {
    /// TOML file whose keys mirror the long flags. Flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the script that best realizes an objective
    Optimize(OptimizeArgs),
    /// Roll out a random rational scenario of one social class
    Naive(NaiveArgs),
    /// Compute the audience's belief trace for a script
    Infer(ScriptArgs),
    /// Draw a script as an SVG storyboard
    Render(ScriptArgs),
    /// List or print the builtin objectives
    #[command(subcommand)]
    Objectives(ObjectivesCommand),
    /// Manage policy caches
    #[command(subcommand)]
    Cache(CacheCommand),
    /// Regenerate a run from its manifest and check the outputs match
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// Map file, or `kitchen` for the built-in kitchen
    #[arg(long, value_name = "PATH")]
    pub layout: Option<String>,

    /// Policy cache file, loaded if compatible and written otherwise
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,

    /// Per-step forgetting probability of the audience
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Softmax rationality of both characters
    #[arg(long)]
    pub beta: Option<f64>,

    /// Planning discount
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Hypothesis enumeration
    #[arg(long, value_enum)]
    pub hypotheses: Option<HypothesesArg>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub world: WorldArgs,

    /// Builtin objective name or objective source file
    #[arg(long)]
    pub objective: Option<String>,

    /// Story length T [default: 15]
    #[arg(long)]
    pub steps: Option<usize>,

    /// Beam width [default: 1, or 100 for objectives with a continuation]
    #[arg(long)]
    pub beam: Option<usize>,

    /// Number of sampled initial states [default: 500]
    #[arg(long)]
    pub starts: Option<usize>,

    /// Seed for initial-state sampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Allow one table drop from the sky
    #[arg(long)]
    pub deus: bool,

    /// Report search progress on standard error
    #[arg(long)]
    pub progress: bool,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NaiveArgs {
    #[command(flatten)]
    pub world: WorldArgs,

    /// Social class of the sampled hypothesis
    #[arg(long, value_enum)]
    pub rho: Option<RhoClass>,

    /// Story length T [default: 15]
    #[arg(long)]
    pub steps: Option<usize>,

    /// Seed for the hypothesis, the start and the rollout [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScriptArgs {
    #[command(flatten)]
    pub world: WorldArgs,

    /// Script JSON file
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ObjectivesCommand {
    /// Print builtin names with their descriptions
    List,
    /// Print the source of a builtin
    Show { name: String },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Plan every hypothesis and save the cache
    Build {
        #[command(flatten)]
        world: WorldArgs,
    },
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// manifest.json from an earlier run
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,

    /// Policy cache file, loaded if compatible and written otherwise
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,

    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub const DEFAULT_STEPS: usize = 15;

/// Builds a usage error that carries the subcommand's usage line.
fn usage(subcommand: &str, message: &str) -> CliError {
    let mut cmd = Cli::command();
    cmd.build();
    let rendered = match cmd.find_subcommand_mut(subcommand) {
        Some(sub) => sub
            .error(ErrorKind::MissingRequiredArgument, message)
            .render()
            .to_string(),
        None => message.to_string(),
    };
    CliError::Usage(rendered.trim_end().to_string())
}

fn required<T>(value: Option<T>, subcommand: &str, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        usage(
            subcommand,
            &format!("the argument '--{flag}' is required (or set `{flag}` in --config)"),
        )
    })
}

struct World {
    layout: manifest::LayoutSpec,
    model: ModelSpec,
    cache: Option<PathBuf>,
}

fn world(args: WorldArgs, file: &ConfigFile, subcommand: &str) -> Result<World, CliError> {
    let layout_name = required(pick(args.layout, &file.layout), subcommand, "layout")?;
    let layout = load_layout(&layout_name)?;
    let hypotheses = match args.hypotheses {
        Some(h) => h.into(),
        None => match &file.hypotheses {
            Some(s) => HypothesesArg::from_str(s, true)
                .map_err(|_| CliError::Invalid(format!("config: unknown hypotheses mode '{s}'")))?
                .into(),
            None => SpaceMode::default(),
        },
    };
    let defaults = PlannerConfig::default();
    let planner = PlannerConfig {
        beta: pick(args.beta, &file.beta).unwrap_or(defaults.beta),
        gamma: pick(args.gamma, &file.gamma).unwrap_or(defaults.gamma),
        ..defaults
    };
    planner.validate().map_err(|e| usage(subcommand, &e.to_string()))?;
    let eval = EvalConfig {
        epsilon: pick(args.epsilon, &file.epsilon).unwrap_or(EvalConfig::default().epsilon),
        ..EvalConfig::default()
    };
    if !(0.0..=1.0).contains(&eval.epsilon) {
        return Err(usage(subcommand, "--epsilon must lie in [0, 1]"));
    }
    Ok(World {
        layout,
        model: ModelSpec {
            reward: RewardParams::default(),
            planner,
            hypotheses,
            eval,
        },
        cache: pick(args.cache, &file.cache),
    })
}

fn script_value(path: &Path, layout: &manifest::LayoutSpec) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = layout_from_record(layout)?;
    script_file::script_from_json(&text, &parsed).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn script_command(
    args: ScriptArgs,
    file: &ConfigFile,
    sub: &str,
) -> Result<(World, CommandSpec, PathBuf, bool), CliError> {
    let w = world(args.world, file, sub)?;
    let path = required(pick(args.script, &file.script), sub, "script")?;
    let script = script_value(&path, &w.layout)?;
    let out = required(pick(args.out, &file.out), sub, "out")?;
    let command = if sub == "infer" {
        CommandSpec::Infer { script }
    } else {
        CommandSpec::Render { script }
    };
    Ok((w, command, out, false))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let (world, command, out, progress) = match cli.command {
        Command::Objectives(ObjectivesCommand::List) => {
            for (name, source) in BUILTINS {
                let about = source
                    .lines()
                    .find_map(|l| l.trim().strip_prefix('#'))
                    .map(str::trim)
                    .unwrap_or("");
                println!("{name:22} {about}");
            }
            return Ok(());
        }
        Command::Objectives(ObjectivesCommand::Show { name }) => {
            let source = storyplan::objectives::builtin_source(&name)
                .ok_or_else(|| CliError::Invalid(format!("unknown builtin objective '{name}'")))?;
            print!("{source}");
            return Ok(());
        }
        Command::Cache(CacheCommand::Build { world: args }) => {
            let w = world(args, &file, "cache")?;
            let path = required(w.cache.clone(), "cache", "cache")?;
            let layout = layout_from_record(&w.layout)?;
            let cache = obtain_cache(&layout, &w.model, Some(&path))?;
            println!(
                "{} ({} states, {} hypotheses)",
                path.display(),
                cache.state_space().len(),
                cache.len()
            );
            return Ok(());
        }
        Command::Rerun(args) => {
            let m = commands::rerun(&args.manifest, args.cache.as_deref(), &args.out)?;
            println!("reproduced {} outputs in {}", m.outputs.len(), args.out.display());
            return Ok(());
        }
        Command::Optimize(args) => {
            let w = world(args.world, &file, "optimize")?;
            let name = required(pick(args.objective, &file.objective), "optimize", "objective")?;
            let objective = load_objective(&name)?;
            let parsed = storyplan::objectives::parse_objective(&objective.source)
                .map_err(|e| CliError::Invalid(format!("objective {name}: {e}")))?;
            let default_beam = if parsed.continuation.is_some() {
                FLASHBACK_BEAM_WIDTH
            } else {
                1
            };
            let defaults = SearchConfig::default();
            let search = SearchConfig {
                horizon: pick(args.steps, &file.steps).unwrap_or(DEFAULT_STEPS),
                beam_width: pick(args.beam, &file.beam).unwrap_or(default_beam),
                n_initial_states: pick(args.starts, &file.starts).unwrap_or(defaults.n_initial_states),
                rng_seed: pick(args.seed, &file.seed).unwrap_or(defaults.rng_seed),
                deus_enabled: args.deus || file.deus.unwrap_or(false),
            };
            search.validate().map_err(|e| usage("optimize", &e.to_string()))?;
            let out = required(pick(args.out, &file.out), "optimize", "out")?;
            let progress = args.progress || file.progress.unwrap_or(false);
            (w, CommandSpec::Optimize { objective, search }, out, progress)
        }
        Command::Naive(args) => {
            let w = world(args.world, &file, "naive")?;
            let rho = match args.rho {
                Some(r) => r,
                None => {
                    let s = required(file.rho.clone(), "naive", "rho")?;
                    RhoClass::from_str(&s, true)
                        .map_err(|_| CliError::Invalid(format!("config: unknown rho class '{s}'")))?
                }
            };
            let steps = pick(args.steps, &file.steps).unwrap_or(DEFAULT_STEPS);
            let seed = pick(args.seed, &file.seed).unwrap_or(0);
            let out = required(pick(args.out, &file.out), "naive", "out")?;
            (w, CommandSpec::Naive { rho, seed, steps }, out, false)
        }
        Command::Infer(args) => script_command(args, &file, "infer")?,
        Command::Render(args) => script_command(args, &file, "render")?,
    };
    let run = Run {
        command,
        layout: world.layout,
        model: world.model,
    };
    let manifest = run_to_dir(&run, world.cache.as_deref(), &out, progress)?;
    if let Some(score) = manifest.summary.get("score") {
        println!("score {score}");
    }
    for name in manifest.outputs.keys() {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("{e}");
            e.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
