//! Command implementations shared by the flag front end and `rerun`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use storyplan::inference::{trace, Hypothesis, HypothesisSpace};
use storyplan::objectives::{builtin_source, parse_objective, CompiledObjective};
use storyplan::optimizer::{naive_rollout, optimize, sample_initial_states, SearchError, SeedReport};
use storyplan::planner::{build_policy_cache, load_cache, save_cache, CacheFileError, CacheKey, PolicyCache};
use storyplan::world::{parse_layout, Script, Tile, WorldLayout};
use storyplan::KITCHEN_MAP;

use crate::beliefs::beliefs_csv;
use crate::manifest::{sha256_hex, CommandSpec, LayoutSpec, ModelSpec, ObjectiveSpec, RunManifest, TOOL, VERSION};
use crate::script_file::{script_from_json, script_to_json};
use crate::storyboard::render_storyboard;
use crate::{CliError, RhoClass};

/// Layout name that always refers to the shipped kitchen map.
pub const KITCHEN: &str = "kitchen";

/// Resolves `--layout`: the built-in kitchen or a map file.
pub fn load_layout(name: &str) -> Result<LayoutSpec, CliError> {
    let text = if name == KITCHEN {
        KITCHEN_MAP.to_string()
    } else {
        std::fs::read_to_string(name).map_err(|e| CliError::io(Path::new(name), e))?
    };
    let layout = parse_layout(&text).map_err(|e| CliError::Invalid(format!("layout {name}: {e}")))?;
    Ok(LayoutSpec {
        name: name.to_string(),
        text,
        hash: layout.hash(),
    })
}

pub fn layout_from_record(record: &LayoutSpec) -> Result<Arc<WorldLayout>, CliError> {
    let layout = parse_layout(&record.text).map_err(|e| CliError::Invalid(format!("layout {}: {e}", record.name)))?;
    if layout.hash() != record.hash {
        return Err(CliError::Invalid(format!(
            "layout {} hashes to {}, expected {}",
            record.name,
            layout.hash(),
            record.hash
        )));
    }
    Ok(Arc::new(layout))
}

/// Resolves `--objective`: a builtin name, or else a file of objective source.
pub fn load_objective(name: &str) -> Result<ObjectiveSpec, CliError> {
    let source = match builtin_source(name) {
        Some(src) => src.to_string(),
        None => match std::fs::read_to_string(name) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::Invalid(format!(
                    "'{name}' is neither a builtin objective nor a readable file (see `storyplan objectives list`)"
                )))
            }
            Err(e) => return Err(CliError::io(Path::new(name), e)),
        },
    };
    Ok(ObjectiveSpec {
        name: name.to_string(),
        source,
    })
}

/// Loads the cache from `path` when it matches `model`, and otherwise plans
/// from scratch, saving the result to `path` if one was given.
pub fn obtain_cache(layout: &WorldLayout, model: &ModelSpec, path: Option<&Path>) -> Result<PolicyCache, CliError> {
    if let Some(path) = path.filter(|p| p.exists()) {
        let key = CacheKey::new(layout, model.reward, model.planner, model.hypotheses);
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        match load_cache(layout, &key, BufReader::new(file)) {
            Ok(cache) => return Ok(cache),
            Err(CacheFileError::Io(e)) => return Err(CliError::io(path, e)),
            Err(e) => eprintln!("warning: rebuilding {}: {e}", path.display()),
        }
    }
    let hypotheses = HypothesisSpace::new(model.hypotheses);
    eprintln!(
        "planning {} hypotheses on a {}x{} layout...",
        hypotheses.len(),
        layout.width(),
        layout.height()
    );
    let started = Instant::now();
    let cache = build_policy_cache(layout, &hypotheses, &model.reward, &model.planner)
        .map_err(|e| CliError::Search(format!("planning failed: {e}")))?;
    eprintln!(
        "planned {} states in {:.1}s",
        cache.state_space().len(),
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        save_cache(&cache, BufWriter::new(file)).map_err(|e| CliError::io(path, e))?;
    }
    Ok(cache)
}

/// Draws a hypothesis matching `class` and rolls it out from a sampled start.
/// Goals are uniform; rho is uniform over the class's values.
pub fn naive_scenario(
    layout: &WorldLayout,
    class: RhoClass,
    seed: u64,
    steps: usize,
    cache: &PolicyCache,
) -> Result<(Hypothesis, Script), SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_cheese = *Tile::ALL.choose(&mut rng).expect("two tiles");
    let g_robot = *[Some(Tile::Pink), Some(Tile::Green), None]
        .choose(&mut rng)
        .expect("three robot goals");
    let rho = *class.rho_values().choose(&mut rng).expect("non-empty class");
    let hypothesis = Hypothesis::rational(g_cheese, g_robot, rho);
    let initial = sample_initial_states(layout, 1, rng.gen())?[0];
    let script = naive_rollout(&hypothesis, initial, steps, rng.gen(), cache)?;
    Ok((hypothesis, script))
}

/// The files a command produced, in write order, plus its summary.
pub struct Outputs {
    pub files: Vec<(&'static str, String)>,
    pub summary: serde_json::Value,
}

fn story_files(
    script: &Script,
    cache: &PolicyCache,
    model: &ModelSpec,
) -> Result<Vec<(&'static str, String)>, CliError> {
    let tr = trace(script, cache, model.eval.epsilon).map_err(|e| CliError::Search(e.to_string()))?;
    let csv = beliefs_csv(script, &tr, cache.hypotheses()).map_err(|e| CliError::Search(e.to_string()))?;
    Ok(vec![
        ("script.json", script_to_json(script)),
        ("beliefs.csv", csv),
        ("storyboard.svg", render_storyboard(script, &tr, cache.hypotheses())),
    ])
}

fn embedded_script(value: &serde_json::Value, layout: &Arc<WorldLayout>) -> Result<Script, CliError> {
    script_from_json(&value.to_string(), layout).map_err(|e| CliError::Invalid(format!("script: {e}")))
}

/// Executes a command against a ready cache. Everything that reaches a file
/// comes from `command`, `layout`, `model` and `cache`, never from the clock.
pub fn execute(
    command: &CommandSpec,
    layout: &Arc<WorldLayout>,
    model: &ModelSpec,
    cache: &PolicyCache,
    progress: bool,
) -> Result<Outputs, CliError> {
    match command {
        CommandSpec::Optimize { objective, search } => {
            let parsed = parse_objective(&objective.source)
                .map_err(|e| CliError::Invalid(format!("objective {}: {e}", objective.name)))?;
            let compiled = CompiledObjective::compile(&parsed, cache.hypotheses());
            let done = AtomicUsize::new(0);
            let total = search.n_initial_states;
            let report = |_: &SeedReport| {
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n.is_multiple_of((total / 10).max(1)) || n == total {
                    eprintln!("searched {n}/{total} initial states");
                }
            };
            let callback: Option<&(dyn Fn(&SeedReport) + Sync)> = if progress { Some(&report) } else { None };
            let result = optimize(layout, &compiled, cache, &model.eval, search, callback).map_err(search_error)?;
            for d in &result.diagnostics {
                eprintln!("warning: {d}");
            }
            let summary = json!({
                "score": result.score(),
                "best_seed": result.best_seed,
                "breakdown": result.breakdown,
                "diagnostics": result.diagnostics,
                "search_ms": result.timing.total.as_millis() as u64,
            });
            Ok(Outputs {
                files: story_files(&result.best, cache, model)?,
                summary,
            })
        }
        CommandSpec::Naive { rho, seed, steps } => {
            let (hypothesis, script) = naive_scenario(layout, *rho, *seed, *steps, cache).map_err(search_error)?;
            Ok(Outputs {
                files: story_files(&script, cache, model)?,
                summary: json!({ "hypothesis": hypothesis, "initial": script.initial() }),
            })
        }
        CommandSpec::Infer { script } => {
            let script = embedded_script(script, layout)?;
            let files = story_files(&script, cache, model)?;
            Ok(Outputs {
                files: files.into_iter().filter(|(n, _)| *n == "beliefs.csv").collect(),
                summary: json!({ "steps": script.len() }),
            })
        }
        CommandSpec::Render { script } => {
            let script = embedded_script(script, layout)?;
            let files = story_files(&script, cache, model)?;
            Ok(Outputs {
                files: files.into_iter().filter(|(n, _)| *n == "storyboard.svg").collect(),
                summary: json!({ "panels": script.len() + 1 }),
            })
        }
    }
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::InvalidConfig(msg) => CliError::Usage(msg.to_string()),
        other => CliError::Search(other.to_string()),
    }
}

/// Writes `files` into `dir` and returns their digests.
pub fn write_files(dir: &Path, files: &[(&'static str, String)]) -> Result<BTreeMap<String, String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut digests = BTreeMap::new();
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
    }
    Ok(digests)
}

/// A fully resolved invocation.
pub struct Run {
    pub command: CommandSpec,
    pub layout: LayoutSpec,
    pub model: ModelSpec,
}

/// Runs `run`, writes its artifacts and manifest into `out`, and returns
/// the manifest.
pub fn run_to_dir(run: &Run, cache_path: Option<&Path>, out: &Path, progress: bool) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let layout = layout_from_record(&run.layout)?;
    let cache = obtain_cache(&layout, &run.model, cache_path)?;
    let outputs = execute(&run.command, &layout, &run.model, &cache, progress)?;
    let digests = write_files(out, &outputs.files)?;
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: run.command.clone(),
        layout: run.layout.clone(),
        model: run.model,
        cache_hash: cache.content_hash(),
        outputs: digests,
        started_unix,
        elapsed_ms: started.elapsed().as_millis() as u64,
        summary: outputs.summary,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Regenerates a manifest's outputs into `out` and checks every digest.
pub fn rerun(manifest_path: &Path, cache_path: Option<&Path>, out: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let old =
        RunManifest::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", manifest_path.display())))?;
    if old.tool != TOOL {
        return Err(CliError::Invalid(format!("manifest was written by '{}'", old.tool)));
    }
    if old.version != VERSION {
        eprintln!(
            "warning: manifest was written by version {}, this is {VERSION}",
            old.version
        );
    }
    let run = Run {
        command: old.command.clone(),
        layout: old.layout.clone(),
        model: old.model,
    };
    let new = run_to_dir(&run, cache_path, out, false)?;
    let mut problems = Vec::new();
    if new.cache_hash != old.cache_hash {
        problems.push("policy cache".to_string());
    }
    for (name, digest) in &old.outputs {
        if new.outputs.get(name) != Some(digest) {
            problems.push(name.clone());
        }
    }
    if problems.is_empty() {
        Ok(new)
    } else {
        Err(CliError::Mismatch(problems.join(", ")))
    }
}
