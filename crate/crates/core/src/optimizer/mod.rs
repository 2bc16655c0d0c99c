//! Inverse inverse planning: beam search over scripts for an objective,
//! and naive policy rollouts used as baselines.

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{advance, initial_step, trace, Hypothesis, InferenceError, TraceStep};
use crate::objectives::{
    cheese_attempt, evaluate, CompiledObjective, ObjectiveError, ScoreBreakdown, ScoreState, Scorer,
};
use crate::planner::{Agent, PolicyCache, CHEESE_SUCCESS};
use crate::world::{
    legal_transitions, resolve, AgentAction, Cell, Script, ScriptError, Transition, WorldLayout, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub horizon: usize,
    pub beam_width: usize,
    pub n_initial_states: usize,
    pub rng_seed: u64,
    pub deus_enabled: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            horizon: 15,
            beam_width: 1,
            n_initial_states: 500,
            rng_seed: 0,
            deus_enabled: false,
        }
    }
}

/// Beam width used for flashback objectives.
pub const FLASHBACK_BEAM_WIDTH: usize = 100;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search configuration invalid: {0}")]
    InvalidConfig(&'static str),
    #[error("layout has {0} floor cells; at least 3 are needed")]
    LayoutTooSmall(usize),
    #[error("policy cache was built for a different layout")]
    LayoutMismatch,
    #[error("no initial state produced a complete script ({failures} prefix evaluations failed)")]
    NoScript { failures: u64 },
    #[error("rollout needs a hypothesis where both characters are rational")]
    IrrationalHypothesis,
    #[error("hypothesis {0} is not in the cache's hypothesis space")]
    UnknownHypothesis(Hypothesis),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.horizon == 0 {
            return Err(SearchError::InvalidConfig("horizon must be positive"));
        }
        if self.beam_width == 0 {
            return Err(SearchError::InvalidConfig("beam width must be positive"));
        }
        if self.n_initial_states == 0 {
            return Err(SearchError::InvalidConfig("need at least one initial state"));
        }
        Ok(())
    }
}

/// Draws `n` initial states. Fixed starts in the layout override sampling
/// for their entity; everything else is uniform over free cells, with the
/// table also allowed to be absent.
pub fn sample_initial_states(layout: &WorldLayout, n: usize, rng_seed: u64) -> Result<Vec<WorldState>, SearchError> {
    sample(layout, n, rng_seed, false)
}

/// Like [`sample_initial_states`] but always without a table, so a deus
/// drop is possible. A fixed table start is ignored.
pub fn sample_deus_initial_states(
    layout: &WorldLayout,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<WorldState>, SearchError> {
    sample(layout, n, rng_seed, true)
}

fn sample(layout: &WorldLayout, n: usize, rng_seed: u64, no_table: bool) -> Result<Vec<WorldState>, SearchError> {
    let floor = layout.floor_cells();
    if floor.len() < 3 {
        return Err(SearchError::LayoutTooSmall(floor.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let fixed_table = if no_table { None } else { layout.start_table() };
    let pick = |rng: &mut ChaCha8Rng, taken: &[Option<Cell>]| -> Cell {
        let free: Vec<Cell> = floor.iter().copied().filter(|c| !taken.contains(&Some(*c))).collect();
        *free.choose(rng).expect("at least three floor cells")
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let robot = layout
            .start_robot()
            .unwrap_or_else(|| pick(&mut rng, &[layout.start_cheese(), fixed_table]));
        let cheese = layout
            .start_cheese()
            .unwrap_or_else(|| pick(&mut rng, &[Some(robot), fixed_table]));
        let table = if no_table {
            None
        } else if fixed_table.is_some() {
            fixed_table
        } else {
            let free: Vec<Cell> = floor.iter().copied().filter(|c| *c != robot && *c != cheese).collect();
            let i = rng.gen_range(0..=free.len());
            free.get(i).copied()
        };
        out.push(WorldState { robot, cheese, table });
    }
    Ok(out)
}

/// Search outcome for one initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub index: usize,
    pub initial: WorldState,
    pub best_score: Option<f64>,
    pub evaluations: u64,
    pub failures: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTiming {
    pub total: Duration,
    pub mean_seed: Duration,
    pub max_seed: Duration,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Script,
    pub breakdown: ScoreBreakdown,
    pub best_seed: usize,
    pub seeds: Vec<SeedReport>,
    pub timing: SearchTiming,
    pub diagnostics: Vec<String>,
}

impl SearchResult {
    pub fn score(&self) -> f64 {
        self.breakdown.total
    }
}

#[derive(Clone)]
struct Node {
    transitions: Vec<Transition>,
    step: TraceStep,
    state: ScoreState,
    score: f64,
    deus_used: bool,
}

fn encoding_cmp(a: &[Transition], b: &[Transition]) -> Ordering {
    a.iter()
        .map(Transition::encoding)
        .cmp(b.iter().map(Transition::encoding))
}

/// Higher score first, then the lexicographically smaller transition sequence.
fn rank(a: &Node, b: &Node) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| encoding_cmp(&a.transitions, &b.transitions))
}

struct SeedOutcome {
    best: Option<Node>,
    report: SeedReport,
    errors: Vec<String>,
}

fn search_seed(scorer: &Scorer<'_>, config: &SearchConfig, index: usize, initial: WorldState) -> SeedOutcome {
    let started = Instant::now();
    let cache = scorer.cache;
    let layout = cache.layout();
    let rational = scorer.objective.rational_mask();
    let epsilon = scorer.config.epsilon;
    let mut evaluations = 0u64;
    let mut failures = 0u64;
    let mut errors = Vec::new();
    let mut note = |failures: &mut u64, e: String| {
        *failures += 1;
        if errors.len() < 5 {
            errors.push(format!("initial state {index}: {e}"));
        }
    };

    let root = match initial_step(cache, &initial) {
        Ok(step) => {
            let state = ScoreState::new(scorer.objective);
            match state.score(scorer, &step) {
                Ok(score) => Some(Node {
                    transitions: Vec::new(),
                    step,
                    state,
                    score,
                    deus_used: false,
                }),
                Err(e) => {
                    note(&mut failures, e.to_string());
                    None
                }
            }
        }
        Err(e) => {
            note(&mut failures, e.to_string());
            None
        }
    };
    let mut beam: Vec<Node> = root.into_iter().collect();

    for _ in 0..config.horizon {
        let mut children = Vec::new();
        for node in &beam {
            let deus_available = config.deus_enabled && !node.deus_used;
            for transition in legal_transitions(layout, &node.step.state, deus_available) {
                evaluations += 1;
                let step = match advance(cache, rational, &node.step, &transition, epsilon) {
                    Ok(s) => s,
                    Err(e) => {
                        note(&mut failures, e.to_string());
                        continue;
                    }
                };
                let mut state = node.state.clone();
                state.push(scorer, &step, cheese_attempt(layout, &node.step.state, &transition));
                let score = match state.score(scorer, &step) {
                    Ok(x) if !x.is_nan() => x,
                    Ok(_) => {
                        note(&mut failures, "objective evaluated to NaN".into());
                        continue;
                    }
                    Err(e) => {
                        note(&mut failures, e.to_string());
                        continue;
                    }
                };
                let mut transitions = Vec::with_capacity(node.transitions.len() + 1);
                transitions.extend_from_slice(&node.transitions);
                transitions.push(transition);
                children.push(Node {
                    transitions,
                    step,
                    state,
                    score,
                    deus_used: node.deus_used || transition.is_deus(),
                });
            }
        }
        if children.len() > config.beam_width {
            children.select_nth_unstable_by(config.beam_width - 1, rank);
            children.truncate(config.beam_width);
        }
        children.sort_by(rank);
        beam = children;
        if beam.is_empty() {
            break;
        }
    }

    let best = beam
        .into_iter()
        .next()
        .filter(|n| n.transitions.len() == config.horizon);
    SeedOutcome {
        report: SeedReport {
            index,
            initial,
            best_score: best.as_ref().map(|n| n.score),
            evaluations,
            failures,
            elapsed: started.elapsed(),
        },
        best,
        errors,
    }
}

/// Runs an independent beam search from every initial state and returns
/// the best script overall. `progress` is called as each initial state
/// finishes, in completion order.
pub fn optimize(
    layout: &WorldLayout,
    objective: &CompiledObjective,
    cache: &PolicyCache,
    eval: &crate::objectives::EvalConfig,
    config: &SearchConfig,
    progress: Option<&(dyn Fn(&SeedReport) + Sync)>,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    if cache.layout().hash() != layout.hash() {
        return Err(SearchError::LayoutMismatch);
    }
    let started = Instant::now();
    let initials = if config.deus_enabled {
        sample_deus_initial_states(layout, config.n_initial_states, config.rng_seed)?
    } else {
        sample_initial_states(layout, config.n_initial_states, config.rng_seed)?
    };
    let scorer = Scorer {
        objective,
        cache,
        config: eval,
        horizon: config.horizon,
    };
    let outcomes: Vec<SeedOutcome> = initials
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let out = search_seed(&scorer, config, i, *s);
            if let Some(cb) = progress {
                cb(&out.report);
            }
            out
        })
        .collect();

    let mut diagnostics: Vec<String> = outcomes.iter().flat_map(|o| o.errors.iter().cloned()).collect();
    let failures: u64 = outcomes.iter().map(|o| o.report.failures).sum();
    let winner = outcomes
        .iter()
        .filter_map(|o| o.best.as_ref().map(|n| (o.report.index, n)))
        .min_by(|(ia, a), (ib, b)| rank(a, b).then(ia.cmp(ib)))
        .map(|(i, n)| (i, n.clone()));
    let (best_seed, node) = winner.ok_or(SearchError::NoScript { failures })?;

    let script = Script::new(
        Arc::clone(cache.layout()),
        initials[best_seed],
        node.transitions.clone(),
    )?;
    let full_trace = trace(&script, cache, eval.epsilon)?;
    let breakdown = evaluate(&scorer, &script, &full_trace)?;
    if breakdown.total.to_bits() != node.score.to_bits() {
        diagnostics.push(format!(
            "re-evaluated score {} differs from search score {}",
            breakdown.total, node.score
        ));
    }

    let seeds: Vec<SeedReport> = outcomes.into_iter().map(|o| o.report).collect();
    let times: Vec<Duration> = seeds.iter().map(|s| s.elapsed).collect();
    let timing = SearchTiming {
        total: started.elapsed(),
        mean_seed: times.iter().sum::<Duration>() / times.len().max(1) as u32,
        max_seed: times.iter().copied().max().unwrap_or_default(),
    };
    Ok(SearchResult {
        best: script,
        breakdown,
        best_seed,
        seeds,
        timing,
        diagnostics,
    })
}

/// Rolls out both characters' softmax policies under `hypothesis` for
/// `horizon` steps, with cheese moves succeeding at the world's rate.
pub fn naive_rollout(
    hypothesis: &Hypothesis,
    initial: WorldState,
    horizon: usize,
    rng_seed: u64,
    cache: &PolicyCache,
) -> Result<Script, SearchError> {
    if !hypothesis.is_rational_pair() {
        return Err(SearchError::IrrationalHypothesis);
    }
    let h = cache
        .hypotheses()
        .index_of(hypothesis)
        .ok_or(SearchError::UnknownHypothesis(*hypothesis))?;
    let layout = cache.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut script = Script::start(Arc::clone(layout), initial)?;
    for _ in 0..horizon {
        let state = script.final_state();
        let s = cache.state_index(&state).map_err(InferenceError::from)?;
        let mut draw = |agent: Agent| -> AgentAction {
            let weights: Vec<f64> = AgentAction::ALL
                .iter()
                .map(|a| cache.log_likelihood(h, agent, s, *a).exp())
                .collect();
            let dist = WeightedIndex::new(&weights).expect("softmax policies have positive mass");
            AgentAction::ALL[dist.sample(&mut rng)]
        };
        let robot = draw(Agent::Robot);
        let cheese = draw(Agent::Cheese);
        let lucky = rng.gen_bool(CHEESE_SUCCESS);
        let outcome = resolve(layout, &state, robot, cheese, lucky);
        script.push(Transition::Joint {
            robot,
            cheese,
            cheese_success: lucky && outcome.cheese_move_feasible,
            next: outcome.next,
        })?;
    }
    Ok(script)
}

#[cfg(test)]
mod tests;
