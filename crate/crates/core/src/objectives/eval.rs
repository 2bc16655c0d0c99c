use serde::{Deserialize, Serialize};

use super::ast::{Expr, Item, Objective, Pred, TimeCond};
use super::ObjectiveError;
use crate::inference::{
    advance, query_mask, rational_mask, BeliefTrace, HypothesisSpace, InferenceError, TraceStep, DEFAULT_EPSILON,
};
use crate::planner::{PolicyCache, CHEESE_SUCCESS};
use crate::world::{resolve, AgentAction, Script, Transition, WorldLayout, WorldState};

/// Weights and numerical settings shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub epsilon: f64,
    pub rational_weight: f64,
    pub env_weight: f64,
    /// Value a query contributes when its conditioning event has no mass.
    pub zero_mass_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            epsilon: DEFAULT_EPSILON,
            rational_weight: 1.0,
            env_weight: 1.0,
            zero_mass_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
enum CExpr {
    Num(f64),
    Prob {
        pred: Vec<bool>,
        cond: Vec<bool>,
    },
    EvRobot,
    KlStep,
    Sin(f64),
    Pushed,
    If {
        cond: TimeCond,
        then: Box<CExpr>,
        other: Box<CExpr>,
    },
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
}

#[derive(Debug, Clone)]
enum CItem {
    Sum(CExpr),
    Terminal(f64, CExpr),
}

/// An objective with its predicates resolved to hypothesis masks.
#[derive(Debug, Clone)]
pub struct CompiledObjective {
    source: Objective,
    items: Vec<CItem>,
    rational: Vec<bool>,
}

fn and_mask(space: &HypothesisSpace, pred: &Pred, rational: &[bool]) -> Vec<bool> {
    space
        .hypotheses()
        .iter()
        .zip(rational)
        .map(|(h, r)| *r && pred.holds(h))
        .collect()
}

fn compile_expr(e: &Expr, space: &HypothesisSpace, rational: &[bool]) -> CExpr {
    let b = |x: &Expr| Box::new(compile_expr(x, space, rational));
    match e {
        Expr::Num(x) => CExpr::Num(*x),
        Expr::Prob { pred, cond } => {
            let cond = match cond {
                Some(c) => and_mask(space, c, rational),
                None => rational.to_vec(),
            };
            let pred = and_mask(space, pred, &cond);
            CExpr::Prob { pred, cond }
        }
        Expr::EvRobot => CExpr::EvRobot,
        Expr::KlStep => CExpr::KlStep,
        Expr::Sin(f) => CExpr::Sin(*f),
        Expr::Pushed => CExpr::Pushed,
        Expr::If { cond, then, other } => CExpr::If {
            cond: cond.clone(),
            then: b(then),
            other: b(other),
        },
        Expr::Add(x, y) => CExpr::Add(b(x), b(y)),
        Expr::Sub(x, y) => CExpr::Sub(b(x), b(y)),
        Expr::Mul(x, y) => CExpr::Mul(b(x), b(y)),
    }
}

impl CompiledObjective {
    pub fn compile(objective: &Objective, space: &HypothesisSpace) -> Self {
        let rational = rational_mask(space);
        let items = objective
            .items
            .iter()
            .map(|item| match item {
                Item::Sum(e) => CItem::Sum(compile_expr(e, space, &rational)),
                Item::Terminal { weight, expr } => CItem::Terminal(*weight, compile_expr(expr, space, &rational)),
            })
            .collect();
        CompiledObjective {
            source: objective.clone(),
            items,
            rational,
        }
    }

    pub fn objective(&self) -> &Objective {
        &self.source
    }

    pub fn continuation(&self) -> Option<(AgentAction, AgentAction)> {
        self.source.continuation
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn rational_mask(&self) -> &[bool] {
        &self.rational
    }
}

/// What one timestep looks like to an expression.
struct View<'a> {
    t: usize,
    horizon: usize,
    step: &'a TraceStep,
    pushed: bool,
    floor: f64,
}

fn eval(e: &CExpr, v: &View<'_>, zero: &mut bool) -> f64 {
    match e {
        CExpr::Num(x) => *x,
        CExpr::Prob { pred, cond } => match query_mask(&v.step.belief, pred, Some(cond)) {
            Ok(p) => p,
            Err(_) => {
                *zero = true;
                v.floor
            }
        },
        CExpr::EvRobot => v.step.ev_robot.unwrap_or_else(|| {
            *zero = true;
            v.floor
        }),
        CExpr::KlStep => v.step.kl,
        CExpr::Sin(f) => (f * v.t as f64 / v.horizon as f64 * std::f64::consts::PI).sin(),
        CExpr::Pushed => f64::from(u8::from(v.pushed)),
        CExpr::If { cond, then, other } => {
            if cond.holds(v.t, v.horizon) {
                eval(then, v, zero)
            } else {
                eval(other, v, zero)
            }
        }
        CExpr::Add(a, b) => eval(a, v, zero) + eval(b, v, zero),
        CExpr::Sub(a, b) => eval(a, v, zero) - eval(b, v, zero),
        CExpr::Mul(a, b) => eval(a, v, zero) * eval(b, v, zero),
    }
}

/// Whether a transition was a cheese move attempt with a free destination,
/// and whether it succeeded.
pub fn cheese_attempt(layout: &WorldLayout, prev: &WorldState, transition: &Transition) -> Option<bool> {
    match *transition {
        Transition::Joint {
            robot,
            cheese,
            cheese_success,
            ..
        } if cheese.is_move() => resolve(layout, prev, robot, cheese, cheese_success)
            .cheese_move_feasible
            .then_some(cheese_success),
        _ => None,
    }
}

fn env_from_counts(attempts: u32, successes: u32) -> f64 {
    if attempts == 0 {
        return 0.0;
    }
    let p = f64::from(successes) / f64::from(attempts);
    -(p - CHEESE_SUCCESS) * (p - CHEESE_SUCCESS)
}

/// `-(p - 0.6)^2` where `p` is the observed cheese success rate; 0 when
/// the cheese never attempted a feasible move.
pub fn env_score(script: &Script) -> f64 {
    let mut attempts = 0;
    let mut successes = 0;
    for (prev, t) in script.states().zip(script.transitions()) {
        if let Some(ok) = cheese_attempt(script.layout(), &prev, t) {
            attempts += 1;
            successes += u32::from(ok);
        }
    }
    env_from_counts(attempts, successes)
}

/// Sum over `t >= 1` of the posterior mass on both characters being rational.
pub fn rational_score(trace: &BeliefTrace, space: &HypothesisSpace) -> f64 {
    let mask = rational_mask(space);
    let mut total = 0.0;
    for step in trace.steps().iter().skip(1) {
        total += step.belief.mass(&mask);
    }
    total
}

/// Running totals for a script prefix. The beam search extends these one
/// transition at a time; [`evaluate`] folds the same updates over a whole
/// trace, so both produce bit-identical scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreState {
    sums: Vec<f64>,
    rational: f64,
    attempts: u32,
    successes: u32,
    zero_mass: u32,
    t: usize,
}

/// Scoring context shared by a whole search or evaluation.
#[derive(Clone, Copy)]
pub struct Scorer<'a> {
    pub objective: &'a CompiledObjective,
    pub cache: &'a PolicyCache,
    pub config: &'a EvalConfig,
    /// `T`, used by time windows and `sin`.
    pub horizon: usize,
}

/// Result of scoring the terminal and continuation parts of a prefix.
#[derive(Debug, Clone, PartialEq)]
struct Tail {
    /// Contribution of each summed item at the continuation step.
    extra: Vec<Option<f64>>,
    terminal: Vec<Option<f64>>,
    zero: Vec<bool>,
    pushed: Option<bool>,
    continuation_step: Option<TraceStep>,
}

impl ScoreState {
    pub fn new(objective: &CompiledObjective) -> Self {
        ScoreState {
            sums: vec![0.0; objective.n_items()],
            rational: 0.0,
            attempts: 0,
            successes: 0,
            zero_mass: 0,
            t: 0,
        }
    }

    /// Number of transitions folded in so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of query terms that hit a zero-mass condition so far.
    pub fn zero_mass_count(&self) -> u32 {
        self.zero_mass
    }

    pub fn attempts(&self) -> (u32, u32) {
        (self.attempts, self.successes)
    }

    /// Folds in transition `t + 1`, whose trace entry is `step`; `attempt`
    /// comes from [`cheese_attempt`]. Returns each summed item's value at
    /// this step (`None` for terminal items) and its zero-mass flag.
    pub fn push(&mut self, scorer: &Scorer<'_>, step: &TraceStep, attempt: Option<bool>) -> Vec<(Option<f64>, bool)> {
        self.t += 1;
        let view = View {
            t: self.t,
            horizon: scorer.horizon,
            step,
            pushed: false,
            floor: scorer.config.zero_mass_floor,
        };
        let mut out = Vec::with_capacity(self.sums.len());
        for (i, item) in scorer.objective.items.iter().enumerate() {
            match item {
                CItem::Sum(e) => {
                    let mut zero = false;
                    let x = eval(e, &view, &mut zero);
                    self.sums[i] += x;
                    self.zero_mass += u32::from(zero);
                    out.push((Some(x), zero));
                }
                CItem::Terminal(..) => out.push((None, false)),
            }
        }
        self.rational += step.belief.mass(&scorer.objective.rational);
        if let Some(ok) = attempt {
            self.attempts += 1;
            self.successes += u32::from(ok);
        }
        out
    }

    fn tail(&self, scorer: &Scorer<'_>, last: &TraceStep) -> Result<Tail, InferenceError> {
        let floor = scorer.config.zero_mass_floor;
        let n = self.sums.len();
        let mut zero = vec![false; n];
        let mut extra = vec![None; n];
        let (final_step, t, pushed, continuation_step) = match scorer.objective.continuation() {
            Some((robot, cheese)) => {
                let layout = scorer.cache.layout();
                let outcome = resolve(layout, &last.state, robot, cheese, true);
                let transition = Transition::Joint {
                    robot,
                    cheese,
                    cheese_success: cheese.is_move() && outcome.cheese_move_feasible,
                    next: outcome.next,
                };
                let step = advance(
                    scorer.cache,
                    &scorer.objective.rational,
                    last,
                    &transition,
                    scorer.config.epsilon,
                )?;
                (Some(step.clone()), self.t + 1, Some(outcome.pushed_cheese), Some(step))
            }
            None => (None, self.t, None, None),
        };
        let final_step = final_step.as_ref().unwrap_or(last);
        let view = View {
            t,
            horizon: scorer.horizon,
            step: final_step,
            pushed: pushed.unwrap_or(false),
            floor,
        };
        let mut terminal = vec![None; n];
        for (i, item) in scorer.objective.items.iter().enumerate() {
            match item {
                CItem::Sum(e) if continuation_step.is_some() => {
                    extra[i] = Some(eval(e, &view, &mut zero[i]));
                }
                CItem::Sum(_) => {}
                CItem::Terminal(w, e) => {
                    terminal[i] = Some(w * eval(e, &view, &mut zero[i]));
                }
            }
        }
        Ok(Tail {
            extra,
            terminal,
            zero,
            pushed,
            continuation_step,
        })
    }

    fn combine(&self, scorer: &Scorer<'_>, tail: &Tail) -> (Vec<f64>, f64, f64, f64) {
        let items: Vec<f64> = (0..self.sums.len())
            .map(|i| match (tail.terminal[i], tail.extra[i]) {
                (Some(x), _) => x,
                (None, Some(x)) => self.sums[i] + x,
                (None, None) => self.sums[i],
            })
            .collect();
        let artist: f64 = items.iter().sum();
        let env = env_from_counts(self.attempts, self.successes);
        let total = artist + scorer.config.rational_weight * self.rational + scorer.config.env_weight * env;
        (items, artist, env, total)
    }

    /// Full objective value of the prefix ending at `last`.
    pub fn score(&self, scorer: &Scorer<'_>, last: &TraceStep) -> Result<f64, InferenceError> {
        let tail = self.tail(scorer, last)?;
        Ok(self.combine(scorer, &tail).3)
    }
}

/// A term's zero-mass event: item index and timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroMassFlag {
    pub item: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub total: f64,
    /// `(t, contribution)`; summed items list every step, terminal items one.
    pub per_step: Vec<(usize, f64)>,
}

/// A score with its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub total: f64,
    pub artist: f64,
    pub items: Vec<ItemScore>,
    /// Unweighted rationality term.
    pub rational: f64,
    pub rational_per_step: Vec<f64>,
    /// Unweighted environment-consistency term.
    pub env: f64,
    pub cheese_attempts: u32,
    pub cheese_successes: u32,
    pub zero_mass: Vec<ZeroMassFlag>,
    /// Whether the continuation pushed the cheese, when there is one.
    pub continuation_pushed: Option<bool>,
}

/// Scores a script against its belief trace with `horizon` as `T`.
pub fn evaluate(scorer: &Scorer<'_>, script: &Script, trace: &BeliefTrace) -> Result<ScoreBreakdown, ObjectiveError> {
    if trace.len() != script.len() + 1 {
        return Err(ObjectiveError::TraceMismatch {
            script: script.len(),
            trace: trace.len(),
        });
    }
    let objective = scorer.objective;
    let n = objective.n_items();
    let mut state = ScoreState::new(objective);
    let mut items: Vec<ItemScore> = (0..n)
        .map(|_| ItemScore {
            total: 0.0,
            per_step: Vec::new(),
        })
        .collect();
    let mut zero_mass = Vec::new();
    let mut rational_per_step = Vec::with_capacity(script.len());
    for (t, (prev, transition)) in script.states().zip(script.transitions()).enumerate() {
        let attempt = cheese_attempt(script.layout(), &prev, transition);
        let step = trace.step(t + 1);
        for (i, (x, zero)) in state.push(scorer, step, attempt).into_iter().enumerate() {
            if let Some(x) = x {
                items[i].per_step.push((t + 1, x));
            }
            if zero {
                zero_mass.push(ZeroMassFlag { item: i, t: t + 1 });
            }
        }
        rational_per_step.push(step.belief.mass(&objective.rational));
    }
    let last = trace.step(script.len());
    let tail = state.tail(scorer, last)?;
    let t_tail = script.len() + usize::from(tail.continuation_step.is_some());
    for (i, item) in items.iter_mut().enumerate() {
        if let Some(x) = tail.extra[i].or(tail.terminal[i]) {
            item.per_step.push((t_tail, x));
        }
        if tail.zero[i] {
            zero_mass.push(ZeroMassFlag { item: i, t: t_tail });
        }
    }
    let (totals, artist, env, total) = state.combine(scorer, &tail);
    for (item, x) in items.iter_mut().zip(totals) {
        item.total = x;
    }
    Ok(ScoreBreakdown {
        total,
        artist,
        items,
        rational: state.rational,
        rational_per_step,
        env,
        cheese_attempts: state.attempts,
        cheese_successes: state.successes,
        zero_mass,
        continuation_pushed: tail.pushed,
    })
}
