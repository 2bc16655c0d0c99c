//! The audience model: an exact posterior over hypotheses, updated by Bayes'
//! rule after every observed transition and mixed toward uniform to model
//! forgetting.

mod hypothesis;

pub use hypothesis::{build_hypothesis_space, Hypothesis, HypothesisSpace, SpaceMode, RHO_VALUES};

use thiserror::Error;

use crate::planner::{Agent, PlannerError, PolicyCache};
use crate::world::{Script, Transition, WorldState};

/// Per-turn probability that every latent is redrawn uniformly.
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("observation has zero probability under every hypothesis")]
    ImpossibleObservation,
    #[error("conditioning event has zero probability")]
    ZeroMass,
    #[error("KL divergence undefined: next belief is zero where previous is positive (hypothesis {index})")]
    SupportMismatch { index: usize },
    #[error("belief has {found} entries but the hypothesis space has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("at step {t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<InferenceError>,
    },
}

/// A normalized probability per hypothesis, in hypothesis-space order.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Wraps raw probabilities after normalizing them.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, InferenceError> {
        let total: f64 = weights.iter().sum();
        if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || weights.iter().any(|w| *w < 0.0 || !w.is_finite())
        {
            return Err(InferenceError::ZeroMass);
        }
        Ok(Belief {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mass on hypotheses selected by `mask`.
    pub fn mass(&self, mask: &[bool]) -> f64 {
        self.probs.iter().zip(mask).filter(|(_, m)| **m).map(|(p, _)| p).sum()
    }

    /// Total-variation distance to the uniform distribution.
    pub fn distance_to_uniform(&self) -> f64 {
        let u = 1.0 / self.probs.len() as f64;
        0.5 * self.probs.iter().map(|p| (p - u).abs()).sum::<f64>()
    }
}

pub fn uniform_prior(space: &HypothesisSpace) -> Belief {
    let n = space.len();
    Belief {
        probs: vec![1.0 / n as f64; n],
    }
}

/// `p(H) -> p(H)(1 - eps) + (1 - p(H)) eps / (N - 1)`.
pub fn forget(belief: &Belief, epsilon: f64) -> Belief {
    let n = belief.probs.len();
    if n < 2 || epsilon == 0.0 {
        return belief.clone();
    }
    let spread = epsilon / (n - 1) as f64;
    Belief {
        probs: belief
            .probs
            .iter()
            .map(|p| p * (1.0 - epsilon) + (1.0 - p) * spread)
            .collect(),
    }
}

/// Bayes update for one transition from the state with index `prev_index`.
///
/// The cheese's success flag is hypothesis-independent and cancels, so
/// only the two chosen actions enter the likelihood. Deus transitions carry
/// no evidence and only apply forgetting.
pub fn observe_indexed(
    belief: &Belief,
    cache: &PolicyCache,
    prev_index: usize,
    transition: &Transition,
    epsilon: f64,
) -> Result<Belief, InferenceError> {
    if belief.len() != cache.len() {
        return Err(InferenceError::SizeMismatch {
            expected: cache.len(),
            found: belief.len(),
        });
    }
    let (robot, cheese) = match *transition {
        Transition::Deus { .. } => return Ok(forget(belief, epsilon)),
        Transition::Joint { robot, cheese, .. } => (robot, cheese),
    };
    let mut logw: Vec<f64> = belief
        .probs
        .iter()
        .enumerate()
        .map(|(h, p)| {
            p.ln()
                + cache.log_likelihood(h, Agent::Robot, prev_index, robot)
                + cache.log_likelihood(h, Agent::Cheese, prev_index, cheese)
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(InferenceError::ImpossibleObservation);
    }
    let mut total = 0.0;
    for w in &mut logw {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in &mut logw {
        *w /= total;
    }
    Ok(forget(&Belief { probs: logw }, epsilon))
}

/// [`observe_indexed`] by state value.
pub fn observe(
    belief: &Belief,
    cache: &PolicyCache,
    prev_state: &WorldState,
    transition: &Transition,
    epsilon: f64,
) -> Result<Belief, InferenceError> {
    let prev = cache.state_index(prev_state)?;
    observe_indexed(belief, cache, prev, transition, epsilon)
}

/// `P(pred | cond)` over hypothesis masks.
pub fn query_mask(belief: &Belief, pred: &[bool], cond: Option<&[bool]>) -> Result<f64, InferenceError> {
    let (num, den) = belief
        .probs
        .iter()
        .enumerate()
        .filter(|(h, _)| cond.is_none_or(|c| c[*h]))
        .fold((0.0, 0.0), |(num, den), (h, p)| {
            (if pred[h] { num + p } else { num }, den + p)
        });
    if cond.is_some() && den.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(InferenceError::ZeroMass);
    }
    Ok(if cond.is_some() { num / den } else { num })
}

/// `P(pred | cond)` with predicates over hypotheses.
pub fn query(
    belief: &Belief,
    space: &HypothesisSpace,
    pred: impl Fn(&Hypothesis) -> bool,
    cond: Option<&dyn Fn(&Hypothesis) -> bool>,
) -> Result<f64, InferenceError> {
    let pred = space.mask(pred);
    let cond = cond.map(|c| space.mask(c));
    query_mask(belief, &pred, cond.as_deref())
}

/// `E[V^H_robot(state) | cond]`. Hypotheses under which the robot is
/// irrational have no value function and are left out.
pub fn expected_robot_value_indexed(
    belief: &Belief,
    cache: &PolicyCache,
    state: usize,
    cond: &[bool],
) -> Result<f64, InferenceError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (h, p) in belief.probs.iter().enumerate() {
        if !cond[h] {
            continue;
        }
        if let Some(v) = cache.robot_value(h, state) {
            num += p * v;
            den += p;
        }
    }
    if den.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(InferenceError::ZeroMass);
    }
    Ok(num / den)
}

pub fn expected_robot_value(
    belief: &Belief,
    cache: &PolicyCache,
    state: &WorldState,
    cond: impl Fn(&Hypothesis) -> bool,
) -> Result<f64, InferenceError> {
    let s = cache.state_index(state)?;
    expected_robot_value_indexed(belief, cache, s, &cache.hypotheses().mask(cond))
}

/// `D_KL(prev || next)` in nats.
pub fn kl_divergence(prev: &Belief, next: &Belief) -> Result<f64, InferenceError> {
    if prev.len() != next.len() {
        return Err(InferenceError::SizeMismatch {
            expected: prev.len(),
            found: next.len(),
        });
    }
    let mut total = 0.0;
    for (i, (p, q)) in prev.probs.iter().zip(&next.probs).enumerate() {
        if *p == 0.0 {
            continue;
        }
        if *q <= 0.0 {
            return Err(InferenceError::SupportMismatch { index: i });
        }
        total += p * (p / q).ln();
    }
    Ok(total.max(0.0))
}

/// One observed timestep of a belief trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub belief: Belief,
    pub state: WorldState,
    pub state_index: usize,
    /// `E[V_robot]` conditioned on both characters being rational; `None`
    /// when that event has zero mass.
    pub ev_robot: Option<f64>,
    /// KL from the previous belief; 0 at `t = 0`.
    pub kl: f64,
}

/// Observes `transition` after `prev` and records everything objectives read.
pub fn advance(
    cache: &PolicyCache,
    rational: &[bool],
    prev: &TraceStep,
    transition: &Transition,
    epsilon: f64,
) -> Result<TraceStep, InferenceError> {
    let belief = observe_indexed(&prev.belief, cache, prev.state_index, transition, epsilon)?;
    let state = transition.next();
    let state_index = cache.state_index(&state)?;
    let kl = kl_divergence(&prev.belief, &belief)?;
    let ev_robot = expected_robot_value_indexed(&belief, cache, state_index, rational).ok();
    Ok(TraceStep {
        belief,
        state,
        state_index,
        ev_robot,
        kl,
    })
}

/// Mask of hypotheses where both characters are rational.
pub fn rational_mask(space: &HypothesisSpace) -> Vec<bool> {
    space.mask(Hypothesis::is_rational_pair)
}

/// The first entry of every trace: the uniform prior at the initial state.
pub fn initial_step(cache: &PolicyCache, state: &WorldState) -> Result<TraceStep, InferenceError> {
    let belief = uniform_prior(cache.hypotheses());
    let state_index = cache.state_index(state)?;
    let rational = rational_mask(cache.hypotheses());
    let ev_robot = expected_robot_value_indexed(&belief, cache, state_index, &rational).ok();
    Ok(TraceStep {
        belief,
        state: *state,
        state_index,
        ev_robot,
        kl: 0.0,
    })
}

/// Posterior series over `t = 0..=T` for one script.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrace {
    steps: Vec<TraceStep>,
}

impl BeliefTrace {
    pub fn start(cache: &PolicyCache, initial: &WorldState) -> Result<Self, InferenceError> {
        Ok(BeliefTrace {
            steps: vec![initial_step(cache, initial)?],
        })
    }

    /// Wraps precomputed steps; `None` if there are none.
    pub fn from_steps(steps: Vec<TraceStep>) -> Option<Self> {
        (!steps.is_empty()).then_some(BeliefTrace { steps })
    }

    /// Observes one more transition.
    pub fn extend(&mut self, cache: &PolicyCache, transition: &Transition, epsilon: f64) -> Result<(), InferenceError> {
        let rational = rational_mask(cache.hypotheses());
        let t = self.steps.len();
        let last = self.steps.last().expect("traces are never empty");
        let next = advance(cache, &rational, last, transition, epsilon)
            .map_err(|e| InferenceError::AtStep { t, source: Box::new(e) })?;
        self.steps.push(next);
        Ok(())
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn step(&self, t: usize) -> &TraceStep {
        &self.steps[t]
    }

    /// Number of entries, `T + 1`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn final_belief(&self) -> &Belief {
        &self.steps.last().expect("traces are never empty").belief
    }
}

/// Folds `observe` over a script from the uniform prior.
pub fn trace(script: &Script, cache: &PolicyCache, epsilon: f64) -> Result<BeliefTrace, InferenceError> {
    let mut out = BeliefTrace::start(cache, &script.initial())?;
    for t in script.transitions() {
        out.extend(cache, t, epsilon)?;
    }
    Ok(out)
}
