//! Value iteration for both characters and the softmax action likelihoods
//! the audience model inverts.
//!
//! The cheese plans against a robot that acts uniformly at random. The robot
//! plans against the cheese's softmax policy, so the robot models the cheese
//! modelling the robot. Both agents' MDPs exclude deus transitions.

mod persist;

pub use persist::{load_cache, save_cache, CacheFileError, CacheKey};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::inference::{Hypothesis, HypothesisSpace};
use crate::world::{
    reward, step, AgentAction, RewardParams, RewardParamsError, StateSpace, Tile, WorldLayout, WorldState,
};

/// Probability that an attempted cheese move goes through.
pub const CHEESE_SUCCESS: f64 = 0.6;

const N_ACTIONS: usize = AgentAction::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub gamma: f64,
    pub beta: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: 0.99,
            beta: 2.0,
            residual_tol: 1e-6,
            max_iterations: 2000,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.residual_tol > 0.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(PlannerError::InvalidConfig(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Robot,
    Cheese,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("value iteration did not converge in {iterations} sweeps (final residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid planner configuration {0:?}")]
    InvalidConfig(PlannerConfig),
    #[error(transparent)]
    InvalidParams(#[from] RewardParamsError),
    #[error("planning failed for hypothesis {hypothesis}: {source}")]
    Hypothesis {
        hypothesis: Hypothesis,
        #[source]
        source: Box<PlannerError>,
    },
    #[error("hypothesis {0} is not in the policy cache")]
    UnknownHypothesis(Hypothesis),
    #[error("state {0:?} is not in the planner's state space")]
    UnknownState(WorldState),
}

/// Expected discounted return per `(state, action)` for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, state: usize, action: AgentAction) -> f64 {
        self.values[state * N_ACTIONS + action.index()]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * N_ACTIONS..(state + 1) * N_ACTIONS]
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / N_ACTIONS
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Converged planning output for one agent under one goal setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan {
    pub q: QTable,
    pub v: ValueFunction,
    log_policy: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl AgentPlan {
    fn new(q: Vec<f64>, v: Vec<f64>, residual: f64, iterations: usize, beta: f64) -> Self {
        let mut log_policy = vec![0.0; q.len()];
        for (qs, out) in q.chunks_exact(N_ACTIONS).zip(log_policy.chunks_exact_mut(N_ACTIONS)) {
            log_softmax_into(qs, beta, out);
        }
        AgentPlan {
            q: QTable { values: q },
            v: ValueFunction { values: v },
            log_policy,
            residual,
            iterations,
        }
    }

    /// `ln p(action | state)` under the softmax policy.
    pub fn log_policy(&self, state: usize, action: AgentAction) -> f64 {
        self.log_policy[state * N_ACTIONS + action.index()]
    }

    pub fn policy(&self, state: usize) -> [f64; N_ACTIONS] {
        let row = &self.log_policy[state * N_ACTIONS..(state + 1) * N_ACTIONS];
        std::array::from_fn(|i| row[i].exp())
    }
}

/// Numerically stable `beta * q - logsumexp(beta * q)`, shifted by the max.
pub fn log_softmax_into(q: &[f64], beta: f64, out: &mut [f64]) {
    let max = q.iter().map(|x| beta * x).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = q.iter().map(|x| (beta * x - max).exp()).sum();
    let log_z = z.ln();
    for (o, x) in out.iter_mut().zip(q) {
        *o = (beta * x - max) - log_z;
    }
}

pub fn softmax(q: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    log_softmax_into(q, beta, &mut out);
    out.iter_mut().for_each(|x| *x = x.exp());
    out
}

/// Successor table for every `(state, robot action, cheese action)`, with
/// the failed and successful cheese outcomes.
#[derive(Debug, Clone)]
pub struct JointDynamics {
    space: Arc<StateSpace>,
    next: Vec<[u32; 2]>,
}

impl JointDynamics {
    pub fn new(space: Arc<StateSpace>) -> Self {
        let layout = space.layout().clone();
        let mut next = Vec::with_capacity(space.len() * N_ACTIONS * N_ACTIONS);
        for s in space.states() {
            for ar in AgentAction::ALL {
                for ac in AgentAction::ALL {
                    let idx = |ok: bool| {
                        let n = step(&layout, s, ar, ac, ok);
                        space.index(&n).expect("state space is closed under the dynamics") as u32
                    };
                    next.push([idx(false), idx(true)]);
                }
            }
        }
        JointDynamics { space, next }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    /// `[next if the cheese fails, next if it succeeds]`.
    pub fn outcomes(&self, state: usize, robot: AgentAction, cheese: AgentAction) -> [u32; 2] {
        self.next[(state * N_ACTIONS + robot.index()) * N_ACTIONS + cheese.index()]
    }
}

/// One agent's MDP with the other agent marginalised out, in CSR form.
struct SparseMdp {
    reward: Vec<f64>,
    offsets: Vec<u32>,
    next: Vec<u32>,
    weight: Vec<f64>,
}

impl SparseMdp {
    fn with_capacity(n_states: usize) -> Self {
        let pairs = n_states * N_ACTIONS;
        SparseMdp {
            reward: Vec::with_capacity(pairs),
            offsets: {
                let mut o = Vec::with_capacity(pairs + 1);
                o.push(0);
                o
            },
            next: Vec::with_capacity(pairs * 8),
            weight: Vec::with_capacity(pairs * 8),
        }
    }

    /// Closes one `(state, action)` row; duplicate successors are merged.
    fn push_row(&mut self, expected_reward: f64, outcomes: &[(u32, f64)]) {
        let start = self.next.len();
        for &(n, w) in outcomes {
            if w == 0.0 {
                continue;
            }
            match self.next[start..].iter().position(|x| *x == n) {
                Some(i) => self.weight[start + i] += w,
                None => {
                    self.next.push(n);
                    self.weight.push(w);
                }
            }
        }
        self.reward.push(expected_reward);
        self.offsets.push(self.next.len() as u32);
    }

    fn backup(&self, pair: usize, gamma: f64, v: &[f64]) -> f64 {
        let (a, b) = (self.offsets[pair] as usize, self.offsets[pair + 1] as usize);
        let mut acc = 0.0;
        for k in a..b {
            acc += self.weight[k] * v[self.next[k] as usize];
        }
        self.reward[pair] + gamma * acc
    }

    /// Synchronous full-sweep value iteration.
    fn solve(&self, config: &PlannerConfig) -> Result<AgentPlan, PlannerError> {
        let n = self.reward.len() / N_ACTIONS;
        let mut v = vec![0.0; n];
        let mut fresh = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < config.max_iterations {
            iterations += 1;
            residual = 0.0;
            for (s, out) in fresh.iter_mut().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for a in 0..N_ACTIONS {
                    best = best.max(self.backup(s * N_ACTIONS + a, config.gamma, &v));
                }
                residual = residual.max((best - v[s]).abs());
                *out = best;
            }
            std::mem::swap(&mut v, &mut fresh);
            if residual <= config.residual_tol {
                let q: Vec<f64> = (0..n * N_ACTIONS).map(|p| self.backup(p, config.gamma, &v)).collect();
                return Ok(AgentPlan::new(q, v, residual, iterations, config.beta));
            }
        }
        Err(PlannerError::NonConvergence { iterations, residual })
    }
}

/// Placeholder latents for reward evaluation when only some fields matter.
fn cheese_only(g_cheese: Tile) -> Hypothesis {
    Hypothesis::rational(g_cheese, None, 0)
}

/// The cheese's plan, assuming the robot picks each action with probability 1/5.
pub fn plan_cheese(
    dynamics: &JointDynamics,
    g_cheese: Tile,
    params: &RewardParams,
    config: &PlannerConfig,
) -> Result<AgentPlan, PlannerError> {
    params.validate()?;
    config.validate()?;
    let space = dynamics.space();
    let layout = space.layout();
    let h = cheese_only(g_cheese);
    let mut mdp = SparseMdp::with_capacity(space.len());
    let mut outcomes = Vec::with_capacity(2 * N_ACTIONS);
    for s in 0..space.len() {
        for ac in AgentAction::ALL {
            outcomes.clear();
            let mut expected = 0.0;
            for ar in AgentAction::ALL {
                let [fail, ok] = dynamics.outcomes(s, ar, ac);
                for (n, p) in [(fail, 1.0 - CHEESE_SUCCESS), (ok, CHEESE_SUCCESS)] {
                    let w = p / N_ACTIONS as f64;
                    let (rc, _) = reward(layout, &space.state(n as usize), ar.is_move(), ac.is_move(), &h, params);
                    expected += w * rc;
                    outcomes.push((n, w));
                }
            }
            mdp.push_row(expected, &outcomes);
        }
    }
    mdp.solve(config)
}

/// How the robot expects the cheese to act.
#[derive(Debug, Clone, Copy)]
pub enum CheeseModel<'a> {
    Uniform,
    Softmax(&'a AgentPlan),
}

/// The robot's plan under `hypothesis`, against the given cheese model.
/// The robot's reward includes `rho * r_cheese`.
pub fn plan_robot(
    dynamics: &JointDynamics,
    hypothesis: &Hypothesis,
    cheese: CheeseModel<'_>,
    params: &RewardParams,
    config: &PlannerConfig,
) -> Result<AgentPlan, PlannerError> {
    params.validate()?;
    config.validate()?;
    let space = dynamics.space();
    let layout = space.layout();
    let mut mdp = SparseMdp::with_capacity(space.len());
    let mut outcomes = Vec::with_capacity(2 * N_ACTIONS);
    for s in 0..space.len() {
        let pi = match cheese {
            CheeseModel::Uniform => [1.0 / N_ACTIONS as f64; N_ACTIONS],
            CheeseModel::Softmax(plan) => plan.policy(s),
        };
        for ar in AgentAction::ALL {
            outcomes.clear();
            let mut expected = 0.0;
            for ac in AgentAction::ALL {
                let [fail, ok] = dynamics.outcomes(s, ar, ac);
                for (n, p) in [(fail, 1.0 - CHEESE_SUCCESS), (ok, CHEESE_SUCCESS)] {
                    let w = p * pi[ac.index()];
                    let (_, rr) = reward(
                        layout,
                        &space.state(n as usize),
                        ar.is_move(),
                        ac.is_move(),
                        hypothesis,
                        params,
                    );
                    expected += w * rr;
                    outcomes.push((n, w));
                }
            }
            mdp.push_row(expected, &outcomes);
        }
    }
    mdp.solve(config)
}

/// Where an agent's policy comes from under one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySource {
    /// Irrational agent: every action has probability 1/5.
    Uniform,
    /// Index into the cache's plans for that agent.
    Planned(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheEntry {
    pub cheese: PolicySource,
    pub robot: PolicySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RobotKey {
    g_robot: Option<Tile>,
    rho: i8,
    cheese: Option<Tile>,
}

impl RobotKey {
    fn hypothesis(&self) -> Hypothesis {
        Hypothesis::rational(self.cheese.unwrap_or(Tile::Pink), self.g_robot, self.rho)
    }
}

/// Immutable per-hypothesis plans, shared read-only by inference and search.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    space: Arc<StateSpace>,
    hypotheses: HypothesisSpace,
    params: RewardParams,
    config: PlannerConfig,
    cheese_plans: Vec<AgentPlan>,
    robot_plans: Vec<AgentPlan>,
    entries: Vec<CacheEntry>,
}

/// Plans every hypothesis over the full state space of `layout`.
pub fn build_policy_cache(
    layout: &WorldLayout,
    hypotheses: &HypothesisSpace,
    params: &RewardParams,
    config: &PlannerConfig,
) -> Result<PolicyCache, PlannerError> {
    let space = Arc::new(StateSpace::build(Arc::new(layout.clone()), true));
    PolicyCache::build(space, hypotheses, params, config)
}

impl PolicyCache {
    pub fn build(
        space: Arc<StateSpace>,
        hypotheses: &HypothesisSpace,
        params: &RewardParams,
        config: &PlannerConfig,
    ) -> Result<Self, PlannerError> {
        params.validate()?;
        config.validate()?;
        let dynamics = JointDynamics::new(space.clone());

        let mut cheese_keys: Vec<Tile> = Vec::new();
        let mut robot_keys: Vec<RobotKey> = Vec::new();
        let mut slots = Vec::with_capacity(hypotheses.len());
        for h in hypotheses.hypotheses() {
            let cheese = h.r_cheese.then(|| intern(&mut cheese_keys, h.g_cheese));
            let robot = h.r_robot.then(|| {
                intern(
                    &mut robot_keys,
                    RobotKey {
                        g_robot: h.g_robot,
                        rho: h.rho,
                        cheese: h.r_cheese.then_some(h.g_cheese),
                    },
                )
            });
            slots.push((cheese, robot));
        }

        let blame = |pred: &dyn Fn(&Hypothesis) -> bool, err: PlannerError| {
            let hypothesis = *hypotheses
                .hypotheses()
                .iter()
                .find(|h| pred(h))
                .expect("every plan key comes from a hypothesis");
            PlannerError::Hypothesis {
                hypothesis,
                source: Box::new(err),
            }
        };

        let cheese_plans: Vec<AgentPlan> = cheese_keys
            .par_iter()
            .map(|&g| {
                plan_cheese(&dynamics, g, params, config)
                    .map_err(|e| blame(&|h: &Hypothesis| h.r_cheese && h.g_cheese == g, e))
            })
            .collect::<Result<_, _>>()?;

        let robot_plans: Vec<AgentPlan> = robot_keys
            .par_iter()
            .map(|key| {
                let model = match key.cheese {
                    Some(g) => {
                        let i = cheese_keys.iter().position(|k| *k == g).expect("cheese plan exists");
                        CheeseModel::Softmax(&cheese_plans[i])
                    }
                    None => CheeseModel::Uniform,
                };
                plan_robot(&dynamics, &key.hypothesis(), model, params, config).map_err(|e| {
                    blame(
                        &|h: &Hypothesis| {
                            h.r_robot
                                && h.g_robot == key.g_robot
                                && h.rho == key.rho
                                && h.r_cheese == key.cheese.is_some()
                        },
                        e,
                    )
                })
            })
            .collect::<Result<_, _>>()?;

        let source = |slot: Option<usize>| slot.map_or(PolicySource::Uniform, PolicySource::Planned);
        let entries = slots
            .into_iter()
            .map(|(c, r)| CacheEntry {
                cheese: source(c),
                robot: source(r),
            })
            .collect();

        Ok(PolicyCache {
            space,
            hypotheses: hypotheses.clone(),
            params: *params,
            config: *config,
            cheese_plans,
            robot_plans,
            entries,
        })
    }

    pub fn state_space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn layout(&self) -> &Arc<WorldLayout> {
        self.space.layout()
    }

    pub fn hypotheses(&self) -> &HypothesisSpace {
        &self.hypotheses
    }

    pub fn params(&self) -> &RewardParams {
        &self.params
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, hypothesis: usize) -> CacheEntry {
        self.entries[hypothesis]
    }

    pub fn state_index(&self, state: &WorldState) -> Result<usize, PlannerError> {
        self.space.index(state).ok_or(PlannerError::UnknownState(*state))
    }

    /// The plan backing `agent` under hypothesis `index`, or `None` for an
    /// irrational agent.
    pub fn plan(&self, hypothesis: usize, agent: Agent) -> Option<&AgentPlan> {
        let entry = self.entries[hypothesis];
        match agent {
            Agent::Cheese => match entry.cheese {
                PolicySource::Planned(i) => Some(&self.cheese_plans[i]),
                PolicySource::Uniform => None,
            },
            Agent::Robot => match entry.robot {
                PolicySource::Planned(i) => Some(&self.robot_plans[i]),
                PolicySource::Uniform => None,
            },
        }
    }

    /// `ln p(action | hypothesis, state)` by indices.
    pub fn log_likelihood(&self, hypothesis: usize, agent: Agent, state: usize, action: AgentAction) -> f64 {
        match self.plan(hypothesis, agent) {
            Some(plan) => plan.log_policy(state, action),
            None => -(N_ACTIONS as f64).ln(),
        }
    }

    /// `V^H_robot(state)`, or `None` when the robot is irrational under `H`.
    pub fn robot_value(&self, hypothesis: usize, state: usize) -> Option<f64> {
        self.plan(hypothesis, Agent::Robot).map(|p| p.v.get(state))
    }

    /// Largest final Bellman residual over all plans.
    pub fn max_residual(&self) -> f64 {
        self.cheese_plans
            .iter()
            .chain(&self.robot_plans)
            .map(|p| p.residual)
            .fold(0.0, f64::max)
    }

    pub(crate) fn plans(&self) -> (&[AgentPlan], &[AgentPlan]) {
        (&self.cheese_plans, &self.robot_plans)
    }

    pub(crate) fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub(crate) fn from_parts(
        space: Arc<StateSpace>,
        hypotheses: HypothesisSpace,
        params: RewardParams,
        config: PlannerConfig,
        cheese_plans: Vec<AgentPlan>,
        robot_plans: Vec<AgentPlan>,
        entries: Vec<CacheEntry>,
    ) -> Self {
        PolicyCache {
            space,
            hypotheses,
            params,
            config,
            cheese_plans,
            robot_plans,
            entries,
        }
    }

    /// SHA-256 over the serialized cache, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        save_cache(self, &mut hasher).expect("hashing never fails");
        hex::encode(hasher.finalize())
    }
}

fn intern<T: PartialEq + Copy>(keys: &mut Vec<T>, key: T) -> usize {
    match keys.iter().position(|k| *k == key) {
        Some(i) => i,
        None => {
            keys.push(key);
            keys.len() - 1
        }
    }
}

/// Softmax likelihood of `action` for `agent` (Boltzmann rationality), or
/// exactly 1/5 when `hypothesis` marks the agent irrational.
pub fn action_likelihood(
    cache: &PolicyCache,
    hypothesis: &Hypothesis,
    agent: Agent,
    state: &WorldState,
    action: AgentAction,
) -> Result<f64, PlannerError> {
    let h = cache
        .hypotheses()
        .index_of(hypothesis)
        .ok_or(PlannerError::UnknownHypothesis(*hypothesis))?;
    let s = cache.state_index(state)?;
    Ok(match cache.plan(h, agent) {
        Some(plan) => softmax(plan.q.row(s), cache.config().beta)[action.index()],
        None => 1.0 / N_ACTIONS as f64,
    })
}
