//! Builds the policy cache for the shipped kitchen and reports convergence.

use std::time::Instant;

use storyplan::inference::build_hypothesis_space;
use storyplan::planner::{build_policy_cache, Agent, PlannerConfig};
use storyplan::world::{parse_layout, RewardParams};
use storyplan::KITCHEN_MAP;

fn main() {
    let layout = parse_layout(KITCHEN_MAP).expect("shipped map parses");
    let start = Instant::now();
    let cache = build_policy_cache(
        &layout,
        &build_hypothesis_space(),
        &RewardParams::default(),
        &PlannerConfig::default(),
    )
    .expect("planning converges");
    println!(
        "{} states, {} hypotheses, built in {:.1?}",
        cache.state_space().len(),
        cache.len(),
        start.elapsed()
    );
    for (i, h) in cache.hypotheses().hypotheses().iter().enumerate() {
        if let Some(plan) = cache.plan(i, Agent::Robot) {
            println!("{h}: {} sweeps, residual {:.2e}", plan.iterations, plan.residual);
        }
    }
}
