//! Optimizes a builtin objective on the kitchen and prints the belief trace.
//!
//! Usage: `kitchen_stories <objective> [seed] [starts] [beam] [cache-file]`

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::time::Instant;

use storyplan::inference::{build_hypothesis_space, query_mask, trace};
use storyplan::objectives::{builtin, CompiledObjective, EvalConfig};
use storyplan::optimizer::{optimize, SearchConfig};
use storyplan::planner::{build_policy_cache, load_cache, save_cache, CacheKey, PlannerConfig, PolicyCache};
use storyplan::world::{parse_layout, RewardParams, WorldLayout};
use storyplan::KITCHEN_MAP;

fn cache_for(layout: &WorldLayout, path: Option<&str>) -> PolicyCache {
    let hyps = build_hypothesis_space();
    let params = RewardParams::default();
    let config = PlannerConfig::default();
    if let Some(path) = path {
        if let Ok(file) = File::open(path) {
            let key = CacheKey::new(layout, params, config, hyps.mode());
            match load_cache(layout, &key, BufReader::new(file)) {
                Ok(cache) => return cache,
                Err(e) => eprintln!("ignoring cache file: {e}"),
            }
        }
    }
    let cache = build_policy_cache(layout, &hyps, &params, &config).expect("planning converges");
    if let Some(path) = path {
        save_cache(&cache, BufWriter::new(File::create(path).expect("create cache file"))).expect("write cache");
    }
    cache
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("help", String::as_str);
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().expect("seed"));
    let starts: usize = args.get(3).map_or(500, |s| s.parse().expect("starts"));
    let beam: usize = args.get(4).map_or(1, |s| s.parse().expect("beam"));
    let layout = parse_layout(KITCHEN_MAP).expect("shipped map parses");
    let cache = cache_for(&layout, args.get(5).map(String::as_str));

    let objective = CompiledObjective::compile(&builtin(name).expect("builtin"), cache.hypotheses());
    let config = SearchConfig {
        rng_seed: seed,
        n_initial_states: starts,
        beam_width: beam,
        deus_enabled: name == "arc",
        ..SearchConfig::default()
    };
    let eval = EvalConfig::default();
    let started = Instant::now();
    let result = optimize(&layout, &objective, &cache, &eval, &config, None).expect("search succeeds");
    println!("{name}: score {:.4} in {:.1?}", result.score(), started.elapsed());

    let space = cache.hypotheses();
    let rational = space.mask(|h| h.is_rational_pair());
    let helping = space.mask(|h| h.rho > 0);
    let hindering = space.mask(|h| h.rho < 0);
    let tr = trace(&result.best, &cache, eval.epsilon).expect("trace");
    println!("initial {:?}", result.best.initial());
    for (t, step) in tr.steps().iter().enumerate() {
        let up = query_mask(&step.belief, &helping, Some(&rational)).unwrap();
        let down = query_mask(&step.belief, &hindering, Some(&rational)).unwrap();
        let action = if t == 0 {
            String::new()
        } else {
            format!("{:?}", result.best.transitions()[t - 1].encoding())
        };
        println!(
            "t={t:2} {action:16} help {up:.3} hinder {down:.3} ev {:?} kl {:.4}",
            step.ev_robot, step.kl
        );
    }
    println!(
        "env {:.4} ({} of {}), rational {:.3}",
        result.breakdown.env,
        result.breakdown.cheese_successes,
        result.breakdown.cheese_attempts,
        result.breakdown.rational
    );
}
