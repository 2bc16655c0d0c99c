use std::sync::OnceLock;

use super::*;
use crate::inference::build_hypothesis_space;
use crate::objectives::{builtin, parse_objective, EvalConfig};
use crate::planner::{build_policy_cache, PlannerConfig};
use crate::world::{parse_layout, RewardParams, Tile};

const ROOM: &str = "P...\n.#..\n...G\n";

fn cache() -> &'static PolicyCache {
    static CACHE: OnceLock<PolicyCache> = OnceLock::new();
    CACHE.get_or_init(|| {
        build_policy_cache(
            &parse_layout(ROOM).unwrap(),
            &build_hypothesis_space(),
            &RewardParams::default(),
            &PlannerConfig::default(),
        )
        .unwrap()
    })
}

fn run(objective: &str, config: &SearchConfig) -> SearchResult {
    let obj = parse_objective(objective).unwrap();
    let compiled = CompiledObjective::compile(&obj, cache().hypotheses());
    optimize(
        cache().layout(),
        &compiled,
        cache(),
        &EvalConfig::default(),
        config,
        None,
    )
    .unwrap()
}

fn small(seed: u64) -> SearchConfig {
    SearchConfig {
        horizon: 6,
        beam_width: 2,
        n_initial_states: 12,
        rng_seed: seed,
        deus_enabled: false,
    }
}

#[test]
fn sampling_is_deterministic_and_valid() {
    let layout = parse_layout(ROOM).unwrap();
    let a = sample_initial_states(&layout, 200, 7).unwrap();
    assert_eq!(a, sample_initial_states(&layout, 200, 7).unwrap());
    assert_ne!(a, sample_initial_states(&layout, 200, 8).unwrap());
    assert!(a.iter().all(|s| s.is_valid(&layout)));
    let one = sample_initial_states(&layout, 1, 42).unwrap();
    assert_eq!(one, sample_initial_states(&layout, 1, 42).unwrap());
}

#[test]
fn kitchen_samples_keep_the_fixed_table() {
    let kitchen = parse_layout(crate::KITCHEN_MAP).unwrap();
    let states = sample_initial_states(&kitchen, 500, 0).unwrap();
    assert_eq!(states.len(), 500);
    assert!(states.iter().all(|s| s.is_valid(&kitchen)));
    assert!(states.iter().all(|s| s.table == kitchen.start_table()));
    let deus = sample_deus_initial_states(&kitchen, 500, 0).unwrap();
    assert!(deus.iter().all(|s| s.table.is_none() && s.is_valid(&kitchen)));
}

#[test]
fn table_absent_fraction_is_uniform_share() {
    // 11 floor cells: robot and cheese take two, leaving 9 cells plus absent.
    let layout = parse_layout(ROOM).unwrap();
    assert_eq!(layout.floor_cells().len(), 11);
    let n = 100_000;
    let states = sample_initial_states(&layout, n, 3).unwrap();
    let absent = states.iter().filter(|s| s.table.is_none()).count() as f64;
    let p = 1.0 / 10.0;
    let expected = n as f64 * p;
    // One-degree-of-freedom chi-square against the 0.1% critical value.
    let chi2 = (absent - expected).powi(2) / expected + (absent - expected).powi(2) / (n as f64 - expected);
    assert!(chi2 < 10.83, "absent={absent} chi2={chi2}");
}

#[test]
fn tiny_layouts_are_rejected() {
    let layout = parse_layout("P#\nG#\n").unwrap();
    assert!(matches!(
        sample_initial_states(&layout, 1, 0),
        Err(SearchError::LayoutTooSmall(2))
    ));
}

#[test]
fn constant_objective_gives_a_valid_deterministic_script() {
    let a = run("sum t: 0", &small(1));
    assert_eq!(a.best.len(), 6);
    let b = run("sum t: 0", &small(1));
    assert_eq!(a.best, b.best);
    assert_eq!(a.breakdown, b.breakdown);
    assert!(a.diagnostics.is_empty(), "{:?}", a.diagnostics);
}

#[test]
fn reported_score_matches_reevaluation_and_seed_max() {
    for name in ["help", "twist_hinder_to_help", "flashback_help"] {
        let obj = builtin(name).unwrap();
        let compiled = CompiledObjective::compile(&obj, cache().hypotheses());
        let result = optimize(
            cache().layout(),
            &compiled,
            cache(),
            &EvalConfig::default(),
            &small(5),
            None,
        )
        .unwrap();
        assert!(result.diagnostics.is_empty(), "{name}: {:?}", result.diagnostics);
        let best_seed = result
            .seeds
            .iter()
            .filter_map(|s| s.best_score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.score(), best_seed, "{name}");
        assert_eq!(result.seeds[result.best_seed].best_score, Some(result.score()));
        assert_eq!(result.best.initial(), result.seeds[result.best_seed].initial);
    }
}

#[test]
fn result_is_independent_of_worker_count() {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let several = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = single.install(|| run("sum t: P(rho < 0)", &small(2)));
    let b = several.install(|| run("sum t: P(rho < 0)", &small(2)));
    assert_eq!(a.best, b.best);
    assert_eq!(a.breakdown, b.breakdown);
    let scores = |r: &SearchResult| r.seeds.iter().map(|s| s.best_score).collect::<Vec<_>>();
    assert_eq!(scores(&a), scores(&b));
}

#[test]
fn deus_is_used_at_most_once() {
    let config = SearchConfig {
        deus_enabled: true,
        ..small(4)
    };
    let result = run("sum t: sin(3*t/T*pi) * EV_robot - 0.1 * KL_step", &config);
    assert!(result.best.transitions().iter().filter(|t| t.is_deus()).count() <= 1);
    assert!(result.best.initial().table.is_none());
}

#[test]
fn wider_beams_rarely_lose() {
    let mut at_least = 0;
    for seed in 0..6 {
        let narrow = run(
            "sum t: P(rho > 0)",
            &SearchConfig {
                beam_width: 1,
                ..small(seed)
            },
        );
        let wide = run(
            "sum t: P(rho > 0)",
            &SearchConfig {
                beam_width: 8,
                ..small(seed)
            },
        );
        if wide.score() >= narrow.score() {
            at_least += 1;
        }
    }
    assert!(at_least >= 5, "{at_least}/6");
}

#[test]
fn progress_reports_every_initial_state() {
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let cb = |_: &SeedReport| {
        counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    };
    let compiled = CompiledObjective::compile(&builtin("help").unwrap(), cache().hypotheses());
    optimize(
        cache().layout(),
        &compiled,
        cache(),
        &EvalConfig::default(),
        &small(0),
        Some(&cb),
    )
    .unwrap();
    assert_eq!(counter.into_inner(), 12);
}

#[test]
fn invalid_configs_are_rejected() {
    let compiled = CompiledObjective::compile(&builtin("help").unwrap(), cache().hypotheses());
    for bad in [
        SearchConfig { horizon: 0, ..small(0) },
        SearchConfig {
            beam_width: 0,
            ..small(0)
        },
        SearchConfig {
            n_initial_states: 0,
            ..small(0)
        },
    ] {
        assert!(matches!(
            optimize(cache().layout(), &compiled, cache(), &EvalConfig::default(), &bad, None),
            Err(SearchError::InvalidConfig(_))
        ));
    }
    let other = parse_layout("P..\n..G\n").unwrap();
    assert!(matches!(
        optimize(&other, &compiled, cache(), &EvalConfig::default(), &small(0), None),
        Err(SearchError::LayoutMismatch)
    ));
}

#[test]
fn sharp_robot_on_its_goal_stays_put() {
    // Green sits in open floor: a blocked move would only cost the move
    // penalty, which a softmax at this sharpness still samples now and then.
    let layout = parse_layout("P....\n.....\n..G..\n.....\n").unwrap();
    let config = PlannerConfig {
        beta: 50.0,
        ..PlannerConfig::default()
    };
    let sharp = build_policy_cache(&layout, &build_hypothesis_space(), &RewardParams::default(), &config).unwrap();
    let h = Hypothesis::rational(Tile::Pink, Some(Tile::Green), 0);
    let initial = WorldState::new(layout.green(), Cell::new(0, 2), None);
    for seed in 0..5 {
        let script = naive_rollout(&h, initial, 15, seed, &sharp).unwrap();
        assert!(script.states().all(|s| s.robot == layout.green()), "seed {seed}");
        assert!(script.transitions().iter().all(|t| matches!(
            t,
            Transition::Joint {
                robot: AgentAction::Stay,
                ..
            }
        )));
    }
}

#[test]
fn rollouts_are_deterministic() {
    let h = Hypothesis::rational(Tile::Green, Some(Tile::Pink), 1);
    let initial = WorldState::new(Cell::new(0, 0), Cell::new(2, 0), None);
    let a = naive_rollout(&h, initial, 15, 9, cache()).unwrap();
    assert_eq!(a, naive_rollout(&h, initial, 15, 9, cache()).unwrap());
    assert_eq!(a.len(), 15);
    assert!(matches!(
        naive_rollout(&Hypothesis { r_robot: false, ..h }, initial, 3, 0, cache()),
        Err(SearchError::IrrationalHypothesis)
    ));
}

#[test]
fn rollout_success_rate_matches_world() {
    // A cheese starting far from its goal attempts plenty of moves.
    let mut attempts = 0u32;
    let mut successes = 0u32;
    let h = Hypothesis::rational(Tile::Green, None, 0);
    let mut seed = 0;
    while attempts < 20_000 {
        let initial = WorldState::new(Cell::new(3, 0), Cell::new(0, 0), None);
        let script = naive_rollout(&h, initial, 40, seed, cache()).unwrap();
        for (prev, t) in script.states().zip(script.transitions()) {
            if let Some(ok) = cheese_attempt(script.layout(), &prev, t) {
                attempts += 1;
                successes += u32::from(ok);
            }
        }
        seed += 1;
    }
    let rate = f64::from(successes) / f64::from(attempts);
    assert!((rate - 0.6).abs() <= 0.02, "{rate}");
}
