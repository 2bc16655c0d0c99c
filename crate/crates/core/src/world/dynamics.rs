use super::{AgentAction, Cell, RewardParams, Transition, WorldLayout, WorldState};
use crate::inference::Hypothesis;

/// Everything `resolve` learns while applying a joint action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// State after the robot's move, before the cheese acts.
    pub after_robot: WorldState,
    /// State after both agents (using the supplied success flag).
    pub next: WorldState,
    pub robot_moved: bool,
    pub pushed_cheese: bool,
    pub pushed_table: bool,
    /// The cheese attempted a move whose destination was free, so the
    /// outcome hinges on the success flag.
    pub cheese_move_feasible: bool,
}

fn free_for_push(layout: &WorldLayout, cell: Option<Cell>, blockers: [Option<Cell>; 2]) -> Option<Cell> {
    let cell = cell?;
    if !layout.is_floor(cell) || blockers.contains(&Some(cell)) {
        return None;
    }
    Some(cell)
}

/// Resolves a joint action: the robot moves first (pushing the cheese or
/// table one cell if it walks into them), then the cheese.
pub fn resolve(
    layout: &WorldLayout,
    state: &WorldState,
    robot_action: AgentAction,
    cheese_action: AgentAction,
    cheese_success: bool,
) -> StepOutcome {
    let mut s = *state;
    let mut robot_moved = false;
    let mut pushed_cheese = false;
    let mut pushed_table = false;

    if let Some(target) = s
        .robot
        .offset(robot_action)
        .filter(|c| layout.is_floor(*c) && robot_action.is_move())
    {
        if target == s.cheese {
            if let Some(dest) = free_for_push(layout, target.offset(robot_action), [s.table, None]) {
                s.cheese = dest;
                s.robot = target;
                robot_moved = true;
                pushed_cheese = true;
            }
        } else if Some(target) == s.table {
            if let Some(dest) = free_for_push(layout, target.offset(robot_action), [Some(s.cheese), None]) {
                s.table = Some(dest);
                s.robot = target;
                robot_moved = true;
                pushed_table = true;
            }
        } else {
            s.robot = target;
            robot_moved = true;
        }
    }
    let after_robot = s;

    let cheese_target = if cheese_action.is_move() {
        free_for_push(layout, s.cheese.offset(cheese_action), [s.table, Some(s.robot)])
    } else {
        None
    };
    if let (Some(dest), true) = (cheese_target, cheese_success) {
        s.cheese = dest;
    }

    StepOutcome {
        after_robot,
        next: s,
        robot_moved,
        pushed_cheese,
        pushed_table,
        cheese_move_feasible: cheese_target.is_some(),
    }
}

/// Deterministic joint transition given the cheese's success flag.
/// Blocked moves leave the mover in place.
pub fn step(
    layout: &WorldLayout,
    state: &WorldState,
    robot_action: AgentAction,
    cheese_action: AgentAction,
    cheese_success: bool,
) -> WorldState {
    resolve(layout, state, robot_action, cheese_action, cheese_success).next
}

/// All transitions available from `state`. The success flag is only varied
/// when the cheese attempts a feasible move; otherwise it is `false`.
pub fn legal_transitions(layout: &WorldLayout, state: &WorldState, deus_available: bool) -> Vec<Transition> {
    let mut out = Vec::with_capacity(50);
    for robot in AgentAction::ALL {
        for cheese in AgentAction::ALL {
            let outcome = resolve(layout, state, robot, cheese, false);
            out.push(Transition::Joint {
                robot,
                cheese,
                cheese_success: false,
                next: outcome.next,
            });
            if outcome.cheese_move_feasible {
                out.push(Transition::Joint {
                    robot,
                    cheese,
                    cheese_success: true,
                    next: step(layout, state, robot, cheese, true),
                });
            }
        }
    }
    if deus_available && state.table.is_none() {
        for &cell in layout.floor_cells() {
            if cell != state.robot && cell != state.cheese {
                out.push(Transition::Deus {
                    drop: cell,
                    next: WorldState {
                        table: Some(cell),
                        ..*state
                    },
                });
            }
        }
    }
    out
}

/// Per-step rewards `(r_cheese, r_robot)` for landing in `next`.
///
/// The robot's social bonus is `rho * r_cheese`, including the cheese's move cost.
pub fn reward(
    layout: &WorldLayout,
    next: &WorldState,
    moved_robot: bool,
    moved_cheese: bool,
    hypothesis: &Hypothesis,
    params: &RewardParams,
) -> (f64, f64) {
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let r_cheese = params.goal_reward * indicator(next.cheese == layout.tile(hypothesis.g_cheese))
        - params.move_cost * indicator(moved_cheese);
    let on_goal = hypothesis.g_robot.is_some_and(|g| next.robot == layout.tile(g));
    let r_robot = params.goal_reward * indicator(on_goal) - params.move_cost * indicator(moved_robot)
        + f64::from(hypothesis.rho) * r_cheese;
    (r_cheese, r_robot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{parse_layout, StateSpace, Tile};
    use std::collections::BTreeSet;
    use AgentAction::*;

    fn c(col: u16, row: u16) -> Cell {
        Cell::new(col, row)
    }

    #[test]
    fn all_stay_is_identity() {
        let layout = parse_layout("P...G\n").unwrap();
        let s = WorldState::new(c(0, 0), c(2, 0), Some(c(4, 0)));
        assert_eq!(step(&layout, &s, Stay, Stay, true), s);
    }

    #[test]
    fn robot_pushes_cheese_east() {
        let layout = parse_layout("P...G\n").unwrap();
        let s = WorldState::new(c(1, 0), c(2, 0), None);
        let out = resolve(&layout, &s, East, Stay, true);
        assert_eq!(out.next, WorldState::new(c(2, 0), c(3, 0), None));
        assert!(out.pushed_cheese);
    }

    #[test]
    fn failed_cheese_move_leaves_cheese() {
        let layout = parse_layout("P...G\n.....\n").unwrap();
        let s = WorldState::new(c(0, 1), c(2, 0), None);
        let next = step(&layout, &s, East, East, false);
        assert_eq!(next, WorldState::new(c(1, 1), c(2, 0), None));
        assert_eq!(step(&layout, &s, East, East, true).cheese, c(3, 0));
    }

    #[test]
    fn table_push_blocked_by_wall() {
        // Corridor of three floor cells: robot, table, then a wall beyond.
        let layout = parse_layout("PG..#\n").unwrap();
        let s = WorldState::new(c(2, 0), c(0, 0), Some(c(3, 0)));
        assert_eq!(step(&layout, &s, East, Stay, true), s);
        let off_grid = parse_layout("PG..\n").unwrap();
        assert_eq!(step(&off_grid, &s, East, Stay, true), s);
    }

    #[test]
    fn cheese_cannot_enter_table_or_robot() {
        let layout = parse_layout("P...G\n").unwrap();
        let s = WorldState::new(c(0, 0), c(1, 0), Some(c(2, 0)));
        assert_eq!(step(&layout, &s, Stay, East, true), s);
        assert_eq!(step(&layout, &s, Stay, West, true), s);
        assert!(!resolve(&layout, &s, Stay, East, true).cheese_move_feasible);
    }

    #[test]
    fn push_chains_are_blocked() {
        // Robot pushing cheese into the table does nothing.
        let layout = parse_layout("P...G\n").unwrap();
        let s = WorldState::new(c(0, 0), c(1, 0), Some(c(2, 0)));
        assert_eq!(step(&layout, &s, East, Stay, true), s);
    }

    #[test]
    fn cheese_moves_after_being_pushed() {
        let layout = parse_layout("P...G\n.....\n").unwrap();
        let s = WorldState::new(c(0, 0), c(1, 0), None);
        let next = step(&layout, &s, East, South, true);
        assert_eq!(next, WorldState::new(c(1, 0), c(2, 1), None));
    }

    #[test]
    fn open_grid_transition_count() {
        let layout = parse_layout("P....\n.....\n.....\n.....\n....G\n").unwrap();
        let s = WorldState::new(c(1, 1), c(3, 3), Some(c(4, 0)));
        let ts = legal_transitions(&layout, &s, true);
        // Enumeration oracle: count success-expanded pairs by brute force.
        let mut expected = 0;
        for r in AgentAction::ALL {
            for ch in AgentAction::ALL {
                let a = step(&layout, &s, r, ch, false);
                let b = step(&layout, &s, r, ch, true);
                expected += if a == b { 1 } else { 2 };
            }
        }
        assert_eq!(expected, 45);
        assert_eq!(ts.len(), 45);
        assert!(ts.iter().all(|t| !t.is_deus()));
    }

    #[test]
    fn deus_transitions_fill_free_cells() {
        // 12 floor cells, two occupied, table absent: 10 drops.
        let layout = parse_layout("P...\n....\n...G\n").unwrap();
        let s = WorldState::new(c(0, 0), c(3, 2), None);
        let deus = legal_transitions(&layout, &s, true)
            .into_iter()
            .filter(Transition::is_deus)
            .count();
        assert_eq!(deus, 10);
        assert!(legal_transitions(&layout, &s, false).iter().all(|t| !t.is_deus()));
    }

    #[test]
    fn legal_transitions_are_image_of_step() {
        let layout = parse_layout("P.#.\n....\n.#.G\n").unwrap();
        let space = StateSpace::new(&layout);
        for s in space.states() {
            let listed: BTreeSet<WorldState> = legal_transitions(&layout, s, false)
                .iter()
                .map(Transition::next)
                .collect();
            let mut image = BTreeSet::new();
            for r in AgentAction::ALL {
                for ch in AgentAction::ALL {
                    for ok in [false, true] {
                        image.insert(step(&layout, s, r, ch, ok));
                    }
                }
            }
            assert_eq!(listed, image, "state {s:?}");
        }
    }

    #[test]
    fn step_preserves_invariants_and_is_deterministic() {
        let layout = parse_layout("P.#.\n....\n.#.G\n").unwrap();
        let space = StateSpace::new(&layout);
        for s in space.states() {
            for r in AgentAction::ALL {
                for ch in AgentAction::ALL {
                    for ok in [false, true] {
                        let a = step(&layout, s, r, ch, ok);
                        assert!(a.is_valid(&layout));
                        assert_eq!(a, step(&layout, s, r, ch, ok));
                    }
                }
            }
        }
    }

    #[test]
    fn mirror_equivariance_on_kitchen() {
        let layout = parse_layout(include_str!("../../layouts/kitchen.map")).unwrap();
        let mirror = layout.mirrored();
        let m = |s: &WorldState| WorldState {
            robot: layout.mirror_cell(s.robot),
            cheese: layout.mirror_cell(s.cheese),
            table: s.table.map(|t| layout.mirror_cell(t)),
        };
        let space = StateSpace::new(&layout);
        for s in space.states().iter().step_by(7) {
            for r in AgentAction::ALL {
                for ch in AgentAction::ALL {
                    for ok in [false, true] {
                        let direct = m(&step(&layout, s, r, ch, ok));
                        let mirrored = step(&mirror, &m(s), r.mirrored(), ch.mirrored(), ok);
                        assert_eq!(direct, mirrored);
                    }
                }
            }
        }
    }

    fn hyp(g_cheese: Tile, g_robot: Option<Tile>, rho: i8) -> Hypothesis {
        Hypothesis {
            g_cheese,
            g_robot,
            rho,
            r_robot: true,
            r_cheese: true,
        }
    }

    #[test]
    fn reward_examples() {
        let layout = parse_layout("P...G\n").unwrap();
        let params = RewardParams::default();
        let off = WorldState::new(c(1, 0), c(2, 0), None);
        assert_eq!(
            reward(
                &layout,
                &off,
                false,
                false,
                &hyp(Tile::Pink, Some(Tile::Green), 3),
                &params
            ),
            (0.0, 0.0)
        );
        let on = WorldState::new(c(2, 0), c(0, 0), None);
        let (rc, rr) = reward(
            &layout,
            &on,
            false,
            false,
            &hyp(Tile::Pink, Some(Tile::Green), 3),
            &params,
        );
        assert_eq!((rc, rr), (1.0, 3.0));
        let (rc, rr) = reward(&layout, &on, true, false, &hyp(Tile::Pink, None, -1), &params);
        assert_eq!(rc, 1.0);
        assert!((rr - (-1.1)).abs() < 1e-12);
    }

    #[test]
    fn reward_zero_when_staying_off_goal_for_any_rho() {
        let layout = parse_layout("P...G\n").unwrap();
        let params = RewardParams::default();
        let s = WorldState::new(c(1, 0), c(2, 0), Some(c(3, 0)));
        for rho in [-3, -1, 0, 1, 3] {
            for g in [None, Some(Tile::Pink), Some(Tile::Green)] {
                for gc in Tile::ALL {
                    assert_eq!(reward(&layout, &s, false, false, &hyp(gc, g, rho), &params), (0.0, 0.0));
                }
            }
        }
    }
}
