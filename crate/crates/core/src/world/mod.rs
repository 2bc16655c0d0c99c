//! The kitchen grid domain: layouts, states, joint-action dynamics and rewards.

mod dynamics;
mod layout;
mod space;

pub use dynamics::{legal_transitions, resolve, reward, step, StepOutcome};
pub use layout::{parse_layout, LayoutError, WorldLayout};
pub use space::StateSpace;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid position. Column grows eastward, row grows southward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: u16,
    pub row: u16,
}

impl Cell {
    pub const fn new(col: u16, row: u16) -> Self {
        Cell { col, row }
    }

    /// The neighbouring cell in `action`'s direction, or `None` when that
    /// would leave the non-negative quadrant.
    pub fn offset(self, action: AgentAction) -> Option<Cell> {
        let (dc, dr) = action.delta();
        let col = i32::from(self.col) + dc;
        let row = i32::from(self.row) + dr;
        if col < 0 || row < 0 {
            return None;
        }
        Some(Cell::new(col as u16, row as u16))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// One of the two special floor tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tile {
    Pink,
    Green,
}

impl Tile {
    pub const ALL: [Tile; 2] = [Tile::Pink, Tile::Green];

    pub fn name(self) -> &'static str {
        match self {
            Tile::Pink => "pink",
            Tile::Green => "green",
        }
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentAction {
    North,
    South,
    East,
    West,
    Stay,
}

impl AgentAction {
    pub const ALL: [AgentAction; 5] = [
        AgentAction::North,
        AgentAction::South,
        AgentAction::East,
        AgentAction::West,
        AgentAction::Stay,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            AgentAction::North => (0, -1),
            AgentAction::South => (0, 1),
            AgentAction::East => (1, 0),
            AgentAction::West => (-1, 0),
            AgentAction::Stay => (0, 0),
        }
    }

    /// Single-letter code used in script files. `X` is Stay.
    pub fn code(self) -> char {
        match self {
            AgentAction::North => 'N',
            AgentAction::South => 'S',
            AgentAction::East => 'E',
            AgentAction::West => 'W',
            AgentAction::Stay => 'X',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "N" => Some(AgentAction::North),
            "S" => Some(AgentAction::South),
            "E" => Some(AgentAction::East),
            "W" => Some(AgentAction::West),
            "X" => Some(AgentAction::Stay),
            _ => None,
        }
    }

    /// East and West swap; everything else is fixed.
    pub fn mirrored(self) -> Self {
        match self {
            AgentAction::East => AgentAction::West,
            AgentAction::West => AgentAction::East,
            other => other,
        }
    }

    pub fn is_move(self) -> bool {
        self != AgentAction::Stay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: Cell,
    pub cheese: Cell,
    pub table: Option<Cell>,
}

impl WorldState {
    pub fn new(robot: Cell, cheese: Cell, table: Option<Cell>) -> Self {
        WorldState { robot, cheese, table }
    }

    /// Occupied cells are pairwise distinct and none is a wall or off-grid.
    pub fn is_valid(&self, layout: &WorldLayout) -> bool {
        if !layout.is_floor(self.robot) || !layout.is_floor(self.cheese) {
            return false;
        }
        if self.robot == self.cheese {
            return false;
        }
        match self.table {
            None => true,
            Some(t) => layout.is_floor(t) && t != self.robot && t != self.cheese,
        }
    }
}

/// One timestep of a script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    Joint {
        robot: AgentAction,
        cheese: AgentAction,
        cheese_success: bool,
        next: WorldState,
    },
    /// The table drops into the kitchen; nobody acts on this step.
    Deus { drop: Cell, next: WorldState },
}

impl Transition {
    pub fn next(&self) -> WorldState {
        match *self {
            Transition::Joint { next, .. } | Transition::Deus { next, .. } => next,
        }
    }

    pub fn is_deus(&self) -> bool {
        matches!(self, Transition::Deus { .. })
    }

    /// Canonical ordering key used for deterministic tie-breaking.
    pub fn encoding(&self) -> [u16; 4] {
        match *self {
            Transition::Joint {
                robot,
                cheese,
                cheese_success,
                ..
            } => [
                0,
                robot.index() as u16,
                cheese.index() as u16,
                u16::from(cheese_success),
            ],
            Transition::Deus { drop, .. } => [1, drop.col, drop.row, 0],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("initial state is not valid on this layout")]
    InvalidInitial,
    #[error("transition {index}: next state does not follow from the previous state")]
    Inconsistent { index: usize },
    #[error("transition {index}: deus drop requires an absent table and a free cell")]
    IllegalDeus { index: usize },
    #[error("transition {index}: only one deus transition is allowed per script")]
    SecondDeus { index: usize },
}

/// An initial state plus a chain of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    layout: Arc<WorldLayout>,
    initial: WorldState,
    transitions: Vec<Transition>,
}

impl Script {
    /// An empty script starting at `initial`.
    pub fn start(layout: Arc<WorldLayout>, initial: WorldState) -> Result<Self, ScriptError> {
        if !initial.is_valid(&layout) {
            return Err(ScriptError::InvalidInitial);
        }
        Ok(Script {
            layout,
            initial,
            transitions: Vec::new(),
        })
    }

    pub fn new(
        layout: Arc<WorldLayout>,
        initial: WorldState,
        transitions: Vec<Transition>,
    ) -> Result<Self, ScriptError> {
        let mut script = Script::start(layout, initial)?;
        for t in transitions {
            script.push(t)?;
        }
        Ok(script)
    }

    /// Appends a transition after checking it chains from the current final state.
    pub fn push(&mut self, transition: Transition) -> Result<(), ScriptError> {
        let index = self.transitions.len();
        let prev = self.final_state();
        match transition {
            Transition::Joint {
                robot,
                cheese,
                cheese_success,
                next,
            } => {
                if step(&self.layout, &prev, robot, cheese, cheese_success) != next {
                    return Err(ScriptError::Inconsistent { index });
                }
            }
            Transition::Deus { drop, next } => {
                if self.deus_used() {
                    return Err(ScriptError::SecondDeus { index });
                }
                let legal =
                    prev.table.is_none() && self.layout.is_floor(drop) && drop != prev.robot && drop != prev.cheese;
                if !legal {
                    return Err(ScriptError::IllegalDeus { index });
                }
                if next
                    != (WorldState {
                        table: Some(drop),
                        ..prev
                    })
                {
                    return Err(ScriptError::Inconsistent { index });
                }
            }
        }
        self.transitions.push(transition);
        Ok(())
    }

    pub fn layout(&self) -> &Arc<WorldLayout> {
        &self.layout
    }

    pub fn initial(&self) -> WorldState {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn deus_used(&self) -> bool {
        self.transitions.iter().any(Transition::is_deus)
    }

    /// State at time `t`, with `t = 0` the initial state.
    pub fn state_at(&self, t: usize) -> WorldState {
        if t == 0 {
            self.initial
        } else {
            self.transitions[t - 1].next()
        }
    }

    pub fn final_state(&self) -> WorldState {
        self.transitions.last().map_or(self.initial, Transition::next)
    }

    /// `s_0, s_1, ..., s_T`.
    pub fn states(&self) -> impl Iterator<Item = WorldState> + '_ {
        std::iter::once(self.initial).chain(self.transitions.iter().map(Transition::next))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("reward parameters must satisfy goal_reward > move_cost > 0 (got {goal_reward}, {move_cost})")]
pub struct RewardParamsError {
    pub goal_reward: f64,
    pub move_cost: f64,
}

/// Per-step reward magnitudes shared by both agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub goal_reward: f64,
    pub move_cost: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            goal_reward: 1.0,
            move_cost: 0.1,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RewardParamsError> {
        if self.goal_reward > self.move_cost && self.move_cost > 0.0 {
            Ok(())
        } else {
            Err(RewardParamsError {
                goal_reward: self.goal_reward,
                move_cost: self.move_cost,
            })
        }
    }
}
