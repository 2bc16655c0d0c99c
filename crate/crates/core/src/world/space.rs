use std::sync::Arc;

use super::{Cell, WorldLayout, WorldState};

/// Every valid `WorldState` on a layout with a dense index.
///
/// Table positions range over all floor cells plus "absent".
#[derive(Debug, Clone)]
pub struct StateSpace {
    layout: Arc<WorldLayout>,
    states: Vec<WorldState>,
    lookup: Vec<u32>,
    floor: usize,
}

const NONE: u32 = u32::MAX;

impl StateSpace {
    pub fn new(layout: &WorldLayout) -> Self {
        Self::build(Arc::new(layout.clone()), true)
    }

    /// `include_table_absent = false` keeps only states with the table on
    /// the floor. That subset is closed under the agents' dynamics.
    pub fn build(layout: Arc<WorldLayout>, include_table_absent: bool) -> Self {
        let floor = layout.floor_cells().len();
        let mut lookup = vec![NONE; floor * floor * (floor + 1)];
        let mut states = Vec::new();
        for r in 0..floor {
            for c in 0..floor {
                if r == c {
                    continue;
                }
                for t in 0..=floor {
                    if t == r || t == c || (t == floor && !include_table_absent) {
                        continue;
                    }
                    let cells = layout.floor_cells();
                    let table = (t < floor).then(|| cells[t]);
                    lookup[(r * floor + c) * (floor + 1) + t] = states.len() as u32;
                    states.push(WorldState::new(cells[r], cells[c], table));
                }
            }
        }
        StateSpace {
            layout,
            states,
            lookup,
            floor,
        }
    }

    pub fn layout(&self) -> &Arc<WorldLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[WorldState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> WorldState {
        self.states[index]
    }

    pub fn index(&self, state: &WorldState) -> Option<usize> {
        let fi = |c: Cell| self.layout.floor_index(c);
        let r = fi(state.robot)?;
        let c = fi(state.cheese)?;
        let t = match state.table {
            Some(t) => fi(t)?,
            None => self.floor,
        };
        match self.lookup[(r * self.floor + c) * (self.floor + 1) + t] {
            NONE => None,
            i => Some(i as usize),
        }
    }
}
