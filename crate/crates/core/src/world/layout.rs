use std::collections::VecDeque;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AgentAction, Cell, Tile};

/// Failure to build a layout. Line and column numbers are 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("empty layout")]
    Empty,
    #[error("line {line}, column {column}: unknown glyph {glyph:?}")]
    Glyph { line: usize, column: usize, glyph: char },
    #[error("line {line}: row has width {found}, expected {expected}")]
    Ragged { line: usize, found: usize, expected: usize },
    #[error("line {line}, column {column}: duplicate {what}")]
    Duplicate {
        line: usize,
        column: usize,
        what: &'static str,
    },
    #[error("missing {0} tile")]
    Missing(&'static str),
    #[error("{0} on wall")]
    OnWall(&'static str),
    #[error("{0} outside the grid")]
    OutOfBounds(&'static str),
    #[error("pink and green share a cell")]
    SharedGoal,
    #[error("start positions overlap")]
    OverlappingStarts,
    #[error("line {line}, column {column}: floor cell unreachable from the rest of the floor")]
    Disconnected { line: usize, column: usize },
    #[error("layout is larger than 65535 cells on a side")]
    TooLarge,
}

/// A validated kitchen map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldLayout {
    width: u16,
    height: u16,
    walls: Vec<bool>,
    pink: Cell,
    green: Cell,
    start_robot: Option<Cell>,
    start_cheese: Option<Cell>,
    start_table: Option<Cell>,
    floor: Vec<Cell>,
    floor_index: Vec<Option<u32>>,
}

impl WorldLayout {
    /// Builds a layout from its parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: u16,
        height: u16,
        walls: &[Cell],
        pink: Cell,
        green: Cell,
        start_robot: Option<Cell>,
        start_cheese: Option<Cell>,
        start_table: Option<Cell>,
    ) -> Result<Self, LayoutError> {
        if width == 0 || height == 0 {
            return Err(LayoutError::Empty);
        }
        let in_bounds = |c: Cell| c.col < width && c.row < height;
        let mut wall_grid = vec![false; usize::from(width) * usize::from(height)];
        for &w in walls {
            if !in_bounds(w) {
                return Err(LayoutError::OutOfBounds("wall"));
            }
            wall_grid[usize::from(w.row) * usize::from(width) + usize::from(w.col)] = true;
        }
        let is_wall = |c: Cell| wall_grid[usize::from(c.row) * usize::from(width) + usize::from(c.col)];

        for (name, cell) in [("pink", pink), ("green", green)] {
            if !in_bounds(cell) {
                return Err(LayoutError::OutOfBounds(name));
            }
            if is_wall(cell) {
                return Err(LayoutError::OnWall(name));
            }
        }
        if pink == green {
            return Err(LayoutError::SharedGoal);
        }
        let starts = [
            ("robot start", start_robot),
            ("cheese start", start_cheese),
            ("table start", start_table),
        ];
        for (name, cell) in starts {
            if let Some(cell) = cell {
                if !in_bounds(cell) {
                    return Err(LayoutError::OutOfBounds(name));
                }
                if is_wall(cell) {
                    return Err(LayoutError::OnWall(name));
                }
            }
        }
        let given: Vec<Cell> = starts.iter().filter_map(|(_, c)| *c).collect();
        for i in 0..given.len() {
            if given[i + 1..].contains(&given[i]) {
                return Err(LayoutError::OverlappingStarts);
            }
        }

        let mut floor = Vec::new();
        let mut floor_index = vec![None; wall_grid.len()];
        for row in 0..height {
            for col in 0..width {
                let c = Cell::new(col, row);
                if !is_wall(c) {
                    floor_index[usize::from(row) * usize::from(width) + usize::from(col)] = Some(floor.len() as u32);
                    floor.push(c);
                }
            }
        }

        let layout = WorldLayout {
            width,
            height,
            walls: wall_grid,
            pink,
            green,
            start_robot,
            start_cheese,
            start_table,
            floor,
            floor_index,
        };
        if let Some(cell) = layout.first_unreachable() {
            return Err(LayoutError::Disconnected {
                line: usize::from(cell.row) + 1,
                column: usize::from(cell.col) + 1,
            });
        }
        Ok(layout)
    }

    fn first_unreachable(&self) -> Option<Cell> {
        let mut seen = vec![false; self.floor.len()];
        let mut queue = VecDeque::from([self.floor[0]]);
        seen[0] = true;
        while let Some(c) = queue.pop_front() {
            for a in AgentAction::ALL {
                if let Some(n) = self.floor_index_of(c.offset(a)) {
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(self.floor[n]);
                    }
                }
            }
        }
        seen.iter().position(|s| !s).map(|i| self.floor[i])
    }

    fn floor_index_of(&self, cell: Option<Cell>) -> Option<usize> {
        cell.and_then(|c| self.floor_index(c))
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.walls[self.offset(cell)]
    }

    /// In bounds and not a wall.
    pub fn is_floor(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.walls[self.offset(cell)]
    }

    fn offset(&self, cell: Cell) -> usize {
        usize::from(cell.row) * usize::from(self.width) + usize::from(cell.col)
    }

    pub fn walls(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| Cell::new(c, r)))
            .filter(|c| self.walls[self.offset(*c)])
    }

    pub fn wall_count(&self) -> usize {
        self.walls.iter().filter(|w| **w).count()
    }

    /// Non-wall cells in row-major order.
    pub fn floor_cells(&self) -> &[Cell] {
        &self.floor
    }

    pub fn floor_index(&self, cell: Cell) -> Option<usize> {
        if !self.in_bounds(cell) {
            return None;
        }
        self.floor_index[self.offset(cell)].map(|i| i as usize)
    }

    pub fn pink(&self) -> Cell {
        self.pink
    }

    pub fn green(&self) -> Cell {
        self.green
    }

    pub fn tile(&self, tile: Tile) -> Cell {
        match tile {
            Tile::Pink => self.pink,
            Tile::Green => self.green,
        }
    }

    pub fn start_robot(&self) -> Option<Cell> {
        self.start_robot
    }

    pub fn start_cheese(&self) -> Option<Cell> {
        self.start_cheese
    }

    pub fn start_table(&self) -> Option<Cell> {
        self.start_table
    }

    /// Reflects the layout left-to-right. Used for symmetry checks.
    pub fn mirrored(&self) -> WorldLayout {
        let m = |c: Cell| self.mirror_cell(c);
        let walls: Vec<Cell> = self.walls().map(m).collect();
        WorldLayout::new(
            self.width,
            self.height,
            &walls,
            m(self.pink),
            m(self.green),
            self.start_robot.map(m),
            self.start_cheese.map(m),
            self.start_table.map(m),
        )
        .expect("mirroring preserves layout invariants")
    }

    pub fn mirror_cell(&self, cell: Cell) -> Cell {
        Cell::new(self.width - 1 - cell.col, cell.row)
    }

    /// SHA-256 of the canonical map text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}

impl fmt::Display for WorldLayout {
    /// Writes the map in the same text format `parse_layout` accepts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..self.height {
            for col in 0..self.width {
                let c = Cell::new(col, row);
                let glyph = if self.walls[self.offset(c)] {
                    '#'
                } else if c == self.pink {
                    'P'
                } else if c == self.green {
                    'G'
                } else if Some(c) == self.start_robot {
                    'R'
                } else if Some(c) == self.start_cheese {
                    'C'
                } else if Some(c) == self.start_table {
                    'T'
                } else {
                    '.'
                };
                write!(f, "{glyph}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Parses the ASCII map format: `#` wall, `.` floor, `P` pink, `G` green,
/// `R`/`C`/`T` robot, cheese and table starts.
pub fn parse_layout(text: &str) -> Result<WorldLayout, LayoutError> {
    let rows: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    // Trailing blank lines are tolerated, interior ones are not.
    let last = rows.iter().rposition(|r| !r.is_empty()).ok_or(LayoutError::Empty)?;
    let rows = &rows[..=last];

    let width = rows[0].chars().count();
    if width > usize::from(u16::MAX) || rows.len() > usize::from(u16::MAX) {
        return Err(LayoutError::TooLarge);
    }
    let mut walls = Vec::new();
    let mut pink = None;
    let mut green = None;
    let mut robot = None;
    let mut cheese = None;
    let mut table = None;

    for (r, row) in rows.iter().enumerate() {
        let found = row.chars().count();
        if found != width {
            return Err(LayoutError::Ragged {
                line: r + 1,
                found,
                expected: width,
            });
        }
        for (c, glyph) in row.chars().enumerate() {
            let cell = Cell::new(c as u16, r as u16);
            let slot = match glyph {
                '#' => {
                    walls.push(cell);
                    continue;
                }
                '.' => continue,
                'P' => (&mut pink, "pink"),
                'G' => (&mut green, "green"),
                'R' => (&mut robot, "robot start"),
                'C' => (&mut cheese, "cheese start"),
                'T' => (&mut table, "table start"),
                other => {
                    return Err(LayoutError::Glyph {
                        line: r + 1,
                        column: c + 1,
                        glyph: other,
                    })
                }
            };
            let (target, what) = slot;
            if target.is_some() {
                return Err(LayoutError::Duplicate {
                    line: r + 1,
                    column: c + 1,
                    what,
                });
            }
            *target = Some(cell);
        }
    }

    WorldLayout::new(
        width as u16,
        rows.len() as u16,
        &walls,
        pink.ok_or(LayoutError::Missing("pink"))?,
        green.ok_or(LayoutError::Missing("green"))?,
        robot,
        cheese,
        table,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const KITCHEN: &str = include_str!("../../layouts/kitchen.map");

    #[test]
    fn minimal_open_map() {
        let layout = parse_layout("P..\n...\n..G\n").unwrap();
        assert_eq!(layout.width(), 3);
        assert_eq!(layout.height(), 3);
        assert_eq!(layout.wall_count(), 0);
        assert_eq!(layout.pink(), Cell::new(0, 0));
        assert_eq!(layout.green(), Cell::new(2, 2));
        assert_eq!(layout.floor_cells().len(), 9);
    }

    #[test]
    fn pink_on_wall_rejected() {
        let err = WorldLayout::new(
            3,
            1,
            &[Cell::new(0, 0)],
            Cell::new(0, 0),
            Cell::new(2, 0),
            None,
            None,
            None,
        )
        .unwrap_err();
        assert_eq!(err, LayoutError::OnWall("pink"));
        assert_eq!(err.to_string(), "pink on wall");
    }

    #[test]
    fn unknown_glyph_names_position() {
        let err = parse_layout("P.\n.x\nG.\n").unwrap_err();
        assert_eq!(
            err,
            LayoutError::Glyph {
                line: 2,
                column: 2,
                glyph: 'x'
            }
        );
    }

    #[test]
    fn duplicate_special_tile() {
        let err = parse_layout("P.P\n..G\n").unwrap_err();
        assert_eq!(
            err,
            LayoutError::Duplicate {
                line: 1,
                column: 3,
                what: "pink"
            }
        );
    }

    #[test]
    fn disconnected_floor() {
        let err = parse_layout("P#.\n.#G\n").unwrap_err();
        assert_eq!(err, LayoutError::Disconnected { line: 1, column: 3 });
    }

    #[test]
    fn ragged_rows() {
        let err = parse_layout("P..\n.G\n").unwrap_err();
        assert!(matches!(err, LayoutError::Ragged { line: 2, .. }));
    }

    #[test]
    fn missing_green() {
        assert_eq!(parse_layout("P..\n").unwrap_err(), LayoutError::Missing("green"));
    }

    #[test]
    fn default_kitchen_snapshot() {
        let layout = parse_layout(KITCHEN).unwrap();
        assert_eq!((layout.width(), layout.height()), (9, 7));
        assert_eq!(layout.floor_cells().len(), 31);
        assert_eq!(layout.pink(), Cell::new(1, 1));
        assert_eq!(layout.green(), Cell::new(7, 5));
        assert_eq!(layout.start_table(), Some(Cell::new(6, 4)));
        assert_eq!(layout.start_robot(), None);
        assert_eq!(layout.start_cheese(), None);
        // One interior wall column with a single gap: two rooms, one doorway.
        let partition: Vec<Cell> = (1..6).map(|r| Cell::new(4, r)).collect();
        let doorways: Vec<&Cell> = partition.iter().filter(|c| layout.is_floor(**c)).collect();
        assert_eq!(doorways, vec![&Cell::new(4, 3)]);
        // Removing the doorway splits the floor into two 15-cell rooms.
        let mut walls: Vec<Cell> = layout.walls().collect();
        walls.push(Cell::new(4, 3));
        let split = WorldLayout::new(9, 7, &walls, layout.pink(), layout.green(), None, None, None);
        assert!(matches!(split, Err(LayoutError::Disconnected { .. })));
        assert_eq!(layout.to_string(), KITCHEN);
    }

    #[test]
    fn display_round_trips() {
        let text = "#####\n#P.R#\n#C.T#\n#..G#\n#####\n";
        let layout = parse_layout(text).unwrap();
        assert_eq!(layout.to_string(), text);
        assert_eq!(parse_layout(&layout.to_string()).unwrap(), layout);
    }

    #[test]
    fn mirror_is_involution() {
        let layout = parse_layout(KITCHEN).unwrap();
        assert_eq!(layout.mirrored().mirrored(), layout);
        assert_ne!(layout.mirrored().hash(), layout.hash());
    }
}
