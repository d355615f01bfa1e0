//! Two rooms joined by an upper and a lower doorway.
//!
//! ```text
//!   col 0 1 2 3 4 5
//! row 0   . . . U . G
//!     1   . . . # . .
//!     2   . . . # . .
//!     3   . . . # . .
//!     4   . . . L . .
//! ```
//!
//! The left room is columns 0-2, the right room columns 4-5. `Exit` leaves
//! the left room through a door, `GotoGoal` walks from there to `G`. Moves
//! are deterministic and cost 1; west is optional.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::{Outcome, StateSpace, TabularModel};
use crate::taskgraph::{parse_graph, MaxqGraph, Registry};

use super::taxi::DIRS;
use super::EnvError;

pub const ROWS: usize = 5;
pub const COLS: usize = 6;
const WALL_COL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoRoomsConfig {
    pub west: bool,
    /// Pseudo-reward for leaving through the upper door.
    pub upper_door_reward: f64,
    pub lower_door_reward: f64,
}

impl Default for TwoRoomsConfig {
    fn default() -> Self {
        Self { west: false, upper_door_reward: 0.0, lower_door_reward: 0.0 }
    }
}

/// Cell geometry of the two-rooms grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoRoomsLayout {
    cells: Vec<[usize; 2]>,
    pub upper_door: usize,
    pub lower_door: usize,
    pub goal: usize,
}

impl Default for TwoRoomsLayout {
    fn default() -> Self {
        let cells: Vec<[usize; 2]> = (0..ROWS)
            .flat_map(|r| (0..COLS).map(move |c| [r, c]))
            .filter(|&[r, c]| c != WALL_COL || r == 0 || r == ROWS - 1)
            .collect();
        let find = |rc: [usize; 2]| cells.iter().position(|&x| x == rc).expect("cell");
        let (upper_door, lower_door, goal) = (find([0, WALL_COL]), find([ROWS - 1, WALL_COL]), find([0, 5]));
        Self { cells, upper_door, lower_door, goal }
    }
}

impl TwoRoomsLayout {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn coords(&self, cell: usize) -> [usize; 2] {
        self.cells[cell]
    }

    pub fn cell(&self, rc: [usize; 2]) -> Option<usize> {
        self.cells.iter().position(|&x| x == rc)
    }

    pub fn in_left_room(&self, cell: usize) -> bool {
        self.cells[cell][1] < WALL_COL
    }

    pub fn step(&self, cell: usize, d: usize) -> usize {
        let [r, c] = self.cells[cell];
        let (nr, nc) = (r as isize + DIRS[d].0, c as isize + DIRS[d].1);
        if nr < 0 || nc < 0 {
            return cell;
        }
        self.cell([nr as usize, nc as usize]).unwrap_or(cell)
    }
}

pub fn build_two_rooms(cfg: &TwoRoomsConfig) -> Result<(TabularModel, MaxqGraph), EnvError> {
    let layout = Arc::new(TwoRoomsLayout::default());
    let space = StateSpace::new([("cell", layout.len())])?;
    let n_moves = if cfg.west { 4 } else { 3 };
    let actions: Vec<String> = ["north", "south", "east", "west"][..n_moves].iter().map(|a| a.to_string()).collect();
    let goal = layout.goal;
    let l = Arc::clone(&layout);
    let dynamics = move |s: usize, a: usize| vec![Outcome { next: l.step(s, a), prob: 1.0, reward: -1.0 }];
    let left: Vec<usize> = (0..layout.len()).filter(|&c| layout.in_left_room(c)).collect();
    let start = left.iter().map(|&c| (c, 1.0 / left.len() as f64)).collect();
    let model = TabularModel::build(space, actions.clone(), 1.0, |s| s == goal, dynamics, start)?;

    let mut reg = Registry::with_builtins(&model);
    let l = Arc::clone(&layout);
    reg.predicate("outside_left_room", move |_, s, _| !l.in_left_room(s));
    let l = Arc::clone(&layout);
    reg.predicate("at_goal_or_left_room", move |_, s, _| s == goal || l.in_left_room(s));
    let (up, low) = (layout.upper_door, layout.lower_door);
    let (r_up, r_low) = (cfg.upper_door_reward, cfg.lower_door_reward);
    reg.pseudo_reward("door_reward", move |_, s, _| {
        if s == up {
            r_up
        } else if s == low {
            r_low
        } else {
            0.0
        }
    });

    let names = ["North", "South", "East", "West"];
    let exit_children: String = names[..n_moves]
        .iter()
        .map(|m| format!("\n[[node.child]]\nname = \"QExit{m}\"\ntask = \"{m}\"\nkey = [\"cell\"]\n"))
        .collect();
    let goal_children: String = names[..n_moves]
        .iter()
        .map(|m| format!("\n[[node.child]]\nname = \"QGoal{m}\"\ntask = \"{m}\"\nkey = [\"cell\"]\n"))
        .collect();
    let leaves: String = names[..n_moves]
        .iter()
        .map(|m| format!("\n[[leaf]]\nname = \"{m}\"\naction = \"{}\"\nkey = []\n", m.to_lowercase()))
        .collect();
    let text = format!(
        r#"root = "Root"

[[node]]
name = "Root"
terminate = "env_terminal"

[[node.child]]
name = "QExit"
task = "Exit"
key = ["cell"]

[[node.child]]
name = "QGotoGoal"
task = "GotoGoal"
key = ["cell"]

[[node]]
name = "Exit"
terminate = "outside_left_room"
goal = "never"
pseudo_reward = "door_reward"
{exit_children}
[[node]]
name = "GotoGoal"
terminate = "at_goal_or_left_room"
goal = "env_terminal"
pseudo_reward = 0.0
{goal_children}{leaves}"#
    );
    let graph = parse_graph(&text, &model, &reg)?;
    Ok((model, graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value_iteration;
    use crate::taskgraph::validate_graph;

    #[test]
    fn door_distances() {
        let (m, g) = build_two_rooms(&TwoRoomsConfig::default()).unwrap();
        assert!(validate_graph(&g, &m).passed());
        let v = value_iteration(&m, 1e-12).unwrap();
        let lay = TwoRoomsLayout::default();
        assert_eq!(v.get(lay.upper_door), -2.0);
        assert_eq!(v.get(lay.lower_door), -6.0);
        assert!(!g.has_pseudo_rewards());
        let (_, g2) =
            build_two_rooms(&TwoRoomsConfig { upper_door_reward: -2.0, lower_door_reward: -6.0, ..Default::default() })
                .unwrap();
        assert!(g2.has_pseudo_rewards());
    }
}
