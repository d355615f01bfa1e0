//! Goal-parameterised navigation on a 10x10 grid with landmarks.
//!
//! Every square belongs to the Voronoi cell of its nearest landmark
//! (Manhattan distance, ties to the lower landmark index). Two landmarks are
//! neighbours when their cells touch. `GotoLmk(l)` may run anywhere in the
//! region formed by `l`'s cell and its neighbours' cells.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::{Outcome, StateSpace, TabularModel};
use crate::taskgraph::{parse_graph, MaxqGraph, Registry};

use super::taxi::DIRS;
use super::{manhattan, EnvError};

pub const SIDE: usize = 10;
const SQUARES: usize = SIDE * SIDE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdgConfig {
    pub landmarks: Vec<[usize; 2]>,
    pub move_cost: f64,
}

impl Default for HdgConfig {
    fn default() -> Self {
        Self {
            landmarks: vec![
                [0, 1],
                [1, 5],
                [1, 8],
                [3, 3],
                [4, 0],
                [4, 6],
                [5, 9],
                [6, 3],
                [7, 7],
                [8, 0],
                [9, 4],
                [9, 9],
            ],
            move_cost: 1.0,
        }
    }
}

/// Voronoi partition and landmark regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HdgLayout {
    /// Square of each landmark.
    pub landmarks: Vec<usize>,
    /// Nearest landmark of each square.
    pub nearest: Vec<usize>,
    /// Neighbouring landmarks of each landmark.
    pub neighbours: Vec<Vec<usize>>,
    /// `region[l][sq]`: the square lies in `l`'s cell or a neighbour's cell.
    pub region: Vec<Vec<bool>>,
}

pub fn step(sq: usize, d: usize) -> usize {
    let (r, c) = ((sq / SIDE) as isize + DIRS[d].0, (sq % SIDE) as isize + DIRS[d].1);
    if r < 0 || c < 0 || r >= SIDE as isize || c >= SIDE as isize {
        sq
    } else {
        r as usize * SIDE + c as usize
    }
}

impl HdgLayout {
    pub fn new(cfg: &HdgConfig) -> Result<Self, EnvError> {
        if cfg.landmarks.is_empty() {
            return Err(EnvError::InvalidConfig("no landmarks".into()));
        }
        let mut landmarks = Vec::new();
        for &rc in &cfg.landmarks {
            if rc[0] >= SIDE || rc[1] >= SIDE {
                return Err(EnvError::InvalidConfig(format!("landmark {rc:?} outside the grid")));
            }
            let sq = rc[0] * SIDE + rc[1];
            if landmarks.contains(&sq) {
                return Err(EnvError::InvalidConfig(format!("landmark {rc:?} repeated")));
            }
            landmarks.push(sq);
        }
        let rc = |sq: usize| [sq / SIDE, sq % SIDE];
        let nearest: Vec<usize> = (0..SQUARES)
            .map(|sq| {
                (0..landmarks.len()).min_by_key(|&l| (manhattan(rc(sq), rc(landmarks[l])), l)).expect("landmarks")
            })
            .collect();
        let n = landmarks.len();
        let mut neighbours = vec![Vec::new(); n];
        for sq in 0..SQUARES {
            for d in 0..4 {
                let (a, b) = (nearest[sq], nearest[step(sq, d)]);
                if a != b && !neighbours[a].contains(&b) {
                    neighbours[a].push(b);
                }
            }
        }
        for nb in &mut neighbours {
            nb.sort_unstable();
        }
        let region = (0..n)
            .map(|l| (0..SQUARES).map(|sq| nearest[sq] == l || neighbours[l].contains(&nearest[sq])).collect())
            .collect();
        Ok(Self { landmarks, nearest, neighbours, region })
    }

    pub fn cell_size(&self, l: usize) -> usize {
        self.nearest.iter().filter(|&&x| x == l).count()
    }

    pub fn region_size(&self, l: usize) -> usize {
        self.region[l].iter().filter(|&&x| x).count()
    }
}

/// Builds the navigation model (state: `pos`, `goal`) and its task graph.
pub fn build_hdg(cfg: &HdgConfig) -> Result<(TabularModel, MaxqGraph), EnvError> {
    if !(cfg.move_cost > 0.0) {
        return Err(EnvError::InvalidConfig("move cost must be positive".into()));
    }
    let layout = Arc::new(HdgLayout::new(cfg)?);
    let n_lmk = layout.landmarks.len();
    let space = StateSpace::new([("pos", SQUARES), ("goal", SQUARES)])?;
    let actions: Vec<String> = ["north", "south", "east", "west"].map(String::from).to_vec();
    let sp = space.clone();
    let cost = cfg.move_cost;
    let dynamics =
        move |s: usize, a: usize| vec![Outcome { next: sp.with_value(s, 0, step(sp.value(s, 0), a)), prob: 1.0, reward: -cost }];
    let p = 1.0 / (SQUARES * SQUARES) as f64;
    let start = (0..space.len()).map(|s| (s, p)).collect();
    let sp = space.clone();
    let model = TabularModel::build(space, actions, 1.0, |s| sp.value(s, 0) == sp.value(s, 1), dynamics, start)?;

    let mut reg = Registry::with_builtins(&model);
    let l = Arc::clone(&layout);
    reg.feature("goal_landmark", n_lmk, vec![1], move |sp, s, _| Some(l.nearest[sp.value(s, 1)]));
    let l = Arc::clone(&layout);
    reg.feature("region_pos", SQUARES, vec![0], move |sp, s, p| {
        let pos = sp.value(s, 0);
        l.region[p[0]][pos].then_some(pos)
    });
    let l = Arc::clone(&layout);
    reg.feature("goal_cell_pos", SQUARES, vec![0], move |sp, s, p| {
        let pos = sp.value(s, 0);
        (l.nearest[pos] == l.nearest[p[0]]).then_some(pos)
    });
    let l = Arc::clone(&layout);
    reg.predicate("at_goal_landmark", move |sp, s, _| sp.value(s, 0) == l.landmarks[l.nearest[sp.value(s, 1)]]);
    let l = Arc::clone(&layout);
    reg.predicate("at_landmark_or_left_region", move |sp, s, p| {
        let pos = sp.value(s, 0);
        pos == l.landmarks[p[0]] || !l.region[p[0]][pos]
    });
    let l = Arc::clone(&layout);
    reg.predicate("at_landmark", move |sp, s, p| sp.value(s, 0) == l.landmarks[p[0]]);
    let l = Arc::clone(&layout);
    reg.predicate("at_target_or_left_cell", move |sp, s, p| {
        let pos = sp.value(s, 0);
        pos == p[0] || l.nearest[pos] != l.nearest[p[0]]
    });
    reg.predicate("at_target", |sp, s, p| sp.value(s, 0) == p[0]);

    let graph = parse_graph(&graph_text(n_lmk), &model, &reg)?;
    Ok((model, graph))
}

fn graph_text(n_lmk: usize) -> String {
    let moves = ["North", "South", "East", "West"];
    let lmk_edges: String = (0..n_lmk)
        .map(|l| {
            format!("\n[[node.child]]\nname = \"QGotoLmk{l}\"\ntask = \"GotoLmk\"\nbind = {{ l = \"{l}\" }}\nkey = [\"goal_landmark\"]\n")
        })
        .collect();
    let edges = |prefix: &str, key: &str| -> String {
        moves
            .iter()
            .map(|m| format!("\n[[node.child]]\nname = \"{prefix}{m}\"\ntask = \"{m}\"\nkey = {key}\n"))
            .collect()
    };
    let lmk_moves = edges("QLmk", r#"["region_pos", "l"]"#);
    let goal_moves = edges("QGoal", r#"["goal_cell_pos", "g"]"#);
    let leaves: String = moves
        .iter()
        .map(|m| format!("\n[[leaf]]\nname = \"{m}\"\naction = \"{}\"\nkey = []\n", m.to_lowercase()))
        .collect();
    format!(
        r#"root = "Root"

[[node]]
name = "Root"
terminate = "env_terminal"

[[node.child]]
name = "QGotoGoalLmk"
task = "GotoGoalLmk"
key = ["goal"]

[[node.child]]
name = "QGotoGoal"
task = "GotoGoal"
bind = {{ g = "goal" }}
store = "zero"

[[node]]
name = "GotoGoalLmk"
terminate = "at_goal_landmark"
{lmk_edges}
[[node]]
name = "GotoLmk"
params = [{{ name = "l", card = {n_lmk} }}]
terminate = "at_landmark_or_left_region"
goal = "at_landmark"
relevant = ["pos"]
{lmk_moves}
[[node]]
name = "GotoGoal"
params = [{{ name = "g", card = {SQUARES} }}]
terminate = "at_target_or_left_cell"
goal = "at_target"
relevant = ["pos"]
{goal_moves}{leaves}"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::validate_graph;

    #[test]
    fn layout_partitions_grid() {
        let lay = HdgLayout::new(&HdgConfig::default()).unwrap();
        let total: usize = (0..12).map(|l| lay.cell_size(l)).sum();
        assert_eq!(total, SQUARES);
        for l in 0..12 {
            assert_eq!(lay.nearest[lay.landmarks[l]], l);
            assert!(!lay.neighbours[l].is_empty());
            for &m in &lay.neighbours[l] {
                assert!(lay.neighbours[m].contains(&l));
            }
        }
    }

    #[test]
    fn graph_validates_and_start_equals_goal_is_terminal() {
        let (m, g) = build_hdg(&HdgConfig::default()).unwrap();
        assert!(validate_graph(&g, &m).passed(), "{}", validate_graph(&g, &m));
        let s = m.space().encode(&[37, 37]).unwrap();
        assert!(m.is_terminal(s));
    }

    #[test]
    fn rejects_bad_landmarks() {
        let cfg = HdgConfig { landmarks: vec![[0, 0], [0, 0]], ..Default::default() };
        assert!(build_hdg(&cfg).is_err());
        let cfg = HdgConfig { landmarks: vec![[10, 0]], ..Default::default() };
        assert!(build_hdg(&cfg).is_err());
    }
}
