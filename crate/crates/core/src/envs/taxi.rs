//! The taxi domain and its fickle and fuel variants.
//!
//! State variables, most significant first: `taxi` (row * 5 + column),
//! `passenger` (0..4 at a landmark, 4 in the taxi, 5 delivered), `dest`
//! (landmark), then `fuel` and `pending` when those variants are on.
//! `pending` marks a pickup whose first move may still change the
//! destination.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::{Outcome, StateSpace, TabularModel};
use crate::taskgraph::{parse_graph, MaxqGraph, Registry};

use super::EnvError;

pub const SIZE: usize = 5;
pub const IN_TAXI: usize = 4;
pub const DELIVERED: usize = 5;
pub const LANDMARK_NAMES: [&str; 4] = ["R", "G", "Y", "B"];

const STEP_REWARD: f64 = -1.0;
const DELIVERY_BONUS: f64 = 20.0;
const ILLEGAL_REWARD: f64 = -10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxiConfig {
    pub fickle: bool,
    /// Probability a move goes the intended way when fickle; the rest splits
    /// evenly between the two perpendicular directions.
    pub intended_prob: f64,
    pub dest_change_prob: f64,
    pub fuel: bool,
    pub fuel_capacity: usize,
    /// Inclusive range of the initial fuel level.
    pub initial_fuel: [usize; 2],
    pub station: [usize; 2],
    pub out_of_fuel_penalty: f64,
    /// Route the out-of-fuel penalty to the root instead of the leaf.
    pub split_fuel_penalty: bool,
    /// Blocked edges between adjacent squares, as `[row, col]` pairs.
    pub walls: Vec<[[usize; 2]; 2]>,
    /// R, G, Y, B squares.
    pub landmarks: [[usize; 2]; 4],
}

impl Default for TaxiConfig {
    fn default() -> Self {
        Self {
            fickle: false,
            intended_prob: 0.8,
            dest_change_prob: 0.3,
            fuel: false,
            fuel_capacity: 14,
            initial_fuel: [5, 12],
            station: [2, 2],
            out_of_fuel_penalty: -20.0,
            split_fuel_penalty: true,
            walls: vec![
                [[0, 1], [0, 2]],
                [[1, 1], [1, 2]],
                [[3, 0], [3, 1]],
                [[4, 0], [4, 1]],
                [[3, 2], [3, 3]],
                [[4, 2], [4, 3]],
            ],
            landmarks: [[0, 0], [0, 4], [4, 0], [4, 3]],
        }
    }
}

/// Grid geometry shared by the dynamics, features and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxiLayout {
    blocked: Vec<[bool; 4]>,
    /// Squares of R, G, Y, B and, with fuel, the station.
    pub targets: Vec<usize>,
}

/// Move directions in action order: north, south, east, west.
pub const DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];

fn perpendicular(d: usize) -> [usize; 2] {
    match d {
        0 | 1 => [2, 3],
        _ => [0, 1],
    }
}

pub fn square(rc: [usize; 2]) -> usize {
    rc[0] * SIZE + rc[1]
}

impl TaxiLayout {
    fn new(cfg: &TaxiConfig) -> Result<Self, EnvError> {
        let in_grid = |rc: [usize; 2]| rc[0] < SIZE && rc[1] < SIZE;
        let mut blocked = vec![[false; 4]; SIZE * SIZE];
        for &[a, b] in &cfg.walls {
            if !in_grid(a) || !in_grid(b) || super::manhattan(a, b) != 1 {
                return Err(EnvError::InvalidConfig(format!("wall {a:?}-{b:?} does not join adjacent squares")));
            }
            for (from, to) in [(a, b), (b, a)] {
                let d = DIRS
                    .iter()
                    .position(|&(dr, dc)| {
                        from[0] as isize + dr == to[0] as isize && from[1] as isize + dc == to[1] as isize
                    })
                    .expect("adjacent");
                blocked[square(from)][d] = true;
            }
        }
        let mut targets = Vec::new();
        for &rc in &cfg.landmarks {
            if !in_grid(rc) {
                return Err(EnvError::InvalidConfig(format!("landmark {rc:?} outside the grid")));
            }
            if targets.contains(&square(rc)) {
                return Err(EnvError::InvalidConfig(format!("landmark {rc:?} repeated")));
            }
            targets.push(square(rc));
        }
        if cfg.fuel {
            if !in_grid(cfg.station) {
                return Err(EnvError::InvalidConfig("station outside the grid".into()));
            }
            targets.push(square(cfg.station));
        }
        Ok(Self { blocked, targets })
    }

    /// Square reached by moving from `sq` in direction `d`; walls and edges keep the taxi in place.
    pub fn step(&self, sq: usize, d: usize) -> usize {
        let (r, c) = ((sq / SIZE) as isize, (sq % SIZE) as isize);
        let (nr, nc) = (r + DIRS[d].0, c + DIRS[d].1);
        if self.blocked[sq][d] || nr < 0 || nc < 0 || nr >= SIZE as isize || nc >= SIZE as isize {
            sq
        } else {
            (nr as usize) * SIZE + nc as usize
        }
    }

    /// Shortest move counts from every square to `target`.
    pub fn distances_to(&self, target: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; SIZE * SIZE];
        dist[target] = 0;
        let mut queue = std::collections::VecDeque::from([target]);
        while let Some(x) = queue.pop_front() {
            for y in 0..SIZE * SIZE {
                if dist[y] == usize::MAX && (0..4).any(|d| self.step(y, d) == x) {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        dist
    }
}

/// Variable indices of a built taxi space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiVars {
    pub taxi: usize,
    pub passenger: usize,
    pub dest: usize,
    pub fuel: Option<usize>,
    pub pending: Option<usize>,
}

impl TaxiVars {
    pub fn of(space: &StateSpace) -> Option<Self> {
        Some(Self {
            taxi: space.var_index("taxi")?,
            passenger: space.var_index("passenger")?,
            dest: space.var_index("dest")?,
            fuel: space.var_index("fuel"),
            pending: space.var_index("pending"),
        })
    }
}

fn validate(cfg: &TaxiConfig) -> Result<(), EnvError> {
    let p = [cfg.intended_prob, cfg.dest_change_prob];
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(EnvError::InvalidConfig("probabilities must lie in [0, 1]".into()));
    }
    if cfg.fuel {
        let [lo, hi] = cfg.initial_fuel;
        if cfg.fuel_capacity == 0 || lo == 0 || lo > hi || hi > cfg.fuel_capacity {
            return Err(EnvError::InvalidConfig("initial fuel must lie in [1, capacity]".into()));
        }
    }
    Ok(())
}

/// Builds the taxi model and its task graph.
pub fn build_taxi(cfg: &TaxiConfig) -> Result<(TabularModel, MaxqGraph), EnvError> {
    validate(cfg)?;
    let layout = Arc::new(TaxiLayout::new(cfg)?);
    let mut vars = vec![("taxi", SIZE * SIZE), ("passenger", 6), ("dest", 4)];
    if cfg.fuel {
        vars.push(("fuel", cfg.fuel_capacity + 1));
    }
    if cfg.fickle {
        vars.push(("pending", 2));
    }
    let space = StateSpace::new(vars)?;
    let v = TaxiVars::of(&space).expect("taxi variables");
    let mut actions: Vec<String> = ["north", "south", "east", "west", "pickup", "putdown"].map(String::from).to_vec();
    if cfg.fuel {
        actions.push("fillup".into());
    }

    let terminal = |s: usize| {
        space.value(s, v.passenger) == DELIVERED || v.fuel.is_some_and(|f| space.value(s, f) == 0)
    };
    let station = layout.targets.get(4).copied();
    let dynamics = |s: usize, a: usize| -> Vec<Outcome> {
        let taxi = space.value(s, v.taxi);
        let pass = space.value(s, v.passenger);
        let dest = space.value(s, v.dest);
        match a {
            0..=3 => {
                let moves: Vec<(usize, f64)> = if cfg.fickle {
                    let side = (1.0 - cfg.intended_prob) / 2.0;
                    let [l, r] = perpendicular(a);
                    vec![(a, cfg.intended_prob), (l, side), (r, side)]
                } else {
                    vec![(a, 1.0)]
                };
                let mut out = Vec::new();
                for (d, p) in moves {
                    let to = layout.step(taxi, d);
                    let mut next = space.with_value(s, v.taxi, to);
                    let mut reward = STEP_REWARD;
                    if let Some(f) = v.fuel {
                        let left = space.value(s, f) - 1;
                        next = space.with_value(next, f, left);
                        if left == 0 {
                            reward += cfg.out_of_fuel_penalty;
                        }
                    }
                    let fires = v.pending.is_some_and(|pv| space.value(s, pv) == 1) && pass == IN_TAXI && to != taxi;
                    if fires {
                        let pv = v.pending.expect("pending");
                        next = space.with_value(next, pv, 0);
                        out.push(Outcome { next, prob: p * (1.0 - cfg.dest_change_prob), reward });
                        for d2 in (0..4).filter(|&d2| d2 != dest) {
                            let changed = space.with_value(next, v.dest, d2);
                            out.push(Outcome { next: changed, prob: p * cfg.dest_change_prob / 3.0, reward });
                        }
                    } else {
                        out.push(Outcome { next, prob: p, reward });
                    }
                }
                out
            }
            4 => {
                if pass < IN_TAXI && taxi == layout.targets[pass] {
                    let mut next = space.with_value(s, v.passenger, IN_TAXI);
                    if let Some(pv) = v.pending {
                        next = space.with_value(next, pv, 1);
                    }
                    vec![Outcome { next, prob: 1.0, reward: STEP_REWARD }]
                } else {
                    vec![Outcome { next: s, prob: 1.0, reward: ILLEGAL_REWARD }]
                }
            }
            5 => {
                if pass == IN_TAXI && taxi == layout.targets[dest] {
                    let next = space.with_value(s, v.passenger, DELIVERED);
                    vec![Outcome { next, prob: 1.0, reward: STEP_REWARD + DELIVERY_BONUS }]
                } else {
                    vec![Outcome { next: s, prob: 1.0, reward: ILLEGAL_REWARD }]
                }
            }
            _ => {
                let f = v.fuel.expect("fillup only exists with fuel");
                let next = if Some(taxi) == station { space.with_value(s, f, cfg.fuel_capacity) } else { s };
                vec![Outcome { next, prob: 1.0, reward: STEP_REWARD }]
            }
        }
    };

    let fuel_levels: Vec<usize> = if cfg.fuel { (cfg.initial_fuel[0]..=cfg.initial_fuel[1]).collect() } else { vec![0] };
    let mut start = Vec::new();
    let p = 1.0 / (25.0 * 16.0 * fuel_levels.len() as f64);
    for taxi in 0..SIZE * SIZE {
        for pass in 0..4 {
            for dest in 0..4 {
                for &fl in &fuel_levels {
                    let mut vals = vec![0; space.vars().len()];
                    vals[v.taxi] = taxi;
                    vals[v.passenger] = pass;
                    vals[v.dest] = dest;
                    if let Some(f) = v.fuel {
                        vals[f] = fl;
                    }
                    start.push((space.encode(&vals)?, p));
                }
            }
        }
    }
    let model = TabularModel::build(space.clone(), actions, 1.0, terminal, dynamics, start)?;
    let reg = registry(&model, cfg, &layout, v);
    let graph = parse_graph(&graph_text(cfg), &model, &reg)?;
    Ok((model, graph))
}

fn registry(model: &TabularModel, cfg: &TaxiConfig, layout: &Arc<TaxiLayout>, v: TaxiVars) -> Registry {
    let mut reg = Registry::with_builtins(model);
    reg.predicate("delivered", move |sp, s, _| sp.value(s, v.passenger) == DELIVERED)
        .predicate("passenger_picked_up", move |sp, s, _| sp.value(s, v.passenger) >= IN_TAXI)
        .predicate("passenger_not_in_taxi", move |sp, s, _| sp.value(s, v.passenger) != IN_TAXI);
    let l = Arc::clone(layout);
    reg.predicate("taxi_at_target", move |sp, s, p| sp.value(s, v.taxi) == l.targets[p[0]]);
    reg.feature("source", 4, vec![v.passenger], move |sp, s, _| {
        let p = sp.value(s, v.passenger);
        (p < IN_TAXI).then_some(p)
    });
    let l = Arc::clone(layout);
    reg.feature("pickup_legal", 2, vec![v.taxi, v.passenger], move |sp, s, _| {
        let p = sp.value(s, v.passenger);
        Some(usize::from(p < IN_TAXI && sp.value(s, v.taxi) == l.targets[p]))
    });
    let l = Arc::clone(layout);
    reg.feature("putdown_legal", 2, vec![v.taxi, v.passenger, v.dest], move |sp, s, _| {
        Some(usize::from(sp.value(s, v.passenger) == IN_TAXI && sp.value(s, v.taxi) == l.targets[sp.value(s, v.dest)]))
    });
    if let Some(f) = v.fuel {
        let cap = cfg.fuel_capacity;
        reg.predicate("tank_full", move |sp, s, _| sp.value(s, f) == cap);
        let penalty = cfg.out_of_fuel_penalty;
        reg.split("out_of_fuel", move |sp, s, _, next, _| {
            if sp.value(s, f) > 0 && sp.value(next, f) == 0 {
                penalty
            } else {
                0.0
            }
        });
    }
    reg
}

fn graph_text(cfg: &TaxiConfig) -> String {
    let targets = if cfg.fuel { 5 } else { 4 };
    let pending = if cfg.fickle { ", \"pending\"" } else { "" };
    let mut root = String::from("root = \"Root\"\n");
    if cfg.fuel && cfg.split_fuel_penalty {
        root.push_str("\n[split]\nRoot = \"out_of_fuel\"\n");
    }
    let root_children = if cfg.fuel {
        r#"
[[node.child]]
name = "QGet"
task = "Get"
key = ["taxi", "passenger", "dest", "fuel"]

[[node.child]]
name = "QPut"
task = "Put"
key = ["taxi", "passenger", "dest", "fuel"]

[[node.child]]
name = "QRefuel"
task = "Refuel"
key = ["taxi", "passenger", "dest", "fuel"]

[[node]]
name = "Refuel"
terminate = "tank_full"
relevant = ["taxi", "fuel"]

[[node.child]]
name = "QNavigateForRefuel"
task = "Navigate"
bind = { t = "4" }
key = ["taxi", "fuel"]

[[node.child]]
name = "QFillup"
task = "Fillup"
key = ["taxi", "fuel"]
"#
        .to_string()
    } else {
        format!(
            r#"
[[node.child]]
name = "QGet"
task = "Get"
key = ["source", "dest"{pending}]

[[node.child]]
name = "QPut"
task = "Put"
store = "zero"
"#
        )
    };
    let root_head = if cfg.fuel {
        "[[node]]\nname = \"Root\"\nterminate = \"env_terminal\"\ngoal = \"delivered\"\npseudo_reward = 0.0\n"
    } else {
        "[[node]]\nname = \"Root\"\nterminate = \"delivered\"\n"
    };
    let fuel_leaf = if cfg.fuel { "\n[[leaf]]\nname = \"Fillup\"\naction = \"fillup\"\nkey = []\n" } else { "" };
    let moves: String = ["North", "South", "East", "West"]
        .iter()
        .map(|m| format!("\n[[node.child]]\nname = \"Q{m}\"\ntask = \"{m}\"\nkey = [\"taxi\", \"t\"]\n"))
        .collect();
    let move_leaves: String = ["North", "South", "East", "West"]
        .iter()
        .map(|m| format!("\n[[leaf]]\nname = \"{m}\"\naction = \"{}\"\nkey = []\n", m.to_lowercase()))
        .collect();
    format!(
        r#"{root}
{root_head}{root_children}
[[node]]
name = "Get"
terminate = "passenger_picked_up"
relevant = ["taxi", "passenger"]

[[node.child]]
name = "QNavigateForGet"
task = "Navigate"
bind = {{ t = "source" }}
key = ["source"]

[[node.child]]
name = "QPickup"
task = "Pickup"
key = ["taxi", "source"]

[[node]]
name = "Put"
terminate = "passenger_not_in_taxi"
relevant = ["taxi", "passenger", "dest"{pending}]

[[node.child]]
name = "QNavigateForPut"
task = "Navigate"
bind = {{ t = "dest" }}
key = ["dest"{pending}]

[[node.child]]
name = "QPutdown"
task = "Putdown"
key = ["taxi", "dest"{pending}]

[[node]]
name = "Navigate"
params = [{{ name = "t", card = {targets} }}]
terminate = "taxi_at_target"
relevant = ["taxi"]
{moves}{move_leaves}
[[leaf]]
name = "Pickup"
action = "pickup"
key = ["pickup_legal"]

[[leaf]]
name = "Putdown"
action = "putdown"
key = ["putdown_legal"]
{fuel_leaf}"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::{check_abstraction_safety, flat_q_count, storage_count, validate_graph, KeyMode};

    fn state(model: &TabularModel, taxi: [usize; 2], pass: usize, dest: usize) -> usize {
        model.space().encode(&[square(taxi), pass, dest]).unwrap()
    }

    #[test]
    fn sizes_and_rewards() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        assert_eq!(m.num_states(), 600);
        assert_eq!((0..600).filter(|&s| !m.is_terminal(s)).count(), 500);
        assert_eq!(m.num_actions(), 6);
        assert!(validate_graph(&g, &m).passed());
        let s = state(&m, [0, 0], 0, 3);
        assert_eq!(m.outcomes(s, 4)[0].reward, -1.0);
        assert_eq!(m.outcomes(s, 5)[0].reward, -10.0);
        let inside = state(&m, [4, 3], IN_TAXI, 3);
        assert_eq!(m.outcomes(inside, 5)[0].reward, 19.0);
        assert!(m.is_terminal(m.outcomes(inside, 5)[0].next));
    }

    #[test]
    fn walls_block_moves() {
        let layout = TaxiLayout::new(&TaxiConfig::default()).unwrap();
        assert_eq!(layout.step(square([0, 1]), 2), square([0, 1]));
        assert_eq!(layout.step(square([2, 1]), 2), square([2, 2]));
        assert_eq!(layout.step(square([4, 0]), 2), square([4, 0]));
        assert_eq!(layout.distances_to(square([4, 3]))[square([0, 0])], 7);
    }

    #[test]
    fn passenger_at_destination_still_needs_both_actions() {
        let (m, _) = build_taxi(&TaxiConfig::default()).unwrap();
        let s = state(&m, [0, 0], 0, 0);
        assert!(!m.is_terminal(s));
        assert_eq!(m.outcomes(s, 5)[0].next, s);
        let picked = m.outcomes(s, 4)[0].next;
        assert!(m.is_terminal(m.outcomes(picked, 5)[0].next));
    }

    #[test]
    fn storage_counts() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        assert_eq!(storage_count(&g, &m, KeyMode::Abstract).total(), 632);
        assert_eq!(storage_count(&g, &m, KeyMode::Full).total(), 14_000);
        assert_eq!(flat_q_count(&m), 3000);
    }

    #[test]
    fn plain_abstractions_are_safe() {
        let (m, g) = build_taxi(&TaxiConfig::default()).unwrap();
        let report = check_abstraction_safety(&g, &m);
        assert!(report.is_safe(), "{report}");
    }

    #[test]
    fn fickle_probabilities() {
        let cfg = TaxiConfig { fickle: true, ..TaxiConfig::default() };
        let (m, g) = build_taxi(&cfg).unwrap();
        assert!(validate_graph(&g, &m).passed());
        let picked = m.outcomes(m.space().encode(&[0, 0, 3, 0]).unwrap(), 4)[0].next;
        let south = m.outcomes(picked, 1);
        let changed: f64 = south.iter().filter(|o| m.space().value(o.next, 2) != 3).map(|o| o.prob).sum();
        // the west slip bumps into the edge and leaves the flag pending
        assert!((changed - 0.9 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn fuel_variant() {
        let cfg = TaxiConfig { fuel: true, ..TaxiConfig::default() };
        let (m, g) = build_taxi(&cfg).unwrap();
        assert!(validate_graph(&g, &m).passed(), "{}", validate_graph(&g, &m));
        let v = TaxiVars::of(m.space()).unwrap();
        let s = m.space().encode(&[square([1, 1]), 0, 3, 1]).unwrap();
        let o = &m.outcomes(s, 0)[0];
        assert_eq!(o.reward, -21.0);
        assert!(m.is_terminal(o.next));
        let at_station = m.space().encode(&[square([2, 2]), 0, 3, 3]).unwrap();
        assert_eq!(m.space().value(m.outcomes(at_station, 6)[0].next, v.fuel.unwrap()), 14);
    }
}
