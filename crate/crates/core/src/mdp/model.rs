use rand::Rng;

use super::{MdpError, StateSpace};

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// An enumerable episodic MDP.
///
/// Rewards are attached to the transition and credited when the action is
/// initiated. Terminal states are absorbing with zero reward.
#[derive(Debug, Clone)]
pub struct TabularModel {
    space: StateSpace,
    actions: Vec<String>,
    outcomes: Vec<Vec<Outcome>>,
    start: Vec<(usize, f64)>,
    terminal: Vec<bool>,
    gamma: f64,
}

const PROB_TOL: f64 = 1e-12;

impl TabularModel {
    /// Builds a model by querying `dynamics` for every non-terminal (s, a).
    pub fn build(
        space: StateSpace,
        actions: Vec<String>,
        gamma: f64,
        is_terminal: impl Fn(usize) -> bool,
        mut dynamics: impl FnMut(usize, usize) -> Vec<Outcome>,
        start: Vec<(usize, f64)>,
    ) -> Result<Self, MdpError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(MdpError::InvalidModel(format!("discount {gamma} outside (0, 1]")));
        }
        if actions.is_empty() {
            return Err(MdpError::InvalidModel("no actions".into()));
        }
        let n = space.len();
        let na = actions.len();
        let terminal: Vec<bool> = (0..n).map(&is_terminal).collect();
        let mut outcomes = Vec::with_capacity(n * na);
        for s in 0..n {
            for a in 0..na {
                if terminal[s] {
                    outcomes.push(vec![Outcome { next: s, prob: 1.0, reward: 0.0 }]);
                    continue;
                }
                let mut out = dynamics(s, a);
                out.retain(|o| o.prob > 0.0);
                merge_duplicates(&mut out);
                outcomes.push(out);
            }
        }
        let model = Self { space, actions, outcomes, start, terminal, gamma };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), MdpError> {
        let n = self.space.len();
        for s in 0..n {
            for a in 0..self.actions.len() {
                let out = self.outcomes(s, a);
                let total: f64 = out.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::InvalidModel(format!(
                        "outcomes of ({}, {}) sum to {total}",
                        self.space.describe(s),
                        self.actions[a]
                    )));
                }
                if let Some(o) = out.iter().find(|o| o.next >= n || !o.reward.is_finite()) {
                    return Err(MdpError::InvalidModel(format!("bad outcome {o:?} from state {s}")));
                }
            }
        }
        let p0: f64 = self.start.iter().map(|&(_, p)| p).sum();
        if self.start.is_empty() || (p0 - 1.0).abs() > 1e-9 {
            return Err(MdpError::InvalidModel(format!("start distribution sums to {p0}")));
        }
        if self.start.iter().any(|&(s, _)| s >= n) {
            return Err(MdpError::InvalidModel("start state out of range".into()));
        }
        if self.gamma == 1.0 {
            if let Some(s) = self.first_trapped_state() {
                return Err(MdpError::InvalidModel(format!(
                    "no terminal state reachable from {}",
                    self.space.describe(s)
                )));
            }
        }
        Ok(())
    }

    /// A state from which no terminal state is reachable under any policy.
    fn first_trapped_state(&self) -> Option<usize> {
        let n = self.space.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.actions.len() {
                for o in self.outcomes(s, a) {
                    preds[o.next].push(s);
                }
            }
        }
        let mut seen = self.terminal.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&s| seen[s]).collect();
        while let Some(s) = stack.pop() {
            for &p in &preds[s] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen.iter().position(|&ok| !ok)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    #[inline]
    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s * self.actions.len() + a]
    }

    #[inline]
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn start(&self) -> &[(usize, f64)] {
        &self.start
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Expected one-step reward of `a` in `s`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.outcomes(s, a).iter().map(|o| o.prob * o.reward).sum()
    }

    /// Draws an initial state from the start distribution.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.start, |&(_, p)| p, rng).map(|k| self.start[k].0).unwrap_or(self.start[0].0)
    }
}

/// Draws `(s', r)` for taking `a` in `s`.
pub fn sample_transition<R: Rng + ?Sized>(
    model: &TabularModel,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, f64), MdpError> {
    if s >= model.num_states() {
        return Err(MdpError::InvalidState(format!("state {s} out of range")));
    }
    if a >= model.num_actions() {
        return Err(MdpError::InvalidAction(a));
    }
    if model.is_terminal(s) {
        return Err(MdpError::TerminalStep(s));
    }
    let out = model.outcomes(s, a);
    let k = sample_index(out, |o| o.prob, rng).unwrap_or(out.len() - 1);
    Ok((out[k].next, out[k].reward))
}

fn sample_index<T, R: Rng + ?Sized>(items: &[T], prob: impl Fn(&T) -> f64, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, it) in items.iter().enumerate() {
        acc += prob(it);
        if u < acc {
            return Some(k);
        }
    }
    None
}

fn merge_duplicates(out: &mut Vec<Outcome>) {
    let mut merged: Vec<Outcome> = Vec::with_capacity(out.len());
    for o in out.drain(..) {
        match merged.iter_mut().find(|m| m.next == o.next && m.reward == o.reward) {
            Some(m) => m.prob += o.prob,
            None => merged.push(o),
        }
    }
    *out = merged;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> TabularModel {
        // 0 -> 1 -> 2 (terminal); action 1 stays put.
        let sp = StateSpace::new([("x", 3)]).unwrap();
        TabularModel::build(
            sp,
            vec!["right".into(), "stay".into()],
            1.0,
            |s| s == 2,
            |s, a| match a {
                0 => vec![Outcome { next: s + 1, prob: 1.0, reward: -1.0 }],
                _ => vec![Outcome { next: s, prob: 1.0, reward: -1.0 }],
            },
            vec![(0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn terminal_states_absorb() {
        let m = chain();
        assert_eq!(m.outcomes(2, 0), &[Outcome { next: 2, prob: 1.0, reward: 0.0 }]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_transition(&m, 2, 0, &mut rng), Err(MdpError::TerminalStep(2))));
        assert!(matches!(sample_transition(&m, 0, 7, &mut rng), Err(MdpError::InvalidAction(7))));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let sp = StateSpace::new([("x", 2)]).unwrap();
        let r = TabularModel::build(
            sp,
            vec!["a".into()],
            0.9,
            |s| s == 1,
            |_, _| vec![Outcome { next: 1, prob: 0.5, reward: 0.0 }],
            vec![(0, 1.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_trapped_states_when_undiscounted() {
        let sp = StateSpace::new([("x", 2)]).unwrap();
        let r = TabularModel::build(
            sp,
            vec!["a".into()],
            1.0,
            |_| false,
            |s, _| vec![Outcome { next: s, prob: 1.0, reward: -1.0 }],
            vec![(0, 1.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let sp = StateSpace::new([("x", 3)]).unwrap();
        let m = TabularModel::build(
            sp,
            vec!["a".into()],
            1.0,
            |s| s == 2,
            |_, _| {
                vec![
                    Outcome { next: 1, prob: 0.5, reward: 0.0 },
                    Outcome { next: 2, prob: 0.5, reward: 1.0 },
                ]
            },
            vec![(0, 1.0)],
        )
        .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_transition(&m, 0, 0, &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }
}
